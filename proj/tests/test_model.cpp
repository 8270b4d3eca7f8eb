#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>

#include "deepsc/harness.hpp"
#include "deepsc/model.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace deepsc;
using deepsc::testutil::TempDir;

namespace {

ModelHyper tiny_hyper() {
  ModelHyper h;
  h.D = 8;
  h.N = 4;
  h.F = 4;
  h.L = 16;
  h.blocks = 2;
  h.r = 4;
  return h;
}

Tensor random_frames(const ModelHyper& h, int batch, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor::uniform({batch, h.F, h.L}, -0.8f, 0.8f, rng);
}

ChannelRealization noiseless(int batch, std::int64_t symbols) {
  ChannelSpec spec;
  spec.family = ChannelFamily::AWGN;
  spec.snr_db = std::numeric_limits<double>::infinity();
  spec.seed = 1;
  return sample_channel(spec, batch, symbols);
}

}  // namespace

TEST_CASE("shape chain follows the B,F,L -> B,F,L,D -> B,F,2N -> B,FN,2 layout") {
  const ModelHyper h = tiny_hyper();
  const DeepSCSModel model(h, 42);
  const Tensor m = random_frames(h, 3, 7);

  const Tensor b = model.speech_encode(m);
  CHECK(b.shape() == Shape{3, h.F, h.L, h.D});

  const SymbolBlock x = model.channel_encode(b);
  CHECK(x.symbols.shape() == Shape{3, h.F * h.N, 2});

  const ChannelRealization real = noiseless(3, h.F * h.N);
  const Tensor y = transmit(x.symbols, real);
  const Tensor v = reshape(y, {3, h.F, 2 * h.N});
  const Tensor b_hat = model.channel_decode(v);
  CHECK(b_hat.shape() == Shape{3, h.F, h.L, h.D});

  const Tensor m_hat = model.speech_decode(b_hat);
  CHECK(m_hat.shape() == Shape{3, h.F, h.L});
}

TEST_CASE("speech encoder lifts to D=32 channels under the reference widths") {
  ModelHyper h;
  h.D = 32;
  h.N = 16;
  h.F = 8;  // few frames keep this quick; the channel count is what matters
  h.L = 128;
  h.blocks = 4;
  h.r = 4;
  const DeepSCSModel model(h, 1);
  const Tensor b = model.speech_encode(random_frames(h, 1, 3));
  CHECK(b.shape() == Shape{1, 8, 128, 32});

  // 2048 complex symbols per clip at F=128, N=16 (checked via the F*N layout)
  CHECK(128 * h.N == 2048);
  const SymbolBlock x = model.channel_encode(b);
  CHECK(x.n_symbols() == h.F * h.N);
}

TEST_CASE("SE-ResNet block behaviour") {
  Rng rng(5);
  SEResNetBlock block(8, 4, rng);
  const Tensor x = Tensor::uniform({2, 3, 3, 8}, -1, 1, 9);

  SUBCASE("zero convs give a pure residual of zeros on zero input") {
    SEResNetBlock zero(8, 4, rng);
    for (Tensor* t : {&zero.conv1.kernel, &zero.conv1.bias, &zero.conv2.kernel, &zero.conv2.bias}) {
      std::fill(t->data().begin(), t->data().end(), 0.0f);
    }
    const Tensor z = Tensor::zeros({2, 3, 3, 8});
    const Tensor out = zero.forward(z);
    for (float v : out.data()) CHECK(v == 0.0f);
  }

  SUBCASE("attention gate lies in (0,1)") {
    const Tensor y = block.conv2.forward(relu(block.conv1.forward(x)));
    const Tensor a =
        sigmoid(block.se_dense2.forward(relu(block.se_dense1.forward(global_avg_pool(y)))));
    for (float v : a.data()) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
  }

  SUBCASE("zeroed SE dense layers gate the branch by exactly 0.5") {
    SEResNetBlock half = block;
    half.se_dense1 = DenseLayer(8, 2, rng);
    half.se_dense2 = DenseLayer(2, 8, rng);
    for (Tensor* t : {&half.se_dense1.weight, &half.se_dense1.bias, &half.se_dense2.weight,
                      &half.se_dense2.bias}) {
      std::fill(t->data().begin(), t->data().end(), 0.0f);
    }
    const Tensor out = half.forward(x);
    const Tensor y = half.conv2.forward(relu(half.conv1.forward(x)));
    for (std::size_t i = 0; i < out.data().size(); ++i) {
      CHECK(out.data()[i] == doctest::Approx(x.data()[i] + 0.5f * y.data()[i]).epsilon(1e-6));
    }
  }

  SUBCASE("gate forced to 1 reproduces a plain residual block") {
    // drive the sigmoid far into saturation via a huge positive bias
    SEResNetBlock open = block;
    open.se_dense2 = DenseLayer(2, 8, rng);
    std::fill(open.se_dense2.weight.data().begin(), open.se_dense2.weight.data().end(), 0.0f);
    std::fill(open.se_dense2.bias.data().begin(), open.se_dense2.bias.data().end(), 40.0f);
    const Tensor out = open.forward(x);
    const Tensor y = open.conv2.forward(relu(open.conv1.forward(x)));
    for (std::size_t i = 0; i < out.data().size(); ++i) {
      CHECK(out.data()[i] == doctest::Approx(x.data()[i] + y.data()[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("transmit power is 1 per batch item for arbitrary weights") {
  const ModelHyper h = tiny_hyper();
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 99ULL}) {
    const DeepSCSModel model(h, seed);
    const SymbolBlock x = model.encode(random_frames(h, 3, seed + 10));
    for (int b = 0; b < 3; ++b) {
      CHECK(x.mean_power(b) == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("power normalization is projective (scale invariant)") {
  Rng rng(8);
  const Tensor u = Tensor::uniform({2, 16, 2}, -1, 1, rng);
  const Tensor a = power_normalize(u);
  const Tensor b = power_normalize(scale(u, 3.7f));
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    CHECK(b.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-5));
  }
}

TEST_CASE("zero weights propagate zeros through the decoders") {
  const ModelHyper h = tiny_hyper();
  DeepSCSModel model(h, 3);
  for (Tensor& p : model.params()) {
    std::fill(p.data().begin(), p.data().end(), 0.0f);
  }
  const Tensor v = Tensor::zeros({2, h.F, 2 * h.N});
  const Tensor b_hat = model.channel_decode(v);
  for (float x : b_hat.data()) CHECK(x == 0.0f);
  const Tensor m_hat = model.speech_decode(b_hat);
  for (float x : m_hat.data()) CHECK(x == 0.0f);
}

TEST_CASE("final layer has no activation: outputs can be negative") {
  const ModelHyper h = tiny_hyper();
  const DeepSCSModel model(h, 12);
  const Tensor m = random_frames(h, 2, 5);
  const ChannelRealization real = noiseless(2, h.F * h.N);
  const Tensor m_hat = model.forward(m, real);
  bool any_negative = false;
  for (float v : m_hat.data()) {
    CHECK(std::isfinite(v));
    any_negative = any_negative || v < 0.0f;
  }
  CHECK(any_negative);
}

TEST_CASE("parameter count matches the closed-form sum over layers") {
  const ModelHyper h = tiny_hyper();
  const DeepSCSModel model(h, 4);
  const std::int64_t D = h.D, L = h.L, N = h.N, r = h.r;
  const std::int64_t block = 2 * (9 * D * D + D) + D * (D / r) + D / r + (D / r) * D + D;
  std::int64_t expect = 0;
  expect += 9 * 1 * D + D;                      // lift
  expect += h.blocks * block;                   // encoder blocks
  expect += 9 * D * 8 + 8;                      // channel encoder conv (8 kernels)
  expect += (L * 8) * (2 * N) + 2 * N;          // channel encoder dense
  expect += (2 * N) * (L * D) + L * D;          // channel decoder dense
  expect += 9 * D * D + D;                      // channel decoder conv
  expect += h.blocks * block;                   // decoder blocks
  expect += 9 * D * 1 + 1;                      // output conv
  CHECK(model.num_parameters() == expect);
}

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("ckpt");
  const ModelHyper h = tiny_hyper();
  const DeepSCSModel model(h, 77);
  model.save(dir.file("m.ckpt"));
  const DeepSCSModel back = DeepSCSModel::load(dir.file("m.ckpt"));
  CHECK(back.hyper() == h);
  REQUIRE(back.params().size() == model.params().size());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto a = model.params()[i].data();
    const auto b = back.params()[i].data();
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), 4 * a.size()) == 0);
  }
  CHECK(back.param_hash() == model.param_hash());

  back.save(dir.file("m2.ckpt"));
  std::ifstream f1(dir.file("m.ckpt"), std::ios::binary);
  std::ifstream f2(dir.file("m2.ckpt"), std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  CHECK_THROWS_AS(DeepSCSModel::load(dir.file("missing.ckpt")), ParseError);
}

TEST_CASE("gradients reach the first conv and no parameter is dead") {
  const ModelHyper h = tiny_hyper();
  DeepSCSModel model(h, 21);
  const Tensor m = random_frames(h, 2, 33);
  ChannelSpec spec;
  spec.family = ChannelFamily::Rician;
  spec.snr_db = 8.0;
  spec.seed = 4;
  const ChannelRealization real = sample_channel(spec, 2, h.F * h.N);
  GradTape tape;
  {
    TapeScope scope(tape);
    const Tensor m_hat = model.forward(m, real);
    tape.backward(mse_loss(m_hat, m));
  }
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    double norm = 0.0;
    for (float g : model.params()[i].grad()) norm += static_cast<double>(g) * g;
    INFO("param ", model.param_names()[i]);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("one-batch overfit reaches training tolerance on a noiseless link") {
  ModelHyper h;
  h.D = 8;
  h.N = 8;
  h.F = 4;
  h.L = 16;
  h.blocks = 1;
  h.r = 4;
  DeepSCSModel model(h, 6);
  Rng rng(44);
  const Tensor m = Tensor::uniform({2, h.F, h.L}, -0.6f, 0.6f, rng);
  double loss_val = 0.0;
  for (int step = 0; step < 500; ++step) {
    const ChannelRealization real = noiseless(2, h.F * h.N);
    GradTape tape;
    {
      TapeScope scope(tape);
      const Tensor loss = mse_loss(model.forward(m, real), m);
      loss_val = loss.item();
      tape.backward(loss);
    }
    sgd_step(model.params(), 0.03f);
    if (loss_val < 1e-4) break;
  }
  CHECK(loss_val < 1e-4);
}
