#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "deepsc/tensor.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace deepsc;
using deepsc::testutil::conv2d_reference;
using deepsc::testutil::max_grad_rel_err;

TEST_CASE("tensor creation") {
  const Tensor z = Tensor::zeros({2, 2});
  for (float v : z.data()) CHECK(v == 0.0f);

  const Tensor c = Tensor::constant({3}, 1.5f);
  for (float v : c.data()) CHECK(v == 1.5f);

  CHECK_THROWS_AS(Tensor::zeros({0, 2}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({-1}), ShapeError);

  // sample variance of he_normal(fan_in=100) is within 20% of 2/100
  const Tensor h = Tensor::he_normal({1000}, 100, 7);
  double mean = 0.0;
  for (float v : h.data()) mean += v;
  mean /= 1000.0;
  double var = 0.0;
  for (float v : h.data()) var += (v - mean) * (v - mean);
  var /= 999.0;
  CHECK(var == doctest::Approx(0.02).epsilon(0.2));

  const Tensor u = Tensor::uniform({512}, -2.0f, 3.0f, 11);
  for (float v : u.data()) {
    CHECK(v >= -2.0f);
    CHECK(v < 3.0f);
  }
}

TEST_CASE("elementwise ops and examples") {
  const Tensor a = Tensor::from_data({2}, {1, 2});
  const Tensor b = Tensor::from_data({2}, {3, 4});
  const Tensor s = add(a, b);
  CHECK(s.data()[0] == 4.0f);
  CHECK(s.data()[1] == 6.0f);

  const Tensor m = mul_elementwise(Tensor::from_data({2}, {2, 3}), Tensor::from_data({2}, {0, 5}));
  CHECK(m.data()[0] == 0.0f);
  CHECK(m.data()[1] == 15.0f);

  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);

  // broadcast over size-1 dims: [2,2] + [1,2]
  const Tensor big = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  const Tensor row = Tensor::from_data({1, 2}, {10, 20});
  const Tensor r = add(big, row);
  CHECK(r.data()[0] == 11.0f);
  CHECK(r.data()[3] == 24.0f);
}

TEST_CASE("matmul") {
  const Tensor a = Tensor::from_data({1, 2}, {1, 2});
  const Tensor b = Tensor::from_data({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == 11.0f);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("relu sigmoid") {
  const Tensor x = Tensor::from_data({3}, {-1, 0, 2});
  const Tensor r = relu(x);
  CHECK(r.data()[0] == 0.0f);
  CHECK(r.data()[1] == 0.0f);
  CHECK(r.data()[2] == 2.0f);

  CHECK(sigmoid(Tensor::zeros({1})).item() == doctest::Approx(0.5));
  CHECK(sigmoid(Tensor::constant({1}, std::log(3.0f))).item() == doctest::Approx(0.75));
}

TEST_CASE("conv2d trivial kernels") {
  // 1x1 kernel [2] on ones -> all 2
  const Tensor ones = Tensor::constant({1, 3, 3, 1}, 1.0f);
  const Tensor k1 = Tensor::constant({1, 1, 1, 1}, 2.0f);
  const Tensor bias = Tensor::zeros({1});
  const Tensor doubled = conv2d(ones, k1, bias);
  for (float v : doubled.data()) CHECK(v == 2.0f);

  // 3x3 all-ones kernel on 3x3 ones: center 9, edges 6, corners 4
  const Tensor k3 = Tensor::constant({3, 3, 1, 1}, 1.0f);
  const Tensor y = conv2d(ones, k3, bias);
  CHECK(y.at({0, 1, 1, 0}) == 9.0f);
  CHECK(y.at({0, 0, 1, 0}) == 6.0f);
  CHECK(y.at({0, 0, 0, 0}) == 4.0f);

  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 3, 3, 2}), Tensor::zeros({3, 3, 1, 1}), bias),
                  ShapeError);
  CHECK_THROWS_AS(conv2d(ones, Tensor::zeros({2, 2, 1, 1}), bias), ContractError);
}

TEST_CASE("conv2d matches loop reference on random input") {
  Rng rng(42);
  const Tensor x = Tensor::uniform({2, 4, 4, 3}, -1, 1, rng);
  const Tensor k = Tensor::uniform({3, 3, 3, 8}, -0.5, 0.5, rng);
  const Tensor bias = Tensor::uniform({8}, -0.1, 0.1, rng);
  const Tensor y = conv2d(x, k, bias);
  const auto ref = conv2d_reference({x.data().begin(), x.data().end()},
                                    {k.data().begin(), k.data().end()},
                                    {bias.data().begin(), bias.data().end()}, 2, 4, 4, 3, 3, 3, 8);
  REQUIRE(y.size() == static_cast<std::int64_t>(ref.size()));
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("global_avg_pool") {
  const Tensor x = Tensor::from_data({1, 2, 2, 1}, {1, 2, 3, 4});
  CHECK(global_avg_pool(x).item() == doctest::Approx(2.5));

  const Tensor c = Tensor::constant({2, 3, 3, 4}, 0.7f);
  const Tensor pooled = global_avg_pool(c);
  for (float v : pooled.data()) CHECK(v == doctest::Approx(0.7));

  Rng rng(3);
  const Tensor r = Tensor::uniform({2, 3, 3, 4}, -1, 1, rng);
  const Tensor p = global_avg_pool(r);
  for (int b = 0; b < 2; ++b) {
    for (int ch = 0; ch < 4; ++ch) {
      double acc = 0.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) acc += r.at({b, i, j, ch});
      CHECK(p.at({b, ch}) == doctest::Approx(acc / 9.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("mse_loss values") {
  const Tensor a = Tensor::from_data({2}, {1, 1});
  CHECK(mse_loss(a, a).item() == 0.0f);
  CHECK(mse_loss(a, Tensor::zeros({2})).item() == 1.0f);
  CHECK(mse_loss(Tensor::from_data({3}, {1, 2, 3}), Tensor::constant({3}, 2.0f)).item() ==
        doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(mse_loss(a, Tensor::zeros({3})), ShapeError);
}

TEST_CASE("backward basics") {
  // loss = mse(w*x, y), w=1, x=2, y=0 -> dloss/dw = 8
  Tensor w = Tensor::constant({1}, 1.0f, true);
  const Tensor x = Tensor::constant({1}, 2.0f);
  const Tensor y = Tensor::zeros({1});
  GradTape tape;
  {
    TapeScope scope(tape);
    const Tensor loss = mse_loss(mul_elementwise(w, x), y);
    CHECK(loss.item() == 4.0f);
    tape.backward(loss);
  }
  CHECK(w.grad()[0] == doctest::Approx(8.0));

  // grad of a pure-constant graph is zero everywhere
  const Tensor c = add(Tensor::constant({1}, 1.0f), Tensor::constant({1}, 2.0f));
  CHECK_NOTHROW(backward(c));

  // non-scalar loss rejected
  Tensor v = Tensor::zeros({2}, true);
  GradTape tape2;
  {
    TapeScope scope(tape2);
    const Tensor out = add(v, v);
    CHECK_THROWS_AS(tape2.backward(out), ContractError);
  }
}

TEST_CASE("backward twice without re-forward is rejected") {
  Tensor w = Tensor::constant({1}, 2.0f, true);
  GradTape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = mse_loss(w, Tensor::zeros({1}));
    tape.backward(loss);
  }
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
  CHECK_THROWS_AS(backward(loss), ContractError);
}

TEST_CASE("sgd_step") {
  Tensor p = Tensor::constant({1}, 1.0f, true);
  {
    GradTape tape;
    TapeScope scope(tape);
    const Tensor loss = mse_loss(p, Tensor::zeros({1}));
    tape.backward(loss);
  }
  p.grad()[0] = 2.0f;  // overwrite for the hand example
  std::vector<Tensor> params{p};
  sgd_step(params, 0.1f);
  CHECK(p.data()[0] == doctest::Approx(0.8));
  CHECK(p.grad()[0] == 0.0f);

  // lr = 0 leaves parameters unchanged
  p.grad()[0] = 5.0f;
  sgd_step(params, 0.0f);
  CHECK(p.data()[0] == doctest::Approx(0.8));

  Tensor q = Tensor::constant({1}, 1.0f, true);
  std::vector<Tensor> bad{q};
  CHECK_THROWS_AS(sgd_step(bad, 0.1f), ContractError);
}

TEST_CASE("gradient descent converges on a quadratic") {
  // loss = (p - 3)^2, lr = 0.4, 50 steps from p = 0
  Tensor p = Tensor::zeros({1}, true);
  const Tensor target = Tensor::constant({1}, 3.0f);
  std::vector<Tensor> params{p};
  double prev_loss = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 50; ++i) {
    GradTape tape;
    double cur = 0.0;
    {
      TapeScope scope(tape);
      const Tensor loss = mse_loss(p, target);
      cur = loss.item();
      tape.backward(loss);
    }
    CHECK(cur <= prev_loss);  // strictly decreasing below the curvature bound
    prev_loss = cur;
    sgd_step(params, 0.4f);
  }
  CHECK(std::abs(p.data()[0] - 3.0f) < 1e-3);
}

TEST_CASE("finite-difference gradcheck per op") {
  Rng rng(1234);

  SUBCASE("add/mul/sub chain") {
    Tensor a = Tensor::uniform({4, 3}, -1, 1, rng, true);
    const Tensor b = Tensor::uniform({4, 3}, -1, 1, rng);
    const Tensor t = Tensor::uniform({4, 3}, -1, 1, rng);
    auto loss = [&] { return mse_loss(mul_elementwise(add(a, b), sub(a, b)), t); };
    CHECK(max_grad_rel_err(a, loss) < 1e-3);
  }
  SUBCASE("broadcast mul") {
    Tensor g = Tensor::uniform({2, 1, 1, 3}, 0.1, 1, rng, true);
    const Tensor x = Tensor::uniform({2, 2, 2, 3}, -1, 1, rng);
    const Tensor t = Tensor::uniform({2, 2, 2, 3}, -1, 1, rng);
    auto loss = [&] { return mse_loss(mul_elementwise(x, g), t); };
    CHECK(max_grad_rel_err(g, loss) < 1e-3);
  }
  SUBCASE("matmul both sides") {
    Tensor a = Tensor::uniform({3, 4}, -1, 1, rng, true);
    Tensor b = Tensor::uniform({4, 2}, -1, 1, rng, true);
    const Tensor t = Tensor::uniform({3, 2}, -1, 1, rng);
    auto loss = [&] { return mse_loss(matmul(a, b), t); };
    CHECK(max_grad_rel_err(a, loss) < 1e-3);
    CHECK(max_grad_rel_err(b, loss) < 1e-3);
  }
  SUBCASE("conv2d kernel, bias and input") {
    Tensor x = Tensor::uniform({2, 3, 3, 2}, -1, 1, rng, true);
    Tensor k = Tensor::uniform({3, 3, 2, 3}, -0.6, 0.6, rng, true);
    Tensor bias = Tensor::uniform({3}, -0.2, 0.2, rng, true);
    const Tensor t = Tensor::uniform({2, 3, 3, 3}, -1, 1, rng);
    auto loss = [&] { return mse_loss(conv2d(x, k, bias), t); };
    CHECK(max_grad_rel_err(k, loss) < 1e-3);
    CHECK(max_grad_rel_err(bias, loss) < 1e-3);
    CHECK(max_grad_rel_err(x, loss) < 1e-3);
  }
  SUBCASE("relu") {
    Tensor x = Tensor::uniform({4, 4}, 0.2, 1.5, rng, true);  // away from the kink
    const Tensor t = Tensor::uniform({4, 4}, -1, 1, rng);
    auto loss = [&] { return mse_loss(relu(x), t); };
    CHECK(max_grad_rel_err(x, loss) < 1e-3);
  }
  SUBCASE("sigmoid") {
    Tensor x = Tensor::uniform({4, 4}, -2, 2, rng, true);
    const Tensor t = Tensor::uniform({4, 4}, 0, 1, rng);
    auto loss = [&] { return mse_loss(sigmoid(x), t); };
    CHECK(max_grad_rel_err(x, loss) < 1e-3);
  }
  SUBCASE("global_avg_pool") {
    Tensor x = Tensor::uniform({2, 3, 3, 2}, -1, 1, rng, true);
    const Tensor t = Tensor::uniform({2, 2}, -1, 1, rng);
    auto loss = [&] { return mse_loss(global_avg_pool(x), t); };
    CHECK(max_grad_rel_err(x, loss) < 1e-3);
  }
  SUBCASE("reshape") {
    Tensor x = Tensor::uniform({2, 6}, -1, 1, rng, true);
    const Tensor t = Tensor::uniform({3, 4}, -1, 1, rng);
    auto loss = [&] { return mse_loss(reshape(x, {3, 4}), t); };
    CHECK(max_grad_rel_err(x, loss) < 1e-3);
  }
  SUBCASE("power_normalize") {
    Tensor x = Tensor::uniform({2, 4, 2}, 0.3, 1.5, rng, true);
    const Tensor t = Tensor::uniform({2, 4, 2}, -1, 1, rng);
    auto loss = [&] { return mse_loss(power_normalize(x), t); };
    CHECK(max_grad_rel_err(x, loss) < 1e-3);
  }
  SUBCASE("complex_affine") {
    Tensor x = Tensor::uniform({2, 4, 2}, -1, 1, rng, true);
    std::vector<float> cr{0.8f, -0.4f}, ci{0.3f, 1.1f};
    std::vector<float> ar(8), ai(8);
    for (auto& v : ar) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    for (auto& v : ai) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    const Tensor t = Tensor::uniform({2, 4, 2}, -1, 1, rng);
    auto loss = [&] { return mse_loss(complex_affine(x, cr, ci, ar, ai), t); };
    CHECK(max_grad_rel_err(x, loss) < 1e-3);
  }
}

TEST_CASE("power_normalize enforces unit symbol power") {
  Rng rng(9);
  const Tensor x = Tensor::uniform({3, 8, 2}, -2, 2, rng);
  const Tensor y = power_normalize(x);
  for (int b = 0; b < 3; ++b) {
    double acc = 0.0;
    for (int s = 0; s < 8; ++s) {
      acc += static_cast<double>(y.at({b, s, 0})) * y.at({b, s, 0}) +
             static_cast<double>(y.at({b, s, 1})) * y.at({b, s, 1});
    }
    CHECK(acc / 8.0 == doctest::Approx(1.0).epsilon(1e-5));
  }
}
