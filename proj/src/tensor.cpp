#include "deepsc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace deepsc {

namespace {

thread_local GradTape* g_current_tape = nullptr;

std::shared_ptr<detail::TensorData> make_data(const Shape& shape, bool requires_grad) {
  for (int d : shape) {
    if (d < 1) throw ShapeError("tensor dimension must be >= 1, got " + shape_str(shape));
  }
  auto t = std::make_shared<detail::TensorData>();
  t->shape = shape;
  t->data.assign(static_cast<std::size_t>(numel(shape)), 0.0f);
  t->requires_grad = requires_grad;
  return t;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Left-pads the shorter shape with 1s and checks size-1 broadcast compatibility.
Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const int da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const int db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " +
                       shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
    st[i] = st[i + 1] * s[i + 1];
  }
  return st;
}

// Strides for reading `src` as if broadcast to `out` (0 stride on broadcast axes).
std::vector<std::int64_t> broadcast_strides(const Shape& src, const Shape& out) {
  auto st = contiguous_strides(src);
  std::vector<std::int64_t> r(out.size(), 0);
  const std::size_t off = out.size() - src.size();
  for (std::size_t i = 0; i < src.size(); ++i) {
    r[off + i] = src[i] == 1 ? 0 : st[i];
  }
  return r;
}

struct BroadcastIter {
  explicit BroadcastIter(const Shape& out) : idx(out.size(), 0), dims(out) {}
  // Advances the odometer; returns false after the last index.
  bool next() {
    for (int i = static_cast<int>(dims.size()) - 1; i >= 0; --i) {
      if (++idx[i] < dims[i]) return true;
      idx[i] = 0;
    }
    return false;
  }
  std::int64_t offset(const std::vector<std::int64_t>& strides) const {
    std::int64_t o = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) o += idx[i] * strides[i];
    return o;
  }
  std::vector<std::int64_t> idx;
  Shape dims;
};

void record_op(const char* name, std::vector<std::shared_ptr<detail::TensorData>> parents,
               const std::shared_ptr<detail::TensorData>& out, std::function<void()> fn);

bool grad_mode_for(std::initializer_list<const Tensor*> inputs) {
  if (GradTape::current() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

}  // namespace

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor -------------------------------------------------------------

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(make_data(shape, requires_grad));
}

Tensor Tensor::constant(const Shape& shape, float value, bool requires_grad) {
  auto d = make_data(shape, requires_grad);
  std::fill(d->data.begin(), d->data.end(), value);
  return Tensor(std::move(d));
}

Tensor Tensor::uniform(const Shape& shape, float lo, float hi, std::uint64_t seed,
                       bool requires_grad) {
  Rng rng(seed);
  return uniform(shape, lo, hi, rng, requires_grad);
}

Tensor Tensor::uniform(const Shape& shape, float lo, float hi, Rng& rng, bool requires_grad) {
  auto d = make_data(shape, requires_grad);
  for (float& v : d->data) v = static_cast<float>(rng.uniform(lo, hi));
  return Tensor(std::move(d));
}

Tensor Tensor::he_normal(const Shape& shape, int fan_in, std::uint64_t seed, bool requires_grad) {
  Rng rng(seed);
  return he_normal(shape, fan_in, rng, requires_grad);
}

Tensor Tensor::he_normal(const Shape& shape, int fan_in, Rng& rng, bool requires_grad) {
  if (fan_in < 1) throw ContractError("he_normal: fan_in must be >= 1");
  auto d = make_data(shape, requires_grad);
  const double stddev = std::sqrt(2.0 / fan_in);
  for (float& v : d->data) v = static_cast<float>(rng.normal(0.0, stddev));
  return Tensor(std::move(d));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<float> values, bool requires_grad) {
  if (numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("from_data: " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  auto d = make_data(shape, requires_grad);
  d->data = std::move(values);
  return Tensor(std::move(d));
}

std::span<float> Tensor::grad() & {
  d_->ensure_grad();
  return {d_->grad.data(), d_->grad.size()};
}

std::span<const float> Tensor::grad() const& {
  d_->ensure_grad();
  return {d_->grad.data(), d_->grad.size()};
}

void Tensor::set_requires_grad(bool v) {
  if (!is_leaf()) throw ContractError("requires_grad can only be toggled on leaf tensors");
  d_->requires_grad = v;
}

float Tensor::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
  return d_->data[0];
}

float Tensor::at(std::initializer_list<int> idx) const {
  const auto st = contiguous_strides(d_->shape);
  if (idx.size() != d_->shape.size()) throw ShapeError("at(): rank mismatch");
  std::int64_t off = 0;
  std::size_t i = 0;
  for (int v : idx) off += v * st[i++];
  return d_->data[static_cast<std::size_t>(off)];
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0f);
}

// ---- GradTape -----------------------------------------------------------

GradTape* GradTape::current() { return g_current_tape; }

GradTape::~GradTape() = default;

void GradTape::record(const char* op, std::vector<std::shared_ptr<detail::TensorData>> parents,
                      std::shared_ptr<detail::TensorData> output,
                      std::function<void()> backward) {
  output->producer_tape = this;
  output->producer_node = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(Node{op, std::move(parents), std::move(output), std::move(backward)});
}

void GradTape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward: tape already consumed; rerun the forward pass");
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (loss.raw()->producer_tape != this) {
    throw ContractError("backward: loss was not produced on this tape");
  }

  // Mark nodes reachable from the loss by a reverse sweep over creation order.
  std::unordered_set<const detail::TensorData*> reachable;
  reachable.insert(loss.raw());
  std::vector<bool> active(nodes_.size(), false);
  for (std::int64_t i = static_cast<std::int64_t>(nodes_.size()) - 1; i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    if (!reachable.count(node.output.get())) continue;
    active[static_cast<std::size_t>(i)] = true;
    for (auto& p : node.parents) reachable.insert(p.get());
  }

  loss.raw()->ensure_grad();
  loss.raw()->grad[0] += 1.0f;

  for (std::int64_t i = static_cast<std::int64_t>(nodes_.size()) - 1; i >= 0; --i) {
    if (active[static_cast<std::size_t>(i)]) nodes_[static_cast<std::size_t>(i)].backward();
  }

  nodes_.clear();
  consumed_ = true;
}

TapeScope::TapeScope(GradTape& tape) : prev_(g_current_tape) {
  if (tape.consumed()) throw ContractError("TapeScope: tape already consumed");
  g_current_tape = &tape;
}

TapeScope::~TapeScope() { g_current_tape = prev_; }

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (loss.raw()->producer_tape == nullptr) {
    // Pure-constant graph: every gradient is identically zero.
    return;
  }
  loss.raw()->producer_tape->backward(loss);
}

void sgd_step(std::span<Tensor> params, float lr) {
  for (Tensor& p : params) {
    if (!p.has_grad()) {
      throw ContractError("sgd_step: parameter has no gradient (run backward first)");
    }
  }
  for (Tensor& p : params) {
    auto* d = p.raw();
    for (std::size_t i = 0; i < d->data.size(); ++i) {
      d->data[i] -= lr * d->grad[i];
    }
    std::fill(d->grad.begin(), d->grad.end(), 0.0f);
  }
}

// ---- op helpers ----------------------------------------------------------

namespace {

void record_op(const char* name, std::vector<std::shared_ptr<detail::TensorData>> parents,
               const std::shared_ptr<detail::TensorData>& out, std::function<void()> fn) {
  GradTape::current()->record(name, std::move(parents), out, std::move(fn));
}

// Elementwise binary op with size-1 broadcasting.
template <typename FwdFn, typename BwdFn>
Tensor broadcast_binary(const char* name, const Tensor& a, const Tensor& b, FwdFn fwd,
                        BwdFn bwd_pair) {
  const Shape out_shape = broadcast_shape(name, a.shape(), b.shape());
  const bool rg = grad_mode_for({&a, &b});
  auto out = make_data(out_shape, rg);

  const auto* pa = a.raw();
  const auto* pb = b.raw();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < out->data.size(); ++i) {
      out->data[i] = fwd(pa->data[i], pb->data[i]);
    }
  } else {
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    BroadcastIter it(out_shape);
    std::size_t o = 0;
    do {
      out->data[o++] = fwd(pa->data[static_cast<std::size_t>(it.offset(sa))],
                           pb->data[static_cast<std::size_t>(it.offset(sb))]);
    } while (it.next());
  }

  Tensor result(out);
  if (rg) {
    auto ah = a.handle();
    auto bh = b.handle();
    auto oh = out;
    Shape osh = out_shape;
    record_op(name, {ah, bh}, out, [ah, bh, oh, osh, bwd_pair]() {
      const bool need_a = ah->requires_grad;
      const bool need_b = bh->requires_grad;
      if (need_a) ah->ensure_grad();
      if (need_b) bh->ensure_grad();
      if (ah->shape == bh->shape) {
        for (std::size_t i = 0; i < oh->data.size(); ++i) {
          const float g = oh->grad[i];
          auto [da, db] = bwd_pair(ah->data[i], bh->data[i], g);
          if (need_a) ah->grad[i] += da;
          if (need_b) bh->grad[i] += db;
        }
      } else {
        const auto sa = broadcast_strides(ah->shape, osh);
        const auto sb = broadcast_strides(bh->shape, osh);
        BroadcastIter it(osh);
        std::size_t o = 0;
        do {
          const auto ia = static_cast<std::size_t>(it.offset(sa));
          const auto ib = static_cast<std::size_t>(it.offset(sb));
          const float g = oh->grad[o++];
          auto [da, db] = bwd_pair(ah->data[ia], bh->data[ib], g);
          if (need_a) ah->grad[ia] += da;
          if (need_b) bh->grad[ib] += db;
        } while (it.next());
      }
    });
  }
  return result;
}

template <typename FwdFn, typename BwdFn>
Tensor unary_op(const char* name, const Tensor& x, FwdFn fwd, BwdFn bwd) {
  const bool rg = grad_mode_for({&x});
  auto out = make_data(x.shape(), rg);
  const auto* px = x.raw();
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = fwd(px->data[i]);

  Tensor result(out);
  if (rg) {
    auto xh = x.handle();
    auto oh = out;
    record_op(name, {xh}, out, [xh, oh, bwd]() {
      xh->ensure_grad();
      for (std::size_t i = 0; i < oh->data.size(); ++i) {
        xh->grad[i] += bwd(xh->data[i], oh->data[i], oh->grad[i]);
      }
    });
  }
  return result;
}

}  // namespace

// ---- ops ------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      "add", a, b, [](float x, float y) { return x + y; },
      [](float, float, float g) { return std::pair<float, float>{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      "sub", a, b, [](float x, float y) { return x - y; },
      [](float, float, float g) { return std::pair<float, float>{g, -g}; });
}

Tensor mul_elementwise(const Tensor& a, const Tensor& b) {
  return broadcast_binary(
      "mul", a, b, [](float x, float y) { return x * y; },
      [](float x, float y, float g) { return std::pair<float, float>{g * y, g * x}; });
}

Tensor scale(const Tensor& a, float c) {
  return unary_op(
      "scale", a, [c](float x) { return c * x; },
      [c](float, float, float g) { return c * g; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float, float g) { return v > 0.0f ? g : 0.0f; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float y, float g) { return g * y * (1.0f - y); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: expects 2D tensors, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw ShapeError("matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const bool rg = grad_mode_for({&a, &b});
  auto out = make_data({m, n}, rg);

  const float* A = a.raw()->data.data();
  const float* B = b.raw()->data.data();
  float* C = out->data.data();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    float* crow = C + static_cast<std::int64_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const float av = A[static_cast<std::int64_t>(i) * k + kk];
      const float* brow = B + static_cast<std::int64_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }

  Tensor result(out);
  if (rg) {
    auto ah = a.handle();
    auto bh = b.handle();
    auto oh = out;
    record_op("matmul", {ah, bh}, out, [ah, bh, oh, m, k, n]() {
      const float* A = ah->data.data();
      const float* B = bh->data.data();
      const float* G = oh->grad.data();
      if (ah->requires_grad) {
        ah->ensure_grad();
        float* dA = ah->grad.data();
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) {
          for (int kk = 0; kk < k; ++kk) {
            const float* grow = G + static_cast<std::int64_t>(i) * n;
            const float* brow = B + static_cast<std::int64_t>(kk) * n;
            float acc = 0.0f;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            dA[static_cast<std::int64_t>(i) * k + kk] += acc;
          }
        }
      }
      if (bh->requires_grad) {
        bh->ensure_grad();
        float* dB = bh->grad.data();
#pragma omp parallel for schedule(static)
        for (int kk = 0; kk < k; ++kk) {
          float* drow = dB + static_cast<std::int64_t>(kk) * n;
          for (int i = 0; i < m; ++i) {
            const float av = A[static_cast<std::int64_t>(i) * k + kk];
            const float* grow = G + static_cast<std::int64_t>(i) * n;
            for (int j = 0; j < n; ++j) drow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return result;
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias) {
  if (x.rank() != 4 || k.rank() != 4) {
    throw ShapeError("conv2d: x must be [B,H,W,Cin], kernel [Kh,Kw,Cin,Cout]");
  }
  const int B = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
  const int Kh = k.dim(0), Kw = k.dim(1), KCin = k.dim(2), Cout = k.dim(3);
  if (Kh % 2 == 0 || Kw % 2 == 0) throw ContractError("conv2d: kernel dims must be odd");
  if (KCin != Cin) {
    throw ShapeError("conv2d: channel mismatch, input " + shape_str(x.shape()) + " vs kernel " +
                     shape_str(k.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != Cout) {
    throw ShapeError("conv2d: bias must be [Cout]=" + std::to_string(Cout));
  }
  const int ph = Kh / 2, pw = Kw / 2;
  const bool rg = grad_mode_for({&x, &k, &bias});
  auto out = make_data({B, H, W, Cout}, rg);

  const float* X = x.raw()->data.data();
  const float* K = k.raw()->data.data();
  const float* Bv = bias.raw()->data.data();
  float* Y = out->data.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int oh = 0; oh < H; ++oh) {
      for (int ow = 0; ow < W; ++ow) {
        float* yrow = Y + (((static_cast<std::int64_t>(b) * H + oh) * W + ow) * Cout);
        for (int c = 0; c < Cout; ++c) yrow[c] = Bv[c];
        for (int kh = 0; kh < Kh; ++kh) {
          const int ih = oh + kh - ph;
          if (ih < 0 || ih >= H) continue;
          for (int kw = 0; kw < Kw; ++kw) {
            const int iw = ow + kw - pw;
            if (iw < 0 || iw >= W) continue;
            const float* xrow = X + (((static_cast<std::int64_t>(b) * H + ih) * W + iw) * Cin);
            const float* krow = K + ((static_cast<std::int64_t>(kh) * Kw + kw) * Cin) * Cout;
            for (int ci = 0; ci < Cin; ++ci) {
              const float xv = xrow[ci];
              const float* kk = krow + static_cast<std::int64_t>(ci) * Cout;
              for (int c = 0; c < Cout; ++c) yrow[c] += xv * kk[c];
            }
          }
        }
      }
    }
  }

  Tensor result(out);
  if (rg) {
    auto xh = x.handle();
    auto kh_ = k.handle();
    auto bh = bias.handle();
    auto oh_ = out;
    record_op("conv2d", {xh, kh_, bh}, out, [xh, kh_, bh, oh_, B, H, W, Cin, Kh, Kw, Cout, ph,
                                             pw]() {
      const float* X = xh->data.data();
      const float* K = kh_->data.data();
      const float* G = oh_->grad.data();

      if (bh->requires_grad) {
        bh->ensure_grad();
        std::vector<double> acc(static_cast<std::size_t>(Cout), 0.0);
        const std::int64_t npos = static_cast<std::int64_t>(B) * H * W;
        for (std::int64_t p = 0; p < npos; ++p) {
          const float* grow = G + p * Cout;
          for (int c = 0; c < Cout; ++c) acc[static_cast<std::size_t>(c)] += grow[c];
        }
        for (int c = 0; c < Cout; ++c) {
          bh->grad[static_cast<std::size_t>(c)] += static_cast<float>(acc[static_cast<std::size_t>(c)]);
        }
      }

      if (xh->requires_grad) {
        xh->ensure_grad();
        float* dX = xh->grad.data();
#pragma omp parallel for collapse(2) schedule(static)
        for (int b = 0; b < B; ++b) {
          for (int ih = 0; ih < H; ++ih) {
            for (int iw = 0; iw < W; ++iw) {
              float* dxrow = dX + (((static_cast<std::int64_t>(b) * H + ih) * W + iw) * Cin);
              for (int kh = 0; kh < Kh; ++kh) {
                const int oh = ih - kh + ph;
                if (oh < 0 || oh >= H) continue;
                for (int kw = 0; kw < Kw; ++kw) {
                  const int ow = iw - kw + pw;
                  if (ow < 0 || ow >= W) continue;
                  const float* grow =
                      G + (((static_cast<std::int64_t>(b) * H + oh) * W + ow) * Cout);
                  const float* krow = K + ((static_cast<std::int64_t>(kh) * Kw + kw) * Cin) * Cout;
                  for (int ci = 0; ci < Cin; ++ci) {
                    const float* kk = krow + static_cast<std::int64_t>(ci) * Cout;
                    float acc = 0.0f;
                    for (int c = 0; c < Cout; ++c) acc += kk[c] * grow[c];
                    dxrow[ci] += acc;
                  }
                }
              }
            }
          }
        }
      }

      if (kh_->requires_grad) {
        kh_->ensure_grad();
        float* dK = kh_->grad.data();
        // Each (kh,kw) slab is owned by one thread; inside, rank-1 updates of
        // the Cin x Cout slab keep the reduction order fixed.
#pragma omp parallel for collapse(2) schedule(static)
        for (int kh = 0; kh < Kh; ++kh) {
          for (int kw = 0; kw < Kw; ++kw) {
            float* slab = dK + ((static_cast<std::int64_t>(kh) * Kw + kw) * Cin) * Cout;
            for (int b = 0; b < B; ++b) {
              for (int oh = 0; oh < H; ++oh) {
                const int ih = oh + kh - ph;
                if (ih < 0 || ih >= H) continue;
                for (int ow = 0; ow < W; ++ow) {
                  const int iw = ow + kw - pw;
                  if (iw < 0 || iw >= W) continue;
                  const float* xrow =
                      X + (((static_cast<std::int64_t>(b) * H + ih) * W + iw) * Cin);
                  const float* grow =
                      G + (((static_cast<std::int64_t>(b) * H + oh) * W + ow) * Cout);
                  for (int ci = 0; ci < Cin; ++ci) {
                    const float xv = xrow[ci];
                    float* drow = slab + static_cast<std::int64_t>(ci) * Cout;
                    for (int c = 0; c < Cout; ++c) drow[c] += xv * grow[c];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool: expects [B,H,W,C]");
  const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const bool rg = grad_mode_for({&x});
  auto out = make_data({B, C}, rg);

  const float* X = x.raw()->data.data();
  const double inv = 1.0 / (static_cast<double>(H) * W);
  for (int b = 0; b < B; ++b) {
    std::vector<double> acc(static_cast<std::size_t>(C), 0.0);
    const float* base = X + static_cast<std::int64_t>(b) * H * W * C;
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(H) * W; ++p) {
      for (int c = 0; c < C; ++c) acc[static_cast<std::size_t>(c)] += base[p * C + c];
    }
    for (int c = 0; c < C; ++c) {
      out->data[static_cast<std::size_t>(b) * C + c] =
          static_cast<float>(acc[static_cast<std::size_t>(c)] * inv);
    }
  }

  Tensor result(out);
  if (rg) {
    auto xh = x.handle();
    auto oh = out;
    record_op("global_avg_pool", {xh}, out, [xh, oh, B, H, W, C, inv]() {
      xh->ensure_grad();
      float* dX = xh->grad.data();
      const float* G = oh->grad.data();
      for (int b = 0; b < B; ++b) {
        float* base = dX + static_cast<std::int64_t>(b) * H * W * C;
        const float* grow = G + static_cast<std::int64_t>(b) * C;
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(H) * W; ++p) {
          for (int c = 0; c < C; ++c) base[p * C + c] += static_cast<float>(grow[c] * inv);
        }
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  const bool rg = grad_mode_for({&x});
  auto out = make_data(shape, rg);
  out->data = x.raw()->data;

  Tensor result(out);
  if (rg) {
    auto xh = x.handle();
    auto oh = out;
    record_op("reshape", {xh}, out, [xh, oh]() {
      xh->ensure_grad();
      for (std::size_t i = 0; i < oh->grad.size(); ++i) xh->grad[i] += oh->grad[i];
    });
  }
  return result;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check_same_shape("mse_loss", pred, target);
  const bool rg = grad_mode_for({&pred, &target});
  auto out = make_data({1}, rg);

  const float* P = pred.raw()->data.data();
  const float* T = target.raw()->data.data();
  const std::size_t n = pred.raw()->data.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(P[i]) - static_cast<double>(T[i]);
    acc += d * d;
  }
  out->data[0] = static_cast<float>(acc / static_cast<double>(n));

  Tensor result(out);
  if (rg) {
    auto ph = pred.handle();
    auto th = target.handle();
    auto oh = out;
    record_op("mse_loss", {ph, th}, out, [ph, th, oh, n]() {
      const float g = oh->grad[0];
      const float c = 2.0f * g / static_cast<float>(n);
      const bool need_p = ph->requires_grad;
      const bool need_t = th->requires_grad;
      if (need_p) ph->ensure_grad();
      if (need_t) th->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const float d = c * (ph->data[i] - th->data[i]);
        if (need_p) ph->grad[i] += d;
        if (need_t) th->grad[i] -= d;
      }
    });
  }
  return result;
}

Tensor power_normalize(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("power_normalize: expects at least [B,...]");
  const int B = x.dim(0);
  const std::int64_t per = x.size() / B;
  if (per % 2 != 0) throw ShapeError("power_normalize: per-item size must be even (re/im pairs)");
  const double n_symbols = static_cast<double>(per) / 2.0;

  const bool rg = grad_mode_for({&x});
  auto out = make_data(x.shape(), rg);

  const float* X = x.raw()->data.data();
  float* Y = out->data.data();
  std::vector<double> norms(static_cast<std::size_t>(B), 0.0);
  for (int b = 0; b < B; ++b) {
    const float* xb = X + b * per;
    double ss = 0.0;
    for (std::int64_t i = 0; i < per; ++i) ss += static_cast<double>(xb[i]) * xb[i];
    const double r = std::sqrt(ss);
    norms[static_cast<std::size_t>(b)] = r;
    const double s = r < 1e-12 ? 0.0 : std::sqrt(n_symbols) / r;
    float* yb = Y + b * per;
    for (std::int64_t i = 0; i < per; ++i) yb[i] = static_cast<float>(s * xb[i]);
  }

  Tensor result(out);
  if (rg) {
    auto xh = x.handle();
    auto oh = out;
    record_op("power_normalize", {xh}, out, [xh, oh, B, per, n_symbols, norms]() {
      xh->ensure_grad();
      const float* X = xh->data.data();
      const float* G = oh->grad.data();
      float* dX = xh->grad.data();
      for (int b = 0; b < B; ++b) {
        const double r = norms[static_cast<std::size_t>(b)];
        if (r < 1e-12) continue;  // output pinned at zero, no gradient
        const double s = std::sqrt(n_symbols) / r;
        const float* xb = X + b * per;
        const float* gb = G + b * per;
        float* db = dX + b * per;
        double gdotx = 0.0;
        for (std::int64_t i = 0; i < per; ++i) {
          gdotx += static_cast<double>(gb[i]) * xb[i];
        }
        const double c2 = s * gdotx / (r * r);
        for (std::int64_t i = 0; i < per; ++i) {
          db[i] += static_cast<float>(s * gb[i] - c2 * xb[i]);
        }
      }
    });
  }
  return result;
}

Tensor complex_affine(const Tensor& x, std::span<const float> coeff_re,
                      std::span<const float> coeff_im, std::span<const float> add_re,
                      std::span<const float> add_im) {
  if (x.rank() != 3 || x.dim(2) != 2) throw ShapeError("complex_affine: x must be [B,S,2]");
  const int B = x.dim(0);
  const std::int64_t S = x.dim(1);
  const std::int64_t total = static_cast<std::int64_t>(B) * S;
  const bool per_symbol = static_cast<std::int64_t>(coeff_re.size()) == total;
  if (!per_symbol && static_cast<std::int64_t>(coeff_re.size()) != B) {
    throw ShapeError("complex_affine: coeff must have B or B*S entries");
  }
  if (coeff_im.size() != coeff_re.size()) throw ShapeError("complex_affine: coeff_im size");
  const bool has_add = !add_re.empty();
  if (has_add && (static_cast<std::int64_t>(add_re.size()) != total ||
                  add_im.size() != add_re.size())) {
    throw ShapeError("complex_affine: add must have B*S entries");
  }

  const bool rg = grad_mode_for({&x});
  auto out = make_data(x.shape(), rg);
  const float* X = x.raw()->data.data();
  float* Y = out->data.data();
  for (std::int64_t i = 0; i < total; ++i) {
    const std::size_t ci = static_cast<std::size_t>(per_symbol ? i : i / S);
    const float cr = coeff_re[ci], cim = coeff_im[ci];
    const float xr = X[2 * i], xi = X[2 * i + 1];
    float yr = cr * xr - cim * xi;
    float yi = cr * xi + cim * xr;
    if (has_add) {
      yr += add_re[static_cast<std::size_t>(i)];
      yi += add_im[static_cast<std::size_t>(i)];
    }
    Y[2 * i] = yr;
    Y[2 * i + 1] = yi;
  }

  Tensor result(out);
  if (rg) {
    auto xh = x.handle();
    auto oh = out;
    std::vector<float> cre(coeff_re.begin(), coeff_re.end());
    std::vector<float> cim(coeff_im.begin(), coeff_im.end());
    record_op("complex_affine", {xh}, out,
              [xh, oh, cre = std::move(cre), cim = std::move(cim), total, S, per_symbol]() {
                xh->ensure_grad();
                const float* G = oh->grad.data();
                float* dX = xh->grad.data();
                for (std::int64_t i = 0; i < total; ++i) {
                  const std::size_t ci = static_cast<std::size_t>(per_symbol ? i : i / S);
                  const float cr = cre[ci], im = cim[ci];
                  const float gr = G[2 * i], gi = G[2 * i + 1];
                  dX[2 * i] += cr * gr + im * gi;
                  dX[2 * i + 1] += -im * gr + cr * gi;
                }
              });
  }
  return result;
}

}  // namespace deepsc
