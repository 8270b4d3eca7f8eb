#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "deepsc/errors.hpp"
#include "deepsc/rng.hpp"

namespace deepsc {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class GradTape;

namespace detail {

struct TensorData {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // allocated lazily; same length as data when present
  bool requires_grad = false;
  // Producing node, if any. A tensor with producer_tape == nullptr is a leaf.
  GradTape* producer_tape = nullptr;
  std::int64_t producer_node = -1;

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
};

}  // namespace detail

// Value-semantics handle over shared tensor storage (define-by-run graph).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor constant(const Shape& shape, float value, bool requires_grad = false);
  static Tensor uniform(const Shape& shape, float lo, float hi, std::uint64_t seed,
                        bool requires_grad = false);
  static Tensor uniform(const Shape& shape, float lo, float hi, Rng& rng,
                        bool requires_grad = false);
  // He initialization: normal(0, sqrt(2 / fan_in)).
  static Tensor he_normal(const Shape& shape, int fan_in, std::uint64_t seed,
                          bool requires_grad = false);
  static Tensor he_normal(const Shape& shape, int fan_in, Rng& rng,
                          bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<float> values,
                          bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  std::int64_t size() const { return d_->size(); }
  int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(d_->shape.size()); }

  // Spans alias shared storage; binding them to a temporary Tensor would
  // dangle, so rvalue access is disabled.
  std::span<float> data() & { return {d_->data.data(), d_->data.size()}; }
  std::span<const float> data() const& { return {d_->data.data(), d_->data.size()}; }
  std::span<float> data() && = delete;
  std::span<float> grad() &;
  std::span<const float> grad() const&;
  std::span<float> grad() && = delete;
  bool has_grad() const { return d_ && d_->grad.size() == d_->data.size(); }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool v);
  bool is_leaf() const { return d_->producer_tape == nullptr; }

  float item() const;
  float at(std::initializer_list<int> idx) const;

  void zero_grad();

  detail::TensorData* raw() const { return d_.get(); }
  const std::shared_ptr<detail::TensorData>& handle() const { return d_; }

  // Internal: wraps existing storage (used by the op implementations).
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}

 private:
  std::shared_ptr<detail::TensorData> d_;
};

// Single-use reverse-mode tape. Ops record nodes in creation order (which is a
// topological order); backward() consumes the tape.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;
  ~GradTape();

  std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }
  bool consumed() const { return consumed_; }

  // Runs reverse accumulation from `loss` (must be scalar and produced on this
  // tape), then clears the node list. A second call throws ContractError.
  void backward(const Tensor& loss);

  static GradTape* current();

  // Internal: appends one graph node (used by the op implementations).
  void record(const char* op, std::vector<std::shared_ptr<detail::TensorData>> parents,
              std::shared_ptr<detail::TensorData> output, std::function<void()> backward);

 private:
  struct Node {
    const char* op;
    std::vector<std::shared_ptr<detail::TensorData>> parents;
    std::shared_ptr<detail::TensorData> output;
    std::function<void()> backward;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// RAII activation of a tape. Ops executed inside the scope are recorded.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* prev_;
};

void backward(const Tensor& loss);

// p <- p - lr * grad(p) for every param, then grads are zeroed.
void sgd_step(std::span<Tensor> params, float lr);

// ---- differentiable ops ------------------------------------------------
// add/mul support numpy-style size-1 broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul_elementwise(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor matmul(const Tensor& a, const Tensor& b);  // strictly 2D
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// x: [B,H,W,Cin], k: [Kh,Kw,Cin,Cout] (odd Kh/Kw), bias: [Cout].
// Same zero padding, stride 1, cross-correlation.
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias);
Tensor global_avg_pool(const Tensor& x);  // [B,H,W,C] -> [B,C]
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Rescales each batch item so the mean complex-symbol power is 1:
// x_b <- x_b * sqrt(n_symbols) / ||x_b||, with n_symbols = size-per-item / 2.
Tensor power_normalize(const Tensor& x);

// y = c * x + add, where c is a constant complex coefficient per batch item
// (coeff size B) or per symbol (coeff size B*S), applied to x of shape
// [B,S,2]. `add_re/add_im` may be empty. Gradients flow to x only.
Tensor complex_affine(const Tensor& x, std::span<const float> coeff_re,
                      std::span<const float> coeff_im, std::span<const float> add_re,
                      std::span<const float> add_im);

}  // namespace deepsc
