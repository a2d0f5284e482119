#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// Each op records its parents and a backward closure when any input requires a gradient
// and recording is enabled on the calling thread. Tensor::backward() walks the recorded
// graph in reverse topological order and then releases it.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace reflprior::nn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Node {
  Shape shape;
  Vec<Scalar> value;
  Vec<Scalar> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

// Gradient recording is on by default; a guard turns it off for the current thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
class Tensor {
 public:
  using NodeT = Node<Scalar>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<NodeT> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor constant(const Shape& shape, Scalar value);
  static Tensor from(const Shape& shape, Vec<Scalar> values);
  // Leaf that accumulates gradients.
  static Tensor parameter(const Shape& shape, Vec<Scalar> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index dim(std::size_t i) const { return node_->shape.at(i); }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index size() const { return node_->value.size(); }

  const Vec<Scalar>& value() const { return node_->value; }
  Vec<Scalar>& value() { return node_->value; }
  const Vec<Scalar>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  Scalar item() const;

  // Row-major matrix view of a rank-2 tensor.
  Eigen::Map<const RowMat<Scalar>> matrix() const;

  void zero_grad() { node_->grad.resize(0); }
  // Seeds d(self)/d(self) = 1; self must hold a single element.
  void backward();

  Tensor detach() const;
  const std::shared_ptr<NodeT>& node() const { return node_; }

 private:
  std::shared_ptr<NodeT> node_;
};

template <typename Scalar>
struct BatchNormStats {
  Vec<Scalar> running_mean;
  Vec<Scalar> running_var;

  explicit BatchNormStats(Index features = 0)
      : running_mean(Vec<Scalar>::Zero(features)), running_var(Vec<Scalar>::Ones(features)) {}
};

// x: [B, in], weight: [in, out], bias: [out] (may be undefined).
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias);

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

// [B, n] ++ [B, m] -> [B, n + m]
template <typename Scalar>
Tensor<Scalar> concat_features(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, const Shape& shape);

// x: [B, F]. Training mode normalizes with batch statistics (biased variance) and updates
// the running statistics (unbiased variance); eval mode uses the running statistics.
template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, BatchNormStats<Scalar>& stats,
                          bool training, Scalar momentum = Scalar(0.1), Scalar eps = Scalar(1e-5));

// Exact GELU, x * Phi(x).
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x);

// Cross-correlation. x: [B, Cin, L], weight: [Cout, Cin, K], bias: [Cout] (may be undefined).
template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, Index stride = 2, Index padding = 1);

Index conv1d_output_length(Index length, Index kernel, Index stride, Index padding);

// [B, C, L] -> [B, C, out]; bin i spans [floor(i L / out), max(floor((i+1) L / out), start + 1)).
template <typename Scalar>
Tensor<Scalar> adaptive_avg_pool1d(const Tensor<Scalar>& x, Index out_size);

std::pair<Index, Index> adaptive_pool_bin(Index i, Index length, Index out_size);

// Real DFT along the last axis, first n_modes frequencies. [B, C, L] -> [B, C, 2, M] with the
// real parts in [.., 0, :] and imaginary parts in [.., 1, :]. n_modes <= 0 keeps L/2 + 1.
template <typename Scalar>
Tensor<Scalar> rfft(const Tensor<Scalar>& x, Index n_modes = 0);

// Inverse of rfft for a spectrum whose modes beyond M are zero. [B, C, 2, M] -> [B, C, L].
template <typename Scalar>
Tensor<Scalar> irfft(const Tensor<Scalar>& spectrum, Index length);

// Per-mode complex channel mixing. x: [B, Cin, 2, M], weight: [Cin, Cout, 2, M].
template <typename Scalar>
Tensor<Scalar> spectral_mix(const Tensor<Scalar>& x, const Tensor<Scalar>& weight);

// Pointwise linear map across channels. x: [B, Cin, L], weight: [Cin, Cout], bias: [Cout].
template <typename Scalar>
Tensor<Scalar> channel_linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                              const Tensor<Scalar>& bias);

// Mean over the last axis. [B, C, L] -> [B, C].
template <typename Scalar>
Tensor<Scalar> mean_last(const Tensor<Scalar>& x);

// Mean of squared differences; target is treated as a constant.
template <typename Scalar>
Tensor<Scalar> mse_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target);

// sum(x * weights) with constant weights; handy for gradient checks.
template <typename Scalar>
Tensor<Scalar> weighted_sum(const Tensor<Scalar>& x, const Vec<Scalar>& weights);

}  // namespace reflprior::nn
