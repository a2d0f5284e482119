#include "reflprior/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <unsupported/Eigen/SpecialFunctions>

#include "reflprior/error.hpp"

namespace reflprior::nn {

namespace {

thread_local bool g_grad_enabled = true;

#if defined(__GLIBC__)
// Activations are large and short-lived. Keep freed blocks in the heap rather than handing
// them back to the kernel, which would page-fault them in again on the next step.
const bool g_heap_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

template <typename Scalar>
using NodePtr = std::shared_ptr<Node<Scalar>>;

template <typename Scalar>
using MapRM = Eigen::Map<RowMat<Scalar>>;
template <typename Scalar>
using CMapRM = Eigen::Map<const RowMat<Scalar>>;

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidInput(what);
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  require(s.size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                " input, got " + shape_string(s));
}

// Output node; graph edges only when a parent needs a gradient.
template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, Vec<Scalar> value,
                           std::initializer_list<const Tensor<Scalar>*> inputs,
                           std::function<void(Node<Scalar>&)> backward) {
  auto node = std::make_shared<Node<Scalar>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled)
    for (const auto* t : inputs)
      if (t->defined() && t->requires_grad()) needs = true;
  if (needs) {
    node->requires_grad = true;
    for (const auto* t : inputs) node->parents.push_back(t->defined() ? t->node() : nullptr);
    node->backward = std::move(backward);
  }
  return Tensor<Scalar>(std::move(node));
}

template <typename Scalar, typename Expr>
void accumulate(const NodePtr<Scalar>& n, const Expr& g) {
  if (!n || !n->requires_grad) return;
  if (n->grad.size() == 0)
    n->grad = g;
  else
    n->grad += g;
}

template <typename Scalar>
bool wants(const NodePtr<Scalar>& n) {
  return n && n->requires_grad;
}

template <typename Scalar>
CMapRM<Scalar> as_matrix(const Vec<Scalar>& v, Index rows, Index cols) {
  return CMapRM<Scalar>(v.data(), rows, cols);
}

// DFT bases for length L, modes M. Forward: [L, 2M] with cos | -sin columns.
// Inverse: [2M, L] including the 1/L scale and the Hermitian doubling.
template <typename Scalar>
RowMat<Scalar> forward_basis(Index length, Index modes) {
  RowMat<Scalar> basis(length, 2 * modes);
  for (Index n = 0; n < length; ++n)
    for (Index m = 0; m < modes; ++m) {
      const double angle = 2.0 * std::numbers::pi * double((n * m) % length) / double(length);
      basis(n, m) = Scalar(std::cos(angle));
      basis(n, modes + m) = Scalar(-std::sin(angle));
    }
  return basis;
}

template <typename Scalar>
RowMat<Scalar> inverse_basis(Index length, Index modes) {
  RowMat<Scalar> basis(2 * modes, length);
  for (Index m = 0; m < modes; ++m) {
    const bool self_conjugate = m == 0 || (length % 2 == 0 && 2 * m == length);
    const double weight = (self_conjugate ? 1.0 : 2.0) / double(length);
    for (Index n = 0; n < length; ++n) {
      const double angle = 2.0 * std::numbers::pi * double((n * m) % length) / double(length);
      basis(m, n) = Scalar(weight * std::cos(angle));
      basis(modes + m, n) = Scalar(-weight * std::sin(angle));
    }
  }
  return basis;
}

// [B, C, L] storage <-> [C, B * L] matrix.
template <typename Scalar>
RowMat<Scalar> to_channel_major(const Vec<Scalar>& v, Index batch, Index channels, Index length) {
  RowMat<Scalar> out(channels, batch * length);
  for (Index b = 0; b < batch; ++b)
    out.middleCols(b * length, length) =
        CMapRM<Scalar>(v.data() + b * channels * length, channels, length);
  return out;
}

template <typename Scalar>
Vec<Scalar> from_channel_major(const RowMat<Scalar>& m, Index batch, Index length) {
  const Index channels = m.rows();
  Vec<Scalar> out(batch * channels * length);
  for (Index b = 0; b < batch; ++b)
    MapRM<Scalar>(out.data() + b * channels * length, channels, length) =
        m.middleCols(b * length, length);
  return out;
}

}  // namespace

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(const Shape& shape) {
  return from(shape, Vec<Scalar>::Zero(shape_size(shape)));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::constant(const Shape& shape, Scalar value) {
  return from(shape, Vec<Scalar>::Constant(shape_size(shape), value));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from(const Shape& shape, Vec<Scalar> values) {
  require(values.size() == shape_size(shape),
          "tensor data length does not match shape " + shape_string(shape));
  auto node = std::make_shared<NodeT>();
  node->shape = shape;
  node->value = std::move(values);
  return Tensor(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::parameter(const Shape& shape, Vec<Scalar> values) {
  Tensor t = from(shape, std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  require(size() == 1, "item() needs a single-element tensor");
  return node_->value(0);
}

template <typename Scalar>
Eigen::Map<const RowMat<Scalar>> Tensor<Scalar>::matrix() const {
  require_rank(shape(), 2, "matrix()");
  return as_matrix<Scalar>(node_->value, dim(0), dim(1));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  return from(shape(), value());
}

template <typename Scalar>
void Tensor<Scalar>::backward() {
  require(size() == 1, "backward() needs a scalar output");
  if (!node_->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      NodeT* p = n->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad = Vec<Scalar>::Ones(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->backward && n->grad.size() > 0) n->backward(*n);
  }
  // Release the graph; leaves keep their gradients.
  for (NodeT* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->parents.clear();
      if (n != node_.get()) n->grad.resize(0);
    }
  }
}

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias) {
  require_rank(x.shape(), 2, "linear");
  require_rank(weight.shape(), 2, "linear weight");
  const Index batch = x.dim(0), in = x.dim(1), out = weight.dim(1);
  require(weight.dim(0) == in, "linear: input width " + std::to_string(in) +
                                   " does not match weight " + shape_string(weight.shape()));
  require(!bias.defined() || bias.size() == out, "linear: bias length mismatch");

  Vec<Scalar> y(batch * out);
  MapRM<Scalar> ym(y.data(), batch, out);
  ym.noalias() = x.matrix() * weight.matrix();
  if (bias.defined()) ym.rowwise() += bias.value().transpose();

  return make_result<Scalar>({batch, out}, std::move(y), {&x, &weight, &bias},
                             [batch, in, out](Node<Scalar>& self) {
    const auto& px = self.parents[0];
    const auto& pw = self.parents[1];
    const auto& pb = self.parents[2];
    const auto dy = as_matrix<Scalar>(self.grad, batch, out);
    if (wants(px)) {
      RowMat<Scalar> dx = dy * as_matrix<Scalar>(pw->value, in, out).transpose();
      accumulate(px, Eigen::Map<const Vec<Scalar>>(dx.data(), dx.size()));
    }
    if (wants(pw)) {
      RowMat<Scalar> dw = as_matrix<Scalar>(px->value, batch, in).transpose() * dy;
      accumulate(pw, Eigen::Map<const Vec<Scalar>>(dw.data(), dw.size()));
    }
    if (wants(pb)) accumulate(pb, Vec<Scalar>(dy.colwise().sum().transpose()));
  });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
  return make_result<Scalar>(a.shape(), a.value() + b.value(), {&a, &b}, [](Node<Scalar>& self) {
    accumulate(self.parents[0], self.grad);
    accumulate(self.parents[1], self.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> concat_features(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_rank(a.shape(), 2, "concat_features");
  require_rank(b.shape(), 2, "concat_features");
  require(a.dim(0) == b.dim(0), "concat_features: batch mismatch");
  const Index batch = a.dim(0), n = a.dim(1), m = b.dim(1);
  Vec<Scalar> y(batch * (n + m));
  MapRM<Scalar> ym(y.data(), batch, n + m);
  ym.leftCols(n) = a.matrix();
  ym.rightCols(m) = b.matrix();
  return make_result<Scalar>({batch, n + m}, std::move(y), {&a, &b},
                             [batch, n, m](Node<Scalar>& self) {
    const auto dy = as_matrix<Scalar>(self.grad, batch, n + m);
    if (wants(self.parents[0])) {
      RowMat<Scalar> da = dy.leftCols(n);
      accumulate(self.parents[0], Eigen::Map<const Vec<Scalar>>(da.data(), da.size()));
    }
    if (wants(self.parents[1])) {
      RowMat<Scalar> db = dy.rightCols(m);
      accumulate(self.parents[1], Eigen::Map<const Vec<Scalar>>(db.data(), db.size()));
    }
  });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, const Shape& shape) {
  require(shape_size(shape) == x.size(),
          "reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  return make_result<Scalar>(shape, x.value(), {&x},
                             [](Node<Scalar>& self) { accumulate(self.parents[0], self.grad); });
}

template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, BatchNormStats<Scalar>& stats,
                          bool training, Scalar momentum, Scalar eps) {
  require_rank(x.shape(), 2, "batch_norm");
  const Index batch = x.dim(0), features = x.dim(1);
  require(gamma.size() == features && beta.size() == features &&
              stats.running_mean.size() == features && stats.running_var.size() == features,
          "batch_norm: parameter length mismatch");
  if (training && batch < 2)
    throw InvalidState("batch_norm: training mode needs at least two samples per batch");

  const auto xm = x.matrix();
  Eigen::Array<Scalar, 1, Eigen::Dynamic> mean, inv_std;
  if (training) {
    mean = xm.colwise().mean().array();
    const RowMat<Scalar> centered = xm.rowwise() - mean.matrix();
    const auto sumsq = centered.array().square().colwise().sum();
    const auto var = sumsq / Scalar(batch);
    inv_std = (var + eps).rsqrt();
    stats.running_mean =
        (Scalar(1) - momentum) * stats.running_mean + momentum * mean.matrix().transpose();
    stats.running_var = (Scalar(1) - momentum) * stats.running_var +
                        momentum * (sumsq / Scalar(batch - 1)).matrix().transpose();
  } else {
    mean = stats.running_mean.transpose().array();
    inv_std = (stats.running_var.transpose().array() + eps).rsqrt();
  }
  RowMat<Scalar> xhat = (xm.array().rowwise() - mean).rowwise() * inv_std;
  Vec<Scalar> y(batch * features);
  MapRM<Scalar> ym(y.data(), batch, features);
  ym = (xhat.array().rowwise() * gamma.value().transpose().array()).rowwise() +
       beta.value().transpose().array();

  return make_result<Scalar>(
      {batch, features}, std::move(y), {&x, &gamma, &beta},
      [batch, features, training, xhat = std::move(xhat), inv_std](Node<Scalar>& self) {
        const auto& px = self.parents[0];
        const auto& pg = self.parents[1];
        const auto& pb = self.parents[2];
        const auto dy = as_matrix<Scalar>(self.grad, batch, features);
        if (wants(pg))
          accumulate(pg, Vec<Scalar>((dy.array() * xhat.array()).colwise().sum().transpose()));
        if (wants(pb)) accumulate(pb, Vec<Scalar>(dy.colwise().sum().transpose()));
        if (!wants(px)) return;
        const auto g = pg->value.transpose().array();
        RowMat<Scalar> dxhat = dy.array().rowwise() * g;
        RowMat<Scalar> dx;
        if (training) {
          const auto sum_d = dxhat.colwise().sum().array();
          const auto sum_dx = (dxhat.array() * xhat.array()).colwise().sum();
          dx = ((dxhat.array() * Scalar(batch)).rowwise() - sum_d -
                xhat.array().rowwise() * sum_dx)
                   .rowwise() *
               (inv_std / Scalar(batch));
        } else {
          dx = dxhat.array().rowwise() * inv_std;
        }
        accumulate(px, Eigen::Map<const Vec<Scalar>>(dx.data(), dx.size()));
      });
}

template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
  const auto xv = x.value().array();
  const Scalar inv_sqrt2 = Scalar(1.0 / std::numbers::sqrt2);
  Vec<Scalar> cdf =
      (Scalar(0.5) * (Scalar(1) + (xv * inv_sqrt2).erf()))
          .matrix();
  Vec<Scalar> y = (xv * cdf.array()).matrix();
  return make_result<Scalar>(x.shape(), std::move(y), {&x},
                             [cdf = std::move(cdf)](Node<Scalar>& self) {
    const auto& px = self.parents[0];
    const Scalar inv_sqrt_2pi = Scalar(1.0 / std::sqrt(2.0 * std::numbers::pi));
    const auto xa = px->value.array();
    const auto pdf = inv_sqrt_2pi * (Scalar(-0.5) * xa.square()).exp();
    accumulate(px, (self.grad.array() * (cdf.array() + xa * pdf)).matrix());
  });
}

Index conv1d_output_length(Index length, Index kernel, Index stride, Index padding) {
  return (length + 2 * padding - kernel) / stride + 1;
}

template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, Index stride, Index padding) {
  require_rank(x.shape(), 3, "conv1d");
  require_rank(weight.shape(), 3, "conv1d weight");
  const Index batch = x.dim(0), cin = x.dim(1), length = x.dim(2);
  const Index cout = weight.dim(0), kernel = weight.dim(2);
  require(weight.dim(1) == cin, "conv1d: channel mismatch between input " +
                                    shape_string(x.shape()) + " and weight " +
                                    shape_string(weight.shape()));
  require(stride >= 1 && padding >= 0, "conv1d: invalid stride or padding");
  require(length + 2 * padding >= kernel, "conv1d: input shorter than kernel");
  require(!bias.defined() || bias.size() == cout, "conv1d: bias length mismatch");
  const Index lout = conv1d_output_length(length, kernel, stride, padding);
  const Index width = cin * kernel;
  const Index n_cols = batch * lout;

  // Output positions t with 0 <= t * stride + k - padding < length.
  auto valid = [=](Index k) {
    const Index off = k - padding;
    const Index t0 = off >= 0 ? 0 : (-off + stride - 1) / stride;
    const Index t1 = std::min(lout, (length - 1 - off) / stride + 1);
    return std::pair<Index, Index>{t0, std::max(t0, t1)};
  };
  using StridedIn = Eigen::Map<const Vec<Scalar>, 0, Eigen::InnerStride<>>;
  using StridedOut = Eigen::Map<Vec<Scalar>, 0, Eigen::InnerStride<>>;

  // im2col: row (c, k), column (b, t) holds x[b, c, t * stride + k - padding].
  RowMat<Scalar> cols = RowMat<Scalar>::Zero(width, n_cols);
  const Scalar* xd = x.value().data();
  for (Index c = 0; c < cin; ++c)
    for (Index k = 0; k < kernel; ++k) {
      const auto [t0, t1] = valid(k);
      if (t1 <= t0) continue;
      for (Index b = 0; b < batch; ++b)
        cols.row(c * kernel + k).segment(b * lout + t0, t1 - t0) =
            StridedIn(xd + (b * cin + c) * length + t0 * stride + k - padding, t1 - t0,
                      Eigen::InnerStride<>(stride)).transpose();
    }
  const CMapRM<Scalar> w(weight.value().data(), cout, width);
  RowMat<Scalar> prod(cout, n_cols);
  prod.noalias() = w * cols;
  if (bias.defined()) prod.colwise() += bias.value();
  Vec<Scalar> y(batch * cout * lout);
  for (Index b = 0; b < batch; ++b)
    MapRM<Scalar>(y.data() + b * cout * lout, cout, lout) = prod.middleCols(b * lout, lout);

  return make_result<Scalar>(
      {batch, cout, lout}, std::move(y), {&x, &weight, &bias},
      [=, cols = std::move(cols)](Node<Scalar>& self) {
        const auto& px = self.parents[0];
        const auto& pw = self.parents[1];
        const auto& pb = self.parents[2];
        RowMat<Scalar> dprod(cout, n_cols);
        for (Index b = 0; b < batch; ++b)
          dprod.middleCols(b * lout, lout) =
              CMapRM<Scalar>(self.grad.data() + b * cout * lout, cout, lout);
        if (wants(pw)) {
          RowMat<Scalar> dw(cout, width);
          dw.noalias() = dprod * cols.transpose();
          accumulate(pw, Eigen::Map<const Vec<Scalar>>(dw.data(), dw.size()));
        }
        if (wants(pb)) accumulate(pb, Vec<Scalar>(dprod.rowwise().sum()));
        if (wants(px)) {
          RowMat<Scalar> dcols(width, n_cols);
          dcols.noalias() = CMapRM<Scalar>(pw->value.data(), cout, width).transpose() * dprod;
          Vec<Scalar> dx = Vec<Scalar>::Zero(batch * cin * length);
          for (Index c = 0; c < cin; ++c)
            for (Index k = 0; k < kernel; ++k) {
              const auto [t0, t1] = valid(k);
              if (t1 <= t0) continue;
              for (Index b = 0; b < batch; ++b)
                StridedOut(dx.data() + (b * cin + c) * length + t0 * stride + k - padding,
                           t1 - t0, Eigen::InnerStride<>(stride)) +=
                    dcols.row(c * kernel + k).segment(b * lout + t0, t1 - t0).transpose();
            }
          accumulate(px, dx);
        }
      });
}

std::pair<Index, Index> adaptive_pool_bin(Index i, Index length, Index out_size) {
  const Index start = (i * length) / out_size;
  const Index end = std::max(((i + 1) * length) / out_size, start + 1);
  return {start, std::min(end, length)};
}

template <typename Scalar>
Tensor<Scalar> adaptive_avg_pool1d(const Tensor<Scalar>& x, Index out_size) {
  require_rank(x.shape(), 3, "adaptive_avg_pool1d");
  require(out_size >= 1, "adaptive_avg_pool1d: output size must be >= 1");
  const Index rows = x.dim(0) * x.dim(1), length = x.dim(2);
  require(length >= 1, "adaptive_avg_pool1d: empty input");
  const CMapRM<Scalar> xm(x.value().data(), rows, length);
  Vec<Scalar> y(rows * out_size);
  MapRM<Scalar> ym(y.data(), rows, out_size);
  for (Index i = 0; i < out_size; ++i) {
    const auto [s, e] = adaptive_pool_bin(i, length, out_size);
    ym.col(i) = xm.middleCols(s, e - s).rowwise().sum() / Scalar(e - s);
  }
  return make_result<Scalar>({x.dim(0), x.dim(1), out_size}, std::move(y), {&x},
                             [rows, length, out_size](Node<Scalar>& self) {
    const CMapRM<Scalar> dy(self.grad.data(), rows, out_size);
    Vec<Scalar> dx = Vec<Scalar>::Zero(rows * length);
    MapRM<Scalar> dxm(dx.data(), rows, length);
    for (Index i = 0; i < out_size; ++i) {
      const auto [s, e] = adaptive_pool_bin(i, length, out_size);
      for (Index k = s; k < e; ++k) dxm.col(k) += dy.col(i) / Scalar(e - s);
    }
    accumulate(self.parents[0], dx);
  });
}

template <typename Scalar>
Tensor<Scalar> rfft(const Tensor<Scalar>& x, Index n_modes) {
  require_rank(x.shape(), 3, "rfft");
  const Index rows = x.dim(0) * x.dim(1), length = x.dim(2);
  require(length >= 1, "rfft: empty signal");
  const Index full = length / 2 + 1;
  const Index modes = n_modes <= 0 ? full : std::min(n_modes, full);
  RowMat<Scalar> basis = forward_basis<Scalar>(length, modes);
  Vec<Scalar> y(rows * 2 * modes);
  MapRM<Scalar>(y.data(), rows, 2 * modes).noalias() =
      CMapRM<Scalar>(x.value().data(), rows, length) * basis;
  return make_result<Scalar>({x.dim(0), x.dim(1), 2, modes}, std::move(y), {&x},
                             [rows, length, modes, basis = std::move(basis)](Node<Scalar>& self) {
    Vec<Scalar> dx(rows * length);
    MapRM<Scalar>(dx.data(), rows, length).noalias() =
        CMapRM<Scalar>(self.grad.data(), rows, 2 * modes) * basis.transpose();
    accumulate(self.parents[0], dx);
  });
}

template <typename Scalar>
Tensor<Scalar> irfft(const Tensor<Scalar>& spectrum, Index length) {
  require_rank(spectrum.shape(), 4, "irfft");
  require(spectrum.dim(2) == 2, "irfft: expected [B, C, 2, M] spectrum");
  const Index rows = spectrum.dim(0) * spectrum.dim(1), modes = spectrum.dim(3);
  require(length >= 1 && modes <= length / 2 + 1, "irfft: too many modes for output length");
  RowMat<Scalar> basis = inverse_basis<Scalar>(length, modes);
  Vec<Scalar> y(rows * length);
  MapRM<Scalar>(y.data(), rows, length).noalias() =
      CMapRM<Scalar>(spectrum.value().data(), rows, 2 * modes) * basis;
  return make_result<Scalar>({spectrum.dim(0), spectrum.dim(1), length}, std::move(y),
                             {&spectrum},
                             [rows, length, modes, basis = std::move(basis)](Node<Scalar>& self) {
    Vec<Scalar> dx(rows * 2 * modes);
    MapRM<Scalar>(dx.data(), rows, 2 * modes).noalias() =
        CMapRM<Scalar>(self.grad.data(), rows, length) * basis.transpose();
    accumulate(self.parents[0], dx);
  });
}

template <typename Scalar>
Tensor<Scalar> spectral_mix(const Tensor<Scalar>& x, const Tensor<Scalar>& weight) {
  require_rank(x.shape(), 4, "spectral_mix");
  require_rank(weight.shape(), 4, "spectral_mix weight");
  const Index batch = x.dim(0), cin = x.dim(1), modes = x.dim(3);
  const Index cout = weight.dim(1);
  require(x.dim(2) == 2 && weight.dim(2) == 2, "spectral_mix: expected complex axis of size 2");
  require(weight.dim(0) == cin, "spectral_mix: input channel mismatch");
  require(weight.dim(3) >= modes, "spectral_mix: weight has fewer modes than input");
  const Index wmodes = weight.dim(3);

  using Strided = Eigen::Map<const RowMat<Scalar>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
  using StridedOut = Eigen::Map<RowMat<Scalar>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
  using Stride = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
  // Real and imaginary [rows, cols] slices of mode m inside [rows, cols, 2, M] storage.
  auto slice = [](const Scalar* base, Index rows, Index cols, Index m_total, Index part, Index m) {
    return Strided(base + part * m_total + m, rows, cols, Stride(cols * 2 * m_total, 2 * m_total));
  };
  auto slice_out = [](Scalar* base, Index rows, Index cols, Index m_total, Index part, Index m) {
    return StridedOut(base + part * m_total + m, rows, cols,
                      Stride(cols * 2 * m_total, 2 * m_total));
  };

  Vec<Scalar> y(batch * cout * 2 * modes);
  const Scalar* xd = x.value().data();
  const Scalar* wd = weight.value().data();
  for (Index m = 0; m < modes; ++m) {
    const RowMat<Scalar> xr = slice(xd, batch, cin, modes, 0, m);
    const RowMat<Scalar> xi = slice(xd, batch, cin, modes, 1, m);
    const RowMat<Scalar> wr = slice(wd, cin, cout, wmodes, 0, m);
    const RowMat<Scalar> wi = slice(wd, cin, cout, wmodes, 1, m);
    slice_out(y.data(), batch, cout, modes, 0, m) = xr * wr - xi * wi;
    slice_out(y.data(), batch, cout, modes, 1, m) = xr * wi + xi * wr;
  }

  return make_result<Scalar>(
      {batch, cout, 2, modes}, std::move(y), {&x, &weight},
      [=](Node<Scalar>& self) {
        const auto& px = self.parents[0];
        const auto& pw = self.parents[1];
        Vec<Scalar> dx, dw;
        if (wants(px)) dx = Vec<Scalar>::Zero(px->value.size());
        if (wants(pw)) dw = Vec<Scalar>::Zero(pw->value.size());
        const Scalar* xv = px->value.data();
        const Scalar* wv = pw->value.data();
        const Scalar* g = self.grad.data();
        for (Index m = 0; m < modes; ++m) {
          const RowMat<Scalar> gr = slice(g, batch, cout, modes, 0, m);
          const RowMat<Scalar> gi = slice(g, batch, cout, modes, 1, m);
          if (wants(px)) {
            const RowMat<Scalar> wr = slice(wv, cin, cout, wmodes, 0, m);
            const RowMat<Scalar> wi = slice(wv, cin, cout, wmodes, 1, m);
            slice_out(dx.data(), batch, cin, modes, 0, m) =
                gr * wr.transpose() + gi * wi.transpose();
            slice_out(dx.data(), batch, cin, modes, 1, m) =
                gi * wr.transpose() - gr * wi.transpose();
          }
          if (wants(pw)) {
            const RowMat<Scalar> xr = slice(xv, batch, cin, modes, 0, m);
            const RowMat<Scalar> xi = slice(xv, batch, cin, modes, 1, m);
            slice_out(dw.data(), cin, cout, wmodes, 0, m) =
                xr.transpose() * gr + xi.transpose() * gi;
            slice_out(dw.data(), cin, cout, wmodes, 1, m) =
                xr.transpose() * gi - xi.transpose() * gr;
          }
        }
        if (wants(px)) accumulate(px, dx);
        if (wants(pw)) accumulate(pw, dw);
      });
}

template <typename Scalar>
Tensor<Scalar> channel_linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                              const Tensor<Scalar>& bias) {
  require_rank(x.shape(), 3, "channel_linear");
  require_rank(weight.shape(), 2, "channel_linear weight");
  const Index batch = x.dim(0), cin = x.dim(1), length = x.dim(2), cout = weight.dim(1);
  require(weight.dim(0) == cin, "channel_linear: channel mismatch");
  require(!bias.defined() || bias.size() == cout, "channel_linear: bias length mismatch");
  const CMapRM<Scalar> w(weight.value().data(), cin, cout);
  RowMat<Scalar> xc = to_channel_major<Scalar>(x.value(), batch, cin, length);
  RowMat<Scalar> yc(cout, batch * length);
  yc.noalias() = w.transpose() * xc;
  if (bias.defined()) yc.colwise() += bias.value();
  return make_result<Scalar>(
      {batch, cout, length}, from_channel_major<Scalar>(yc, batch, length), {&x, &weight, &bias},
      [=, xc = std::move(xc)](Node<Scalar>& self) {
        const auto& px = self.parents[0];
        const auto& pw = self.parents[1];
        const auto& pb = self.parents[2];
        const RowMat<Scalar> gc = to_channel_major<Scalar>(self.grad, batch, cout, length);
        if (wants(px)) {
          RowMat<Scalar> dxc(cin, batch * length);
          dxc.noalias() = CMapRM<Scalar>(pw->value.data(), cin, cout) * gc;
          accumulate(px, from_channel_major<Scalar>(dxc, batch, length));
        }
        if (wants(pw)) {
          RowMat<Scalar> dw(cin, cout);
          dw.noalias() = xc * gc.transpose();
          accumulate(pw, Eigen::Map<const Vec<Scalar>>(dw.data(), dw.size()));
        }
        if (wants(pb)) accumulate(pb, Vec<Scalar>(gc.rowwise().sum()));
      });
}

template <typename Scalar>
Tensor<Scalar> mean_last(const Tensor<Scalar>& x) {
  require_rank(x.shape(), 3, "mean_last");
  const Index rows = x.dim(0) * x.dim(1), length = x.dim(2);
  Vec<Scalar> y = CMapRM<Scalar>(x.value().data(), rows, length).rowwise().mean();
  return make_result<Scalar>({x.dim(0), x.dim(1)}, std::move(y), {&x},
                             [rows, length](Node<Scalar>& self) {
    Vec<Scalar> dx(rows * length);
    MapRM<Scalar>(dx.data(), rows, length) =
        (self.grad / Scalar(length)).replicate(1, length);
    accumulate(self.parents[0], dx);
  });
}

template <typename Scalar>
Tensor<Scalar> mse_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target) {
  require(pred.shape() == target.shape(), "mse_loss: shape mismatch " +
                                              shape_string(pred.shape()) + " vs " +
                                              shape_string(target.shape()));
  Vec<Scalar> diff = pred.value() - target.value();
  const Scalar n = Scalar(diff.size());
  Vec<Scalar> y(1);
  y(0) = diff.squaredNorm() / n;
  return make_result<Scalar>({1}, std::move(y), {&pred},
                             [diff = std::move(diff), n](Node<Scalar>& self) {
    accumulate(self.parents[0], (Scalar(2) * self.grad(0) / n) * diff);
  });
}

template <typename Scalar>
Tensor<Scalar> weighted_sum(const Tensor<Scalar>& x, const Vec<Scalar>& weights) {
  require(weights.size() == x.size(), "weighted_sum: weight length mismatch");
  Vec<Scalar> y(1);
  y(0) = x.value().dot(weights);
  return make_result<Scalar>({1}, std::move(y), {&x}, [weights](Node<Scalar>& self) {
    accumulate(self.parents[0], self.grad(0) * weights);
  });
}

#define REFLPRIOR_INSTANTIATE(S)                                                               \
  template class Tensor<S>;                                                                    \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);            \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> concat_features(const Tensor<S>&, const Tensor<S>&);                     \
  template Tensor<S> reshape(const Tensor<S>&, const Shape&);                                 \
  template Tensor<S> batch_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,         \
                                BatchNormStats<S>&, bool, S, S);                              \
  template Tensor<S> gelu(const Tensor<S>&);                                                  \
  template Tensor<S> conv1d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Index,      \
                            Index);                                                           \
  template Tensor<S> adaptive_avg_pool1d(const Tensor<S>&, Index);                            \
  template Tensor<S> rfft(const Tensor<S>&, Index);                                           \
  template Tensor<S> irfft(const Tensor<S>&, Index);                                          \
  template Tensor<S> spectral_mix(const Tensor<S>&, const Tensor<S>&);                        \
  template Tensor<S> channel_linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);    \
  template Tensor<S> mean_last(const Tensor<S>&);                                             \
  template Tensor<S> mse_loss(const Tensor<S>&, const Tensor<S>&);                            \
  template Tensor<S> weighted_sum(const Tensor<S>&, const Vec<S>&);

REFLPRIOR_INSTANTIATE(float)
REFLPRIOR_INSTANTIATE(double)

#undef REFLPRIOR_INSTANTIATE

}  // namespace reflprior::nn
