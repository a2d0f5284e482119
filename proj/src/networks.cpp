#include "reflprior/networks.hpp"

#include <cmath>

#include "reflprior/error.hpp"

namespace reflprior::nn {

namespace {

template <typename Scalar>
Vec<Scalar> uniform_values(Index n, double bound, Rng& rng) {
  Vec<Scalar> v(n);
  for (Index i = 0; i < n; ++i) v(i) = Scalar(uniform(rng, -bound, bound));
  return v;
}

template <typename Scalar>
Tensor<Scalar> uniform_parameter(const Shape& shape, double bound, Rng& rng) {
  return Tensor<Scalar>::parameter(shape, uniform_values<Scalar>(shape_size(shape), bound, rng));
}

Index linear_count(Index in, Index out) { return in * out + out; }

}  // namespace

std::string to_string(EmbeddingKind kind) { return kind == EmbeddingKind::cnn ? "cnn" : "fno"; }

EmbeddingKind embedding_kind_from_string(const std::string& s) {
  if (s == "cnn") return EmbeddingKind::cnn;
  if (s == "fno") return EmbeddingKind::fno;
  throw InvalidInput("unknown embedding kind '" + s + "' (expected cnn or fno)");
}

void NetworkConfig::validate() const {
  if (n_params < 1) throw InvalidInput("network: n_params must be >= 1");
  if (mlp.dim_hidden < 1 || mlp.n_blocks < 0) throw InvalidInput("network: invalid MLP size");
  if (embedding == EmbeddingKind::cnn) {
    if (cnn.channels.empty() || cnn.pool_size < 1 || cnn.dim_emb < 1)
      throw InvalidInput("network: invalid CNN size");
    for (std::size_t i = 0; i < cnn.channels.size(); ++i) {
      if (cnn.channels[i] < 1) throw InvalidInput("network: CNN channels must be >= 1");
      if (i > 0 && cnn.channels[i] != 2 * cnn.channels[i - 1])
        throw InvalidInput("network: CNN channel schedule must double at every stage");
    }
  } else {
    if (fno.channels < 1 || fno.n_blocks < 0 || fno.n_modes < 1 || fno.dim_emb < 1 ||
        !(fno.q_scale > 0.0))
      throw InvalidInput("network: invalid FNO size");
  }
}

template <typename Scalar>
Linear<Scalar>::Linear(Index in, Index out, Rng& rng, bool zero_init) {
  if (zero_init) {
    weight = Tensor<Scalar>::parameter({in, out}, Vec<Scalar>::Zero(in * out));
    bias = Tensor<Scalar>::parameter({out}, Vec<Scalar>::Zero(out));
  } else {
    const double bound = 1.0 / std::sqrt(double(in));
    weight = uniform_parameter<Scalar>({in, out}, bound, rng);
    bias = uniform_parameter<Scalar>({out}, bound, rng);
  }
}

template <typename Scalar>
void Linear<Scalar>::collect(const std::string& prefix,
                             std::vector<NamedParameter<Scalar>>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename Scalar>
BatchNorm<Scalar>::BatchNorm(Index features)
    : gamma(Tensor<Scalar>::parameter({features}, Vec<Scalar>::Ones(features))),
      beta(Tensor<Scalar>::parameter({features}, Vec<Scalar>::Zero(features))),
      stats(features) {}

template <typename Scalar>
void BatchNorm<Scalar>::collect(const std::string& prefix,
                                std::vector<NamedParameter<Scalar>>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

template <typename Scalar>
ResidualBlock<Scalar>::ResidualBlock(Index dim, Rng& rng)
    : bn1(dim), bn2(dim), lin1(dim, dim, rng), lin2(dim, dim, rng, true) {}

template <typename Scalar>
Tensor<Scalar> ResidualBlock<Scalar>::operator()(const Tensor<Scalar>& h, bool training) {
  Tensor<Scalar> f = lin1(gelu(bn1(h, training)));
  f = lin2(gelu(bn2(f, training)));
  return add(h, f);
}

template <typename Scalar>
void ResidualBlock<Scalar>::collect(const std::string& prefix,
                                    std::vector<NamedParameter<Scalar>>& out) const {
  bn1.collect(prefix + ".bn1", out);
  lin1.collect(prefix + ".lin1", out);
  bn2.collect(prefix + ".bn2", out);
  lin2.collect(prefix + ".lin2", out);
}

template <typename Scalar>
ResidualMlp<Scalar>::ResidualMlp(Index dim_in, Index dim_out, const ResidualMlpConfig& cfg,
                                 Rng& rng)
    : input_(dim_in, cfg.dim_hidden, rng) {
  for (Index i = 0; i < cfg.n_blocks; ++i) blocks_.emplace_back(cfg.dim_hidden, rng);
  output_ = Linear<Scalar>(cfg.dim_hidden, dim_out, rng, true);
}

template <typename Scalar>
Tensor<Scalar> ResidualMlp<Scalar>::forward(const Tensor<Scalar>& x, bool training) {
  Tensor<Scalar> h = input_(x);
  for (auto& block : blocks_) h = block(h, training);
  return output_(h);
}

template <typename Scalar>
void ResidualMlp<Scalar>::collect(const std::string& prefix,
                                  std::vector<NamedParameter<Scalar>>& out) const {
  input_.collect(prefix + ".input", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect(prefix + ".block" + std::to_string(i), out);
  output_.collect(prefix + ".output", out);
}

template <typename Scalar>
std::vector<BatchNormStats<Scalar>*> ResidualMlp<Scalar>::batch_norm_stats() {
  std::vector<BatchNormStats<Scalar>*> out;
  for (auto& block : blocks_) {
    out.push_back(&block.bn1.stats);
    out.push_back(&block.bn2.stats);
  }
  return out;
}

template <typename Scalar>
CnnEmbedding<Scalar>::CnnEmbedding(const CnnConfig& cfg, Rng& rng) : cfg_(cfg) {
  Index cin = 1;
  for (Index cout : cfg.channels) {
    const double bound = 1.0 / std::sqrt(double(cin * 3));
    weights_.push_back(uniform_parameter<Scalar>({cout, cin, 3}, bound, rng));
    biases_.push_back(uniform_parameter<Scalar>({cout}, bound, rng));
    cin = cout;
  }
  head_ = Linear<Scalar>(cin * cfg.pool_size, cfg.dim_emb, rng);
}

template <typename Scalar>
Tensor<Scalar> CnnEmbedding<Scalar>::forward(const Tensor<Scalar>& x) const {
  if (x.rank() != 3 || x.dim(1) != 1)
    throw InvalidInput("cnn embedding expects [B, 1, L], got " + shape_string(x.shape()));
  if (x.dim(2) < cfg_.pool_size)
    throw InvalidInput("cnn embedding needs at least " + std::to_string(cfg_.pool_size) +
                       " points");
  Tensor<Scalar> h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) h = gelu(conv1d(h, weights_[i], biases_[i], 2, 1));
  h = adaptive_avg_pool1d(h, cfg_.pool_size);
  h = reshape(h, {h.dim(0), h.dim(1) * h.dim(2)});
  return head_(h);
}

template <typename Scalar>
void CnnEmbedding<Scalar>::collect(const std::string& prefix,
                                   std::vector<NamedParameter<Scalar>>& out) const {
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back({prefix + ".conv" + std::to_string(i) + ".weight", weights_[i]});
    out.push_back({prefix + ".conv" + std::to_string(i) + ".bias", biases_[i]});
  }
  head_.collect(prefix + ".head", out);
}

template <typename Scalar>
SpectralBlock<Scalar>::SpectralBlock(Index channels, Index modes, Rng& rng) {
  spectral = uniform_parameter<Scalar>({channels, channels, 2, modes}, 1.0 / double(channels), rng);
  const double bound = 1.0 / std::sqrt(double(channels));
  pointwise = uniform_parameter<Scalar>({channels, channels}, bound, rng);
  bias = uniform_parameter<Scalar>({channels}, bound, rng);
}

template <typename Scalar>
Tensor<Scalar> SpectralBlock<Scalar>::operator()(const Tensor<Scalar>& v) const {
  const Index length = v.dim(2);
  const Tensor<Scalar> k = irfft(spectral_mix(rfft(v, spectral.dim(3)), spectral), length);
  return gelu(add(channel_linear(v, pointwise, bias), k));
}

template <typename Scalar>
void SpectralBlock<Scalar>::collect(const std::string& prefix,
                                    std::vector<NamedParameter<Scalar>>& out) const {
  out.push_back({prefix + ".spectral", spectral});
  out.push_back({prefix + ".pointwise", pointwise});
  out.push_back({prefix + ".bias", bias});
}

template <typename Scalar>
FnoEmbedding<Scalar>::FnoEmbedding(const FnoConfig& cfg, Rng& rng) : cfg_(cfg) {
  const double bound = 1.0 / std::sqrt(2.0);
  lift_w_ = uniform_parameter<Scalar>({2, cfg.channels}, bound, rng);
  lift_b_ = uniform_parameter<Scalar>({cfg.channels}, bound, rng);
  for (Index i = 0; i < cfg.n_blocks; ++i) blocks_.emplace_back(cfg.channels, cfg.n_modes, rng);
  head_ = Linear<Scalar>(cfg.channels, cfg.dim_emb, rng);
}

template <typename Scalar>
Tensor<Scalar> FnoEmbedding<Scalar>::forward(const Tensor<Scalar>& curve,
                                             const Tensor<Scalar>& q) const {
  if (curve.rank() != 3 || curve.dim(1) != 1 || curve.shape() != q.shape())
    throw InvalidInput("fno embedding expects curve and q of shape [B, 1, L], got " +
                       shape_string(curve.shape()) + " and " + shape_string(q.shape()));
  const Index batch = curve.dim(0), length = curve.dim(2);
  if (length < 2) throw InvalidInput("fno embedding needs at least 2 points");
  Vec<Scalar> stacked(batch * 2 * length);
  const Scalar inv_scale = Scalar(1.0 / cfg_.q_scale);
  for (Index b = 0; b < batch; ++b) {
    stacked.segment(b * 2 * length, length) = curve.value().segment(b * length, length);
    stacked.segment(b * 2 * length + length, length) =
        q.value().segment(b * length, length) * inv_scale;
  }
  Tensor<Scalar> v =
      channel_linear(Tensor<Scalar>::from({batch, 2, length}, std::move(stacked)), lift_w_, lift_b_);
  for (const auto& block : blocks_) v = block(v);
  return head_(mean_last(v));
}

template <typename Scalar>
void FnoEmbedding<Scalar>::collect(const std::string& prefix,
                                   std::vector<NamedParameter<Scalar>>& out) const {
  out.push_back({prefix + ".lift.weight", lift_w_});
  out.push_back({prefix + ".lift.bias", lift_b_});
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect(prefix + ".block" + std::to_string(i), out);
  head_.collect(prefix + ".head", out);
}

template <typename Scalar>
Regressor<Scalar>::Regressor(const NetworkConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  if (cfg.embedding == EmbeddingKind::cnn)
    cnn_ = CnnEmbedding<Scalar>(cfg.cnn, rng);
  else
    fno_ = FnoEmbedding<Scalar>(cfg.fno, rng);
  mlp_ = ResidualMlp<Scalar>(cfg.dim_emb() + 2 * cfg.n_params, cfg.n_params, cfg.mlp, rng);
}

template <typename Scalar>
Tensor<Scalar> Regressor<Scalar>::forward(const Tensor<Scalar>& curve, const Tensor<Scalar>& q,
                                          const Tensor<Scalar>& bounds_norm, bool training) {
  if (curve.rank() != 2 || bounds_norm.rank() != 2 || curve.dim(0) != bounds_norm.dim(0))
    throw InvalidInput("regressor: expected curve [B, L] and bounds [B, 2P], got " +
                       shape_string(curve.shape()) + " and " + shape_string(bounds_norm.shape()));
  if (bounds_norm.dim(1) != 2 * cfg_.n_params)
    throw InvalidInput("regressor: bounds must have " + std::to_string(2 * cfg_.n_params) +
                       " columns");
  const Index batch = curve.dim(0), length = curve.dim(1);
  const Tensor<Scalar> c3 = reshape(curve, {batch, 1, length});
  Tensor<Scalar> emb;
  if (cfg_.embedding == EmbeddingKind::cnn) {
    emb = cnn_.forward(c3);
  } else {
    if (q.shape() != curve.shape()) throw InvalidInput("regressor: q must match the curve shape");
    emb = fno_.forward(c3, reshape(q, {batch, 1, length}));
  }
  return mlp_.forward(concat_features(emb, bounds_norm), training);
}

template <typename Scalar>
std::vector<NamedParameter<Scalar>> Regressor<Scalar>::parameters() const {
  std::vector<NamedParameter<Scalar>> out;
  if (cfg_.embedding == EmbeddingKind::cnn)
    cnn_.collect("cnn", out);
  else
    fno_.collect("fno", out);
  mlp_.collect("mlp", out);
  return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> Regressor<Scalar>::parameter_tensors() const {
  std::vector<Tensor<Scalar>> out;
  for (auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

template <typename Scalar>
Index Regressor<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

template <typename Scalar>
void Regressor<Scalar>::save(Archive& archive) const {
  for (const auto& p : parameters())
    archive.put("param/" + p.name, p.tensor.shape(), p.tensor.value());
  auto stats = const_cast<ResidualMlp<Scalar>&>(mlp_).batch_norm_stats();
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& s = *stats[i];
    const std::string base = "buffer/mlp.bn" + std::to_string(i);
    archive.put(base + ".running_mean", {s.running_mean.size()}, s.running_mean);
    archive.put(base + ".running_var", {s.running_var.size()}, s.running_var);
  }
}

template <typename Scalar>
void Regressor<Scalar>::load(const Archive& archive) {
  for (auto& p : parameters()) {
    Tensor<Scalar> t = p.tensor;
    t.value() = archive.get<Scalar>("param/" + p.name, t.shape());
  }
  auto stats = mlp_.batch_norm_stats();
  for (std::size_t i = 0; i < stats.size(); ++i) {
    auto& s = *stats[i];
    const std::string base = "buffer/mlp.bn" + std::to_string(i);
    s.running_mean = archive.get<Scalar>(base + ".running_mean", {s.running_mean.size()});
    s.running_var = archive.get<Scalar>(base + ".running_var", {s.running_var.size()});
  }
}

Index parameter_count(const NetworkConfig& cfg) {
  cfg.validate();
  Index n = 0;
  if (cfg.embedding == EmbeddingKind::cnn) {
    Index cin = 1;
    for (Index cout : cfg.cnn.channels) {
      n += cout * cin * 3 + cout;
      cin = cout;
    }
    n += linear_count(cin * cfg.cnn.pool_size, cfg.cnn.dim_emb);
  } else {
    const Index c = cfg.fno.channels;
    n += 2 * c + c;
    n += cfg.fno.n_blocks * (c * c * 2 * cfg.fno.n_modes + c * c + c);
    n += linear_count(c, cfg.fno.dim_emb);
  }
  const Index h = cfg.mlp.dim_hidden;
  n += linear_count(cfg.dim_emb() + 2 * cfg.n_params, h);
  n += cfg.mlp.n_blocks * (2 * 2 * h + 2 * linear_count(h, h));
  n += linear_count(h, cfg.n_params);
  return n;
}

#define REFLPRIOR_INSTANTIATE(S)    \
  template struct Linear<S>;        \
  template struct BatchNorm<S>;     \
  template struct ResidualBlock<S>; \
  template class ResidualMlp<S>;    \
  template class CnnEmbedding<S>;   \
  template struct SpectralBlock<S>; \
  template class FnoEmbedding<S>;   \
  template class Regressor<S>;

REFLPRIOR_INSTANTIATE(float)
REFLPRIOR_INSTANTIATE(double)

#undef REFLPRIOR_INSTANTIATE

}  // namespace reflprior::nn
