#pragma once

// Residual MLP regressor with a 1D CNN or FNO curve embedding.

#include <string>
#include <vector>

#include "reflprior/archive.hpp"
#include "reflprior/random.hpp"
#include "reflprior/tensor.hpp"

namespace reflprior::nn {

template <typename Scalar>
struct NamedParameter {
  std::string name;
  Tensor<Scalar> tensor;
};

template <typename Scalar>
struct Linear {
  Tensor<Scalar> weight;  // [in, out]
  Tensor<Scalar> bias;    // [out]

  Linear() = default;
  // Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and bias; zero_init sets both to zero.
  Linear(Index in, Index out, Rng& rng, bool zero_init = false);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, std::vector<NamedParameter<Scalar>>& out) const;
};

template <typename Scalar>
struct BatchNorm {
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  BatchNormStats<Scalar> stats;

  BatchNorm() = default;
  explicit BatchNorm(Index features);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x, bool training) {
    return batch_norm(x, gamma, beta, stats, training);
  }
  void collect(const std::string& prefix, std::vector<NamedParameter<Scalar>>& out) const;
};

struct ResidualMlpConfig {
  Index dim_hidden = 256;
  Index n_blocks = 3;
};

struct CnnConfig {
  std::vector<Index> channels{32, 64, 128};
  Index pool_size = 8;
  Index dim_emb = 128;
};

struct FnoConfig {
  Index channels = 32;
  Index n_blocks = 3;
  Index n_modes = 16;
  Index dim_emb = 128;
  double q_scale = 0.4;
};

enum class EmbeddingKind { cnn, fno };

std::string to_string(EmbeddingKind kind);
EmbeddingKind embedding_kind_from_string(const std::string& s);

struct NetworkConfig {
  EmbeddingKind embedding = EmbeddingKind::cnn;
  ResidualMlpConfig mlp;
  CnnConfig cnn;
  FnoConfig fno;
  Index n_params = 8;

  Index dim_emb() const { return embedding == EmbeddingKind::cnn ? cnn.dim_emb : fno.dim_emb; }
  void validate() const;
};

// One block: h + Lin(GELU(BN(Lin(GELU(BN(h)))))).
template <typename Scalar>
struct ResidualBlock {
  BatchNorm<Scalar> bn1, bn2;
  Linear<Scalar> lin1, lin2;  // lin2 starts at zero so the block starts as the identity

  ResidualBlock() = default;
  ResidualBlock(Index dim, Rng& rng);
  Tensor<Scalar> operator()(const Tensor<Scalar>& h, bool training);
  void collect(const std::string& prefix, std::vector<NamedParameter<Scalar>>& out) const;
};

template <typename Scalar>
class ResidualMlp {
 public:
  ResidualMlp() = default;
  ResidualMlp(Index dim_in, Index dim_out, const ResidualMlpConfig& cfg, Rng& rng);
  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training);
  void collect(const std::string& prefix, std::vector<NamedParameter<Scalar>>& out) const;
  std::vector<BatchNormStats<Scalar>*> batch_norm_stats();

 private:
  Linear<Scalar> input_;
  std::vector<ResidualBlock<Scalar>> blocks_;
  Linear<Scalar> output_;
};

// x: [B, 1, L] -> [B, dim_emb]. Conv(k3, s2, p1) + GELU per stage, pooled, flattened, projected.
template <typename Scalar>
class CnnEmbedding {
 public:
  CnnEmbedding() = default;
  CnnEmbedding(const CnnConfig& cfg, Rng& rng);
  Tensor<Scalar> forward(const Tensor<Scalar>& x) const;
  void collect(const std::string& prefix, std::vector<NamedParameter<Scalar>>& out) const;

 private:
  CnnConfig cfg_;
  std::vector<Tensor<Scalar>> weights_;  // [Cout, Cin, 3]
  std::vector<Tensor<Scalar>> biases_;
  Linear<Scalar> head_;
};

// v -> GELU(W v + irfft(T * rfft(v)[:n_modes])).
template <typename Scalar>
struct SpectralBlock {
  Tensor<Scalar> spectral;  // [C, C, 2, M]
  Tensor<Scalar> pointwise;  // [C, C]
  Tensor<Scalar> bias;       // [C]

  SpectralBlock() = default;
  SpectralBlock(Index channels, Index modes, Rng& rng);
  Tensor<Scalar> operator()(const Tensor<Scalar>& v) const;
  void collect(const std::string& prefix, std::vector<NamedParameter<Scalar>>& out) const;
};

// curve, q: [B, 1, L] -> [B, dim_emb]; q is divided by q_scale before lifting.
template <typename Scalar>
class FnoEmbedding {
 public:
  FnoEmbedding() = default;
  FnoEmbedding(const FnoConfig& cfg, Rng& rng);
  Tensor<Scalar> forward(const Tensor<Scalar>& curve, const Tensor<Scalar>& q) const;
  void collect(const std::string& prefix, std::vector<NamedParameter<Scalar>>& out) const;

 private:
  FnoConfig cfg_;
  Tensor<Scalar> lift_w_;  // [2, C]
  Tensor<Scalar> lift_b_;
  std::vector<SpectralBlock<Scalar>> blocks_;
  Linear<Scalar> head_;
};

// Curve embedding followed by the bound-conditioned MLP; outputs bound-normalized parameters.
template <typename Scalar>
class Regressor {
 public:
  Regressor() = default;
  Regressor(const NetworkConfig& cfg, Rng& rng);

  // curve, q: [B, L] (preprocessed intensities and raw q); bounds_norm: [B, 2P].
  Tensor<Scalar> forward(const Tensor<Scalar>& curve, const Tensor<Scalar>& q,
                         const Tensor<Scalar>& bounds_norm, bool training);

  const NetworkConfig& config() const { return cfg_; }
  std::vector<NamedParameter<Scalar>> parameters() const;
  std::vector<Tensor<Scalar>> parameter_tensors() const;
  Index parameter_count() const;

  // Parameters under "param/<name>", running statistics under "buffer/<name>".
  void save(Archive& archive) const;
  void load(const Archive& archive);

 private:
  NetworkConfig cfg_;
  CnnEmbedding<Scalar> cnn_;
  FnoEmbedding<Scalar> fno_;
  ResidualMlp<Scalar> mlp_;
};

// Closed-form parameter count for a configuration.
Index parameter_count(const NetworkConfig& cfg);

}  // namespace reflprior::nn
