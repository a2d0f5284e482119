#pragma once

// Error statistics and bound-width sweeps on freshly simulated batches.

#include <functional>
#include <vector>

#include "reflprior/training.hpp"

namespace reflprior {

struct ErrorStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd median;
  Eigen::VectorXd q25;
  Eigen::VectorXd q75;
};

// Column-wise statistics of absolute errors (rows are samples). Percentiles interpolate linearly.
ErrorStats error_stats(const Eigen::MatrixXd& abs_errors);

// Maps a batch to bound-normalized predictions [B, P].
using NormalizedPredictor = std::function<Eigen::MatrixXd(const TrainingBatch&)>;

// Eval-mode forward pass in chunks, without gradient recording.
NormalizedPredictor network_predictor(nn::Regressor<float>& model, Eigen::Index chunk = 512);

// Denormalized predictions, clipped to each sample's bounds.
Eigen::MatrixXd predict_physical(const NormalizedPredictor& predictor, const TrainingBatch& batch);

double evaluation_loss(const NormalizedPredictor& predictor, const TrainingBatch& batch);

ErrorStats evaluate_boxplot(const NormalizedPredictor& predictor, const ModelSpec& spec,
                            const DiscretizationSpec& dspec, const NoiseConfig& noise,
                            Eigen::Index n, Rng& rng);

struct BoundWidthSweep {
  std::vector<double> factors;
  std::vector<ParamKind> kinds;
  Eigen::MatrixXd mean_abs_error;  // factors x kinds, averaged over the parameters of each kind
};

// For each kind, the width range of that kind's parameters is scaled by the factor while the
// other kinds keep their full ranges. Every (factor, kind) cell uses its own seeded batch.
BoundWidthSweep bound_width_sweep(const NormalizedPredictor& predictor, const ModelSpec& spec,
                                  const DiscretizationSpec& dspec, const NoiseConfig& noise,
                                  const std::vector<double>& factors, Eigen::Index n,
                                  std::uint64_t seed);

// Spearman rank correlation with average ranks for ties.
double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace reflprior
