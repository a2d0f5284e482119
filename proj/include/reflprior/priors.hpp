#pragma once

// Prior-bound sampling and the normalizations that condition the network on the bounds.

#include <optional>

#include <Eigen/Core>

#include "reflprior/parameterization.hpp"
#include "reflprior/random.hpp"

namespace reflprior {

struct PriorBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::VectorXd width() const { return upper - lower; }
  Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
};

// Rows are samples; columns follow the model's descriptor order.
struct SampledBatch {
  Eigen::MatrixXd theta_true;
  Eigen::MatrixXd lower;
  Eigen::MatrixXd upper;
  Eigen::MatrixXd theta_norm;   // truth relative to its bounds, in [-1, 1]
  Eigen::MatrixXd bounds_norm;  // [lower | upper] relative to the global ranges, in [-1, 1]

  Eigen::Index size() const { return theta_true.rows(); }
  PriorBounds bounds(Eigen::Index row) const;
};

struct SampledInterval {
  double center;
  double width;  // before clamping
  double lower;
  double upper;
  double truth;
};

// One parameter: center ~ U(global), width ~ U(width range) unless fixed, interval clamped
// to the global range, truth ~ U(interval).
SampledInterval sample_interval(const ParamDescriptor& d, Rng& rng,
                                std::optional<double> fixed_width = std::nullopt);

// fixed_widths, when given, replaces the width draw per parameter.
SampledBatch sample_bounds_and_truth(const ModelSpec& spec, Eigen::Index batch, Rng& rng,
                                     const std::optional<Eigen::VectorXd>& fixed_widths = {});

// y = 2 (theta - lower) / (upper - lower) - 1; 0 where the interval is degenerate.
Eigen::VectorXd normalize_to_bounds(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                    const PriorBounds& bounds);

// Inverse map, clipped to [lower, upper]; degenerate intervals return their common value.
Eigen::VectorXd denormalize_from_bounds(const Eigen::Ref<const Eigen::VectorXd>& y,
                                        const PriorBounds& bounds);

// Row-wise versions over a batch.
Eigen::MatrixXd normalize_to_bounds(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                                    const Eigen::Ref<const Eigen::MatrixXd>& lower,
                                    const Eigen::Ref<const Eigen::MatrixXd>& upper);
Eigen::MatrixXd denormalize_from_bounds(const Eigen::Ref<const Eigen::MatrixXd>& y,
                                        const Eigen::Ref<const Eigen::MatrixXd>& lower,
                                        const Eigen::Ref<const Eigen::MatrixXd>& upper);

// Conditioning vector [lower_norm | upper_norm] of length 2 * n_params.
// Throws RangeViolation if a bound leaves the global range or lower > upper.
Eigen::VectorXd normalize_bounds_to_global(const PriorBounds& bounds, const ModelSpec& spec);

void validate_bounds(const PriorBounds& bounds, const ModelSpec& spec);

struct DiscretizationSpec {
  Eigen::Index n_points_min = 128;
  Eigen::Index n_points_max = 128;
  double q_min_lo = 0.02;
  double q_min_hi = 0.02;
  double q_max_lo = 0.15;
  double q_max_hi = 0.15;
  bool fixed = true;

  void validate() const;
  static DiscretizationSpec fixed_grid(Eigen::Index n, double q_min, double q_max);
  // Variable grids: n in [128, 256], q_min in [0.01, 0.03], q_max in [0.15, 0.4].
  static DiscretizationSpec variable_default();
};

struct Discretization {
  Eigen::Index n_points;
  double q_min;
  double q_max;

  Eigen::ArrayXd grid() const { return Eigen::ArrayXd::LinSpaced(n_points, q_min, q_max); }
};

Discretization sample_discretization(const DiscretizationSpec& spec, Rng& rng);

}  // namespace reflprior
