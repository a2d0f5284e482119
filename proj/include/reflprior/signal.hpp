#pragma once

// Experimental-artifact noise and the fixed transform applied before the network.

#include <functional>

#include <Eigen/Core>

#include "reflprior/physics.hpp"
#include "reflprior/random.hpp"

namespace reflprior {

struct NoiseConfig {
  double q_jitter = 1e-3;     // relative q-position noise, eps ~ U(-q_jitter, q_jitter)
  double counts_min = 1e5;    // Poisson counts at R = 1, drawn log-uniformly per curve;
  double counts_max = 1e9;    // counts_max <= 0 disables the shot-noise stage
  double scale = 0.1;         // multiplicative factor s ~ U(1 - scale, 1 + scale)
  double log_shift = 0.0;     // extra factor 10^u, u ~ U(-log_shift, log_shift)

  static NoiseConfig none() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }
  void validate() const;
};

// q_i (1 + eps_i) for the generation-time jitter stage.
Eigen::ArrayXd jitter_q(const Eigen::Ref<const Eigen::ArrayXd>& q, const NoiseConfig& cfg,
                        Rng& rng);

// Re-simulates intensities at the given (jittered) grid.
using ForwardModel = std::function<Eigen::ArrayXd(const Eigen::ArrayXd&)>;

// Stages in order: q jitter (only when a forward model is supplied), Poisson, scaling, log shift.
// The returned curve keeps the input q grid. Stages with zero amplitude are skipped.
ReflectivityCurve apply_noise(const ReflectivityCurve& curve, const NoiseConfig& cfg, Rng& rng,
                              const ForwardModel& forward = {});

inline constexpr double kIntensityFloor = 1e-10;

// x = log10(max(R, 1e-10)) / 5 + 1, mapping [1e-10, 1] onto [-1, 1].
Eigen::ArrayXd preprocess(const Eigen::Ref<const Eigen::ArrayXd>& intensity);

}  // namespace reflprior
