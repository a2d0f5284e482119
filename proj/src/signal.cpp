#include "reflprior/signal.hpp"

#include <cmath>
#include <random>

#include "reflprior/error.hpp"

namespace reflprior {

void NoiseConfig::validate() const {
  if (q_jitter < 0.0 || q_jitter >= 1.0) throw InvalidInput("noise.q_jitter must be in [0, 1)");
  if (scale < 0.0 || scale >= 1.0) throw InvalidInput("noise.scale must be in [0, 1)");
  if (log_shift < 0.0) throw InvalidInput("noise.log_shift must be >= 0");
  if (counts_max > 0.0 && !(counts_min > 0.0 && counts_min <= counts_max))
    throw InvalidInput("noise.counts_min must be in (0, counts_max]");
}

Eigen::ArrayXd jitter_q(const Eigen::Ref<const Eigen::ArrayXd>& q, const NoiseConfig& cfg,
                        Rng& rng) {
  Eigen::ArrayXd out = q;
  if (cfg.q_jitter <= 0.0) return out;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out(i) *= 1.0 + uniform(rng, -cfg.q_jitter, cfg.q_jitter);
  return out;
}

ReflectivityCurve apply_noise(const ReflectivityCurve& curve, const NoiseConfig& cfg, Rng& rng,
                              const ForwardModel& forward) {
  cfg.validate();
  ReflectivityCurve out = curve;
  if (cfg.q_jitter > 0.0 && forward) out.intensity = forward(jitter_q(curve.q, cfg, rng));

  if (cfg.counts_max > 0.0) {
    const double counts =
        std::exp(uniform(rng, std::log(cfg.counts_min), std::log(cfg.counts_max)));
    for (Eigen::Index i = 0; i < out.intensity.size(); ++i) {
      const double mean = out.intensity(i) * counts;
      if (mean <= 0.0) {
        out.intensity(i) = 0.0;
        continue;
      }
      std::poisson_distribution<long long> pois(mean);
      out.intensity(i) = static_cast<double>(pois(rng)) / counts;
    }
  }
  if (cfg.scale > 0.0) out.intensity *= uniform(rng, 1.0 - cfg.scale, 1.0 + cfg.scale);
  if (cfg.log_shift > 0.0)
    out.intensity *= std::pow(10.0, uniform(rng, -cfg.log_shift, cfg.log_shift));
  return out;
}

Eigen::ArrayXd preprocess(const Eigen::Ref<const Eigen::ArrayXd>& intensity) {
  return intensity.max(kIntensityFloor).log10() / 5.0 + 1.0;
}

}  // namespace reflprior
