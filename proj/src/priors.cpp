#include "reflprior/priors.hpp"

#include <algorithm>
#include <cmath>

#include "reflprior/error.hpp"

namespace reflprior {

PriorBounds SampledBatch::bounds(Eigen::Index row) const {
  return {lower.row(row).transpose(), upper.row(row).transpose()};
}

SampledInterval sample_interval(const ParamDescriptor& d, Rng& rng,
                                std::optional<double> fixed_width) {
  SampledInterval s{};
  s.center = uniform(rng, d.global_min, d.global_max);
  s.width = fixed_width ? *fixed_width : uniform(rng, d.width_min, d.width_max);
  s.lower = std::max(d.global_min, s.center - 0.5 * s.width);
  s.upper = std::min(d.global_max, s.center + 0.5 * s.width);
  s.truth = uniform(rng, s.lower, s.upper);
  return s;
}

SampledBatch sample_bounds_and_truth(const ModelSpec& spec, Eigen::Index batch, Rng& rng,
                                     const std::optional<Eigen::VectorXd>& fixed_widths) {
  if (batch < 1) throw InvalidInput("batch size must be >= 1");
  const Eigen::Index p = spec.n_params();
  if (fixed_widths && fixed_widths->size() != p)
    throw InvalidInput("fixed widths must have one entry per parameter");
  SampledBatch out;
  out.theta_true.resize(batch, p);
  out.lower.resize(batch, p);
  out.upper.resize(batch, p);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index j = 0; j < p; ++j) {
      std::optional<double> w;
      if (fixed_widths) w = (*fixed_widths)(j);
      const SampledInterval s = sample_interval(spec.descriptors[std::size_t(j)], rng, w);
      out.theta_true(b, j) = s.truth;
      out.lower(b, j) = s.lower;
      out.upper(b, j) = s.upper;
    }
  }
  out.theta_norm = normalize_to_bounds(out.theta_true, out.lower, out.upper);
  const Eigen::RowVectorXd gmin = spec.global_min().transpose();
  const Eigen::RowVectorXd grange = (spec.global_max() - spec.global_min()).transpose();
  out.bounds_norm.resize(batch, 2 * p);
  for (Eigen::Index b = 0; b < batch; ++b) {
    out.bounds_norm.row(b).head(p) =
        2.0 * (out.lower.row(b) - gmin).cwiseQuotient(grange).array() - 1.0;
    out.bounds_norm.row(b).tail(p) =
        2.0 * (out.upper.row(b) - gmin).cwiseQuotient(grange).array() - 1.0;
  }
  return out;
}

Eigen::VectorXd normalize_to_bounds(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                    const PriorBounds& bounds) {
  return normalize_to_bounds(Eigen::MatrixXd(theta.transpose()), bounds.lower.transpose(),
                             bounds.upper.transpose())
      .transpose();
}

Eigen::VectorXd denormalize_from_bounds(const Eigen::Ref<const Eigen::VectorXd>& y,
                                        const PriorBounds& bounds) {
  return denormalize_from_bounds(Eigen::MatrixXd(y.transpose()), bounds.lower.transpose(),
                                 bounds.upper.transpose())
      .transpose();
}

Eigen::MatrixXd normalize_to_bounds(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                                    const Eigen::Ref<const Eigen::MatrixXd>& lower,
                                    const Eigen::Ref<const Eigen::MatrixXd>& upper) {
  if (theta.rows() != lower.rows() || theta.cols() != lower.cols() ||
      lower.rows() != upper.rows() || lower.cols() != upper.cols())
    throw InvalidInput("normalize_to_bounds: shape mismatch");
  Eigen::MatrixXd y(theta.rows(), theta.cols());
  for (Eigen::Index c = 0; c < y.cols(); ++c)
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double w = upper(r, c) - lower(r, c);
      y(r, c) = w > 0.0 ? 2.0 * (theta(r, c) - lower(r, c)) / w - 1.0 : 0.0;
    }
  return y;
}

Eigen::MatrixXd denormalize_from_bounds(const Eigen::Ref<const Eigen::MatrixXd>& y,
                                        const Eigen::Ref<const Eigen::MatrixXd>& lower,
                                        const Eigen::Ref<const Eigen::MatrixXd>& upper) {
  if (y.rows() != lower.rows() || y.cols() != lower.cols() || lower.rows() != upper.rows() ||
      lower.cols() != upper.cols())
    throw InvalidInput("denormalize_from_bounds: shape mismatch");
  Eigen::MatrixXd theta(y.rows(), y.cols());
  for (Eigen::Index c = 0; c < y.cols(); ++c)
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double lo = lower(r, c);
      const double hi = upper(r, c);
      if (!(hi > lo)) {
        theta(r, c) = lo;
        continue;
      }
      const double v = lo + (y(r, c) + 1.0) * (hi - lo) * 0.5;
      theta(r, c) = std::isnan(v) ? 0.5 * (lo + hi) : std::clamp(v, lo, hi);
    }
  return theta;
}

void validate_bounds(const PriorBounds& bounds, const ModelSpec& spec) {
  const Eigen::Index p = spec.n_params();
  if (bounds.lower.size() != p || bounds.upper.size() != p)
    throw InvalidInput("bounds must have one (lower, upper) pair per parameter");
  std::vector<std::string> bad;
  std::string msg;
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& d = spec.descriptors[std::size_t(j)];
    const double lo = bounds.lower(j);
    const double hi = bounds.upper(j);
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi || lo < d.global_min ||
        hi > d.global_max) {
      bad.push_back(d.name);
      msg += (msg.empty() ? "" : ", ") + d.name + "=[" + std::to_string(lo) + ", " +
             std::to_string(hi) + "] not within [" + std::to_string(d.global_min) + ", " +
             std::to_string(d.global_max) + "]";
    }
  }
  if (!bad.empty()) throw RangeViolation("invalid prior bounds: " + msg, std::move(bad));
}

Eigen::VectorXd normalize_bounds_to_global(const PriorBounds& bounds, const ModelSpec& spec) {
  validate_bounds(bounds, spec);
  const Eigen::Index p = spec.n_params();
  const Eigen::ArrayXd gmin = spec.global_min().array();
  const Eigen::ArrayXd range = spec.global_max().array() - gmin;
  Eigen::VectorXd out(2 * p);
  out.head(p) = 2.0 * (bounds.lower.array() - gmin) / range - 1.0;
  out.tail(p) = 2.0 * (bounds.upper.array() - gmin) / range - 1.0;
  return out;
}

void DiscretizationSpec::validate() const {
  if (n_points_min < 2 || n_points_max < n_points_min)
    throw InvalidInput("discretization: need 2 <= n_points_min <= n_points_max");
  if (!(q_min_lo > 0.0) || q_min_hi < q_min_lo || q_max_hi < q_max_lo)
    throw InvalidInput("discretization: q ranges must be ordered and positive");
  if (!(q_min_hi < q_max_lo)) throw InvalidInput("discretization: q_min range must lie below q_max range");
}

DiscretizationSpec DiscretizationSpec::fixed_grid(Eigen::Index n, double q_min, double q_max) {
  DiscretizationSpec s;
  s.n_points_min = s.n_points_max = n;
  s.q_min_lo = s.q_min_hi = q_min;
  s.q_max_lo = s.q_max_hi = q_max;
  s.fixed = true;
  s.validate();
  return s;
}

DiscretizationSpec DiscretizationSpec::variable_default() {
  DiscretizationSpec s;
  s.n_points_min = 128;
  s.n_points_max = 256;
  s.q_min_lo = 0.01;
  s.q_min_hi = 0.03;
  s.q_max_lo = 0.15;
  s.q_max_hi = 0.4;
  s.fixed = false;
  return s;
}

Discretization sample_discretization(const DiscretizationSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.fixed) return {spec.n_points_min, spec.q_min_lo, spec.q_max_lo};
  Discretization d{};
  d.n_points = uniform_int(rng, spec.n_points_min, spec.n_points_max);
  d.q_min = uniform(rng, spec.q_min_lo, spec.q_min_hi);
  d.q_max = uniform(rng, spec.q_max_lo, spec.q_max_hi);
  return d;
}

}  // namespace reflprior
