#include "reflprior/evaluation.hpp"

#include <algorithm>
#include <numeric>

#include "reflprior/error.hpp"

namespace reflprior {

namespace {

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * double(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

Eigen::VectorXd ranks(const Eigen::VectorXd& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x(Eigen::Index(a)) < x(Eigen::Index(b)); });
  Eigen::VectorXd r(x.size());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x(Eigen::Index(idx[j + 1])) == x(Eigen::Index(idx[i]))) ++j;
    const double avg = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r(Eigen::Index(idx[k])) = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

ErrorStats error_stats(const Eigen::MatrixXd& abs_errors) {
  if (abs_errors.rows() < 1) throw InvalidInput("error_stats needs at least one sample");
  const Eigen::Index p = abs_errors.cols();
  ErrorStats s{Eigen::VectorXd(p), Eigen::VectorXd(p), Eigen::VectorXd(p), Eigen::VectorXd(p)};
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> col(abs_errors.col(j).data(), abs_errors.col(j).data() + abs_errors.rows());
    s.mean(j) = abs_errors.col(j).mean();
    s.median(j) = percentile(col, 0.5);
    s.q25(j) = percentile(col, 0.25);
    s.q75(j) = percentile(col, 0.75);
  }
  return s;
}

NormalizedPredictor network_predictor(nn::Regressor<float>& model, Eigen::Index chunk) {
  return [&model, chunk](const TrainingBatch& batch) {
    nn::NoGradGuard guard;
    const Eigen::Index n = batch.size(), length = batch.curve.dim(1);
    const Eigen::Index p = model.config().n_params;
    Eigen::MatrixXd out(n, p);
    for (Eigen::Index start = 0; start < n; start += chunk) {
      const Eigen::Index m = std::min(chunk, n - start);
      auto slice = [&](const nn::Tensor<float>& t, Eigen::Index width) {
        return nn::Tensor<float>::from({m, width}, t.value().segment(start * width, m * width));
      };
      const auto pred = model.forward(slice(batch.curve, length), slice(batch.q_input, length),
                                      slice(batch.bounds, 2 * p), false);
      out.middleRows(start, m) = pred.matrix().cast<double>();
    }
    return out;
  };
}

Eigen::MatrixXd predict_physical(const NormalizedPredictor& predictor, const TrainingBatch& batch) {
  return denormalize_from_bounds(predictor(batch), batch.sample.lower, batch.sample.upper);
}

double evaluation_loss(const NormalizedPredictor& predictor, const TrainingBatch& batch) {
  const Eigen::MatrixXd pred = predictor(batch);
  const auto& t = batch.target;
  const Eigen::MatrixXd target = t.matrix().cast<double>();
  return (pred - target).squaredNorm() / double(pred.size());
}

ErrorStats evaluate_boxplot(const NormalizedPredictor& predictor, const ModelSpec& spec,
                            const DiscretizationSpec& dspec, const NoiseConfig& noise,
                            Eigen::Index n, Rng& rng) {
  const TrainingBatch batch = generate_batch(spec, dspec, noise, n, rng);
  return error_stats((predict_physical(predictor, batch) - batch.sample.theta_true).cwiseAbs());
}

BoundWidthSweep bound_width_sweep(const NormalizedPredictor& predictor, const ModelSpec& spec,
                                  const DiscretizationSpec& dspec, const NoiseConfig& noise,
                                  const std::vector<double>& factors, Eigen::Index n,
                                  std::uint64_t seed) {
  BoundWidthSweep out;
  out.factors = factors;
  for (const auto& d : spec.descriptors)
    if (std::find(out.kinds.begin(), out.kinds.end(), d.kind) == out.kinds.end())
      out.kinds.push_back(d.kind);
  out.mean_abs_error.resize(Eigen::Index(factors.size()), Eigen::Index(out.kinds.size()));
  for (std::size_t f = 0; f < factors.size(); ++f) {
    if (factors[f] < 0.0 || factors[f] > 1.0) throw InvalidInput("sweep factors must be in [0, 1]");
    for (std::size_t k = 0; k < out.kinds.size(); ++k) {
      Eigen::VectorXd scale = Eigen::VectorXd::Ones(spec.n_params());
      std::vector<Eigen::Index> cols;
      for (Eigen::Index j = 0; j < spec.n_params(); ++j)
        if (spec.descriptors[std::size_t(j)].kind == out.kinds[k]) {
          scale(j) = factors[f];
          cols.push_back(j);
        }
      Rng rng = derive_rng(seed, f * out.kinds.size() + k);
      const TrainingBatch batch = generate_batch(spec, dspec, noise, n, rng, scale);
      const Eigen::MatrixXd err =
          (predict_physical(predictor, batch) - batch.sample.theta_true).cwiseAbs();
      double sum = 0.0;
      for (Eigen::Index j : cols) sum += err.col(j).mean();
      out.mean_abs_error(Eigen::Index(f), Eigen::Index(k)) = sum / double(cols.size());
    }
  }
  return out;
}

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidInput("spearman needs paired samples");
  const Eigen::VectorXd ra = ranks(a), rb = ranks(b);
  const Eigen::VectorXd ca = ra.array() - ra.mean(), cb = rb.array() - rb.mean();
  const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  return denom > 0.0 ? ca.dot(cb) / denom : 0.0;
}

}  // namespace reflprior
