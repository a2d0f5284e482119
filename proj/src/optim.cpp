#include "reflprior/optim.hpp"

#include <cmath>
#include <limits>

#include "reflprior/error.hpp"

namespace reflprior::nn {

template <typename Scalar>
AdamW<Scalar>::AdamW(std::vector<Tensor<Scalar>> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0) || config_.beta1 < 0.0 || config_.beta1 >= 1.0 ||
      config_.beta2 < 0.0 || config_.beta2 >= 1.0 || !(config_.eps > 0.0) ||
      config_.weight_decay < 0.0)
    throw InvalidInput("AdamW: invalid hyperparameters");
  for (const auto& p : params_) {
    m_.push_back(Vec<Scalar>::Zero(p.size()));
    v_.push_back(Vec<Scalar>::Zero(p.size()));
  }
}

template <typename Scalar>
void AdamW<Scalar>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(t_));
  const auto b1 = Scalar(config_.beta1), b2 = Scalar(config_.beta2);
  const auto lr = Scalar(config_.lr), wd = Scalar(config_.weight_decay);
  const auto eps = Scalar(config_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& theta = params_[i].value();
    auto& m = m_[i];
    auto& v = v_[i];
    if (params_[i].has_grad()) {
      const auto& g = params_[i].grad();
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    } else {
      m *= b1;
      v *= b2;
    }
    const auto m_hat = m.array() / Scalar(bc1);
    const auto v_hat = v.array() / Scalar(bc2);
    theta.array() -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * theta.array());
  }
}

template <typename Scalar>
void AdamW<Scalar>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class AdamW<float>;
template class AdamW<double>;

PlateauScheduler::PlateauScheduler(double initial_lr, PlateauConfig config)
    : config_(config), lr_(initial_lr), best_(std::numeric_limits<double>::infinity()) {
  if (!(initial_lr > 0.0)) throw InvalidInput("scheduler: learning rate must be > 0");
  if (!(config_.factor > 0.0 && config_.factor < 1.0))
    throw InvalidInput("scheduler: factor must be in (0, 1)");
  if (config_.patience < 0 || config_.cooldown < 0)
    throw InvalidInput("scheduler: patience and cooldown must be >= 0");
}

double PlateauScheduler::step(double metric) {
  if (metric < best_ * (1.0 - config_.rel_threshold) || std::isinf(best_)) {
    best_ = metric;
    bad_evals_ = 0;
  } else {
    ++bad_evals_;
  }
  if (cooldown_left_ > 0) {
    --cooldown_left_;
    bad_evals_ = 0;
  }
  if (bad_evals_ > config_.patience) {
    const double reduced = lr_ * config_.factor;
    if (reduced >= config_.min_lr * (1.0 - 1e-12)) {
      lr_ = reduced;
      ++reductions_;
    }
    cooldown_left_ = config_.cooldown;
    bad_evals_ = 0;
  }
  return lr_;
}

void PlateauScheduler::restore(double lr, double best, int bad_evals, int cooldown_left,
                               int reductions) {
  lr_ = lr;
  best_ = best;
  bad_evals_ = bad_evals;
  cooldown_left_ = cooldown_left;
  reductions_ = reductions;
}

}  // namespace reflprior::nn
