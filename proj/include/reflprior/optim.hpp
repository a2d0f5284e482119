#pragma once

#include <vector>

#include "reflprior/tensor.hpp"

namespace reflprior::nn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay:
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
template <typename Scalar>
class AdamW {
 public:
  AdamW(std::vector<Tensor<Scalar>> params, AdamWConfig config);

  // Parameters without a gradient are treated as having a zero gradient.
  void step();
  void zero_grad();

  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  const AdamWConfig& config() const { return config_; }
  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }

  std::vector<Vec<Scalar>>& first_moments() { return m_; }
  std::vector<Vec<Scalar>>& second_moments() { return v_; }
  const std::vector<Vec<Scalar>>& first_moments() const { return m_; }
  const std::vector<Vec<Scalar>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor<Scalar>> params_;
  AdamWConfig config_;
  std::vector<Vec<Scalar>> m_;
  std::vector<Vec<Scalar>> v_;
  long long t_ = 0;
};

struct PlateauConfig {
  double factor = 0.1;
  int patience = 10;
  double rel_threshold = 1e-4;
  int cooldown = 0;
  double min_lr = 1e-8;
};

// Reduce-on-plateau for a minimized metric.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, PlateauConfig config);

  // Feed one evaluation; returns the (possibly reduced) learning rate.
  double step(double metric);

  double lr() const { return lr_; }
  double best() const { return best_; }
  int bad_evals() const { return bad_evals_; }
  int cooldown_left() const { return cooldown_left_; }
  int reductions() const { return reductions_; }
  const PlateauConfig& config() const { return config_; }

  void restore(double lr, double best, int bad_evals, int cooldown_left, int reductions);

 private:
  PlateauConfig config_;
  double lr_;
  double best_;
  int bad_evals_ = 0;
  int cooldown_left_ = 0;
  int reductions_ = 0;
};

}  // namespace reflprior::nn
