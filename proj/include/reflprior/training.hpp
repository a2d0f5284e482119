#pragma once

// Simulation-on-the-fly training.
//
// Every step draws a fresh batch from its own generator derive_rng(seed, step), so a run is a
// pure function of the configuration and resuming from a checkpoint replays the same batches.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reflprior/archive.hpp"
#include "reflprior/config.hpp"
#include "reflprior/networks.hpp"
#include "reflprior/optim.hpp"

namespace reflprior {

struct TrainingBatch {
  SampledBatch sample;
  Eigen::ArrayXd q;            // nominal grid shared by the batch
  Eigen::ArrayXXd intensity;   // noisy reflectivity, one row per sample
  nn::Tensor<float> curve;     // [B, L] preprocessed
  nn::Tensor<float> q_input;   // [B, L]
  nn::Tensor<float> bounds;    // [B, 2P]
  nn::Tensor<float> target;    // [B, P]

  Eigen::Index size() const { return sample.size(); }
};

// width_scale multiplies each parameter's width range before sampling (bound-width sweeps);
// a factor of 0 pins the bounds to the truth.
TrainingBatch generate_batch(const ModelSpec& spec, const DiscretizationSpec& dspec,
                             const NoiseConfig& noise, Eigen::Index batch, Rng& rng,
                             const std::optional<Eigen::VectorXd>& width_scale = {});

// Network inputs for given curves and bounds (same q grid for every row).
TrainingBatch make_inputs(const ModelSpec& spec, const Eigen::ArrayXd& q,
                          const Eigen::ArrayXXd& intensity, const Eigen::MatrixXd& lower,
                          const Eigen::MatrixXd& upper);

// Stream of the batch used at a given training step.
Rng step_rng(std::uint64_t seed, Eigen::Index step);

class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  const TrainConfig& config() const { return cfg_; }
  nn::Regressor<float>& model() { return model_; }
  const nn::Regressor<float>& model() const { return model_; }
  Eigen::Index step() const { return step_; }
  double lr() const { return optimizer_.lr(); }
  const nn::PlateauScheduler& scheduler() const { return scheduler_; }

  TrainingBatch batch_for_step(Eigen::Index step) const;

  // One optimizer update on the batch of the current step; returns the loss.
  double train_step();
  double train_step(const TrainingBatch& batch);

  // Trains until max_steps, or for `steps` more steps when given. Feeds the scheduler once per
  // eval period, appends metrics, writes checkpoints. Returns the per-step losses.
  using StepCallback = std::function<void(Eigen::Index step, double loss, double lr)>;
  std::vector<double> run(std::optional<Eigen::Index> steps = std::nullopt,
                          const StepCallback& on_step = {});

  Archive to_archive() const;
  void save(const std::string& path) const;
  static Trainer from_archive(const Archive& archive);
  static Trainer load(const std::string& path);

 private:
  void end_of_step(double loss);

  TrainConfig cfg_;
  nn::Regressor<float> model_;
  nn::AdamW<float> optimizer_;
  nn::PlateauScheduler scheduler_;
  Eigen::Index step_ = 0;
  double period_loss_sum_ = 0.0;
  Eigen::Index period_count_ = 0;
};

// Checkpoint pieces needed for inference.
struct LoadedModel {
  ModelSpec spec;
  DiscretizationSpec discretization;
  nn::NetworkConfig network;
  nn::Regressor<float> model;
  Eigen::Index step = 0;
};

// Validates the header and, when expected_spec is given, that it matches the stored spec.
LoadedModel load_model(const std::string& path, const ModelSpec* expected_spec = nullptr);
LoadedModel load_model(const Archive& archive, const ModelSpec* expected_spec = nullptr);

}  // namespace reflprior
