#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "reflprior/physics.hpp"
#include "reflprior/training.hpp"
#include "reflprior/random.hpp"

namespace testing {

// Slab stack in the box-model ranges: d in [0, 500], sigma in [0, 60], rho in [-25, 25],
// with roughness capped so interfaces stay resolvable.
inline reflprior::SlabStack random_stack(reflprior::Rng& rng, int n_slabs) {
  using reflprior::uniform;
  reflprior::SlabStack s;
  for (int i = 0; i < n_slabs; ++i) {
    const double d = uniform(rng, 0.0, 500.0);
    s.slabs.push_back({d, uniform(rng, 0.0, 60.0), uniform(rng, -25.0, 25.0)});
  }
  s.substrate_sld = uniform(rng, -25.0, 25.0);
  s.substrate_roughness = uniform(rng, 0.0, 60.0);
  return s;
}

inline double max_rel_dev(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  return ((a - b).abs() / b.abs().max(1e-300)).maxCoeff();
}

inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "reflprior-tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

// Small checkpoint trained for a few steps so its outputs are not all zero.
inline std::string tiny_checkpoint(const std::string& tag, bool fno = false) {
  reflprior::TrainConfig cfg;
  cfg.network.mlp = {16, 1};
  cfg.network.cnn = {{4, 8}, 8, 8};
  cfg.network.fno = {4, 1, 8, 8, 0.4};
  if (fno) {
    cfg.network.embedding = reflprior::nn::EmbeddingKind::fno;
    cfg.discretization = reflprior::DiscretizationSpec::variable_default();
  }
  cfg.batch_size = 16;
  cfg.max_steps = 20;
  cfg.eval_period = 20;
  cfg.optimizer.lr = 1e-2;
  cfg.prefetch = false;
  cfg.checkpoint_path = temp_path(tag + ".rpck");
  reflprior::Trainer trainer(cfg);
  trainer.run();
  return cfg.checkpoint_path;
}

}  // namespace testing
