#include "reflprior/training.hpp"

#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "reflprior/error.hpp"
#include "reflprior/evaluation.hpp"

namespace reflprior {

namespace {

constexpr std::uint64_t kDataStreamBase = 1ull << 32;
constexpr std::uint64_t kEvalStream = 7;
constexpr Eigen::Index kEvalBatch = 512;

nn::Vec<float> to_float_rows(const Eigen::MatrixXd& m) {
  nn::Vec<float> v(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v(r * m.cols() + c) = float(m(r, c));
  return v;
}

// Single-producer, single-consumer queue of at most `capacity` batches.
class BatchQueue {
 public:
  explicit BatchQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(TrainingBatch batch) {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return false;
    items_.push_back(std::move(batch));
    cv_.notify_all();
    return true;
  }

  TrainingBatch pop() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return !items_.empty() || error_; });
    if (items_.empty()) std::rethrow_exception(error_);
    TrainingBatch b = std::move(items_.front());
    items_.pop_front();
    cv_.notify_all();
    return b;
  }

  void fail(std::exception_ptr e) {
    std::lock_guard lock(mutex_);
    error_ = e;
    cv_.notify_all();
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    cv_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<TrainingBatch> items_;
  std::exception_ptr error_;
  bool closed_ = false;
  std::mutex mutex_;
  std::condition_variable cv_;
};

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Rng step_rng(std::uint64_t seed, Eigen::Index step) {
  return derive_rng(seed, kDataStreamBase + static_cast<std::uint64_t>(step));
}

TrainingBatch make_inputs(const ModelSpec& spec, const Eigen::ArrayXd& q,
                          const Eigen::ArrayXXd& intensity, const Eigen::MatrixXd& lower,
                          const Eigen::MatrixXd& upper) {
  const Eigen::Index batch = intensity.rows(), length = intensity.cols(), p = spec.n_params();
  if (q.size() != length) throw InvalidInput("q grid and intensities differ in length");
  if (lower.rows() != batch || upper.rows() != batch || lower.cols() != p || upper.cols() != p)
    throw InvalidInput("bounds must be [batch, n_params]");
  TrainingBatch out;
  out.q = q;
  out.intensity = intensity;
  out.sample.lower = lower;
  out.sample.upper = upper;
  out.sample.bounds_norm.resize(batch, 2 * p);
  for (Eigen::Index b = 0; b < batch; ++b)
    out.sample.bounds_norm.row(b) =
        normalize_bounds_to_global({lower.row(b).transpose(), upper.row(b).transpose()}, spec)
            .transpose();
  Eigen::MatrixXd prep(batch, length);
  for (Eigen::Index b = 0; b < batch; ++b) prep.row(b) = preprocess(intensity.row(b).transpose()).transpose();
  out.curve = nn::Tensor<float>::from({batch, length}, to_float_rows(prep));
  out.q_input = nn::Tensor<float>::from(
      {batch, length}, to_float_rows(q.transpose().matrix().replicate(batch, 1)));
  out.bounds = nn::Tensor<float>::from({batch, 2 * p}, to_float_rows(out.sample.bounds_norm));
  return out;
}

TrainingBatch generate_batch(const ModelSpec& spec, const DiscretizationSpec& dspec,
                             const NoiseConfig& noise, Eigen::Index batch, Rng& rng,
                             const std::optional<Eigen::VectorXd>& width_scale) {
  ModelSpec sampling_spec = spec;
  if (width_scale) {
    if (width_scale->size() != spec.n_params())
      throw InvalidInput("width scale needs one factor per parameter");
    for (Eigen::Index j = 0; j < spec.n_params(); ++j) {
      auto& d = sampling_spec.descriptors[std::size_t(j)];
      d.width_min *= (*width_scale)(j);
      d.width_max *= (*width_scale)(j);
    }
  }
  SampledBatch sample = sample_bounds_and_truth(sampling_spec, batch, rng);
  const Discretization disc = sample_discretization(dspec, rng);
  const Eigen::ArrayXd q = disc.grid();

  Eigen::ArrayXXd intensity(batch, q.size());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const SlabStack stack = to_stack(sample.theta_true.row(b).transpose(), spec);
    ReflectivityCurve curve;
    curve.q = q;
    ForwardModel forward;
    if (noise.q_jitter > 0.0) {
      curve.intensity = Eigen::ArrayXd::Zero(q.size());
      forward = [&stack](const Eigen::ArrayXd& qj) { return abeles_reflectivity(qj, stack); };
    } else {
      curve.intensity = abeles_reflectivity(q, stack);
    }
    intensity.row(b) = apply_noise(curve, noise, rng, forward).intensity.transpose();
  }

  TrainingBatch out = make_inputs(spec, q, intensity, sample.lower, sample.upper);
  out.target = nn::Tensor<float>::from({batch, spec.n_params()}, to_float_rows(sample.theta_norm));
  out.sample = std::move(sample);
  return out;
}

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      model_([&] {
        cfg.validate();
        Rng init = derive_rng(cfg.seed, 0);
        return nn::Regressor<float>(cfg.network, init);
      }()),
      optimizer_(model_.parameter_tensors(), cfg.optimizer),
      scheduler_(cfg.optimizer.lr, cfg.scheduler) {}

TrainingBatch Trainer::batch_for_step(Eigen::Index step) const {
  Rng rng = step_rng(cfg_.seed, step);
  return generate_batch(cfg_.spec, cfg_.discretization, cfg_.noise, cfg_.batch_size, rng);
}

double Trainer::train_step() { return train_step(batch_for_step(step_)); }

double Trainer::train_step(const TrainingBatch& batch) {
  optimizer_.zero_grad();
  nn::Tensor<float> pred = model_.forward(batch.curve, batch.q_input, batch.bounds, true);
  nn::Tensor<float> loss = nn::mse_loss(pred, batch.target);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    const std::string dump =
        (cfg_.checkpoint_path.empty() ? std::string("reflprior") : cfg_.checkpoint_path) +
        ".diverged";
    save(dump);
    throw TrainingDivergence("non-finite training loss at step " + std::to_string(step_) +
                                 "; state written to " + dump,
                             dump);
  }
  loss.backward();
  optimizer_.step();
  end_of_step(value);
  return value;
}

void Trainer::end_of_step(double loss) {
  ++step_;
  period_loss_sum_ += loss;
  ++period_count_;
  if (step_ % cfg_.eval_period != 0) return;

  const double mean_loss = period_loss_sum_ / double(period_count_);
  period_loss_sum_ = 0.0;
  period_count_ = 0;
  const double lr_used = optimizer_.lr();
  optimizer_.set_lr(scheduler_.step(mean_loss));

  if (cfg_.metrics_path.empty()) return;
  Rng eval_rng = derive_rng(cfg_.seed, kEvalStream);
  const TrainingBatch held_out =
      generate_batch(cfg_.spec, cfg_.discretization, cfg_.noise, kEvalBatch, eval_rng);
  const double eval_loss = evaluation_loss(network_predictor(model_), held_out);
  const bool fresh = !std::filesystem::exists(cfg_.metrics_path);
  std::ofstream out(cfg_.metrics_path, std::ios::app);
  if (!out) throw InvalidInput("cannot write metrics log " + cfg_.metrics_path);
  if (fresh) out << "step,loss,lr,eval_loss\n";
  char line[128];
  std::snprintf(line, sizeof line, "%lld,%.8g,%.6g,%.8g\n", static_cast<long long>(step_),
                mean_loss, lr_used, eval_loss);
  out << line;
}

std::vector<double> Trainer::run(std::optional<Eigen::Index> steps, const StepCallback& on_step) {
  const Eigen::Index begin = step_;
  const Eigen::Index end = steps ? step_ + *steps : cfg_.max_steps;
  std::vector<double> losses;
  if (end <= begin) return losses;
  losses.reserve(std::size_t(end - begin));

  auto after_step = [&](double loss) {
    losses.push_back(loss);
    if (on_step) on_step(step_, loss, optimizer_.lr());
    if (!cfg_.checkpoint_path.empty() && cfg_.checkpoint_period > 0 &&
        step_ % cfg_.checkpoint_period == 0)
      save(cfg_.checkpoint_path);
  };

  if (!cfg_.prefetch) {
    while (step_ < end) after_step(train_step());
  } else {
    BatchQueue queue(2);
    std::thread producer([&, begin, end] {
      try {
        for (Eigen::Index s = begin; s < end; ++s)
          if (!queue.push(batch_for_step(s))) return;
      } catch (...) {
        queue.fail(std::current_exception());
      }
    });
    try {
      while (step_ < end) after_step(train_step(queue.pop()));
    } catch (...) {
      queue.close();
      producer.join();
      throw;
    }
    queue.close();
    producer.join();
  }
  if (!cfg_.checkpoint_path.empty()) save(cfg_.checkpoint_path);
  return losses;
}

Archive Trainer::to_archive() const {
  Archive a;
  model_.save(a);
  const auto params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    a.put("adam_m/" + params[i].name, params[i].tensor.shape(), optimizer_.first_moments()[i]);
    a.put("adam_v/" + params[i].name, params[i].tensor.shape(), optimizer_.second_moments()[i]);
  }
  Json& meta = a.meta();
  meta["format"] = "reflprior-model";
  meta["train_config"] = to_json(cfg_);
  meta["spec_fingerprint"] = spec_fingerprint(cfg_.spec);
  meta["preprocess"] = {{"floor", kIntensityFloor}, {"log_divisor", 5.0}, {"offset", 1.0}};
  meta["state"] = {{"step", step_},
                   {"adam_steps", optimizer_.steps()},
                   {"lr", optimizer_.lr()},
                   {"scheduler",
                    {{"lr", scheduler_.lr()},
                     {"best", finite_or_null(scheduler_.best())},
                     {"bad_evals", scheduler_.bad_evals()},
                     {"cooldown_left", scheduler_.cooldown_left()},
                     {"reductions", scheduler_.reductions()}}},
                   {"period_loss_sum", period_loss_sum_},
                   {"period_count", period_count_}};
  return a;
}

void Trainer::save(const std::string& path) const { to_archive().save(path); }

namespace {

TrainConfig config_from_archive(const Archive& archive) {
  const Json& meta = archive.meta();
  if (meta.value("format", "") != "reflprior-model")
    throw CheckpointError("checkpoint does not hold a reflprior model");
  TrainConfig cfg;
  try {
    cfg = train_config_from_json(meta.at("train_config"));
  } catch (const ConfigError& ex) {
    throw CheckpointError(std::string("checkpoint configuration is invalid: ") + ex.what());
  } catch (const Json::exception& ex) {
    throw CheckpointError(std::string("checkpoint configuration is malformed: ") + ex.what());
  }
  if (meta.value("spec_fingerprint", "") != spec_fingerprint(cfg.spec))
    throw CheckpointError("checkpoint spec fingerprint does not match its stored model spec");
  return cfg;
}

}  // namespace

Trainer Trainer::from_archive(const Archive& archive) {
  Trainer t(config_from_archive(archive));
  t.model_.load(archive);
  const auto params = t.model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    t.optimizer_.first_moments()[i] =
        archive.get<float>("adam_m/" + params[i].name, params[i].tensor.shape());
    t.optimizer_.second_moments()[i] =
        archive.get<float>("adam_v/" + params[i].name, params[i].tensor.shape());
  }
  try {
    const Json& st = archive.meta().at("state");
    t.step_ = st.at("step").get<Eigen::Index>();
    t.optimizer_.set_steps(st.at("adam_steps").get<long long>());
    t.optimizer_.set_lr(st.at("lr").get<double>());
    const Json& sc = st.at("scheduler");
    const double best = sc.at("best").is_null() ? std::numeric_limits<double>::infinity()
                                                : sc.at("best").get<double>();
    t.scheduler_.restore(sc.at("lr").get<double>(), best, sc.at("bad_evals").get<int>(),
                         sc.at("cooldown_left").get<int>(), sc.at("reductions").get<int>());
    t.period_loss_sum_ = st.at("period_loss_sum").get<double>();
    t.period_count_ = st.at("period_count").get<Eigen::Index>();
  } catch (const Json::exception& ex) {
    throw CheckpointError(std::string("checkpoint training state is malformed: ") + ex.what());
  }
  return t;
}

Trainer Trainer::load(const std::string& path) { return from_archive(Archive::load(path)); }

LoadedModel load_model(const Archive& archive, const ModelSpec* expected_spec) {
  TrainConfig cfg = config_from_archive(archive);
  if (expected_spec && spec_fingerprint(*expected_spec) != spec_fingerprint(cfg.spec))
    throw CheckpointError("checkpoint was trained for model '" + cfg.spec.name + "' (" +
                          std::to_string(cfg.spec.n_params()) + " parameters), not '" +
                          expected_spec->name + "' (" +
                          std::to_string(expected_spec->n_params()) + " parameters)");
  Rng unused = derive_rng(0, 0);
  LoadedModel out{cfg.spec, cfg.discretization, cfg.network,
                  nn::Regressor<float>(cfg.network, unused), 0};
  out.model.load(archive);
  out.step = archive.meta().at("state").value("step", Eigen::Index(0));
  return out;
}

LoadedModel load_model(const std::string& path, const ModelSpec* expected_spec) {
  return load_model(Archive::load(path), expected_spec);
}

}  // namespace reflprior
