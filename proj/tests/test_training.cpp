#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "reflprior/error.hpp"
#include "reflprior/training.hpp"

using namespace reflprior;

namespace {

TrainConfig small_config(const std::string& tag) {
  TrainConfig cfg;
  cfg.network.mlp = {32, 2};
  cfg.network.cnn = {{4, 8}, 8, 16};
  cfg.batch_size = 32;
  cfg.max_steps = 200;
  cfg.eval_period = 20;
  cfg.seed = 5;
  cfg.prefetch = false;
  cfg.optimizer.lr = 1e-3;
  cfg.checkpoint_path = testing::temp_path(tag + ".rpck");
  std::filesystem::remove(cfg.checkpoint_path);
  return cfg;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("batches hold normalized targets and bounds") {
  const TrainConfig cfg = small_config("batch");
  Trainer t(cfg);
  const TrainingBatch b = t.batch_for_step(3);
  CHECK(b.curve.shape() == nn::Shape{32, 128});
  CHECK(b.bounds.shape() == nn::Shape{32, 16});
  CHECK(b.target.shape() == nn::Shape{32, 8});
  CHECK(b.target.value().cwiseAbs().maxCoeff() <= 1.0f);
  CHECK(b.bounds.value().cwiseAbs().maxCoeff() <= 1.0f + 1e-6f);
  CHECK(b.curve.value().minCoeff() >= -1.0f);
  // The same step always yields the same batch.
  CHECK(t.batch_for_step(3).curve.value() == b.curve.value());
  CHECK(t.batch_for_step(4).curve.value() != b.curve.value());
}

TEST_CASE("initial loss is the variance of a uniform target") {
  TrainConfig cfg = small_config("init");
  cfg.batch_size = 4096;
  Trainer t(cfg);
  // The output layer starts at zero and targets are uniform on [-1, 1].
  CHECK(t.train_step() == doctest::Approx(1.0 / 3.0).epsilon(0.03));
}

TEST_CASE("repeated steps on one batch drive its loss down") {
  TrainConfig cfg = small_config("overfit");
  Trainer t(cfg);
  const TrainingBatch b = t.batch_for_step(0);
  const double first = t.train_step(b);
  double last = first;
  for (int i = 0; i < 200; ++i) last = t.train_step(b);
  CHECK(last < 0.5 * first);
}

TEST_CASE("runs are deterministic with and without prefetching") {
  TrainConfig cfg = small_config("det_a");
  Trainer a(cfg);
  cfg.prefetch = true;
  cfg.checkpoint_path = testing::temp_path("det_b.rpck");
  Trainer b(cfg);
  CHECK(a.run(25) == b.run(25));
  const auto pa = a.model().parameters(), pb = b.model().parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].tensor.value() == pb[i].tensor.value());
}

TEST_CASE("checkpoints are byte identical and resume the same trajectory") {
  TrainConfig cfg = small_config("resume");
  Trainer full(cfg);
  full.run(50);
  full.save(cfg.checkpoint_path);
  const std::string first = file_bytes(cfg.checkpoint_path);
  Trainer::load(cfg.checkpoint_path).save(cfg.checkpoint_path);
  CHECK(file_bytes(cfg.checkpoint_path) == first);

  Trainer resumed = Trainer::load(cfg.checkpoint_path);
  CHECK(resumed.step() == 50);
  const std::vector<double> a = full.run(100);
  const std::vector<double> b = resumed.run(100);
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst <= 1e-6);
  CHECK(full.lr() == resumed.lr());
}

TEST_CASE("metrics log gets one row per evaluation period") {
  TrainConfig cfg = small_config("metrics");
  cfg.metrics_path = testing::temp_path("metrics.csv");
  std::filesystem::remove(cfg.metrics_path);
  Trainer t(cfg);
  t.run(60);
  std::ifstream in(cfg.metrics_path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,loss,lr,eval_loss");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("scheduler sees the training loss once per period") {
  TrainConfig cfg = small_config("sched");
  cfg.eval_period = 5;
  cfg.scheduler.patience = 0;
  cfg.scheduler.rel_threshold = 10.0;  // no period can count as an improvement
  Trainer t(cfg);
  t.run(5);
  CHECK(t.lr() == doctest::Approx(1e-3));
  t.run(5);
  CHECK(t.lr() == doctest::Approx(1e-4));
}

TEST_CASE("checkpoint for another spec is rejected with both names") {
  TrainConfig cfg = small_config("spec");
  Trainer t(cfg);
  t.save(cfg.checkpoint_path);
  const ModelSpec other = multilayer_spec();
  try {
    load_model(cfg.checkpoint_path, &other);
    FAIL("expected a CheckpointError");
  } catch (const CheckpointError& ex) {
    const std::string what = ex.what();
    CHECK(what.find(cfg.spec.name) != std::string::npos);
    CHECK(what.find(other.name) != std::string::npos);
  }
  const ModelSpec same = two_layer_spec();
  CHECK(load_model(cfg.checkpoint_path, &same).step == 0);

  Archive tampered = Archive::load(cfg.checkpoint_path);
  tampered.meta()["spec_fingerprint"] = "0000000000000000";
  CHECK_THROWS_AS(Trainer::from_archive(tampered), CheckpointError);
  Archive foreign;
  CHECK_THROWS_AS(load_model(foreign), CheckpointError);
}

TEST_CASE("a non-finite loss stops training and dumps the state") {
  TrainConfig cfg = small_config("diverge");
  Trainer t(cfg);
  TrainingBatch b = t.batch_for_step(0);
  b.curve.value()(7) = std::numeric_limits<float>::quiet_NaN();
  const std::string dump = cfg.checkpoint_path + ".diverged";
  std::filesystem::remove(dump);
  try {
    t.train_step(b);
    FAIL("expected TrainingDivergence");
  } catch (const TrainingDivergence& ex) {
    CHECK(ex.dump_path() == dump);
    CHECK(std::filesystem::exists(dump));
  }
  CHECK(t.step() == 0);
}

TEST_CASE("variable grids feed the FNO embedding") {
  TrainConfig cfg = small_config("fno");
  cfg.network.embedding = nn::EmbeddingKind::fno;
  cfg.network.fno = {4, 1, 8, 16, 0.4};
  cfg.discretization = DiscretizationSpec::variable_default();
  Trainer t(cfg);
  Eigen::Index min_len = 1 << 20, max_len = 0;
  for (Eigen::Index s = 0; s < 20; ++s) {
    const TrainingBatch b = t.batch_for_step(s);
    min_len = std::min(min_len, b.curve.dim(1));
    max_len = std::max(max_len, b.curve.dim(1));
    CHECK(b.q_input.shape() == b.curve.shape());
  }
  CHECK(min_len >= 128);
  CHECK(max_len <= 256);
  CHECK(max_len > min_len);
  CHECK(std::isfinite(t.train_step()));
}
