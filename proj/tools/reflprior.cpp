// Command-line entry point: simulate, train, predict, serve, spec.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "reflprior/config.hpp"
#include "reflprior/curve_io.hpp"
#include "reflprior/error.hpp"
#include "reflprior/inference.hpp"
#include "reflprior/service.hpp"

using namespace reflprior;
using nlohmann::json;

namespace {

// Preset name or path to a model spec JSON file.
ModelSpec load_model_spec(const std::string& ref) {
  for (const auto& name : preset_names())
    if (ref == name) return preset_spec(name);
  const std::string text = read_text_file(ref);
  return model_spec_from_json(parse_json_text(text, ref), text);
}

json load_json_file(const std::string& path) {
  return parse_json_text(read_text_file(path), path);
}

// "<out>" -> "<out><suffix>" with any .dat/.json extension on <out> dropped.
std::string derived_path(const std::string& out, const std::string& suffix) {
  std::filesystem::path p(out);
  if (p.extension() == ".dat" || p.extension() == ".json") p.replace_extension();
  return p.string() + suffix;
}

struct SimulateOptions {
  std::string model = "box2";
  std::string params_file;
  int random = 0;
  std::uint64_t seed = 0;
  int n_points = 128;
  double q_min = 0.02;
  double q_max = 0.15;
  bool noise = false;
  std::string noise_file;
  bool sld = false;
  std::string out = "curve.dat";
};

int run_simulate(const SimulateOptions& o) {
  const ModelSpec spec = load_model_spec(o.model);
  NoiseConfig noise = NoiseConfig::none();
  if (!o.noise_file.empty()) {
    const std::string text = read_text_file(o.noise_file);
    noise = noise_from_json(parse_json_text(text, o.noise_file), text);
  } else if (o.noise) {
    noise = NoiseConfig();
  }
  if (o.n_points < 2 || !(o.q_min > 0.0) || !(o.q_max > o.q_min))
    throw InvalidInput("need --n-points >= 2 and 0 < --q-min < --q-max");
  const Eigen::ArrayXd q = Discretization{o.n_points, o.q_min, o.q_max}.grid();

  std::vector<Eigen::VectorXd> thetas;
  Rng rng = derive_rng(o.seed, 0);
  if (!o.params_file.empty()) {
    if (o.random > 0) throw InvalidInput("give either --params or --random, not both");
    thetas.push_back(params_from_json(load_json_file(o.params_file), spec, ""));
  } else if (o.random > 0) {
    while (int(thetas.size()) < o.random) {
      const SampledBatch b = sample_bounds_and_truth(spec, 1, rng);
      const Eigen::VectorXd theta = b.theta_true.row(0).transpose();
      try {
        to_stack(theta, spec);
      } catch (const InvalidInput&) {
        continue;  // multilayer draws can describe an impossible geometry
      }
      thetas.push_back(theta);
    }
  } else {
    throw InvalidInput("give --params <file> or --random <n>");
  }

  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const std::string suffix = thetas.size() > 1 ? "_" + std::to_string(i) : "";
    ReflectivityCurve curve = simulate_curve(thetas[i], spec, q);
    Rng noise_rng = derive_rng(o.seed, 1 + i);
    curve = apply_noise(curve, noise, noise_rng,
                        [&](const Eigen::ArrayXd& qj) { return simulate_curve(thetas[i], spec, qj).intensity; });
    const std::string path = derived_path(o.out, suffix + ".dat");
    write_curve_file(path, curve, "q [1/A]  R   model " + spec.name);
    write_file_atomic(derived_path(o.out, suffix + "_params.json"),
                      params_to_json(thetas[i], spec).dump(2) + "\n");
    if (o.sld) {
      const ContinuousProfile prof = sld_profile(thetas[i], spec);
      write_columns_file(derived_path(o.out, suffix + "_sld.dat"), prof.z, prof.rho,
                         "z [A]  sld [1e-6/A^2]");
    }
    std::cout << path << "\n";
  }
  return 0;
}

int run_train(const std::string& config_path, const std::string& resume, long long steps) {
  Trainer trainer = resume.empty() ? Trainer(load_train_config(config_path)) : Trainer::load(resume);
  const TrainConfig& cfg = trainer.config();
  std::cerr << "training " << cfg.spec.name << " (" << nn::to_string(cfg.network.embedding) << ", "
            << trainer.model().parameter_count() << " weights) from step " << trainer.step()
            << "\n";
  const Eigen::Index report = std::max<Eigen::Index>(1, cfg.eval_period);
  double window = 0.0;
  trainer.run(steps > 0 ? std::optional<Eigen::Index>(steps) : std::nullopt,
              [&](Eigen::Index step, double loss, double lr) {
                window += loss;
                if (step % report == 0) {
                  std::fprintf(stderr, "step %lld  loss %.5f  lr %.3g\n",
                               static_cast<long long>(step), window / double(report), lr);
                  window = 0.0;
                }
              });
  if (!cfg.checkpoint_path.empty()) std::cout << cfg.checkpoint_path << "\n";
  return 0;
}

int run_predict(const std::string& checkpoint, const std::string& curve_path,
                const std::string& bounds_path, const std::string& out) {
  const Predictor predictor = Predictor::from_file(checkpoint);
  const ReflectivityCurve curve = read_curve_file(curve_path);
  const PriorBounds bounds = bounds_from_json(load_json_file(bounds_path), predictor.spec(), "");
  const Prediction p = predictor.predict(curve, bounds);
  const json result = prediction_to_json(p, predictor.spec());
  write_file_atomic(derived_path(out, ".json"), result.dump(2) + "\n");
  write_curve_file(derived_path(out, "_fit.dat"), p.fit);
  const std::string header = "z [A]  sld [1e-6/A^2]";
  write_columns_file(derived_path(out, "_sld.dat"), p.profile.z, p.profile.rho, header);
  write_columns_file(derived_path(out, "_sld_lo.dat"), p.profile_lo.z, p.profile_lo.rho, header);
  write_columns_file(derived_path(out, "_sld_hi.dat"), p.profile_hi.z, p.profile_hi.rho, header);
  for (std::size_t i = 0; i < predictor.spec().descriptors.size(); ++i) {
    const auto& d = predictor.spec().descriptors[i];
    const auto k = Eigen::Index(i);
    std::printf("%-28s %12.5g   [%g, %g] %s\n", d.name.c_str(), p.params(k), bounds.lower(k),
                bounds.upper(k), d.unit.c_str());
  }
  return 0;
}

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int run_serve(const std::string& checkpoint, const std::string& host, int port) {
  auto predictor = std::make_shared<const Predictor>(Predictor::from_file(checkpoint));
  Service service(predictor);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  service.serve(host, port, [&](int bound) {
    std::cerr << "serving " << predictor->spec().name << " on http://" << host << ":" << bound
              << "\n";
  });
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prior-conditioned neural inversion of reflectivity curves"};
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate reflectivity curves");
  simulate->add_option("--model", sim.model, "Preset name or model spec JSON")->capture_default_str();
  simulate->add_option("--params", sim.params_file, "JSON object {name: value}");
  simulate->add_option("--random", sim.random, "Number of random parameter draws");
  simulate->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  simulate->add_option("--n-points", sim.n_points, "Grid size")->capture_default_str();
  simulate->add_option("--q-min", sim.q_min, "Lowest q [1/A]")->capture_default_str();
  simulate->add_option("--q-max", sim.q_max, "Highest q [1/A]")->capture_default_str();
  simulate->add_flag("--noise", sim.noise, "Apply the default noise model");
  simulate->add_option("--noise-config", sim.noise_file, "Noise settings as JSON");
  simulate->add_flag("--sld", sim.sld, "Also write the SLD profile");
  simulate->add_option("--out", sim.out, "Output curve path")->capture_default_str();

  std::string config, resume;
  long long steps = 0;
  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  auto* config_opt = train->add_option("--config", config, "Training config JSON");
  train->add_option("--resume", resume, "Continue from a checkpoint")->excludes(config_opt);
  train->add_option("--steps", steps, "Train this many steps instead of up to max_steps");

  std::string checkpoint, curve_path, bounds_path, out = "prediction";
  auto* predict = app.add_subcommand("predict", "Predict parameters for a measured curve");
  predict->add_option("--checkpoint", checkpoint, "Trained model")->required();
  predict->add_option("--curve", curve_path, "Two-column curve file")->required();
  predict->add_option("--bounds", bounds_path, "JSON object {name: [lower, upper]}")->required();
  predict->add_option("--out", out, "Output prefix")->capture_default_str();

  std::string host = "127.0.0.1";
  int port = 0;
  auto* serve = app.add_subcommand("serve", "Serve predictions over HTTP");
  serve->add_option("--checkpoint", checkpoint, "Trained model")->required();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port (default: REFLPRIOR_PORT or 8765)");

  std::string spec_model = "box2";
  auto* spec = app.add_subcommand("spec", "Print a model spec as JSON");
  spec->add_option("--model", spec_model, "Preset name or model spec JSON")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) return run_simulate(sim);
    if (*train) {
      if (config.empty() && resume.empty()) throw InvalidInput("give --config or --resume");
      return run_train(config, resume, steps);
    }
    if (*predict) return run_predict(checkpoint, curve_path, bounds_path, out);
    if (*serve) return run_serve(checkpoint, host, port > 0 ? port : default_port());
    if (*spec) {
      std::cout << to_json(load_model_spec(spec_model)).dump(2) << "\n";
      return 0;
    }
  } catch (const RangeViolation& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const GridIncompatible& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 3;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
