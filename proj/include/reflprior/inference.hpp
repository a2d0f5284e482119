#pragma once

// Prediction from a frozen checkpoint, shared by the command line and the HTTP service.

#include <string>

#include <json.hpp>

#include "reflprior/error.hpp"
#include "reflprior/parameterization.hpp"
#include "reflprior/priors.hpp"
#include "reflprior/training.hpp"

namespace reflprior {

struct Prediction {
  Eigen::VectorXd params;
  ReflectivityCurve fit;  // simulated at the input q grid
  ContinuousProfile profile;
  // Profiles of the lower and upper bound vectors; empty when a bound vector has no valid
  // geometry (possible for the multilayer model).
  ContinuousProfile profile_lo;
  ContinuousProfile profile_hi;
};

class Predictor {
 public:
  explicit Predictor(LoadedModel model);
  static Predictor from_file(const std::string& path, const ModelSpec* expected_spec = nullptr);

  const ModelSpec& spec() const { return model_.spec; }
  const DiscretizationSpec& discretization() const { return model_.discretization; }
  const nn::NetworkConfig& network() const { return model_.network; }
  Eigen::Index step() const { return model_.step; }

  // Grid a simulation uses when the caller gives none; always accepted by check_grid.
  Eigen::ArrayXd default_grid() const;

  // CNN checkpoints accept only the trained grid; FNO checkpoints accept equally spaced grids
  // whose size and end points lie within the trained ranges. Throws GridIncompatible.
  void check_grid(const Eigen::ArrayXd& q) const;

  // Throws InvalidInput / RangeViolation for bad curves or bounds, GridIncompatible for grids.
  // Safe to call from several threads at once.
  Prediction predict(const ReflectivityCurve& curve, const PriorBounds& bounds) const;

 private:
  mutable LoadedModel model_;  // eval-mode forward passes never modify it
};

// Noise-free reflectivity of a parameter vector on a q grid.
ReflectivityCurve simulate_curve(const Eigen::VectorXd& theta, const ModelSpec& spec,
                                 const Eigen::ArrayXd& q);

// {name: [lo, hi]} with every parameter present. `pointer` prefixes error field paths.
PriorBounds bounds_from_json(const nlohmann::json& j, const ModelSpec& spec,
                             const std::string& pointer = "/bounds");
nlohmann::json bounds_to_json(const PriorBounds& bounds, const ModelSpec& spec);

// {name: value} with every parameter present.
Eigen::VectorXd params_from_json(const nlohmann::json& j, const ModelSpec& spec,
                                 const std::string& pointer = "/params");
nlohmann::json params_to_json(const Eigen::VectorXd& theta, const ModelSpec& spec);

// [[q, R], ...]
ReflectivityCurve curve_from_json(const nlohmann::json& j, const std::string& pointer = "/curve");
nlohmann::json curve_to_json(const ReflectivityCurve& curve);
nlohmann::json profile_to_json(const ContinuousProfile& profile);

// {params, fit_curve, sld_profile, sld_profile_lo, sld_profile_hi}
nlohmann::json prediction_to_json(const Prediction& p, const ModelSpec& spec);

// Model spec, grid contract and units.
nlohmann::json service_spec_json(const Predictor& predictor);

// Request-level error carrying the JSON pointers of the offending fields.
class RequestError : public InvalidInput {
 public:
  RequestError(const std::string& what, std::vector<std::string> fields)
      : InvalidInput(what), fields_(std::move(fields)) {}
  const std::vector<std::string>& fields() const { return fields_; }

 private:
  std::vector<std::string> fields_;
};

}  // namespace reflprior
