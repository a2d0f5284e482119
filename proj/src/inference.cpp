#include "reflprior/inference.hpp"

#include <cmath>
#include <set>

#include "reflprior/config.hpp"
#include "reflprior/error.hpp"
#include "reflprior/physics.hpp"
#include "reflprior/signal.hpp"

namespace reflprior {

namespace {

using nlohmann::json;

// Relative tolerance for matching a grid read back from text.
constexpr double kGridTol = 1e-6;
// Spacing irregularity accepted on FNO grids.
constexpr double kSpacingTol = 1e-2;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Parameter name -> pointer-safe path segment (JSON pointer escaping).
std::string segment(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (c == '~')
      out += "~0";
    else if (c == '/')
      out += "~1";
    else
      out += c;
  }
  return out;
}

std::string where(const std::string& pointer) { return pointer.empty() ? "/" : pointer; }

std::vector<std::string> prefixed(const std::string& pointer, const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const auto& n : names) out.push_back(pointer + "/" + segment(n));
  return out;
}

ContinuousProfile try_profile(const Eigen::VectorXd& theta, const ModelSpec& spec) {
  try {
    return sld_profile(theta, spec);
  } catch (const InvalidInput&) {
    return {};
  }
}

// Checks that an object carries exactly the spec's parameter names.
void check_names(const json& j, const ModelSpec& spec, const std::string& pointer) {
  if (!j.is_object()) throw RequestError(where(pointer) + ": expected an object keyed by parameter name", {pointer});
  std::set<std::string> known;
  for (const auto& d : spec.descriptors) known.insert(d.name);
  std::vector<std::string> unknown, missing;
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) unknown.push_back(key);
  for (const auto& d : spec.descriptors)
    if (!j.contains(d.name)) missing.push_back(d.name);
  if (!unknown.empty()) {
    std::string msg;
    for (const auto& n : unknown) msg += (msg.empty() ? "" : ", ") + n;
    throw RequestError(where(pointer) + ": unknown parameters " + msg, prefixed(pointer, unknown));
  }
  if (!missing.empty()) {
    std::string msg;
    for (const auto& n : missing) msg += (msg.empty() ? "" : ", ") + n;
    throw RequestError(where(pointer) + ": missing parameters " + msg, prefixed(pointer, missing));
  }
}

}  // namespace

Predictor::Predictor(LoadedModel model) : model_(std::move(model)) {}

Predictor Predictor::from_file(const std::string& path, const ModelSpec* expected_spec) {
  return Predictor(load_model(path, expected_spec));
}

Eigen::ArrayXd Predictor::default_grid() const {
  const auto& d = model_.discretization;
  return Eigen::ArrayXd::LinSpaced(d.n_points_min, d.q_min_lo, d.q_max_lo);
}

void Predictor::check_grid(const Eigen::ArrayXd& q) const {
  const auto& d = model_.discretization;
  const Eigen::Index n = q.size();
  if (n < 2) throw GridIncompatible("curve needs at least 2 points");
  const double scale = std::max(std::abs(q(n - 1)), 1e-12);
  if (model_.network.embedding == nn::EmbeddingKind::cnn) {
    const Eigen::ArrayXd trained = Eigen::ArrayXd::LinSpaced(d.n_points_min, d.q_min_lo, d.q_max_lo);
    if (n != trained.size() || ((q - trained).abs() > kGridTol * scale).any())
      throw GridIncompatible(
          "this CNN checkpoint only accepts its trained grid of " + std::to_string(trained.size()) +
          " equally spaced points on [" + fmt(d.q_min_lo) + ", " + fmt(d.q_max_lo) + "] 1/A; got " +
          std::to_string(n) + " points on [" + fmt(q(0)) + ", " + fmt(q(n - 1)) +
          "]. Curves are not interpolated onto the trained grid because resampling can introduce "
          "unphysical artifacts; use an FNO checkpoint for other grids");
    return;
  }
  std::string why;
  if (n < d.n_points_min || n > d.n_points_max)
    why = std::to_string(n) + " points, trained on " + std::to_string(d.n_points_min) + " to " +
          std::to_string(d.n_points_max);
  else if (q(0) < d.q_min_lo * (1 - kGridTol) || q(0) > d.q_min_hi * (1 + kGridTol))
    why = "q_min " + fmt(q(0)) + " outside [" + fmt(d.q_min_lo) + ", " + fmt(d.q_min_hi) + "]";
  else if (q(n - 1) < d.q_max_lo * (1 - kGridTol) || q(n - 1) > d.q_max_hi * (1 + kGridTol))
    why = "q_max " + fmt(q(n - 1)) + " outside [" + fmt(d.q_max_lo) + ", " + fmt(d.q_max_hi) + "]";
  else {
    const Eigen::ArrayXd step = q.tail(n - 1) - q.head(n - 1);
    const double mean = (q(n - 1) - q(0)) / double(n - 1);
    if (((step - mean).abs() > kSpacingTol * mean).any()) why = "q points are not equally spaced";
  }
  if (!why.empty()) throw GridIncompatible("grid outside the range this FNO checkpoint was trained on: " + why);
}

Prediction Predictor::predict(const ReflectivityCurve& curve, const PriorBounds& bounds) const {
  curve.validate();
  check_grid(curve.q);
  validate_bounds(bounds, model_.spec);
  const Eigen::Index p = model_.spec.n_params();
  const TrainingBatch batch =
      make_inputs(model_.spec, curve.q, curve.intensity.transpose(), bounds.lower.transpose(),
                  bounds.upper.transpose());
  Eigen::VectorXd y;
  {
    nn::NoGradGuard guard;
    const auto out = model_.model.forward(batch.curve, batch.q_input, batch.bounds, false);
    y = out.value().cast<double>();
  }
  if (y.size() != p) throw InvalidState("network produced the wrong number of outputs");
  Prediction pred;
  pred.params = denormalize_from_bounds(y, bounds);
  pred.fit = simulate_curve(pred.params, model_.spec, curve.q);
  pred.profile = sld_profile(pred.params, model_.spec);
  pred.profile_lo = try_profile(bounds.lower, model_.spec);
  pred.profile_hi = try_profile(bounds.upper, model_.spec);
  return pred;
}

ReflectivityCurve simulate_curve(const Eigen::VectorXd& theta, const ModelSpec& spec,
                                 const Eigen::ArrayXd& q) {
  ReflectivityCurve c;
  c.q = q;
  c.intensity = abeles_reflectivity(q, to_stack(theta, spec));
  return c;
}

PriorBounds bounds_from_json(const json& j, const ModelSpec& spec, const std::string& pointer) {
  check_names(j, spec, pointer);
  const Eigen::Index p = spec.n_params();
  PriorBounds b{Eigen::VectorXd(p), Eigen::VectorXd(p)};
  for (Eigen::Index i = 0; i < p; ++i) {
    const std::string& name = spec.descriptors[std::size_t(i)].name;
    const json& v = j.at(name);
    const std::string path = pointer + "/" + segment(name);
    if (v.is_number()) {
      b.lower(i) = b.upper(i) = v.get<double>();
    } else if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
      b.lower(i) = v[0].get<double>();
      b.upper(i) = v[1].get<double>();
    } else {
      throw RequestError(path + ": expected [lower, upper]", {path});
    }
  }
  try {
    validate_bounds(b, spec);
  } catch (const RangeViolation& ex) {
    throw RequestError(ex.what(), prefixed(pointer, ex.fields()));
  }
  return b;
}

json bounds_to_json(const PriorBounds& bounds, const ModelSpec& spec) {
  json j = json::object();
  for (std::size_t i = 0; i < spec.descriptors.size(); ++i)
    j[spec.descriptors[i].name] = {bounds.lower(Eigen::Index(i)), bounds.upper(Eigen::Index(i))};
  return j;
}

Eigen::VectorXd params_from_json(const json& j, const ModelSpec& spec, const std::string& pointer) {
  check_names(j, spec, pointer);
  Eigen::VectorXd theta(spec.n_params());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const std::string& name = spec.descriptors[std::size_t(i)].name;
    const json& v = j.at(name);
    if (!v.is_number()) {
      const std::string path = pointer + "/" + segment(name);
      throw RequestError(path + ": expected a number", {path});
    }
    theta(i) = v.get<double>();
  }
  try {
    check_ranges(theta, spec);
  } catch (const RangeViolation& ex) {
    throw RequestError(ex.what(), prefixed(pointer, ex.fields()));
  }
  return theta;
}

json params_to_json(const Eigen::VectorXd& theta, const ModelSpec& spec) {
  json j = json::object();
  for (std::size_t i = 0; i < spec.descriptors.size(); ++i)
    j[spec.descriptors[i].name] = theta(Eigen::Index(i));
  return j;
}

ReflectivityCurve curve_from_json(const json& j, const std::string& pointer) {
  if (!j.is_array() || j.empty()) throw RequestError(pointer + ": expected [[q, R], ...]", {pointer});
  ReflectivityCurve c;
  c.q.resize(Eigen::Index(j.size()));
  c.intensity.resize(c.q.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& row = j[i];
    const std::string path = pointer + "/" + std::to_string(i);
    if (!row.is_array() || row.size() != 2 || !row[0].is_number() || !row[1].is_number())
      throw RequestError(path + ": expected [q, R]", {path});
    c.q(Eigen::Index(i)) = row[0].get<double>();
    c.intensity(Eigen::Index(i)) = row[1].get<double>();
  }
  try {
    c.validate();
  } catch (const InvalidInput& ex) {
    throw RequestError(pointer + ": " + ex.what(), {pointer});
  }
  return c;
}

json curve_to_json(const ReflectivityCurve& curve) {
  json j = json::array();
  for (Eigen::Index i = 0; i < curve.q.size(); ++i) j.push_back({curve.q(i), curve.intensity(i)});
  return j;
}

json profile_to_json(const ContinuousProfile& profile) {
  json j = json::array();
  for (Eigen::Index i = 0; i < profile.z.size(); ++i) j.push_back({profile.z(i), profile.rho(i)});
  return j;
}

json prediction_to_json(const Prediction& p, const ModelSpec& spec) {
  return {{"params", params_to_json(p.params, spec)},
          {"fit_curve", curve_to_json(p.fit)},
          {"sld_profile", profile_to_json(p.profile)},
          {"sld_profile_lo", profile_to_json(p.profile_lo)},
          {"sld_profile_hi", profile_to_json(p.profile_hi)}};
}

json service_spec_json(const Predictor& predictor) {
  const auto& d = predictor.discretization();
  return {{"model", to_json(predictor.spec())},
          {"embedding", nn::to_string(predictor.network().embedding)},
          {"grid",
           {{"variable", predictor.network().embedding == nn::EmbeddingKind::fno},
            {"n_points", {d.n_points_min, d.n_points_max}},
            {"q_min", {d.q_min_lo, d.q_min_hi}},
            {"q_max", {d.q_max_lo, d.q_max_hi}}}},
          {"training_step", predictor.step()},
          {"units",
           {{"q", "1/A"}, {"length", "A"}, {"sld", "1e-6/A^2"}, {"reflectivity", "1"}}}};
}

}  // namespace reflprior
