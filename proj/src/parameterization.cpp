#include "reflprior/parameterization.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "reflprior/error.hpp"

namespace reflprior {

namespace {

// Smoothed unit step: 0 below, 1 above, erf edge of width sigma.
double rising_step(double x, double sigma) {
  if (sigma > 0.0) return 0.5 * std::erfc(-x / (std::numbers::sqrt2 * sigma));
  return x > 0.0 ? 1.0 : (x < 0.0 ? 0.0 : 0.5);
}

// Logistic decreasing through 1/2 at h0.
double falling_sigmoid(double h, double h0, double width) {
  const double d = h - h0;
  if (width <= 0.0) return d < 0.0 ? 1.0 : (d > 0.0 ? 0.0 : 0.5);
  const double t = d / width;
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

ParamDescriptor descriptor(std::string name, std::string unit, ParamKind kind, double lo, double hi,
                           double wlo, double whi) {
  return {std::move(name), std::move(unit), kind, lo, hi, wlo, whi};
}

}  // namespace

const char* to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::thickness: return "thickness";
    case ParamKind::roughness: return "roughness";
    case ParamKind::sld: return "sld";
    case ParamKind::dimensionless: return "dimensionless";
  }
  return "dimensionless";
}

ParamKind param_kind_from_string(const std::string& s) {
  if (s == "thickness") return ParamKind::thickness;
  if (s == "roughness") return ParamKind::roughness;
  if (s == "sld") return ParamKind::sld;
  if (s == "dimensionless") return ParamKind::dimensionless;
  throw InvalidInput("unknown parameter kind '" + s + "'");
}

void ParamDescriptor::validate() const {
  if (name.empty()) throw InvalidInput("parameter descriptor without a name");
  if (!(global_min < global_max))
    throw InvalidInput("parameter '" + name + "': global_min must be < global_max");
  if (!(width_min > 0.0) || !(width_min <= width_max) ||
      !(width_max <= global_max - global_min + 1e-12))
    throw InvalidInput("parameter '" + name +
                       "': widths must satisfy 0 < width_min <= width_max <= range");
}

Eigen::Index ModelSpec::index_of(const std::string& param_name) const {
  for (std::size_t i = 0; i < descriptors.size(); ++i)
    if (descriptors[i].name == param_name) return static_cast<Eigen::Index>(i);
  throw InvalidInput("model '" + name + "' has no parameter '" + param_name + "'");
}

Eigen::VectorXd ModelSpec::global_min() const {
  Eigen::VectorXd v(n_params());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = descriptors[std::size_t(i)].global_min;
  return v;
}

Eigen::VectorXd ModelSpec::global_max() const {
  Eigen::VectorXd v(n_params());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = descriptors[std::size_t(i)].global_max;
  return v;
}

Eigen::VectorXd ModelSpec::width_min() const {
  Eigen::VectorXd v(n_params());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = descriptors[std::size_t(i)].width_min;
  return v;
}

Eigen::VectorXd ModelSpec::width_max() const {
  Eigen::VectorXd v(n_params());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = descriptors[std::size_t(i)].width_max;
  return v;
}

void ModelSpec::validate() const {
  if (descriptors.empty()) throw InvalidInput("model '" + name + "' has no parameters");
  for (const auto& d : descriptors) d.validate();
  for (std::size_t i = 0; i < descriptors.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (descriptors[i].name == descriptors[j].name)
        throw InvalidInput("duplicate parameter name '" + descriptors[i].name + "'");
  if (kind == ModelKind::box) {
    if (n_layers < 0 || n_params() != 3 * n_layers + 2)
      throw InvalidInput("box model '" + name + "' needs 3 * n_layers + 2 parameters");
  } else if (n_params() != ml::count) {
    throw InvalidInput("multilayer model '" + name + "' needs 17 parameters");
  }
}

ModelSpec box_model_spec(int n_layers, const BoxRanges& r, const std::string& name) {
  if (n_layers < 1) throw InvalidInput("box model needs at least one layer");
  ModelSpec spec;
  spec.name = name;
  spec.kind = ModelKind::box;
  spec.n_layers = n_layers;
  const double sld_range = r.sld_max - r.sld_min;
  for (int l = 1; l <= n_layers; ++l) {
    const std::string s = std::to_string(l);
    spec.descriptors.push_back(descriptor("thickness_" + s, "A", ParamKind::thickness, 0.0,
                                          r.thickness_max, r.width_min, r.thickness_width_max));
    spec.descriptors.push_back(descriptor("roughness_" + s, "A", ParamKind::roughness, 0.0,
                                          r.roughness_max, r.width_min, r.roughness_width_max));
    spec.descriptors.push_back(descriptor("sld_" + s, "1e-6/A^2", ParamKind::sld, r.sld_min,
                                          r.sld_max, r.width_min,
                                          std::min(r.sld_width_max, sld_range)));
  }
  spec.descriptors.push_back(descriptor("substrate_roughness", "A", ParamKind::roughness, 0.0,
                                        r.roughness_max, r.width_min, r.roughness_width_max));
  spec.descriptors.push_back(descriptor("substrate_sld", "1e-6/A^2", ParamKind::sld, r.sld_min,
                                        r.sld_max, r.width_min,
                                        std::min(r.sld_width_max, sld_range)));
  spec.validate();
  return spec;
}

ModelSpec two_layer_spec() { return box_model_spec(2, BoxRanges{}, "box2"); }

ModelSpec five_layer_spec() {
  BoxRanges r;
  r.thickness_max = 300.0;
  r.thickness_width_max = 300.0;
  r.sld_min = 0.0;
  return box_model_spec(5, r, "box5");
}

ModelSpec two_layer_fno_spec() {
  BoxRanges r;
  r.thickness_max = 300.0;
  r.thickness_width_max = 300.0;
  r.sld_min = 0.0;
  return box_model_spec(2, r, "box2_fno");
}

ModelSpec multilayer_spec() {
  using K = ParamKind;
  ModelSpec spec;
  spec.name = "multilayer";
  spec.kind = ModelKind::multilayer;
  spec.descriptors = {
      descriptor("monolayer_thickness", "A", K::thickness, 10, 20, 0.1, 10),
      descriptor("monolayer_roughness_rel", "", K::dimensionless, 0, 0.3, 0.1, 0.3),
      descriptor("box1_sld", "1e-6/A^2", K::sld, 0, 20, 0.1, 5),
      descriptor("box2_minus_box1_sld", "1e-6/A^2", K::sld, -10, 10, 0.1, 5),
      // Width range capped at the parameter range (0.98).
      descriptor("box1_fraction", "", K::dimensionless, 0.01, 0.99, 0.01, 0.98),
      descriptor("si_roughness", "A", K::roughness, 0, 10, 0.01, 10),
      descriptor("si_sld", "1e-6/A^2", K::sld, 19, 21, 0.01, 2),
      descriptor("sio2_thickness", "A", K::thickness, 0, 10, 0.01, 10),
      descriptor("sio2_roughness", "A", K::roughness, 0, 10, 0.01, 10),
      descriptor("sio2_sld", "1e-6/A^2", K::sld, 17, 19, 0.01, 2),
      descriptor("phase_sld", "1e-6/A^2", K::sld, 0, 25, 0.01, 25),
      descriptor("phase_thickness_rel", "", K::dimensionless, 0, 1, 0.01, 1),
      descriptor("phase_roughness_rel", "", K::dimensionless, 0, 1, 0.01, 1),
      descriptor("sigmoid1_position_rel", "", K::dimensionless, 0, 25, 0.1, 25),
      descriptor("sigmoid1_width_rel", "", K::dimensionless, 0, 5, 0.1, 5),
      descriptor("sigmoid2_position_rel", "", K::dimensionless, -10, 10, 0.1, 20),
      descriptor("sigmoid2_width_rel", "", K::dimensionless, 0, 20, 0.1, 20),
  };
  spec.validate();
  return spec;
}

std::vector<std::string> preset_names() { return {"box2", "box5", "box2_fno", "multilayer"}; }

ModelSpec preset_spec(const std::string& name) {
  if (name == "box2") return two_layer_spec();
  if (name == "box5") return five_layer_spec();
  if (name == "box2_fno") return two_layer_fno_spec();
  if (name == "multilayer") return multilayer_spec();
  throw InvalidInput("unknown model preset '" + name + "'");
}

void check_ranges(const Eigen::Ref<const Eigen::VectorXd>& theta, const ModelSpec& spec) {
  if (theta.size() != spec.n_params())
    throw InvalidInput("model '" + spec.name + "' expects " + std::to_string(spec.n_params()) +
                       " parameters, got " + std::to_string(theta.size()));
  std::vector<std::string> bad;
  std::string msg;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const auto& d = spec.descriptors[std::size_t(i)];
    if (!std::isfinite(theta(i)) || theta(i) < d.global_min || theta(i) > d.global_max) {
      bad.push_back(d.name);
      msg += (msg.empty() ? "" : ", ") + d.name + "=" + std::to_string(theta(i)) + " not in [" +
             std::to_string(d.global_min) + ", " + std::to_string(d.global_max) + "]";
    }
  }
  if (!bad.empty()) throw RangeViolation("parameters out of range: " + msg, std::move(bad));
}

SlabStack box_to_stack(const Eigen::Ref<const Eigen::VectorXd>& theta, const ModelSpec& spec) {
  if (spec.kind != ModelKind::box) throw InvalidInput("box_to_stack needs a box model");
  check_ranges(theta, spec);
  SlabStack stack;
  stack.ambient_sld = spec.ambient_sld;
  stack.slabs.reserve(std::size_t(spec.n_layers));
  for (int l = 0; l < spec.n_layers; ++l)
    stack.slabs.push_back({theta(3 * l), theta(3 * l + 1), theta(3 * l + 2)});
  stack.substrate_roughness = theta(3 * spec.n_layers);
  stack.substrate_sld = theta(3 * spec.n_layers + 1);
  return stack;
}

Eigen::VectorXd stack_to_box(const SlabStack& stack) {
  const auto n = static_cast<Eigen::Index>(stack.slabs.size());
  Eigen::VectorXd theta(3 * n + 2);
  for (Eigen::Index l = 0; l < n; ++l) {
    const Slab& s = stack.slabs[std::size_t(l)];
    theta.segment<3>(3 * l) << s.thickness, s.roughness, s.sld;
  }
  theta(3 * n) = stack.substrate_roughness;
  theta(3 * n + 1) = stack.substrate_sld;
  return theta;
}

ContinuousProfile multilayer_to_profile(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                        const ModelSpec& spec, double z_step) {
  if (spec.kind != ModelKind::multilayer || theta.size() != ml::count)
    throw InvalidInput("multilayer_to_profile needs the 17-parameter multilayer model");
  if (!(z_step > 0.0)) throw InvalidInput("z_step must be > 0");
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    if (!std::isfinite(theta(i))) throw InvalidInput("multilayer parameters must be finite");

  const double period = theta(ml::monolayer_thickness);
  const double sigma_m = theta(ml::monolayer_roughness_rel) * period;
  const double rho1 = theta(ml::box1_sld);
  const double rho2 = rho1 + theta(ml::box2_minus_box1_sld);
  const double frac = theta(ml::box1_fraction);
  const double sigma_si = theta(ml::si_roughness);
  const double rho_si = theta(ml::si_sld);
  const double d_ox = theta(ml::sio2_thickness);
  const double sigma_ox = theta(ml::sio2_roughness);
  const double rho_ox = theta(ml::sio2_sld);
  const double rho_ph = theta(ml::phase_sld);
  const double d_ph = theta(ml::phase_thickness_rel) * period;
  const double sigma_ph = theta(ml::phase_roughness_rel) * period;
  const double w1 = theta(ml::sigmoid1_width_rel) * period;
  const double w2 = theta(ml::sigmoid2_width_rel) * period;
  const double rho_amb = spec.ambient_sld;

  if (!(period > 0.0) || sigma_m < 0.0 || sigma_si < 0.0 || d_ox < 0.0 || sigma_ox < 0.0 ||
      d_ph < 0.0 || sigma_ph < 0.0 || w1 < 0.0 || w2 < 0.0 || frac < 0.0 || frac > 1.0 ||
      theta(ml::sigmoid1_position_rel) < 0.0)
    throw InvalidInput("multilayer parameters describe an impossible geometry");

  // Heights above the Si/SiO2 interface.
  const double h_base = d_ox + d_ph;
  const double h1 = h_base + theta(ml::sigmoid1_position_rel) * period;
  const double h2 = h1 + theta(ml::sigmoid2_position_rel) * period;
  const double mean = frac * rho1 + (1.0 - frac) * rho2;

  const double h_top = std::max(h1 + 12.0 * w1, h_base + 6.0 * sigma_ph) + 20.0;
  const double h_bottom = -(6.0 * sigma_si + 20.0);
  const auto n = static_cast<Eigen::Index>(std::ceil((h_top - h_bottom) / z_step)) + 1;

  const int reach = static_cast<int>(std::ceil(8.0 * sigma_m / period)) + 1;
  auto periodic = [&](double h) {
    const double u = h - h_base;
    const auto k0 = static_cast<int>(std::floor(u / period));
    double inside = 0.0;
    for (int k = k0 - reach; k <= k0 + reach; ++k) {
      const double start = k * period;
      inside += rising_step(u - start, sigma_m) - rising_step(u - start - frac * period, sigma_m);
    }
    return rho2 + (rho1 - rho2) * inside;
  };

  ContinuousProfile p;
  p.ambient_sld = rho_amb;
  p.substrate_sld = rho_si;
  p.z = z_step * Eigen::ArrayXd::LinSpaced(n, 0.0, double(n - 1));
  p.rho.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = h_top - p.z(i);
    const double below = rho_si + (rho_ox - rho_si) * rising_step(h, sigma_si) +
                         (rho_ph - rho_ox) * rising_step(h - d_ox, sigma_ox) +
                         (rho_amb - rho_ph) * rising_step(h - h_base, sigma_ph);
    const double film = mean + falling_sigmoid(h, h2, w2) * (periodic(h) - mean);
    p.rho(i) = below + rising_step(h - h_base, sigma_ph) * falling_sigmoid(h, h1, w1) *
                           (film - rho_amb);
  }
  return p;
}

SlabStack profile_to_stack(const ContinuousProfile& profile, double slab_thickness) {
  const double dz = profile.z_step();
  if (profile.z.size() < 2 || profile.rho.size() != profile.z.size())
    throw InvalidInput("profile needs at least two samples");
  if (!(slab_thickness > 0.0) || slab_thickness > 4.0 * dz + 1e-12)
    throw InvalidInput("slab thickness must be in (0, 4 * z_step]");

  const Eigen::Index n = profile.z.size();
  const double z0 = profile.z(0);
  const double extent = profile.z(n - 1) - z0;
  // Cumulative trapezoid integral of the piecewise-linear profile.
  Eigen::ArrayXd cum(n);
  cum(0) = 0.0;
  for (Eigen::Index k = 1; k < n; ++k)
    cum(k) = cum(k - 1) + 0.5 * dz * (profile.rho(k) + profile.rho(k - 1));
  auto integral_to = [&](double x) {
    const double u = std::clamp((x - z0) / dz, 0.0, double(n - 1));
    const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(u), n - 2);
    const double t = u - double(k);
    const double rho_x = profile.rho(k) + t * (profile.rho(k + 1) - profile.rho(k));
    return cum(k) + 0.5 * t * dz * (profile.rho(k) + rho_x);
  };

  SlabStack stack;
  stack.ambient_sld = profile.ambient_sld;
  stack.substrate_sld = profile.substrate_sld;
  const auto n_slabs = static_cast<std::size_t>(std::ceil(extent / slab_thickness - 1e-9));
  stack.slabs.reserve(n_slabs);
  for (std::size_t s = 0; s < n_slabs; ++s) {
    const double a = z0 + double(s) * slab_thickness;
    const double b = std::min(a + slab_thickness, z0 + extent);
    if (b <= a) break;
    stack.slabs.push_back({b - a, 0.0, (integral_to(b) - integral_to(a)) / (b - a)});
  }
  return stack;
}

SlabStack to_stack(const Eigen::Ref<const Eigen::VectorXd>& theta, const ModelSpec& spec) {
  if (spec.kind == ModelKind::box) return box_to_stack(theta, spec);
  check_ranges(theta, spec);
  return profile_to_stack(multilayer_to_profile(theta, spec));
}

ContinuousProfile sld_profile(const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const ModelSpec& spec, double z_step) {
  if (spec.kind == ModelKind::multilayer) return multilayer_to_profile(theta, spec, z_step);
  const InterfaceSet ifs = interfaces_from_stack(box_to_stack(theta, spec));
  const Interface& top = ifs.interfaces.front();
  const Interface& bottom = ifs.interfaces.back();
  const double lo = top.z - 4.0 * top.sigma - 20.0;
  const double hi = bottom.z + 4.0 * bottom.sigma + 20.0;
  const auto n = static_cast<Eigen::Index>(std::ceil((hi - lo) / z_step)) + 1;
  ContinuousProfile p;
  p.ambient_sld = ifs.ambient_sld;
  p.substrate_sld = ifs.substrate_sld;
  p.z = lo + z_step * Eigen::ArrayXd::LinSpaced(n, 0.0, double(n - 1));
  p.rho = box_sld_profile(p.z, ifs);
  return p;
}

}  // namespace reflprior
