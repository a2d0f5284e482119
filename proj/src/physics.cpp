#include "reflprior/physics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "reflprior/error.hpp"

namespace reflprior {

namespace {

using Complex = std::complex<double>;

constexpr double kSldUnit = 1e-6;
constexpr double kFourPi = 4.0 * std::numbers::pi;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidInput(std::string(what) + " is not finite");
}

void validate_grid(const Eigen::Ref<const Eigen::ArrayXd>& q) {
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!std::isfinite(q(i))) throw InvalidInput("q grid contains a non-finite value");
    if (q(i) <= 0.0) throw InvalidInput("q grid must be strictly positive");
  }
}

// Perpendicular wavevector in a medium, relative to the ambient. Im(k) >= 0.
Complex kz(double q, double sld, double ambient_sld) {
  const double arg = 0.25 * q * q - kFourPi * (sld - ambient_sld) * kSldUnit;
  return arg >= 0.0 ? Complex(std::sqrt(arg), 0.0) : Complex(0.0, std::sqrt(-arg));
}

// exp(z) without the trigonometric calls when z is real or purely imaginary.
Complex cexp(Complex z) {
  if (z.imag() == 0.0) return {std::exp(z.real()), 0.0};
  const double mag = z.real() == 0.0 ? 1.0 : std::exp(z.real());
  return {mag * std::cos(z.imag()), mag * std::sin(z.imag())};
}

Complex rough_fresnel(Complex k1, Complex k2, double sigma) {
  const Complex sum = k1 + k2;
  if (sum == Complex(0.0, 0.0)) return {0.0, 0.0};
  const Complex r = (k1 - k2) / sum;
  return sigma == 0.0 ? r : r * cexp(-2.0 * k1 * k2 * sigma * sigma);
}

// Medium SLDs (ambient, slabs..., substrate), thicknesses of slabs, roughness of each interface.
struct Media {
  std::vector<double> sld;
  std::vector<double> thickness;  // thickness[j] for medium j; 0 for the half spaces
  std::vector<double> sigma;      // sigma[j] is the interface between media j and j+1
};

Media media_of(const SlabStack& stack) {
  const std::size_t n = stack.slabs.size();
  Media m;
  m.sld.reserve(n + 2);
  m.thickness.reserve(n + 2);
  m.sigma.reserve(n + 1);
  m.sld.push_back(stack.ambient_sld);
  m.thickness.push_back(0.0);
  for (const Slab& s : stack.slabs) {
    m.sld.push_back(s.sld);
    m.thickness.push_back(s.thickness);
    m.sigma.push_back(s.roughness);
  }
  m.sld.push_back(stack.substrate_sld);
  m.thickness.push_back(0.0);
  m.sigma.push_back(stack.substrate_roughness);
  return m;
}

double abeles_point(double q, const Media& m, std::vector<Complex>& k) {
  const std::size_t n_media = m.sld.size();
  for (std::size_t j = 0; j < n_media; ++j) k[j] = kz(q, m.sld[j], m.sld[0]);

  // Characteristic matrix product; reflection amplitude is M10 / M00.
  Complex r = rough_fresnel(k[0], k[1], m.sigma[0]);
  Complex m00 = 1.0, m01 = r, m10 = r, m11 = 1.0;
  for (std::size_t j = 1; j + 1 < n_media; ++j) {
    r = rough_fresnel(k[j], k[j + 1], m.sigma[j]);
    const Complex beta = Complex(0.0, 1.0) * k[j] * m.thickness[j];
    const Complex down = cexp(-beta);
    const Complex up = cexp(beta);
    const Complex c00 = down, c01 = r * down, c10 = r * up, c11 = up;
    const Complex n00 = m00 * c00 + m01 * c10;
    const Complex n01 = m00 * c01 + m01 * c11;
    const Complex n10 = m10 * c00 + m11 * c10;
    const Complex n11 = m10 * c01 + m11 * c11;
    m00 = n00;
    m01 = n01;
    m10 = n10;
    m11 = n11;
  }
  return std::norm(m10 / m00);
}

}  // namespace

void SlabStack::validate() const {
  require_finite(ambient_sld, "ambient SLD");
  require_finite(substrate_sld, "substrate SLD");
  require_finite(substrate_roughness, "substrate roughness");
  if (substrate_roughness < 0.0) throw InvalidInput("substrate roughness is negative");
  for (std::size_t i = 0; i < slabs.size(); ++i) {
    const Slab& s = slabs[i];
    require_finite(s.thickness, "slab thickness");
    require_finite(s.roughness, "slab roughness");
    require_finite(s.sld, "slab SLD");
    if (s.thickness < 0.0)
      throw InvalidInput("slab " + std::to_string(i) + " has negative thickness");
    if (s.roughness < 0.0)
      throw InvalidInput("slab " + std::to_string(i) + " has negative roughness");
  }
}

void InterfaceSet::validate() const {
  require_finite(ambient_sld, "ambient SLD");
  require_finite(substrate_sld, "substrate SLD");
  double total = 0.0;
  for (std::size_t i = 0; i < interfaces.size(); ++i) {
    const Interface& f = interfaces[i];
    require_finite(f.z, "interface position");
    require_finite(f.delta_rho, "interface SLD step");
    require_finite(f.sigma, "interface roughness");
    if (f.sigma < 0.0) throw InvalidInput("interface roughness is negative");
    if (i > 0 && !(f.z > interfaces[i - 1].z))
      throw InvalidInput("interface positions must be strictly increasing");
    total += f.delta_rho;
  }
  const double contrast = substrate_sld - ambient_sld;
  if (std::abs(total - contrast) > 1e-9 * std::max(1.0, std::abs(contrast)))
    throw InvalidInput("interface SLD steps do not sum to the substrate contrast");
}

void ReflectivityCurve::validate() const {
  if (q.size() != intensity.size())
    throw InvalidInput("curve q and intensity lengths differ");
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!std::isfinite(q(i)) || q(i) <= 0.0) throw InvalidInput("curve q must be finite and > 0");
    if (i > 0 && !(q(i) > q(i - 1))) throw InvalidInput("curve q must be strictly increasing");
    if (!std::isfinite(intensity(i)) || intensity(i) < 0.0)
      throw InvalidInput("curve intensities must be finite and >= 0");
  }
}

double critical_q(double substrate_sld, double ambient_sld) {
  const double contrast = substrate_sld - ambient_sld;
  return contrast > 0.0 ? std::sqrt(4.0 * kFourPi * contrast * kSldUnit) : 0.0;
}

Eigen::ArrayXd fresnel_reflectivity(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                    double substrate_sld, double ambient_sld) {
  require_finite(substrate_sld, "substrate SLD");
  require_finite(ambient_sld, "ambient SLD");
  validate_grid(q);
  Eigen::ArrayXd out(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const Complex k0 = kz(q(i), ambient_sld, ambient_sld);
    const Complex k1 = kz(q(i), substrate_sld, ambient_sld);
    out(i) = std::min(1.0, std::norm((k0 - k1) / (k0 + k1)));
  }
  return out;
}

Eigen::ArrayXd abeles_reflectivity(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                   const SlabStack& stack) {
  stack.validate();
  validate_grid(q);
  const Media m = media_of(stack);
  std::vector<Complex> k(m.sld.size());
  Eigen::ArrayXd out(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) out(i) = abeles_point(q(i), m, k);
  return out;
}

Eigen::ArrayXXd abeles_reflectivity(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                    std::span<const SlabStack> stacks) {
  Eigen::ArrayXXd out(static_cast<Eigen::Index>(stacks.size()), q.size());
  for (std::size_t b = 0; b < stacks.size(); ++b)
    out.row(static_cast<Eigen::Index>(b)) = abeles_reflectivity(q, stacks[b]).transpose();
  return out;
}

Eigen::ArrayXd parratt_reflectivity(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                    const SlabStack& stack) {
  stack.validate();
  validate_grid(q);
  // Deliberately self-contained: principal complex square root and plain std::exp.
  const double amb = stack.ambient_sld;
  auto wavevector = [amb](double qi, double sld) {
    const Complex k = std::sqrt(Complex(0.25 * qi * qi - kFourPi * (sld - amb) * kSldUnit, 0.0));
    return k.imag() < 0.0 ? -k : k;
  };
  auto fresnel = [](Complex ka, Complex kb, double sigma) {
    if (ka + kb == Complex(0.0, 0.0)) return Complex(0.0, 0.0);
    return (ka - kb) / (ka + kb) * std::exp(-2.0 * ka * kb * sigma * sigma);
  };
  const std::size_t n = stack.slabs.size();
  Eigen::ArrayXd out(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const double qi = q(i);
    // Walk upward from the substrate; x is the reflection ratio at the top of medium j+1.
    Complex x(0.0, 0.0);
    Complex k_below = wavevector(qi, stack.substrate_sld);
    double sigma_below = stack.substrate_roughness;
    for (std::size_t j = n; j-- > 0;) {
      const Slab& s = stack.slabs[j];
      const Complex k = wavevector(qi, s.sld);
      const Complex rj = fresnel(k, k_below, sigma_below);
      x = (rj + x) / (1.0 + rj * x);
      x *= std::exp(Complex(0.0, 2.0) * k * s.thickness);
      k_below = k;
      sigma_below = s.roughness;
    }
    const Complex r0 = fresnel(wavevector(qi, amb), k_below, sigma_below);
    x = (r0 + x) / (1.0 + r0 * x);
    out(i) = std::norm(x);
  }
  return out;
}

InterfaceSet interfaces_from_stack(const SlabStack& stack) {
  stack.validate();
  InterfaceSet ifs;
  ifs.ambient_sld = stack.ambient_sld;
  ifs.substrate_sld = stack.substrate_sld;
  double z = 0.0;
  double above = stack.ambient_sld;
  for (const Slab& s : stack.slabs) {
    if (s.thickness <= 0.0) continue;
    ifs.interfaces.push_back({z, s.sld - above, s.roughness});
    above = s.sld;
    z += s.thickness;
  }
  ifs.interfaces.push_back({z, stack.substrate_sld - above, stack.substrate_roughness});
  return ifs;
}

SlabStack stack_from_interfaces(const InterfaceSet& ifs) {
  ifs.validate();
  SlabStack stack;
  stack.ambient_sld = ifs.ambient_sld;
  stack.substrate_sld = ifs.substrate_sld;
  if (ifs.interfaces.empty()) return stack;
  double level = ifs.ambient_sld;
  for (std::size_t i = 0; i + 1 < ifs.interfaces.size(); ++i) {
    level += ifs.interfaces[i].delta_rho;
    stack.slabs.push_back({ifs.interfaces[i + 1].z - ifs.interfaces[i].z,
                           ifs.interfaces[i].sigma, level});
  }
  stack.substrate_roughness = ifs.interfaces.back().sigma;
  return stack;
}

Eigen::ArrayXd box_sld_profile(const Eigen::Ref<const Eigen::ArrayXd>& z, const InterfaceSet& ifs) {
  ifs.validate();
  Eigen::ArrayXd rho = Eigen::ArrayXd::Constant(z.size(), ifs.ambient_sld);
  for (const Interface& f : ifs.interfaces) {
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double d = z(i) - f.z;
      double step;
      if (f.sigma > 0.0)
        step = 0.5 * std::erfc(-d / (std::numbers::sqrt2 * f.sigma));
      else
        step = d > 0.0 ? 1.0 : (d < 0.0 ? 0.0 : 0.5);
      rho(i) += f.delta_rho * step;
    }
  }
  return rho;
}

Eigen::ArrayXd kinematical_closed_form(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                       const InterfaceSet& ifs) {
  ifs.validate();
  const auto& f = ifs.interfaces;
  const Eigen::ArrayXd q2 = q.square();
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(q.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    out += f[i].delta_rho * f[i].delta_rho * (-q2 * f[i].sigma * f[i].sigma).exp();
    for (std::size_t j = 0; j < i; ++j) {
      const double amp = 2.0 * f[i].delta_rho * f[j].delta_rho;
      const double s2 = 0.5 * (f[i].sigma * f[i].sigma + f[j].sigma * f[j].sigma);
      out += amp * (-q2 * s2).exp() * (q * (f[i].z - f[j].z)).cos();
    }
  }
  return out;
}

NumericKinematics kinematical_numeric(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                      const InterfaceSet& ifs, double z_step) {
  ifs.validate();
  NumericKinematics result;
  result.intensity = Eigen::ArrayXd::Zero(q.size());
  if (ifs.interfaces.empty()) return result;

  double sigma_min = std::numeric_limits<double>::infinity();
  double sigma_max = 0.0;
  for (const Interface& f : ifs.interfaces) {
    if (f.sigma > 0.0) sigma_min = std::min(sigma_min, f.sigma);
    sigma_max = std::max(sigma_max, f.sigma);
  }
  const bool any_sharp = std::any_of(ifs.interfaces.begin(), ifs.interfaces.end(),
                                     [](const Interface& f) { return f.sigma == 0.0; });
  if (z_step <= 0.0) z_step = std::isfinite(sigma_min) ? std::min(0.25 * sigma_min, 0.25) : 0.01;
  result.z_step = z_step;
  result.coarse_grid = any_sharp || z_step > 0.5 * sigma_min;

  const double margin = 10.0 * sigma_max + 10.0 * z_step;
  const double z0 = ifs.interfaces.front().z - margin;
  const double z1 = ifs.interfaces.back().z + margin;
  const auto n = static_cast<Eigen::Index>(std::ceil((z1 - z0) / z_step)) + 1;
  const Eigen::ArrayXd z = z0 + z_step * Eigen::ArrayXd::LinSpaced(n, 0.0, double(n - 1));
  const Eigen::ArrayXd rho = box_sld_profile(z, ifs);
  const Eigen::ArrayXd drho = rho.tail(n - 1) - rho.head(n - 1);

  // Midpoint Stieltjes sum of exp(i q z) d rho; phases advanced by rotation, resynced periodically.
  for (Eigen::Index iq = 0; iq < q.size(); ++iq) {
    const double qi = q(iq);
    const Complex rot = std::polar(1.0, qi * z_step);
    Complex amp(0.0, 0.0);
    Complex phase;
    for (Eigen::Index k = 0; k < n - 1; ++k) {
      if (k % 512 == 0) phase = std::polar(1.0, qi * (z0 + (double(k) + 0.5) * z_step));
      amp += drho(k) * phase;
      phase *= rot;
    }
    result.intensity(iq) = std::norm(amp);
  }
  return result;
}

InterfaceSet mirror_interfaces(const InterfaceSet& ifs) {
  ifs.validate();
  InterfaceSet out = ifs;
  if (ifs.interfaces.empty()) return out;
  const double pivot = ifs.interfaces.front().z + ifs.interfaces.back().z;
  for (Interface& f : out.interfaces) f.z = pivot - f.z;
  std::sort(out.interfaces.begin(), out.interfaces.end(),
            [](const Interface& a, const Interface& b) { return a.z < b.z; });
  return out;
}

}  // namespace reflprior
