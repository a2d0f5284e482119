#pragma once

// Specular reflectivity of layered media.
//
// Units throughout: q in 1/Angstrom, lengths in Angstrom, SLD in 1e-6 / Angstrom^2.
// Depth z grows from the ambient side toward the substrate.

#include <span>
#include <vector>

#include <Eigen/Core>

namespace reflprior {

struct Slab {
  double thickness = 0.0;
  double roughness = 0.0;  // of the slab's top interface
  double sld = 0.0;
};

struct SlabStack {
  double ambient_sld = 0.0;
  std::vector<Slab> slabs;  // index 0 is nearest the ambient
  double substrate_sld = 0.0;
  double substrate_roughness = 0.0;

  // Throws InvalidInput on negative or non-finite entries.
  void validate() const;
};

struct Interface {
  double z = 0.0;
  double delta_rho = 0.0;
  double sigma = 0.0;
};

struct InterfaceSet {
  std::vector<Interface> interfaces;  // strictly increasing z
  double ambient_sld = 0.0;
  double substrate_sld = 0.0;

  void validate() const;
};

struct ReflectivityCurve {
  Eigen::ArrayXd q;
  Eigen::ArrayXd intensity;

  Eigen::Index n_points() const { return q.size(); }
  double q_min() const { return q.size() ? q(0) : 0.0; }
  double q_max() const { return q.size() ? q(q.size() - 1) : 0.0; }

  void validate() const;
};

// Critical momentum transfer sqrt(16 pi (rho_s - rho_amb)); 0 without a total reflection edge.
double critical_q(double substrate_sld, double ambient_sld = 0.0);

Eigen::ArrayXd fresnel_reflectivity(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                    double substrate_sld, double ambient_sld = 0.0);

// Transfer-matrix reflectivity with Nevot-Croce roughness.
Eigen::ArrayXd abeles_reflectivity(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                   const SlabStack& stack);

// Batch of stacks on a shared grid; row b equals abeles_reflectivity(q, stacks[b]) bitwise.
Eigen::ArrayXXd abeles_reflectivity(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                    std::span<const SlabStack> stacks);

// Parratt's recursion. Kept as an independent reference for the matrix solver.
Eigen::ArrayXd parratt_reflectivity(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                    const SlabStack& stack);

// Interfaces of a stack; zero-thickness slabs are dropped.
InterfaceSet interfaces_from_stack(const SlabStack& stack);

// Inverse of interfaces_from_stack: first interface becomes the ambient/slab boundary.
SlabStack stack_from_interfaces(const InterfaceSet& ifs);

// rho(z) = rho_amb + sum_i delta_rho_i * (1 + erf((z - z_i) / (sqrt(2) sigma_i))) / 2
Eigen::ArrayXd box_sld_profile(const Eigen::Ref<const Eigen::ArrayXd>& z, const InterfaceSet& ifs);

// |FT(d rho/dz)|^2 in closed form, i.e. R * rho_s^2 / R_F.
Eigen::ArrayXd kinematical_closed_form(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                       const InterfaceSet& ifs);

struct NumericKinematics {
  Eigen::ArrayXd intensity;
  double z_step = 0.0;
  bool coarse_grid = false;  // z_step exceeds half the smallest nonzero roughness
};

// |FT(d rho/dz)|^2 by Stieltjes quadrature of the sampled profile. z_step <= 0 picks
// a step from the smallest roughness.
NumericKinematics kinematical_numeric(const Eigen::Ref<const Eigen::ArrayXd>& q,
                                      const InterfaceSet& ifs, double z_step = 0.0);

// Reflects interface positions about the midpoint of their span.
InterfaceSet mirror_interfaces(const InterfaceSet& ifs);

}  // namespace reflprior
