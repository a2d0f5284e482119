#pragma once

// Physical models: flat parameter vectors to slab stacks and SLD profiles.

#include <string>
#include <vector>

#include <Eigen/Core>

#include "reflprior/physics.hpp"

namespace reflprior {

enum class ParamKind { thickness, roughness, sld, dimensionless };

const char* to_string(ParamKind kind);
ParamKind param_kind_from_string(const std::string& s);

struct ParamDescriptor {
  std::string name;
  std::string unit;
  ParamKind kind = ParamKind::dimensionless;
  double global_min = 0.0;
  double global_max = 1.0;
  double width_min = 0.0;  // range of sampled prior-bound widths
  double width_max = 1.0;

  void validate() const;
};

enum class ModelKind { box, multilayer };

struct ModelSpec {
  std::string name;
  ModelKind kind = ModelKind::box;
  int n_layers = 0;  // box models only
  double ambient_sld = 0.0;
  std::vector<ParamDescriptor> descriptors;

  Eigen::Index n_params() const { return static_cast<Eigen::Index>(descriptors.size()); }
  Eigen::Index index_of(const std::string& param_name) const;
  Eigen::VectorXd global_min() const;
  Eigen::VectorXd global_max() const;
  Eigen::VectorXd width_min() const;
  Eigen::VectorXd width_max() const;

  void validate() const;
};

struct BoxRanges {
  double thickness_max = 500.0;
  double roughness_max = 60.0;
  double sld_min = -25.0;
  double sld_max = 25.0;
  double thickness_width_max = 500.0;
  double roughness_width_max = 60.0;
  double sld_width_max = 4.0;
  double width_min = 0.01;
};

// Parameter order: per layer (top first) thickness, roughness, sld; then substrate roughness, sld.
ModelSpec box_model_spec(int n_layers, const BoxRanges& ranges, const std::string& name);

ModelSpec two_layer_spec();      // d in [0,500], sigma in [0,60], rho in [-25,25]
ModelSpec five_layer_spec();     // d in [0,300], sigma in [0,60], rho in [0,25]
ModelSpec two_layer_fno_spec();  // d in [0,300], sigma in [0,60], rho in [0,25]
ModelSpec multilayer_spec();     // 17-parameter periodic monolayer film on Si/SiO2

// "box2", "box5", "box2_fno", "multilayer".
ModelSpec preset_spec(const std::string& name);
std::vector<std::string> preset_names();

// Throws RangeViolation naming every parameter outside its global range.
void check_ranges(const Eigen::Ref<const Eigen::VectorXd>& theta, const ModelSpec& spec);

SlabStack box_to_stack(const Eigen::Ref<const Eigen::VectorXd>& theta, const ModelSpec& spec);
Eigen::VectorXd stack_to_box(const SlabStack& stack);

struct ContinuousProfile {
  Eigen::ArrayXd z;  // uniform, increasing into the substrate
  Eigen::ArrayXd rho;
  double ambient_sld = 0.0;
  double substrate_sld = 0.0;

  double z_step() const { return z.size() > 1 ? z(1) - z(0) : 0.0; }
};

// Named indices into the multilayer parameter vector.
namespace ml {
enum : Eigen::Index {
  monolayer_thickness,
  monolayer_roughness_rel,
  box1_sld,
  box2_minus_box1_sld,
  box1_fraction,
  si_roughness,
  si_sld,
  sio2_thickness,
  sio2_roughness,
  sio2_sld,
  phase_sld,
  phase_thickness_rel,
  phase_roughness_rel,
  sigmoid1_position_rel,
  sigmoid1_width_rel,
  sigmoid2_position_rel,
  sigmoid2_width_rel,
  count
};
}  // namespace ml

ContinuousProfile multilayer_to_profile(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                        const ModelSpec& spec, double z_step = 0.5);

// Uniform zero-roughness micro-slabs; each slab carries the mean of rho over its extent.
SlabStack profile_to_stack(const ContinuousProfile& profile, double slab_thickness = 0.5);

// Any model: box parameters map directly, multilayer goes through the sliced profile.
SlabStack to_stack(const Eigen::Ref<const Eigen::VectorXd>& theta, const ModelSpec& spec);

// SLD profile for display; box models use the erf interface sum.
ContinuousProfile sld_profile(const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const ModelSpec& spec, double z_step = 0.5);

}  // namespace reflprior
