#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "reflprior/error.hpp"
#include "reflprior/parameterization.hpp"
#include "reflprior/priors.hpp"

using namespace reflprior;

namespace {

Eigen::VectorXd multilayer_base() {
  Eigen::VectorXd t(ml::count);
  t(ml::monolayer_thickness) = 16.0;
  t(ml::monolayer_roughness_rel) = 0.1;
  t(ml::box1_sld) = 8.0;
  t(ml::box2_minus_box1_sld) = 6.0;
  t(ml::box1_fraction) = 0.5;
  t(ml::si_roughness) = 2.0;
  t(ml::si_sld) = 20.0;
  t(ml::sio2_thickness) = 5.0;
  t(ml::sio2_roughness) = 2.0;
  t(ml::sio2_sld) = 18.0;
  t(ml::phase_sld) = 10.0;
  t(ml::phase_thickness_rel) = 0.3;
  t(ml::phase_roughness_rel) = 0.1;
  t(ml::sigmoid1_position_rel) = 10.0;
  t(ml::sigmoid1_width_rel) = 0.2;
  t(ml::sigmoid2_position_rel) = 10.0;
  t(ml::sigmoid2_width_rel) = 0.1;
  return t;
}

// Position of the largest maximum of R q^4 inside [lo, hi].
double peak_position(const Eigen::ArrayXd& q, const Eigen::ArrayXd& r, double lo, double hi) {
  double best = -1.0;
  double at = 0.0;
  for (Eigen::Index i = 1; i + 1 < q.size(); ++i) {
    if (q(i) < lo || q(i) > hi) continue;
    const double v = r(i) * std::pow(q(i), 4);
    if (v > best && r(i) >= r(i - 1) && r(i) >= r(i + 1)) {
      best = v;
      at = q(i);
    }
  }
  return at;
}

}  // namespace

TEST_CASE("box presets have the documented layout") {
  const ModelSpec two = two_layer_spec();
  CHECK(two.n_params() == 8);
  CHECK(two.descriptors[0].name == "thickness_1");
  CHECK(two.descriptors[1].name == "roughness_1");
  CHECK(two.descriptors[2].name == "sld_1");
  CHECK(two.descriptors[6].name == "substrate_roughness");
  CHECK(two.descriptors[7].name == "substrate_sld");
  CHECK(two.descriptors[0].global_max == 500.0);
  CHECK(two.descriptors[1].global_max == 60.0);
  CHECK(two.descriptors[2].global_min == -25.0);
  CHECK(two.descriptors[2].global_max == 25.0);
  CHECK(five_layer_spec().n_params() == 17);
  CHECK(multilayer_spec().n_params() == 17);
  CHECK(two_layer_fno_spec().descriptors[0].global_max == 300.0);
  for (const auto& name : preset_names()) CHECK_NOTHROW(preset_spec(name).validate());
  CHECK_THROWS_AS(preset_spec("box3"), InvalidInput);
}

TEST_CASE("box vector maps directly onto slabs") {
  const ModelSpec spec = two_layer_spec();
  Eigen::VectorXd t(8);
  t << 100, 5, 3, 200, 10, -4, 2, 20;
  const SlabStack s = box_to_stack(t, spec);
  REQUIRE(s.slabs.size() == 2);
  CHECK(s.slabs[0].thickness == 100);
  CHECK(s.slabs[0].roughness == 5);
  CHECK(s.slabs[0].sld == 3);
  CHECK(s.slabs[1].thickness == 200);
  CHECK(s.slabs[1].roughness == 10);
  CHECK(s.slabs[1].sld == -4);
  CHECK(s.substrate_roughness == 2);
  CHECK(s.substrate_sld == 20);
  CHECK((stack_to_box(s) - t).norm() == 0.0);
}

TEST_CASE("box round trip is exact at random points and extremes") {
  Rng rng = derive_rng(21, 0);
  for (const ModelSpec& spec : {two_layer_spec(), five_layer_spec()}) {
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd t(spec.n_params());
      for (Eigen::Index j = 0; j < t.size(); ++j) {
        const auto& d = spec.descriptors[std::size_t(j)];
        t(j) = trial == 0 ? d.global_min
                          : (trial == 1 ? d.global_max : uniform(rng, d.global_min, d.global_max));
      }
      CHECK((stack_to_box(box_to_stack(t, spec)) - t).norm() == 0.0);
    }
  }
}

TEST_CASE("out-of-range parameters are named") {
  const ModelSpec spec = two_layer_spec();
  Eigen::VectorXd t(8);
  t << 600, 5, 3, 200, -1, -4, 2, 20;
  try {
    box_to_stack(t, spec);
    FAIL("expected a range violation");
  } catch (const RangeViolation& e) {
    REQUIRE(e.fields().size() == 2);
    CHECK(e.fields()[0] == "thickness_1");
    CHECK(e.fields()[1] == "roughness_2");
  }
  CHECK_THROWS_AS(box_to_stack(Eigen::VectorXd::Zero(7), spec), InvalidInput);
}

TEST_CASE("multilayer table ranges") {
  const ModelSpec spec = multilayer_spec();
  CHECK(spec.descriptors[ml::monolayer_thickness].global_min == 10);
  CHECK(spec.descriptors[ml::monolayer_thickness].global_max == 20);
  CHECK(spec.descriptors[ml::si_sld].global_min == 19);
  CHECK(spec.descriptors[ml::si_sld].global_max == 21);
  CHECK(spec.descriptors[ml::sigmoid1_position_rel].global_max == 25);
  CHECK(spec.descriptors[ml::sigmoid2_position_rel].global_min == -10);
  CHECK(spec.descriptors[ml::phase_sld].global_max == 25);
}

TEST_CASE("multilayer profile reaches ambient and substrate") {
  const ModelSpec spec = multilayer_spec();
  const ContinuousProfile p = multilayer_to_profile(multilayer_base(), spec);
  CHECK(p.z_step() == doctest::Approx(0.5));
  CHECK(std::abs(p.rho(0) - 0.0) < 1e-6);
  CHECK(std::abs(p.rho(p.rho.size() - 1) - 20.0) < 1e-6);
  CHECK(p.rho.allFinite());
  // Total film extent follows the first sigmoid: 10 periods of 16 A above the base.
  Eigen::Index first = 0;
  while (first < p.rho.size() && p.rho(first) < 4.0) ++first;
  const double base_depth = p.z(p.z.size() - 1) - (6.0 * 2.0 + 20.0) - 5.0 - 0.3 * 16.0;
  CHECK(base_depth - p.z(first) == doctest::Approx(160.0).epsilon(0.05));
}

TEST_CASE("zero box contrast hides the periodicity") {
  const ModelSpec spec = multilayer_spec();
  Eigen::VectorXd t = multilayer_base();
  t(ml::box2_minus_box1_sld) = 0.0;
  t(ml::sigmoid1_width_rel) = 0.05;
  const ContinuousProfile p = multilayer_to_profile(t, spec);
  // Interior of the film: one constant level.
  const Eigen::Index mid = p.rho.size() / 2;
  CHECK((p.rho.segment(mid - 40, 80) - 8.0).abs().maxCoeff() < 1e-9);
  const Eigen::ArrayXd q = Eigen::ArrayXd::LinSpaced(800, 0.02, 0.7);
  const Eigen::ArrayXd r = abeles_reflectivity(q, to_stack(t, spec));
  // No Bragg bump: the Porod-normalized tail does not rise near 2 pi / 16.
  const Eigen::ArrayXd rq4 = r * q.pow(4);
  double near_bragg = 0.0, before = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (std::abs(q(i) - 0.3927) < 0.02) near_bragg = std::max(near_bragg, rq4(i));
    if (std::abs(q(i) - 0.30) < 0.02) before = std::max(before, rq4(i));
  }
  CHECK(near_bragg < before);
}

TEST_CASE("Bragg peak sits at 2 pi / period") {
  const ModelSpec spec = multilayer_spec();
  const Eigen::ArrayXd q = Eigen::ArrayXd::LinSpaced(3000, 0.02, 0.8);
  const Eigen::VectorXd t = multilayer_base();
  const Eigen::ArrayXd r = abeles_reflectivity(q, to_stack(t, spec));
  const double expected = 2.0 * std::numbers::pi / 16.0;
  CHECK(peak_position(q, r, 0.7 * expected, 1.3 * expected) ==
        doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("Bragg peak over random draws") {
  const ModelSpec spec = multilayer_spec();
  Rng rng = derive_rng(22, 0);
  const Eigen::ArrayXd q = Eigen::ArrayXd::LinSpaced(4000, 0.02, 0.8);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd t(ml::count);
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      const auto& d = spec.descriptors[std::size_t(j)];
      t(j) = uniform(rng, d.global_min, d.global_max);
    }
    // Open sigmoids and a visible box contrast.
    t(ml::sigmoid1_position_rel) = uniform(rng, 10.0, 25.0);
    t(ml::sigmoid1_width_rel) = uniform(rng, 0.0, 1.0);
    t(ml::sigmoid2_position_rel) = 10.0;
    t(ml::sigmoid2_width_rel) = uniform(rng, 0.0, 1.0);
    t(ml::monolayer_roughness_rel) = uniform(rng, 0.0, 0.15);
    t(ml::box1_fraction) = uniform(rng, 0.3, 0.7);
    t(ml::box2_minus_box1_sld) = (trial % 2 ? 1.0 : -1.0) * uniform(rng, 3.0, 10.0);
    t(ml::box1_sld) = std::clamp(t(ml::box1_sld), 10.0, 20.0);
    const Eigen::ArrayXd r = abeles_reflectivity(q, to_stack(t, spec));
    const double expected = 2.0 * std::numbers::pi / t(ml::monolayer_thickness);
    CAPTURE(trial);
    CHECK(peak_position(q, r, 0.85 * expected, 1.15 * expected) ==
          doctest::Approx(expected).epsilon(0.05));
  }
}

TEST_CASE("film interior is periodic with open sigmoids") {
  const ModelSpec spec = multilayer_spec();
  Eigen::VectorXd t = multilayer_base();
  t(ml::phase_thickness_rel) = 0.0;
  t(ml::phase_roughness_rel) = 0.0;
  t(ml::sigmoid1_position_rel) = 25.0;
  t(ml::sigmoid1_width_rel) = 0.02;
  t(ml::sigmoid2_position_rel) = 10.0;
  t(ml::monolayer_thickness) = 16.0;  // 32 grid steps per period
  const ContinuousProfile p = multilayer_to_profile(t, spec, 0.5);
  const Eigen::Index per = 32;
  const Eigen::Index n = p.rho.size();
  // Interior: away from the top envelope and the substrate stack.
  const Eigen::Index lo = 160, hi = n - 200;
  REQUIRE(hi - lo > 4 * per);
  const double dev = (p.rho.segment(lo + per, hi - lo - per) - p.rho.segment(lo, hi - lo - per))
                         .abs()
                         .maxCoeff();
  CHECK(dev < 1e-9);
}

TEST_CASE("profile is continuous in every parameter") {
  const ModelSpec spec = multilayer_spec();
  const Eigen::VectorXd t = multilayer_base();
  const ContinuousProfile ref = multilayer_to_profile(t, spec);
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    double previous = 0.0;
    for (double eps : {1e-4, 1e-5}) {
      Eigen::VectorXd u = t;
      u(j) += eps;
      ContinuousProfile p = multilayer_to_profile(u, spec);
      const Eigen::Index n = std::min(p.rho.size(), ref.rho.size());
      // Compare on the shared depth grid measured from the substrate end.
      const double change =
          (p.rho.tail(n) - ref.rho.tail(n)).abs().maxCoeff();
      CAPTURE(j);
      if (eps == 1e-5) CHECK(change <= previous * 0.2 + 1e-10);
      previous = change;
    }
  }
}

TEST_CASE("slicing a constant profile gives a single-level stack") {
  ContinuousProfile p;
  p.z = Eigen::ArrayXd::LinSpaced(201, 0.0, 100.0);
  p.rho = Eigen::ArrayXd::Constant(201, 6.0);
  p.ambient_sld = 0.0;
  p.substrate_sld = 6.0;
  const SlabStack s = profile_to_stack(p, 0.5);
  for (const auto& slab : s.slabs) CHECK(slab.sld == doctest::Approx(6.0));
  SlabStack bare;
  bare.substrate_sld = 6.0;
  const Eigen::ArrayXd q = Eigen::ArrayXd::LinSpaced(200, 0.01, 0.4);
  CHECK(testing::max_rel_dev(abeles_reflectivity(q, s), abeles_reflectivity(q, bare)) < 1e-9);
}

TEST_CASE("sliced box profile reproduces the box stack") {
  const ModelSpec spec = two_layer_spec();
  Eigen::VectorXd t(8);
  t << 80, 3, 6, 140, 4, 12, 3, 20.1;
  const ContinuousProfile p = sld_profile(t, spec, 0.05);
  const Eigen::ArrayXd q = Eigen::ArrayXd::LinSpaced(300, 0.01, 0.4);
  const Eigen::ArrayXd direct = abeles_reflectivity(q, box_to_stack(t, spec));
  const Eigen::ArrayXd sliced = abeles_reflectivity(q, profile_to_stack(p, 0.05));
  // Pointwise on log scale: a fringe minimum may be slightly displaced.
  CHECK((direct.log10() - sliced.log10()).abs().mean() < 0.01);
}

TEST_CASE("slicing converges at least linearly") {
  const ModelSpec spec = two_layer_spec();
  Eigen::VectorXd t(8);
  t << 80, 3, 6, 140, 4, 12, 3, 20.1;
  const Eigen::ArrayXd q = Eigen::ArrayXd::LinSpaced(200, 0.01, 0.3);
  const ContinuousProfile p = sld_profile(t, spec, 0.125);
  const Eigen::ArrayXd r1 = abeles_reflectivity(q, profile_to_stack(p, 0.5));
  const Eigen::ArrayXd r2 = abeles_reflectivity(q, profile_to_stack(p, 0.25));
  const Eigen::ArrayXd r4 = abeles_reflectivity(q, profile_to_stack(p, 0.125));
  const double d1 = testing::max_rel_dev(r1, r2);
  const double d2 = testing::max_rel_dev(r2, r4);
  CHECK(d2 <= 0.5 * d1 + 1e-12);
  CHECK(d2 < 0.002);
}

TEST_CASE("slab thickness is validated") {
  ContinuousProfile p;
  p.z = Eigen::ArrayXd::LinSpaced(11, 0.0, 5.0);
  p.rho = Eigen::ArrayXd::Zero(11);
  CHECK_THROWS_AS(profile_to_stack(p, 0.0), InvalidInput);
  CHECK_THROWS_AS(profile_to_stack(p, 3.0), InvalidInput);
}

TEST_CASE("impossible multilayer geometry is rejected") {
  const ModelSpec spec = multilayer_spec();
  Eigen::VectorXd t = multilayer_base();
  t(ml::monolayer_thickness) = -1.0;
  CHECK_THROWS_AS(multilayer_to_profile(t, spec), InvalidInput);
}
