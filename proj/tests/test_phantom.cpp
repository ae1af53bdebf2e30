#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "helpers.hpp"
#include "segpipe/phantom.hpp"

using namespace segpipe;
using namespace segpipe::testing;

TEST_SUITE_BEGIN("phantom");

TEST_CASE("generation is a pure function of spec and seed") {
  PhantomSpec spec;
  spec.dims = {32, 32, 32};
  spec.seed = 91;
  const CaseBundle a = generate_phantom(spec);
  const CaseBundle b = generate_phantom(spec);
  REQUIRE(a.labels.has_value());
  REQUIRE(b.labels.has_value());
  CHECK(*a.labels == *b.labels);
  CHECK(a.t1.data() == b.t1.data());
  CHECK(a.t1ce.data() == b.t1ce.data());
  CHECK(a.t2.data() == b.t2.data());
  CHECK(a.flair.data() == b.flair.data());

  spec.seed = 92;
  const CaseBundle c = generate_phantom(spec);
  CHECK(a.t1.data() != c.t1.data());

  const RegionProbabilityMaps p1 = phantom_prob_maps(*a.labels, 1.0, 0.1, 7);
  const RegionProbabilityMaps p2 = phantom_prob_maps(*a.labels, 1.0, 0.1, 7);
  CHECK(p1.et.data() == p2.et.data());
  CHECK(p1.tc.data() == p2.tc.data());
  CHECK(p1.wt.data() == p2.wt.data());
  const RegionProbabilityMaps p3 = phantom_prob_maps(*a.labels, 1.0, 0.1, 8);
  CHECK(p1.et.data() != p3.et.data());
}

TEST_CASE("spec validation") {
  PhantomSpec ok;
  CHECK_NOTHROW(ok.validate());

  PhantomSpec s;
  s.min_lesions = -1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = PhantomSpec{};
  s.min_lesions = 5;
  s.max_lesions = 2;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = PhantomSpec{};
  s.min_radius_mm = 8.0;
  s.max_radius_mm = 4.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = PhantomSpec{};
  s.et_fraction = 0.7;
  s.ncr_fraction = 0.5;  // fractions exceed 1
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = PhantomSpec{};
  s.dims = {0, 4, 4};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = PhantomSpec{};
  s.spacing = {1.0, -1.0, 1.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = PhantomSpec{};
  s.noise_sigma = -0.5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("lesion count bounds are honored") {
  PhantomSpec spec;
  spec.dims = {40, 40, 40};
  spec.min_lesions = 0;
  spec.max_lesions = 0;
  spec.seed = 4;
  const CaseBundle empty = generate_phantom(spec);
  REQUIRE(empty.labels.has_value());
  CHECK(count_foreground(mask_of_label(*empty.labels, 1)) == 0);
  CHECK(count_foreground(mask_of_label(*empty.labels, 2)) == 0);
  CHECK(count_foreground(mask_of_label(*empty.labels, 3)) == 0);

  // A lesion that cannot fit into the volume is an error, not silent clipping.
  PhantomSpec tight;
  tight.dims = {20, 20, 20};
  tight.min_radius_mm = 30.0;
  tight.max_radius_mm = 30.0;
  CHECK_THROWS_AS(generate_phantom(tight), std::invalid_argument);
}

TEST_CASE("single-lesion geometry matches the analytic ball") {
  PhantomSpec spec;
  spec.dims = {40, 40, 40};
  spec.min_lesions = 1;
  spec.max_lesions = 1;
  spec.min_radius_mm = 10.0;
  spec.max_radius_mm = 10.0;
  spec.seed = 13;
  const CaseBundle bundle = generate_phantom(spec);
  REQUIRE(bundle.labels.has_value());
  const LabelVolume& labels = *bundle.labels;

  const auto regions = regions_from_labels(labels);
  const double wt = static_cast<double>(count_foreground(regions.wt));
  const double et = static_cast<double>(count_foreground(regions.et));
  const double ideal = 4.0 / 3.0 * M_PI * 1000.0;
  CHECK(std::abs(wt - ideal) / ideal < 0.10);
  CHECK(std::abs(et / wt - spec.et_fraction) < 0.08);

  // Sequences carry signal: nonconstant, finite everywhere.
  for (const char* seq : kSequenceNames) {
    const VoxelGrid& img = bundle.sequence(seq);
    float lo = img[0], hi = img[0];
    for (std::size_t i = 0; i < img.size(); ++i) {
      REQUIRE(std::isfinite(img[i]));
      lo = std::min(lo, img[i]);
      hi = std::max(hi, img[i]);
    }
    CHECK(hi > lo);
  }
}

TEST_CASE("probability maps stay in range and honor zero corruption") {
  PhantomSpec spec;
  spec.dims = {24, 24, 24};
  spec.seed = 5;
  const CaseBundle bundle = generate_phantom(spec);
  REQUIRE(bundle.labels.has_value());

  const RegionProbabilityMaps noisy = phantom_prob_maps(*bundle.labels, 1.5, 0.3, 11);
  for (const VoxelGrid* g : {&noisy.et, &noisy.tc, &noisy.wt})
    for (std::size_t i = 0; i < g->size(); ++i) {
      REQUIRE((*g)[i] >= 0.0f);
      REQUIRE((*g)[i] <= 1.0f);
    }

  // No blur, no corruption: exact one-hot encodings of the regions.
  const RegionProbabilityMaps clean = phantom_prob_maps(*bundle.labels, 0.0, 0.0, 11);
  const auto regions = regions_from_labels(*bundle.labels);
  for (std::size_t i = 0; i < clean.et.size(); ++i) {
    CHECK(clean.et[i] == (regions.et[i] ? 1.0f : 0.0f));
    CHECK(clean.tc[i] == (regions.tc[i] ? 1.0f : 0.0f));
    CHECK(clean.wt[i] == (regions.wt[i] ? 1.0f : 0.0f));
  }
}

TEST_CASE("gaussian blur conventions") {
  const Geometry geo = make_geometry({9, 9, 9});
  VoxelGrid delta(geo, 0.0f);
  delta.at(4, 4, 4) = 1.0f;

  // sigma <= 0 is the identity.
  CHECK(gaussian_blur(delta, 0.0).data() == delta.data());
  CHECK(gaussian_blur(delta, -2.0).data() == delta.data());

  const VoxelGrid blurred = gaussian_blur(delta, 1.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < blurred.size(); ++i) mass += blurred[i];
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));  // kernel fits, normalized

  // Symmetry about the impulse.
  CHECK(blurred.at(3, 4, 4) == blurred.at(5, 4, 4));
  CHECK(blurred.at(4, 2, 4) == blurred.at(4, 6, 4));
  CHECK(blurred.at(4, 4, 1) == blurred.at(4, 4, 7));
  CHECK(blurred.at(4, 4, 4) > blurred.at(3, 4, 4));

  // Zero padding loses mass at the border.
  VoxelGrid corner(geo, 0.0f);
  corner.at(0, 0, 0) = 1.0f;
  const VoxelGrid cb = gaussian_blur(corner, 1.0);
  double corner_mass = 0.0;
  for (std::size_t i = 0; i < cb.size(); ++i) corner_mass += cb[i];
  CHECK(corner_mass < 1.0);
}

TEST_SUITE_END();
