#pragma once

#include <cstdint>

#include "segpipe/case_io.hpp"
#include "segpipe/ensemble.hpp"
#include "segpipe/volume.hpp"

/// Synthetic multi-sequence cases for pipeline exercises: a handful of
/// axis-aligned ellipsoidal lesions with an enhancing core, a necrotic shell
/// and an edema rim, rendered into four sequences with per-class contrasts
/// plus noise. Probability maps come from the true labels, blurred and
/// corrupted, so imperfect model outputs can be simulated per model from one
/// shared anatomy. Everything is a pure function of the spec and seed.
namespace segpipe {

struct PhantomSpec {
  std::array<int, 3> dims{48, 48, 48};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  int min_lesions = 1;
  int max_lesions = 3;
  double min_radius_mm = 4.0;
  double max_radius_mm = 10.0;
  /// Volume fractions of the lesion taken by enhancing core and necrotic
  /// shell; the remainder is edema. The shell radii follow from the cube
  /// roots so the fractions hold exactly for an ideal ellipsoid.
  double et_fraction = 0.3;
  double ncr_fraction = 0.3;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Images plus ground truth for one case. Probability maps are not filled
/// here; see phantom_prob_maps.
CaseBundle generate_phantom(const PhantomSpec& spec);

/// Region one-hots of the labels, Gaussian-blurred (sigma in voxels) and
/// perturbed by uniform noise of the given amplitude, clamped back to [0, 1].
/// Different seeds simulate different models of one case.
RegionProbabilityMaps phantom_prob_maps(const LabelVolume& labels, double blur_sigma,
                                        double corruption, std::uint64_t seed);

/// Separable Gaussian blur with a 3-sigma kernel and zero padding; sigma <= 0
/// returns the input unchanged.
VoxelGrid gaussian_blur(const VoxelGrid& grid, double sigma_voxels);

}  // namespace segpipe
