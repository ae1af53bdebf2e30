#pragma once

#include <array>
#include <cstdint>

#include "segpipe/rng.hpp"
#include "segpipe/volume.hpp"

/// Shared fixture builders. All randomness flows through segpipe::Rng so
/// every test is reproducible from its literal seed.
namespace segpipe::testing {

inline Geometry make_geometry(std::array<int, 3> dims,
                              std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  Geometry geo;
  geo.dims = dims;
  geo.spacing = Eigen::Vector3d(spacing[0], spacing[1], spacing[2]);
  geo.affine = Eigen::Matrix4d::Identity();
  for (int d = 0; d < 3; ++d) geo.affine(d, d) = spacing[d];
  return geo;
}

/// Random mask with roughly the given foreground probability.
inline BinaryMask random_mask(Rng& rng, std::array<int, 3> dims, double fg_prob,
                              std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  BinaryMask mask(make_geometry(dims, spacing), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform01() < fg_prob ? 1 : 0;
  return mask;
}

/// Random labels in {0..3} with independent per-voxel class probabilities.
inline LabelVolume random_labels(Rng& rng, std::array<int, 3> dims, double fg_prob,
                                 std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  Volume<std::uint8_t> vol(make_geometry(dims, spacing), 0);
  for (std::size_t i = 0; i < vol.size(); ++i)
    if (rng.uniform01() < fg_prob) vol[i] = static_cast<std::uint8_t>(1 + rng.below(3));
  return LabelVolume(std::move(vol));
}

/// Random image with integer-ish values in [0, levels) so discretization
/// produces a controlled number of gray levels.
inline VoxelGrid random_image(Rng& rng, const Geometry& geo, int levels, double bin_width) {
  VoxelGrid img(geo, 0.0f);
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<float>(bin_width * static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) +
                                bin_width * 0.5 * rng.uniform01());
  return img;
}

/// Solid digital ball; the workhorse for analytic shape checks.
inline BinaryMask ball_mask(std::array<int, 3> dims, std::array<double, 3> center_vox,
                            double radius_mm, std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  BinaryMask mask(make_geometry(dims, spacing), 0);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        const double dx = (i - center_vox[0]) * spacing[0];
        const double dy = (j - center_vox[1]) * spacing[1];
        const double dz = (k - center_vox[2]) * spacing[2];
        if (dx * dx + dy * dy + dz * dz <= radius_mm * radius_mm)
          mask[mask.linear(i, j, k)] = 1;
      }
  return mask;
}

/// Axis-aligned box of foreground.
inline BinaryMask box_mask(std::array<int, 3> dims, std::array<int, 3> lo, std::array<int, 3> hi,
                           std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  BinaryMask mask(make_geometry(dims, spacing), 0);
  for (int k = lo[2]; k <= hi[2]; ++k)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int i = lo[0]; i <= hi[0]; ++i) mask[mask.linear(i, j, k)] = 1;
  return mask;
}

}  // namespace segpipe::testing
