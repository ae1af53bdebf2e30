#pragma once

#include <array>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "segpipe/radiomics.hpp"
#include "segpipe/volume.hpp"

/// Helpers shared by the radiomics translation units; not part of the public
/// interface.
namespace segpipe::detail {

/// Image and mask cropped to the mask bounding box. All feature entry points
/// go through this, which is what makes features bit-identical under
/// whole-voxel translation: the cropped buffers are byte-identical.
struct CroppedPair {
  VoxelGrid image;
  BinaryMask mask;
};

CroppedPair crop_to_mask(const VoxelGrid& image, const BinaryMask& mask);
BinaryMask crop_to_mask(const BinaryMask& mask);

/// The 13 unique 3D directions at Chebyshev distance 1 (one of each +/- pair),
/// in a fixed documented order.
const std::vector<std::array<int, 3>>& texture_directions();

/// Inclusive-method percentile on an ascending-sorted vector:
/// h = (n-1)q, linear interpolation between the two bracketing order
/// statistics.
double sorted_percentile(const std::vector<double>& sorted, double q);

/// Emits every marching-cubes triangle of the mask surface in physical
/// coordinates (midpoint interpolation, one implicit layer of background
/// padding so the mesh always closes).
void march_mask(const BinaryMask& mask, const Eigen::Vector3d& spacing,
                const std::function<void(const Eigen::Vector3d&, const Eigen::Vector3d&,
                                         const Eigen::Vector3d&)>& emit);

}  // namespace segpipe::detail
