#pragma once

#include <cstdint>
#include <vector>

#include "segpipe/volume.hpp"

namespace segpipe {

/// Connected-component labeling of a binary mask. Component ids are
/// contiguous 1..n, assigned by ascending minimum linear voxel index, so the
/// labeling is deterministic for a given mask and connectivity.
struct ComponentLabeling {
  Volume<std::int32_t> labels;       // 0 background, 1..n component ids
  std::vector<std::int64_t> sizes;   // sizes[i] = voxel count of component i+1
  Connectivity connectivity = Connectivity::corners26;

  int count() const { return static_cast<int>(sizes.size()); }
};

/// Two-pass union-find labeling.
ComponentLabeling connected_components(const BinaryMask& mask, Connectivity conn);

/// Component mask for a single id (1-based).
BinaryMask component_mask(const ComponentLabeling& cl, int id);

/// Clears components smaller than min_voxels; min_voxels == 0 is the
/// identity.
BinaryMask remove_small_components(const BinaryMask& mask, std::int64_t min_voxels, Connectivity conn);

/// Iterated morphological dilation: radius iterations with the structuring
/// element implied by the connectivity (6: cross, 26: full 3x3x3 box).
BinaryMask dilate(const BinaryMask& mask, int radius_voxels, Connectivity conn);

}  // namespace segpipe
