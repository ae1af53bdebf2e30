#pragma once

#include <map>
#include <string>
#include <vector>

#include "segpipe/volume.hpp"

namespace segpipe {

/// Per-model region outputs: one probability field per evaluation region
/// (ET, TC, WT), all on the same grid, values in [0,1] after activation.
struct RegionProbabilityMaps {
  VoxelGrid et;
  VoxelGrid tc;
  VoxelGrid wt;
  std::string model_name;

  void check_geometry() const;
};

/// Nonnegative per-model weights, normalized to sum 1 on construction.
class EnsembleWeights {
 public:
  explicit EnsembleWeights(std::map<std::string, double> weights);

  const std::map<std::string, double>& weights() const { return weights_; }
  double weight_for(const std::string& model) const;

 private:
  std::map<std::string, double> weights_;
};

/// Elementwise logistic sigmoid when any value falls outside [0,1];
/// identity when the input is already a probability field. NaN is rejected.
VoxelGrid activate(const VoxelGrid& raw);

RegionProbabilityMaps activate(const RegionProbabilityMaps& raw);

/// Voxelwise convex combination per region channel.
RegionProbabilityMaps ensemble(const std::vector<RegionProbabilityMaps>& maps, const EnsembleWeights& weights);

/// Threshold per region channel (probability >= threshold) then the
/// hierarchical label decode.
LabelVolume decode(const RegionProbabilityMaps& probs, double threshold = 0.5);

}  // namespace segpipe
