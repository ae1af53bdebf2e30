#include "segpipe/ensemble.hpp"

#include <algorithm>

#include <cmath>

namespace segpipe {

void RegionProbabilityMaps::check_geometry() const {
  if (!et.geometry().same_grid(tc.geometry()) || !et.geometry().same_grid(wt.geometry()))
    throw std::invalid_argument("RegionProbabilityMaps: region maps differ in geometry (" + model_name + ")");
}

EnsembleWeights::EnsembleWeights(std::map<std::string, double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw std::invalid_argument("EnsembleWeights: no models");
  double sum = 0.0;
  for (const auto& [name, w] : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("EnsembleWeights: weight for '" + name + "' must be nonnegative");
    sum += w;
  }
  if (sum <= 0.0) throw std::invalid_argument("EnsembleWeights: weights sum to zero");
  for (auto& [name, w] : weights_) w /= sum;
}

double EnsembleWeights::weight_for(const std::string& model) const {
  const auto it = weights_.find(model);
  if (it == weights_.end()) throw std::invalid_argument("EnsembleWeights: no weight for model '" + model + "'");
  return it->second;
}

VoxelGrid activate(const VoxelGrid& raw) {
  bool in_unit = true;
  for (float v : raw.data()) {
    if (std::isnan(v)) throw std::invalid_argument("activate: NaN input");
    if (v < 0.0f || v > 1.0f) in_unit = false;
  }
  if (in_unit) return raw;
  VoxelGrid out(raw.geometry());
  const std::size_t n = raw.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(raw[i]))));
  return out;
}

RegionProbabilityMaps activate(const RegionProbabilityMaps& raw) {
  RegionProbabilityMaps out{activate(raw.et), activate(raw.tc), activate(raw.wt), raw.model_name};
  return out;
}

RegionProbabilityMaps ensemble(const std::vector<RegionProbabilityMaps>& maps, const EnsembleWeights& weights) {
  if (maps.empty()) throw std::invalid_argument("ensemble: no model maps");
  for (const auto& m : maps) {
    m.check_geometry();
    if (!m.et.geometry().same_grid(maps.front().et.geometry()))
      throw std::invalid_argument("ensemble: geometry mismatch between models '" + maps.front().model_name +
                                  "' and '" + m.model_name + "'");
  }

  // Accumulate in model-name order so permuting the input list cannot change
  // the floating-point result.
  std::vector<const RegionProbabilityMaps*> ordered;
  ordered.reserve(maps.size());
  for (const auto& m : maps) ordered.push_back(&m);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->model_name < b->model_name; });
  for (std::size_t i = 1; i < ordered.size(); ++i)
    if (ordered[i]->model_name == ordered[i - 1]->model_name)
      throw std::invalid_argument("ensemble: duplicate model name '" + ordered[i]->model_name + "'");

  const Geometry& g = maps.front().et.geometry();
  RegionProbabilityMaps out{VoxelGrid(g), VoxelGrid(g), VoxelGrid(g), "ensemble"};
  const std::size_t n = out.et.size();
  std::vector<double> acc_et(n, 0.0), acc_tc(n, 0.0), acc_wt(n, 0.0);
  for (const auto* mp : ordered) {
    const auto& m = *mp;
    const double w = weights.weight_for(m.model_name);
    for (std::size_t i = 0; i < n; ++i) {
      acc_et[i] += w * m.et[i];
      acc_tc[i] += w * m.tc[i];
      acc_wt[i] += w * m.wt[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.et[i] = static_cast<float>(acc_et[i]);
    out.tc[i] = static_cast<float>(acc_tc[i]);
    out.wt[i] = static_cast<float>(acc_wt[i]);
  }
  return out;
}

LabelVolume decode(const RegionProbabilityMaps& probs, double threshold) {
  probs.check_geometry();
  const Geometry& g = probs.et.geometry();
  RegionMasks masks{BinaryMask(g), BinaryMask(g), BinaryMask(g)};
  const std::size_t n = probs.et.size();
  const float t = static_cast<float>(threshold);
  for (std::size_t i = 0; i < n; ++i) {
    masks.et[i] = probs.et[i] >= t ? 1 : 0;
    masks.tc[i] = probs.tc[i] >= t ? 1 : 0;
    masks.wt[i] = probs.wt[i] >= t ? 1 : 0;
  }
  return labels_from_regions(masks);
}

}  // namespace segpipe
