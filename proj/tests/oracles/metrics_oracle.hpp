#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "oracles/components_oracle.hpp"
#include "segpipe/metrics.hpp"
#include "segpipe/volume.hpp"

/// Reference metrics built the expensive, obvious way: explicit surface
/// point sets, all-pairs distances, direct percentile arithmetic, and a
/// straight-line transcription of the lesion matching rules. No distance
/// transforms, no bounding boxes, no caching.
namespace segpipe::testing {

inline bool oracle_is_surface(const BinaryMask& mask, int i, int j, int k) {
  if (!mask.at(i, j, k)) return false;
  static const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (const auto& o : off) {
    const int ni = i + o[0], nj = j + o[1], nk = k + o[2];
    if (!mask.in_bounds(ni, nj, nk)) return true;  // volume boundary
    if (!mask.at(ni, nj, nk)) return true;
  }
  return false;
}

inline std::vector<Eigen::Vector3d> oracle_surface_points(const BinaryMask& mask,
                                                          const Eigen::Vector3d& spacing) {
  std::vector<Eigen::Vector3d> pts;
  const auto& d = mask.dims();
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i)
        if (oracle_is_surface(mask, i, j, k))
          pts.emplace_back(i * spacing[0], j * spacing[1], k * spacing[2]);
  return pts;
}

/// Inclusive-method percentile, independently written: h = (n-1)q.
inline double oracle_percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double oracle_dice(const BinaryMask& a, const BinaryMask& b) {
  std::int64_t na = 0, nb = 0, inter = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] ? 1 : 0;
    nb += b[i] ? 1 : 0;
    inter += (a[i] && b[i]) ? 1 : 0;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

/// All-pairs symmetric HD95 between surface point sets.
inline double oracle_hd95(const BinaryMask& a, const BinaryMask& b, const Eigen::Vector3d& spacing,
                          double penalty_mm) {
  const auto pa = oracle_surface_points(a, spacing);
  const auto pb = oracle_surface_points(b, spacing);
  if (pa.empty() && pb.empty()) return 0.0;
  if (pa.empty() || pb.empty()) return penalty_mm;
  std::vector<double> distances;
  distances.reserve(pa.size() + pb.size());
  for (const auto& p : pa) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : pb) best = std::min(best, (p - q).norm());
    distances.push_back(best);
  }
  for (const auto& q : pb) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : pa) best = std::min(best, (p - q).norm());
    distances.push_back(best);
  }
  return oracle_percentile(std::move(distances), 0.95);
}

/// Chebyshev-ball dilation by repeated neighbor expansion, radius steps.
inline BinaryMask oracle_dilate26(const BinaryMask& mask, int radius) {
  BinaryMask out = mask;
  const auto& offsets = neighbor_offsets(Connectivity::corners26);
  for (int step = 0; step < radius; ++step) {
    BinaryMask next = out;
    const auto& d = out.dims();
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          if (!out.at(i, j, k)) continue;
          for (const auto& off : offsets) {
            const int ni = i + off[0], nj = j + off[1], nk = k + off[2];
            if (next.in_bounds(ni, nj, nk)) next[next.linear(ni, nj, nk)] = 1;
          }
        }
    out = std::move(next);
  }
  return out;
}

struct OracleLesionWise {
  double dice = 1.0;
  double hd95 = 0.0;
  int matched = 0;
  int false_negatives = 0;
  int false_positives = 0;
};

/// Straight-line lesion-wise reference following the documented rules:
/// components at the given connectivity, ground-truth components dilated into
/// match regions, matched prediction components pooled per ground-truth
/// lesion, misses and oversized false positives scored at 0 / penalty, and
/// the final value the mean over all scored entries.
inline OracleLesionWise oracle_lesion_wise(const BinaryMask& gt, const BinaryMask& pred,
                                           const Eigen::Vector3d& spacing,
                                           const LesionMatchParams& params) {
  const OracleComponents gt_comps = oracle_components(gt, params.connectivity);
  const OracleComponents pred_comps = oracle_components(pred, params.connectivity);

  std::vector<std::pair<double, double>> entries;  // (dice, hd95)
  std::set<std::int32_t> matched_preds;
  int matched = 0, fns = 0, fps = 0;

  for (std::size_t g = 1; g <= gt_comps.sizes.size(); ++g) {
    BinaryMask gt_lesion(gt.geometry(), 0);
    for (std::size_t i = 0; i < gt.size(); ++i)
      gt_lesion[i] = gt_comps.labels[i] == static_cast<std::int32_t>(g) ? 1 : 0;
    const BinaryMask region = params.dilation_radius > 0
                                  ? oracle_dilate26(gt_lesion, params.dilation_radius)
                                  : gt_lesion;

    std::set<std::int32_t> touching;
    for (std::size_t i = 0; i < region.size(); ++i)
      if (region[i] && pred_comps.labels[i] > 0) touching.insert(pred_comps.labels[i]);

    if (touching.empty()) {
      entries.emplace_back(0.0, params.penalty_mm);
      ++fns;
      continue;
    }
    ++matched;
    BinaryMask pred_union(pred.geometry(), 0);
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred_comps.labels[i] > 0 && touching.count(pred_comps.labels[i])) pred_union[i] = 1;
    for (std::int32_t p : touching) matched_preds.insert(p);
    entries.emplace_back(oracle_dice(gt_lesion, pred_union),
                         oracle_hd95(gt_lesion, pred_union, spacing, params.penalty_mm));
  }

  for (std::size_t p = 1; p <= pred_comps.sizes.size(); ++p) {
    if (matched_preds.count(static_cast<std::int32_t>(p))) continue;
    if (pred_comps.sizes[p - 1] > params.min_fp_size) {
      entries.emplace_back(0.0, params.penalty_mm);
      ++fps;
    }
  }

  OracleLesionWise out;
  out.matched = matched;
  out.false_negatives = fns;
  out.false_positives = fps;
  if (!entries.empty()) {
    double dsum = 0.0, hsum = 0.0;
    for (const auto& [d, h] : entries) {
      dsum += d;
      hsum += h;
    }
    out.dice = dsum / static_cast<double>(entries.size());
    out.hd95 = hsum / static_cast<double>(entries.size());
  }
  return out;
}

}  // namespace segpipe::testing
