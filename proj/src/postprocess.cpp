#include "segpipe/postprocess.hpp"

#include <algorithm>
#include <limits>
#include <memory>
#include <stdexcept>

#include "segpipe/components.hpp"

namespace segpipe {

const ClusterPolicy& PostprocessPolicy::for_cluster(int cluster_id) const {
  for (const ClusterPolicy& c : clusters)
    if (c.id == cluster_id) return c;
  throw std::out_of_range("no policy for cluster " + std::to_string(cluster_id));
}

nlohmann::json PostprocessPolicy::to_json() const {
  nlohmann::json cl = nlohmann::json::array();
  for (const ClusterPolicy& c : clusters) {
    nlohmann::json thresholds;
    for (const auto& [label, size] : c.lesion_thresholds)
      thresholds[std::to_string(label)] = size;
    cl.push_back({{"id", c.id},
                  {"lesion_thresholds", thresholds},
                  {"et_wt_threshold", c.et_wt_threshold}});
  }
  return {{"connectivity", static_cast<int>(connectivity)}, {"clusters", cl}};
}

PostprocessPolicy PostprocessPolicy::from_json(const nlohmann::json& j) {
  PostprocessPolicy p;
  p.connectivity = connectivity_from_int(j.at("connectivity").get<int>());
  for (const auto& cj : j.at("clusters")) {
    ClusterPolicy c;
    c.id = cj.at("id").get<int>();
    c.lesion_thresholds.clear();
    for (const auto& [key, value] : cj.at("lesion_thresholds").items()) {
      const int label = std::stoi(key);
      if (label < 1 || label > 3)
        throw std::invalid_argument("lesion threshold label must be 1, 2, or 3");
      c.lesion_thresholds[label] = value.get<std::int64_t>();
    }
    for (int label = 1; label <= 3; ++label)
      if (!c.lesion_thresholds.count(label))
        throw std::invalid_argument("lesion_thresholds must cover labels 1..3");
    c.et_wt_threshold = cj.at("et_wt_threshold").get<double>();
    p.clusters.push_back(std::move(c));
  }
  return p;
}

double et_wt_ratio(const LabelVolume& labels) {
  std::int64_t et = 0, wt = 0;
  for (std::size_t idx = 0; idx < labels.size(); ++idx) {
    const std::uint8_t v = labels[idx];
    if (v == kBackground) continue;
    ++wt;
    if (v == kEnhancingTumor) ++et;
  }
  return wt > 0 ? static_cast<double>(et) / static_cast<double>(wt) : 0.0;
}

LabelVolume apply_policy(const LabelVolume& labels, const ClusterPolicy& policy,
                         Connectivity connectivity) {
  std::array<BinaryMask, 3> kept{mask_of_label(labels, 1), mask_of_label(labels, 2),
                                 mask_of_label(labels, 3)};
  for (int label = 1; label <= 3; ++label)
    kept[static_cast<std::size_t>(label - 1)] =
        remove_small_components(kept[static_cast<std::size_t>(label - 1)],
                                policy.lesion_thresholds.at(label), connectivity);

  Volume<std::uint8_t> out(labels.geometry(), kBackground);
  std::int64_t et = 0, wt = 0;
  for (std::size_t idx = 0; idx < out.size(); ++idx) {
    for (int label = 1; label <= 3; ++label)
      if (kept[static_cast<std::size_t>(label - 1)][idx]) {
        out[idx] = static_cast<std::uint8_t>(label);
        ++wt;
        if (label == 3) ++et;
        break;
      }
  }

  if (policy.et_wt_threshold > 0 && et > 0 && wt > 0 &&
      static_cast<double>(et) / static_cast<double>(wt) < policy.et_wt_threshold) {
    // Demote enhancing tumor to necrotic core, then refilter label 1 so the
    // output is a fixed point of this same policy.
    for (std::size_t idx = 0; idx < out.size(); ++idx)
      if (out[idx] == kEnhancingTumor) out[idx] = kNecroticCore;
    BinaryMask ncr = mask_of_label(LabelVolume(out), 1);
    ncr = remove_small_components(ncr, policy.lesion_thresholds.at(1), connectivity);
    for (std::size_t idx = 0; idx < out.size(); ++idx)
      if (out[idx] == kNecroticCore && !ncr[idx]) out[idx] = kBackground;
  }
  return LabelVolume(std::move(out));
}

namespace {

/// Per-case scoring state reused across every candidate policy.
struct FitCase {
  LabelVolume pred;  // cropped to the joint foreground box
  std::array<std::unique_ptr<LesionWiseScorer>, 3> scorers;
};

LabelVolume crop_labels(const LabelVolume& labels, const std::array<int, 3>& lo,
                        const std::array<int, 3>& hi) {
  return LabelVolume(crop_volume(labels.vol(), lo, hi));
}

double score_case(const FitCase& fc, const ClusterPolicy& candidate, Connectivity conn) {
  const LabelVolume cleaned = apply_policy(fc.pred, candidate, conn);
  const RegionMasks regions = regions_from_labels(cleaned);
  const std::array<const BinaryMask*, 3> masks{&regions.et, &regions.tc, &regions.wt};
  double sum = 0.0;
  for (std::size_t r = 0; r < 3; ++r)
    sum += fc.scorers[r]->score(*masks[r], false).dice;
  return sum / 3.0;
}

}  // namespace

PostprocessPolicy fit_policy(const std::vector<PostprocessCase>& cases, int n_clusters,
                             const FitPolicyParams& params) {
  if (n_clusters < 1) throw std::invalid_argument("n_clusters must be positive");
  if (params.size_grid.empty() || params.ratio_grid.empty())
    throw std::invalid_argument("fit grids must be nonempty");

  std::vector<std::int64_t> sizes = params.size_grid;
  std::sort(sizes.begin(), sizes.end());
  std::vector<double> ratios = params.ratio_grid;
  std::sort(ratios.begin(), ratios.end());

  // Prepare per-cluster scoring state. Cropping each case to the union of
  // ground-truth and prediction foreground leaves all component sizes and
  // lesion matches unchanged while shrinking every candidate evaluation.
  std::vector<std::vector<FitCase>> by_cluster(static_cast<std::size_t>(n_clusters));
  for (const PostprocessCase& pc : cases) {
    if (pc.cluster < 0 || pc.cluster >= n_clusters)
      throw std::invalid_argument("case cluster id out of range");
    if (!pc.ground_truth.geometry().same_grid(pc.prediction.geometry()))
      throw std::invalid_argument("case grids do not match");

    BinaryMask joint(pc.ground_truth.geometry(), 0);
    for (std::size_t idx = 0; idx < joint.size(); ++idx)
      joint[idx] = (pc.ground_truth[idx] != kBackground || pc.prediction[idx] != kBackground) ? 1 : 0;
    const auto box = foreground_bbox(joint);

    FitCase fc;
    LabelVolume gt = pc.ground_truth;
    if (box) {
      gt = crop_labels(pc.ground_truth, (*box)[0], (*box)[1]);
      fc.pred = crop_labels(pc.prediction, (*box)[0], (*box)[1]);
    } else {
      fc.pred = pc.prediction;
    }
    const RegionMasks gt_regions = regions_from_labels(gt);
    const Eigen::Vector3d spacing = gt.geometry().spacing;
    fc.scorers[0] = std::make_unique<LesionWiseScorer>(gt_regions.et, spacing, params.match);
    fc.scorers[1] = std::make_unique<LesionWiseScorer>(gt_regions.tc, spacing, params.match);
    fc.scorers[2] = std::make_unique<LesionWiseScorer>(gt_regions.wt, spacing, params.match);
    by_cluster[static_cast<std::size_t>(pc.cluster)].push_back(std::move(fc));
  }

  PostprocessPolicy policy;
  policy.connectivity = params.connectivity;
  for (int cluster = 0; cluster < n_clusters; ++cluster) {
    ClusterPolicy best;
    best.id = cluster;
    const auto& cluster_cases = by_cluster[static_cast<std::size_t>(cluster)];
    if (cluster_cases.empty()) {
      policy.clusters.push_back(best);
      continue;
    }

    const auto objective = [&](const ClusterPolicy& candidate) {
      double sum = 0.0;
      for (const FitCase& fc : cluster_cases) sum += score_case(fc, candidate, params.connectivity);
      return sum / static_cast<double>(cluster_cases.size());
    };

    double best_score = -std::numeric_limits<double>::infinity();
    for (std::int64_t t1 : sizes)
      for (std::int64_t t2 : sizes)
        for (std::int64_t t3 : sizes) {
          ClusterPolicy candidate = best;
          candidate.lesion_thresholds = {{1, t1}, {2, t2}, {3, t3}};
          candidate.et_wt_threshold = 0.0;
          const double score = objective(candidate);
          if (score > best_score) {
            best_score = score;
            best.lesion_thresholds = candidate.lesion_thresholds;
          }
        }

    best_score = -std::numeric_limits<double>::infinity();
    for (double ratio : ratios) {
      ClusterPolicy candidate = best;
      candidate.et_wt_threshold = ratio;
      const double score = objective(candidate);
      if (score > best_score) {
        best_score = score;
        best.et_wt_threshold = ratio;
      }
    }

    policy.clusters.push_back(best);
  }
  return policy;
}

}  // namespace segpipe
