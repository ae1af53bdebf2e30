#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "segpipe/metrics.hpp"
#include "segpipe/volume.hpp"

/// Cluster-adaptive label cleanup. Each stratification cluster carries its
/// own minimum component size per tumor label plus an enhancing-tumor ratio
/// gate; thresholds are fitted per cluster on validation predictions and
/// applied to new cases after cluster assignment.
namespace segpipe {

struct ClusterPolicy {
  int id = 0;
  /// Minimum surviving component size (voxels) per label 1..3; a component
  /// below the minimum is erased, zero disables the filter.
  std::map<int, std::int64_t> lesion_thresholds{{1, 0}, {2, 0}, {3, 0}};
  /// When |ET| / |WT| falls below this and ET is nonempty, enhancing tumor is
  /// demoted to necrotic core; zero disables the gate.
  double et_wt_threshold = 0.0;
};

struct PostprocessPolicy {
  Connectivity connectivity = Connectivity::corners26;
  std::vector<ClusterPolicy> clusters;

  const ClusterPolicy& for_cluster(int cluster_id) const;

  nlohmann::json to_json() const;
  static PostprocessPolicy from_json(const nlohmann::json& j);
};

/// |label 3| / |whole tumor|; zero when the volume has no tumor at all.
double et_wt_ratio(const LabelVolume& labels);

/// Applies one cluster's thresholds. Size filters run per label; the ratio
/// gate then demotes ET to NCR when triggered. The demoted voxels join label
/// 1, so its size filter runs once more; the result is a fixed point of the
/// same policy.
LabelVolume apply_policy(const LabelVolume& labels, const ClusterPolicy& policy,
                         Connectivity connectivity);

struct PostprocessCase {
  std::string case_id;
  LabelVolume ground_truth;
  LabelVolume prediction;
  int cluster = 0;
};

struct FitPolicyParams {
  std::vector<std::int64_t> size_grid{0, 25, 50, 75, 100, 150, 200, 250};
  std::vector<double> ratio_grid{0.0, 0.05, 0.1, 0.15, 0.2};
  Connectivity connectivity = Connectivity::corners26;
  LesionMatchParams match;
};

/// Greedy two-stage grid search per cluster: first the three size thresholds
/// jointly with the ratio gate off, then the ratio gate with sizes fixed.
/// The objective is the mean lesion-wise Dice over the cluster's cases and
/// the three tumor regions. Candidates are tried in ascending order and only
/// strict improvements accepted, so the lexicographically smallest optimum
/// wins and a cluster with no cases keeps the all-zero policy.
PostprocessPolicy fit_policy(const std::vector<PostprocessCase>& cases, int n_clusters,
                             const FitPolicyParams& params = {});

}  // namespace segpipe
