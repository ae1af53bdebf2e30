#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "segpipe/io_util.hpp"
#include "segpipe/metrics.hpp"
#include "segpipe/postprocess.hpp"

using namespace segpipe;
using namespace segpipe::testing;

namespace {

LabelVolume labels_of(std::array<int, 3> dims,
                      const std::vector<std::pair<std::array<int, 3>, int>>& voxels) {
  Volume<std::uint8_t> v(Geometry::axis_aligned(dims, {1, 1, 1}), 0);
  for (const auto& [pos, label] : voxels)
    v.at(pos[0], pos[1], pos[2]) = static_cast<std::uint8_t>(label);
  return LabelVolume(std::move(v));
}

/// Mean lesion-wise Dice over all cases and the three regions, the fit
/// objective recomputed independently.
double mean_lesion_dice(const std::vector<PostprocessCase>& cases, const PostprocessPolicy& policy,
                        const LesionMatchParams& match) {
  double sum = 0.0;
  int n = 0;
  for (const PostprocessCase& c : cases) {
    const LabelVolume cleaned =
        apply_policy(c.prediction, policy.for_cluster(c.cluster), policy.connectivity);
    const CaseReport rep =
        evaluate_case(c.ground_truth, cleaned, Eigen::Vector3d(1, 1, 1), match);
    for (int r = 0; r < 3; ++r) {
      sum += rep.regions[r].lesion_wise_dice;
      ++n;
    }
  }
  return sum / n;
}

PostprocessPolicy zero_policy(int n_clusters) {
  PostprocessPolicy p;
  for (int c = 0; c < n_clusters; ++c) {
    ClusterPolicy cp;
    cp.id = c;
    p.clusters.push_back(cp);
  }
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("postprocess");

TEST_CASE("et_wt_ratio counts enhancing against whole tumor") {
  const LabelVolume l = labels_of({5, 1, 1}, {{{0, 0, 0}, 3},
                                              {{1, 0, 0}, 3},
                                              {{2, 0, 0}, 1},
                                              {{3, 0, 0}, 2},
                                              {{4, 0, 0}, 2}});
  CHECK(et_wt_ratio(l) == 0.4);
  const LabelVolume empty = labels_of({5, 1, 1}, {});
  CHECK(et_wt_ratio(empty) == 0.0);
}

TEST_CASE("the all-zero policy is the identity") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const LabelVolume l = random_labels(rng, {9, 8, 7}, 0.3);
    const LabelVolume out = apply_policy(l, ClusterPolicy{}, Connectivity::corners26);
    CHECK(out == l);
  }
}

TEST_CASE("size filters act per label") {
  // A 3-voxel label-2 bar and a 3-voxel label-3 bar.
  std::vector<std::pair<std::array<int, 3>, int>> voxels;
  for (int i = 0; i < 3; ++i) voxels.push_back({{i, 0, 0}, 2});
  for (int i = 0; i < 3; ++i) voxels.push_back({{i, 3, 0}, 3});
  const LabelVolume l = labels_of({6, 6, 2}, voxels);

  ClusterPolicy policy;
  policy.lesion_thresholds[2] = 4;  // erases the label-2 bar
  const LabelVolume out = apply_policy(l, policy, Connectivity::corners26);
  CHECK(count_foreground(mask_of_label(out, 2)) == 0);
  CHECK(count_foreground(mask_of_label(out, 3)) == 3);

  ClusterPolicy keep;
  keep.lesion_thresholds[2] = 3;  // exactly at the size: kept
  const LabelVolume kept = apply_policy(l, keep, Connectivity::corners26);
  CHECK(count_foreground(mask_of_label(kept, 2)) == 3);
}

TEST_CASE("ratio gate demotes enhancing tumor and refilters label 1") {
  // 2 ET voxels in 10 tumor voxels: ratio 0.2.
  std::vector<std::pair<std::array<int, 3>, int>> voxels;
  voxels.push_back({{0, 0, 0}, 3});
  voxels.push_back({{1, 0, 0}, 3});
  for (int i = 0; i < 8; ++i) voxels.push_back({{i, 2, 0}, 2});
  const LabelVolume l = labels_of({10, 4, 2}, voxels);

  SUBCASE("gate fires, demoted voxels face the label-1 filter") {
    ClusterPolicy policy;
    policy.et_wt_threshold = 0.25;
    policy.lesion_thresholds[1] = 3;
    const LabelVolume out = apply_policy(l, policy, Connectivity::corners26);
    CHECK(count_foreground(mask_of_label(out, 3)) == 0);
    CHECK(count_foreground(mask_of_label(out, 1)) == 0);  // 2-voxel NCR erased
    CHECK(count_foreground(mask_of_label(out, 2)) == 8);
  }
  SUBCASE("demoted voxels survive a loose label-1 filter") {
    ClusterPolicy policy;
    policy.et_wt_threshold = 0.25;
    const LabelVolume out = apply_policy(l, policy, Connectivity::corners26);
    CHECK(count_foreground(mask_of_label(out, 3)) == 0);
    CHECK(count_foreground(mask_of_label(out, 1)) == 2);
  }
  SUBCASE("gate respects the threshold boundary") {
    ClusterPolicy policy;
    policy.et_wt_threshold = 0.2;  // ratio == threshold: not below, no demote
    const LabelVolume out = apply_policy(l, policy, Connectivity::corners26);
    CHECK(count_foreground(mask_of_label(out, 3)) == 2);
  }
  SUBCASE("zero threshold disables the gate") {
    ClusterPolicy policy;
    const LabelVolume out = apply_policy(l, policy, Connectivity::corners26);
    CHECK(out == l);
  }
  SUBCASE("empty enhancing tumor never triggers the gate") {
    const LabelVolume no_et = labels_of({4, 1, 1}, {{{0, 0, 0}, 2}, {{1, 0, 0}, 2}});
    ClusterPolicy policy;
    policy.et_wt_threshold = 0.5;
    CHECK(apply_policy(no_et, policy, Connectivity::corners26) == no_et);
  }
}

TEST_CASE("apply_policy is idempotent") {
  Rng rng(44);
  const std::int64_t sizes[] = {0, 2, 5, 9};
  const double ratios[] = {0.0, 0.3, 0.8};
  for (int t = 0; t < 100; ++t) {
    const LabelVolume l = random_labels(rng, {8, 8, 8}, 0.35);
    ClusterPolicy policy;
    policy.lesion_thresholds[1] = sizes[rng.below(4)];
    policy.lesion_thresholds[2] = sizes[rng.below(4)];
    policy.lesion_thresholds[3] = sizes[rng.below(4)];
    policy.et_wt_threshold = ratios[rng.below(3)];
    const Connectivity conn = t % 2 ? Connectivity::corners26 : Connectivity::faces6;
    const LabelVolume once = apply_policy(l, policy, conn);
    const LabelVolume twice = apply_policy(once, policy, conn);
    CHECK(twice == once);
  }
}

TEST_CASE("policy json round trip and validation") {
  PostprocessPolicy p;
  p.connectivity = Connectivity::faces6;
  ClusterPolicy a;
  a.id = 0;
  a.lesion_thresholds = {{1, 10}, {2, 20}, {3, 30}};
  a.et_wt_threshold = 0.15;
  ClusterPolicy b;
  b.id = 1;
  p.clusters = {a, b};

  const PostprocessPolicy back = PostprocessPolicy::from_json(p.to_json());
  CHECK(back.connectivity == p.connectivity);
  REQUIRE(back.clusters.size() == 2);
  CHECK(back.clusters[0].lesion_thresholds == a.lesion_thresholds);
  CHECK(back.clusters[0].et_wt_threshold == 0.15);
  CHECK(back.clusters[1].et_wt_threshold == 0.0);

  CHECK(p.for_cluster(1).id == 1);
  CHECK_THROWS_AS(p.for_cluster(7), std::out_of_range);

  nlohmann::json bad = p.to_json();
  bad["clusters"][0]["lesion_thresholds"] = {{"1", 0}, {"2", 0}};  // label 3 missing
  CHECK_THROWS_AS(PostprocessPolicy::from_json(bad), std::invalid_argument);
  nlohmann::json bad2 = p.to_json();
  bad2["connectivity"] = 9;
  CHECK_THROWS_AS(PostprocessPolicy::from_json(bad2), std::invalid_argument);
}

TEST_CASE("the shipped default policy carries the published thresholds") {
  const PostprocessPolicy p = PostprocessPolicy::from_json(
      read_json_file(std::string(SEGPIPE_DATA_DIR) + "/default_policy.json"));
  CHECK(p.connectivity == Connectivity::corners26);
  REQUIRE(p.clusters.size() == 9);

  const std::int64_t want_l2[] = {0, 0, 0, 200, 0, 50, 0, 0, 0};
  const std::int64_t want_l3[] = {0, 50, 100, 0, 50, 0, 0, 0, 0};
  const double want_ratio[] = {0, 0, 0, 0, 0, 0, 0.1, 0, 0};
  for (int c = 0; c < 9; ++c) {
    const ClusterPolicy& cp = p.for_cluster(c);
    CHECK(cp.id == c);
    CHECK(cp.lesion_thresholds.at(1) == 0);
    CHECK(cp.lesion_thresholds.at(2) == want_l2[c]);
    CHECK(cp.lesion_thresholds.at(3) == want_l3[c]);
    CHECK(cp.et_wt_threshold == want_ratio[c]);
  }
}

TEST_CASE("fit_policy removes planted false positives") {
  // Ground truth: one solid ball of enhancing tumor. Predictions: the ball
  // plus a small spurious ET cube and a spurious ED bar.
  const std::array<int, 3> dims{24, 24, 24};
  std::vector<PostprocessCase> cases;
  for (int c = 0; c < 4; ++c) {
    Volume<std::uint8_t> gt(Geometry::axis_aligned(dims, {1, 1, 1}), 0);
    const BinaryMask ball = ball_mask(dims, {12.0, 12.0, 12.0}, 4.0 + 0.3 * c);
    for (std::size_t i = 0; i < ball.size(); ++i)
      if (ball[i]) gt[i] = 3;

    Volume<std::uint8_t> pred = gt;
    for (int k = 2; k < 4; ++k)
      for (int j = 2; j < 4; ++j)
        for (int i = 2; i < 4; ++i) pred.at(i, j, k) = 3;  // 8-voxel FP cube
    for (int i = 17; i < 23; ++i) pred.at(i, 2 + c, 2) = 2;  // 6-voxel FP bar

    PostprocessCase pc;
    pc.case_id = "case-" + std::to_string(c);
    pc.ground_truth = LabelVolume(std::move(gt));
    pc.prediction = LabelVolume(std::move(pred));
    pc.cluster = 0;
    cases.push_back(std::move(pc));
  }

  FitPolicyParams params;
  const PostprocessPolicy fitted = fit_policy(cases, 2, params);
  REQUIRE(fitted.clusters.size() == 2);

  const double before = mean_lesion_dice(cases, zero_policy(2), params.match);
  const double after = mean_lesion_dice(cases, fitted, params.match);
  CHECK(after > before);

  // The fitted thresholds kill both planted lesions but keep the ball.
  CHECK(fitted.for_cluster(0).lesion_thresholds.at(3) > 8);
  CHECK(fitted.for_cluster(0).lesion_thresholds.at(2) > 6);

  // A cluster that saw no cases keeps the all-zero policy.
  const ClusterPolicy& idle = fitted.for_cluster(1);
  CHECK(idle.lesion_thresholds.at(1) == 0);
  CHECK(idle.lesion_thresholds.at(2) == 0);
  CHECK(idle.lesion_thresholds.at(3) == 0);
  CHECK(idle.et_wt_threshold == 0.0);

  // Refitting on already-clean predictions cannot degrade the objective.
  std::vector<PostprocessCase> clean = cases;
  for (auto& pc : clean)
    pc.prediction = apply_policy(pc.prediction, fitted.for_cluster(0), fitted.connectivity);
  const PostprocessPolicy refit = fit_policy(clean, 2, params);
  CHECK(mean_lesion_dice(clean, refit, params.match) >=
        mean_lesion_dice(clean, zero_policy(2), params.match));
}

TEST_SUITE_END();
