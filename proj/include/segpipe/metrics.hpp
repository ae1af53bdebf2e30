#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "segpipe/components.hpp"
#include "segpipe/volume.hpp"

namespace segpipe {

/// Matching parameters for the lesion-wise metrics. Defaults follow the
/// public BraTS lesion-wise convention: 26-connected components, ground-truth
/// lesions dilated by one 26-neighborhood iteration to form match regions,
/// 374 mm distance penalty for unmatched lesions, and every false-positive
/// component counted regardless of size.
struct LesionMatchParams {
  Connectivity connectivity = Connectivity::corners26;
  int dilation_radius = 1;
  double penalty_mm = 374.0;
  std::int64_t min_fp_size = 0;

  nlohmann::json to_json() const;
  static LesionMatchParams from_json(const nlohmann::json& j);
};

enum class LesionStatus { matched, false_negative, false_positive };

const char* lesion_status_name(LesionStatus s);

/// One scoring entry. For ground-truth lesions gt_component is the 1-based
/// component id; false-positive entries carry gt_component = -1 and the
/// offending prediction component id.
struct LesionMatch {
  int gt_component = -1;
  std::vector<int> pred_components;
  double dice = 0.0;
  double hd95 = 0.0;
  LesionStatus status = LesionStatus::false_negative;
};

struct LesionWiseResult {
  double dice = 1.0;
  double hd95 = 0.0;
  std::vector<LesionMatch> matches;

  int matched_count() const;
  int false_negative_count() const;
  int false_positive_count() const;
};

/// 2|a∩b| / (|a|+|b|); both masks empty -> 1.0.
double volumetric_dice(const BinaryMask& a, const BinaryMask& b);

/// 95th percentile (inclusive linear interpolation) of the symmetric set of
/// surface distances in mm. A voxel is surface when it is foreground with a
/// background 6-neighbor or lies on the volume boundary; distances are
/// between surface voxel centers. Both masks empty -> 0; exactly one
/// empty -> penalty_mm.
double volumetric_hd95(const BinaryMask& a, const BinaryMask& b, const Eigen::Vector3d& spacing,
                       double penalty_mm = LesionMatchParams{}.penalty_mm);

/// Lesion-wise Dice/HD95 with component matching. Ground-truth components are
/// dilated (26-neighborhood) to form match regions; a prediction component
/// matching several ground-truth lesions is shared by all of them. Each
/// ground-truth lesion scores against the union of its matched prediction
/// components; misses and false positives score 0 / penalty. The final
/// metrics are the means over all entries.
LesionWiseResult lesion_wise(const BinaryMask& gt, const BinaryMask& pred,
                             const Eigen::Vector3d& spacing, const LesionMatchParams& params = {});

/// Precomputes the ground-truth component structure (labeling, per-component
/// bounding boxes, dilated match regions) once so that many candidate
/// predictions can be scored against the same ground truth cheaply. Used by
/// the post-processing grid search; lesion_wise() above is the one-shot
/// wrapper. with_hd95=false skips distance computation and reports 0 for
/// matched lesions (penalty entries are still penalised).
class LesionWiseScorer {
 public:
  LesionWiseScorer(const BinaryMask& gt, const Eigen::Vector3d& spacing,
                   const LesionMatchParams& params = {});

  LesionWiseResult score(const BinaryMask& pred, bool with_hd95 = true) const;

  const ComponentLabeling& gt_components() const { return gt_cl_; }

 private:
  struct GtLesion {
    std::array<int, 3> lo{};       // bbox of the dilated match region
    std::array<int, 3> hi{};
    BinaryMask region;             // dilated component, cropped to [lo, hi]
    std::array<int, 3> comp_lo{};  // bbox of the raw component
    std::array<int, 3> comp_hi{};
  };

  Eigen::Vector3d spacing_;
  LesionMatchParams params_;
  ComponentLabeling gt_cl_;
  std::vector<GtLesion> lesions_;
};

struct RegionMetrics {
  double lesion_wise_dice = 1.0;
  double lesion_wise_hd95 = 0.0;
  double volumetric_dice = 1.0;
  double volumetric_hd95 = 0.0;
  int matched = 0;
  int false_negatives = 0;
  int false_positives = 0;
};

/// Per-case evaluation over the three nested tumor regions. regions[i]
/// corresponds to kRegionNames[i] (ET, TC, WT).
struct CaseReport {
  std::string case_id;
  std::array<RegionMetrics, 3> regions{};
  std::array<std::vector<LesionMatch>, 3> lesions{};
};

CaseReport evaluate_case(const LabelVolume& gt, const LabelVolume& pred,
                         const Eigen::Vector3d& spacing, const LesionMatchParams& params = {});

/// One row per (case, region) plus a MEAN row per region; parameters embedded
/// as leading '#' comment lines so every report is self-describing.
void write_report_csv(std::ostream& out, const std::vector<CaseReport>& reports,
                      const LesionMatchParams& params);
void write_report_csv(const std::filesystem::path& path, const std::vector<CaseReport>& reports,
                      const LesionMatchParams& params);

/// Full detail including the per-lesion match list.
nlohmann::json report_to_json(const std::vector<CaseReport>& reports,
                              const LesionMatchParams& params);
void write_report_json(const std::filesystem::path& path, const std::vector<CaseReport>& reports,
                       const LesionMatchParams& params);

}  // namespace segpipe
