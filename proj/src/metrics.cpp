#include "segpipe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "segpipe/io_util.hpp"

namespace segpipe {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_same_dims(const std::array<int, 3>& a, const std::array<int, 3>& b) {
  if (a != b) throw std::invalid_argument("metric inputs have different dimensions");
}

/// 1D squared distance transform along sample positions i*step (lower
/// envelope of parabolas). Samples with value +inf contribute no parabola; if
/// every sample is +inf the output stays +inf.
void edt_1d(const double* f, int n, double step, double* d, int* v, double* z) {
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double xq = q * step;
    double s = 0.0;
    while (k >= 0) {
      const double xv = v[k] * step;
      s = (f[q] + xq * xq - (f[v[k]] + xv * xv)) / (2.0 * (xq - xv));
      if (s <= z[k]) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = (k == 0) ? -kInf : s;
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    const double xq = q * step;
    while (j < k && z[j + 1] < xq) ++j;
    const double dx = xq - v[j] * step;
    d[q] = dx * dx + f[v[j]];
  }
}

/// Squared Euclidean distance (mm^2) from every voxel center to the nearest
/// site voxel center, by separable passes over the three axes.
std::vector<double> squared_edt(const std::vector<std::size_t>& site_indices,
                                const std::array<int, 3>& dims, const Eigen::Vector3d& spacing) {
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  std::vector<double> dist(n, kInf);
  for (std::size_t idx : site_indices) dist[idx] = 0.0;

  const int max_dim = std::max({dims[0], dims[1], dims[2]});
  std::vector<double> f(max_dim), d(max_dim), z(max_dim + 1);
  std::vector<int> v(max_dim);
  const auto lin = [&](int i, int j, int k) {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
  };

  // Axis 0 (fastest-varying), then 1, then 2.
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j) {
      const std::size_t base = lin(0, j, k);
      edt_1d(dist.data() + base, dims[0], spacing[0], d.data(), v.data(), z.data());
      std::copy(d.begin(), d.begin() + dims[0], dist.begin() + static_cast<std::ptrdiff_t>(base));
    }
  for (int k = 0; k < dims[2]; ++k)
    for (int i = 0; i < dims[0]; ++i) {
      for (int j = 0; j < dims[1]; ++j) f[j] = dist[lin(i, j, k)];
      edt_1d(f.data(), dims[1], spacing[1], d.data(), v.data(), z.data());
      for (int j = 0; j < dims[1]; ++j) dist[lin(i, j, k)] = d[j];
    }
  for (int j = 0; j < dims[1]; ++j)
    for (int i = 0; i < dims[0]; ++i) {
      for (int k = 0; k < dims[2]; ++k) f[k] = dist[lin(i, j, k)];
      edt_1d(f.data(), dims[2], spacing[2], d.data(), v.data(), z.data());
      for (int k = 0; k < dims[2]; ++k) dist[lin(i, j, k)] = d[k];
    }
  return dist;
}

/// Linear indices of surface voxels: foreground with a background 6-neighbor
/// or on the volume boundary.
std::vector<std::size_t> surface_voxels(const BinaryMask& m) {
  const auto& d = m.dims();
  std::vector<std::size_t> out;
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const std::size_t idx = m.linear(i, j, k);
        if (!m[idx]) continue;
        bool surface = i == 0 || j == 0 || k == 0 || i == d[0] - 1 || j == d[1] - 1 || k == d[2] - 1;
        if (!surface)
          surface = !m[idx - 1] || !m[idx + 1] || !m.at(i, j - 1, k) || !m.at(i, j + 1, k) ||
                    !m.at(i, j, k - 1) || !m.at(i, j, k + 1);
        if (surface) out.push_back(idx);
      }
  return out;
}

/// Inclusive-method percentile with linear interpolation between order
/// statistics: h = (n-1) q. Mutates (sorts) values.
double percentile(std::vector<double>& values, double q) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double h = static_cast<double>(n - 1) * q;
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= n) return values[n - 1];
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

/// hd95 between two masks known to be non-empty and already cropped (or
/// small); no bbox handling, no empty-mask conventions.
double hd95_nonempty(const BinaryMask& a, const BinaryMask& b, const Eigen::Vector3d& spacing) {
  const auto surf_a = surface_voxels(a);
  const auto surf_b = surface_voxels(b);
  const auto dist_to_b = squared_edt(surf_b, a.dims(), spacing);
  const auto dist_to_a = squared_edt(surf_a, a.dims(), spacing);
  std::vector<double> distances;
  distances.reserve(surf_a.size() + surf_b.size());
  for (std::size_t idx : surf_a) distances.push_back(std::sqrt(dist_to_b[idx]));
  for (std::size_t idx : surf_b) distances.push_back(std::sqrt(dist_to_a[idx]));
  return percentile(distances, 0.95);
}

std::array<int, 3> box_min(const std::array<int, 3>& a, const std::array<int, 3>& b) {
  return {std::min(a[0], b[0]), std::min(a[1], b[1]), std::min(a[2], b[2])};
}
std::array<int, 3> box_max(const std::array<int, 3>& a, const std::array<int, 3>& b) {
  return {std::max(a[0], b[0]), std::max(a[1], b[1]), std::max(a[2], b[2])};
}

/// Per-component inclusive bounding boxes, 0-indexed by component id - 1.
struct CompBoxes {
  std::vector<std::array<int, 3>> lo, hi;
};

CompBoxes component_bboxes(const ComponentLabeling& cl) {
  const auto& d = cl.labels.dims();
  CompBoxes boxes;
  boxes.lo.assign(cl.sizes.size(), {d[0], d[1], d[2]});
  boxes.hi.assign(cl.sizes.size(), {-1, -1, -1});
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const std::int32_t id = cl.labels[cl.labels.linear(i, j, k)];
        if (id == 0) continue;
        auto& lo = boxes.lo[id - 1];
        auto& hi = boxes.hi[id - 1];
        lo = box_min(lo, {i, j, k});
        hi = box_max(hi, {i, j, k});
      }
  return boxes;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

nlohmann::json LesionMatchParams::to_json() const {
  return {{"connectivity", static_cast<int>(connectivity)},
          {"dilation_radius", dilation_radius},
          {"penalty_mm", penalty_mm},
          {"min_fp_size", min_fp_size}};
}

LesionMatchParams LesionMatchParams::from_json(const nlohmann::json& j) {
  LesionMatchParams p;
  p.connectivity = connectivity_from_int(j.value("connectivity", 26));
  p.dilation_radius = j.value("dilation_radius", 1);
  p.penalty_mm = j.value("penalty_mm", 374.0);
  p.min_fp_size = j.value("min_fp_size", std::int64_t{0});
  if (p.dilation_radius < 0) throw std::invalid_argument("dilation_radius must be >= 0");
  if (!(p.penalty_mm >= 0)) throw std::invalid_argument("penalty_mm must be >= 0");
  return p;
}

const char* lesion_status_name(LesionStatus s) {
  switch (s) {
    case LesionStatus::matched: return "matched";
    case LesionStatus::false_negative: return "false_negative";
    case LesionStatus::false_positive: return "false_positive";
  }
  return "unknown";
}

int LesionWiseResult::matched_count() const {
  return static_cast<int>(std::count_if(matches.begin(), matches.end(), [](const LesionMatch& m) {
    return m.status == LesionStatus::matched;
  }));
}
int LesionWiseResult::false_negative_count() const {
  return static_cast<int>(std::count_if(matches.begin(), matches.end(), [](const LesionMatch& m) {
    return m.status == LesionStatus::false_negative;
  }));
}
int LesionWiseResult::false_positive_count() const {
  return static_cast<int>(std::count_if(matches.begin(), matches.end(), [](const LesionMatch& m) {
    return m.status == LesionStatus::false_positive;
  }));
}

double volumetric_dice(const BinaryMask& a, const BinaryMask& b) {
  check_same_dims(a.dims(), b.dims());
  std::size_t na = 0, nb = 0, inter = 0;
  for (std::size_t idx = 0; idx < a.size(); ++idx) {
    const bool va = a[idx] != 0, vb = b[idx] != 0;
    na += va;
    nb += vb;
    inter += va && vb;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double volumetric_hd95(const BinaryMask& a, const BinaryMask& b, const Eigen::Vector3d& spacing,
                       double penalty_mm) {
  check_same_dims(a.dims(), b.dims());
  const auto bbox_a = foreground_bbox(a);
  const auto bbox_b = foreground_bbox(b);
  if (!bbox_a && !bbox_b) return 0.0;
  if (!bbox_a || !bbox_b) return penalty_mm;
  // Cropping to the joint foreground box preserves the surface sets exactly:
  // every box-face foreground voxel has only background beyond the face, so
  // the boundary rule and the 6-neighbor rule agree with the full volume.
  const auto lo = box_min((*bbox_a)[0], (*bbox_b)[0]);
  const auto hi = box_max((*bbox_a)[1], (*bbox_b)[1]);
  return hd95_nonempty(crop_volume(a, lo, hi), crop_volume(b, lo, hi), spacing);
}

LesionWiseScorer::LesionWiseScorer(const BinaryMask& gt, const Eigen::Vector3d& spacing,
                                   const LesionMatchParams& params)
    : spacing_(spacing), params_(params), gt_cl_(connected_components(gt, params.connectivity)) {
  const auto& dims = gt.dims();
  const CompBoxes boxes = component_bboxes(gt_cl_);
  lesions_.resize(gt_cl_.sizes.size());
  for (std::size_t c = 0; c < lesions_.size(); ++c) {
    GtLesion& lesion = lesions_[c];
    lesion.comp_lo = boxes.lo[c];
    lesion.comp_hi = boxes.hi[c];
    const int r = params_.dilation_radius;
    for (int a = 0; a < 3; ++a) {
      lesion.lo[a] = std::max(0, boxes.lo[c][a] - r);
      lesion.hi[a] = std::min(dims[a] - 1, boxes.hi[c][a] + r);
    }
    BinaryMask cropped(Geometry::axis_aligned({lesion.hi[0] - lesion.lo[0] + 1,
                                               lesion.hi[1] - lesion.lo[1] + 1,
                                               lesion.hi[2] - lesion.lo[2] + 1},
                                              spacing));
    const std::int32_t id = static_cast<std::int32_t>(c) + 1;
    for (int k = lesion.lo[2]; k <= lesion.hi[2]; ++k)
      for (int j = lesion.lo[1]; j <= lesion.hi[1]; ++j)
        for (int i = lesion.lo[0]; i <= lesion.hi[0]; ++i)
          cropped.at(i - lesion.lo[0], j - lesion.lo[1], k - lesion.lo[2]) =
              gt_cl_.labels.at(i, j, k) == id;
    lesion.region = r > 0 ? dilate(cropped, r, Connectivity::corners26) : std::move(cropped);
  }
}

LesionWiseResult LesionWiseScorer::score(const BinaryMask& pred, bool with_hd95) const {
  check_same_dims(gt_cl_.labels.dims(), pred.dims());
  const ComponentLabeling pred_cl = connected_components(pred, params_.connectivity);
  const CompBoxes pred_boxes = component_bboxes(pred_cl);

  // Per-prediction-component voxel lists, for intersection counting.
  std::vector<std::vector<std::size_t>> pred_voxels(pred_cl.sizes.size());
  for (std::size_t c = 0; c < pred_voxels.size(); ++c)
    pred_voxels[c].reserve(static_cast<std::size_t>(pred_cl.sizes[c]));
  for (std::size_t idx = 0; idx < pred_cl.labels.size(); ++idx) {
    const std::int32_t id = pred_cl.labels[idx];
    if (id > 0) pred_voxels[id - 1].push_back(idx);
  }

  // A prediction component matches every ground-truth lesion whose dilated
  // region it touches (shared assignment).
  std::vector<std::vector<int>> matched(lesions_.size());
  std::vector<char> pred_is_matched(pred_cl.sizes.size(), 0);
  for (std::size_t g = 0; g < lesions_.size(); ++g) {
    const GtLesion& lesion = lesions_[g];
    std::vector<int>& ids = matched[g];
    for (int k = lesion.lo[2]; k <= lesion.hi[2]; ++k)
      for (int j = lesion.lo[1]; j <= lesion.hi[1]; ++j)
        for (int i = lesion.lo[0]; i <= lesion.hi[0]; ++i) {
          if (!lesion.region.at(i - lesion.lo[0], j - lesion.lo[1], k - lesion.lo[2])) continue;
          const std::int32_t p = pred_cl.labels.at(i, j, k);
          if (p > 0) ids.push_back(p);
        }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (int p : ids) pred_is_matched[p - 1] = 1;
  }

  LesionWiseResult result;
  for (std::size_t g = 0; g < lesions_.size(); ++g) {
    LesionMatch m;
    m.gt_component = static_cast<int>(g) + 1;
    m.pred_components = matched[g];
    if (matched[g].empty()) {
      m.dice = 0.0;
      m.hd95 = params_.penalty_mm;
      m.status = LesionStatus::false_negative;
      result.matches.push_back(std::move(m));
      continue;
    }
    const std::int32_t gt_id = static_cast<std::int32_t>(g) + 1;
    std::int64_t union_size = 0, inter = 0;
    std::array<int, 3> lo = lesions_[g].comp_lo, hi = lesions_[g].comp_hi;
    for (int p : matched[g]) {
      union_size += pred_cl.sizes[p - 1];
      for (std::size_t idx : pred_voxels[p - 1]) inter += gt_cl_.labels[idx] == gt_id;
      lo = box_min(lo, pred_boxes.lo[p - 1]);
      hi = box_max(hi, pred_boxes.hi[p - 1]);
    }
    m.dice = 2.0 * static_cast<double>(inter) /
             static_cast<double>(gt_cl_.sizes[g] + union_size);
    if (with_hd95) {
      // Both operands restricted to their joint bounding box; exact for the
      // same reason as in volumetric_hd95.
      const Geometry box_geom =
          Geometry::axis_aligned({hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}, spacing_);
      BinaryMask gt_mask(box_geom), pred_mask(box_geom);
      for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
          for (int i = lo[0]; i <= hi[0]; ++i) {
            gt_mask.at(i - lo[0], j - lo[1], k - lo[2]) = gt_cl_.labels.at(i, j, k) == gt_id;
            const std::int32_t p = pred_cl.labels.at(i, j, k);
            pred_mask.at(i - lo[0], j - lo[1], k - lo[2]) =
                p > 0 && std::binary_search(matched[g].begin(), matched[g].end(), p);
          }
      m.hd95 = hd95_nonempty(gt_mask, pred_mask, spacing_);
    } else {
      m.hd95 = 0.0;
    }
    m.status = LesionStatus::matched;
    result.matches.push_back(std::move(m));
  }

  for (std::size_t p = 0; p < pred_cl.sizes.size(); ++p) {
    if (pred_is_matched[p] || pred_cl.sizes[p] <= params_.min_fp_size) continue;
    LesionMatch m;
    m.gt_component = -1;
    m.pred_components = {static_cast<int>(p) + 1};
    m.dice = 0.0;
    m.hd95 = params_.penalty_mm;
    m.status = LesionStatus::false_positive;
    result.matches.push_back(std::move(m));
  }

  if (result.matches.empty()) {
    result.dice = 1.0;
    result.hd95 = 0.0;
    return result;
  }
  std::vector<double> dices, hd95s;
  dices.reserve(result.matches.size());
  hd95s.reserve(result.matches.size());
  for (const LesionMatch& m : result.matches) {
    dices.push_back(m.dice);
    hd95s.push_back(m.hd95);
  }
  result.dice = mean_of(dices);
  result.hd95 = mean_of(hd95s);
  return result;
}

LesionWiseResult lesion_wise(const BinaryMask& gt, const BinaryMask& pred,
                             const Eigen::Vector3d& spacing, const LesionMatchParams& params) {
  check_same_dims(gt.dims(), pred.dims());
  return LesionWiseScorer(gt, spacing, params).score(pred, true);
}

CaseReport evaluate_case(const LabelVolume& gt, const LabelVolume& pred,
                         const Eigen::Vector3d& spacing, const LesionMatchParams& params) {
  check_same_dims(gt.dims(), pred.dims());
  const RegionMasks gt_regions = regions_from_labels(gt);
  const RegionMasks pred_regions = regions_from_labels(pred);
  const std::array<const BinaryMask*, 3> gt_masks{&gt_regions.et, &gt_regions.tc, &gt_regions.wt};
  const std::array<const BinaryMask*, 3> pred_masks{&pred_regions.et, &pred_regions.tc,
                                                    &pred_regions.wt};
  CaseReport report;
  for (int r = 0; r < 3; ++r) {
    const LesionWiseResult lw = lesion_wise(*gt_masks[r], *pred_masks[r], spacing, params);
    RegionMetrics& metrics = report.regions[static_cast<std::size_t>(r)];
    metrics.lesion_wise_dice = lw.dice;
    metrics.lesion_wise_hd95 = lw.hd95;
    metrics.volumetric_dice = volumetric_dice(*gt_masks[r], *pred_masks[r]);
    metrics.volumetric_hd95 = volumetric_hd95(*gt_masks[r], *pred_masks[r], spacing, params.penalty_mm);
    metrics.matched = lw.matched_count();
    metrics.false_negatives = lw.false_negative_count();
    metrics.false_positives = lw.false_positive_count();
    report.lesions[static_cast<std::size_t>(r)] = lw.matches;
  }
  return report;
}

namespace {

const std::array<const char*, 7> kMetricColumns{
    "lesion_wise_dice", "lesion_wise_hd95", "volumetric_dice", "volumetric_hd95",
    "matched",          "false_negatives",  "false_positives"};

std::array<double, 7> metric_values(const RegionMetrics& m) {
  return {m.lesion_wise_dice,
          m.lesion_wise_hd95,
          m.volumetric_dice,
          m.volumetric_hd95,
          static_cast<double>(m.matched),
          static_cast<double>(m.false_negatives),
          static_cast<double>(m.false_positives)};
}

/// Column means per region across cases; empty input -> nullopt.
std::array<std::array<double, 7>, 3> region_means(const std::vector<CaseReport>& reports) {
  std::array<std::array<double, 7>, 3> sums{};
  for (const CaseReport& rep : reports)
    for (std::size_t r = 0; r < 3; ++r) {
      const auto vals = metric_values(rep.regions[r]);
      for (std::size_t c = 0; c < vals.size(); ++c) sums[r][c] += vals[c];
    }
  for (auto& row : sums)
    for (double& x : row) x /= static_cast<double>(reports.size());
  return sums;
}

}  // namespace

void write_report_csv(std::ostream& out, const std::vector<CaseReport>& reports,
                      const LesionMatchParams& params) {
  out << "# lesion_match_params: " << params.to_json().dump() << "\n";
  out << "case_id,region";
  for (const char* col : kMetricColumns) out << ',' << col;
  out << "\n";
  for (const CaseReport& rep : reports)
    for (std::size_t r = 0; r < 3; ++r) {
      out << rep.case_id << ',' << kRegionNames[r];
      for (double v : metric_values(rep.regions[r])) out << ',' << format_double(v);
      out << "\n";
    }
  if (!reports.empty()) {
    const auto means = region_means(reports);
    for (std::size_t r = 0; r < 3; ++r) {
      out << "MEAN," << kRegionNames[r];
      for (double v : means[r]) out << ',' << format_double(v);
      out << "\n";
    }
  }
}

void write_report_csv(const std::filesystem::path& path, const std::vector<CaseReport>& reports,
                      const LesionMatchParams& params) {
  std::ostringstream ss;
  write_report_csv(ss, reports, params);
  atomic_write_file(path, ss.str());
}

nlohmann::json report_to_json(const std::vector<CaseReport>& reports,
                              const LesionMatchParams& params) {
  nlohmann::json root;
  root["params"] = params.to_json();
  nlohmann::json cases = nlohmann::json::array();
  for (const CaseReport& rep : reports) {
    nlohmann::json regions;
    for (std::size_t r = 0; r < 3; ++r) {
      const RegionMetrics& m = rep.regions[r];
      nlohmann::json lesions = nlohmann::json::array();
      for (const LesionMatch& lm : rep.lesions[r])
        lesions.push_back({{"gt_component", lm.gt_component},
                           {"pred_components", lm.pred_components},
                           {"dice", lm.dice},
                           {"hd95", lm.hd95},
                           {"status", lesion_status_name(lm.status)}});
      regions[kRegionNames[r]] = {{"lesion_wise_dice", m.lesion_wise_dice},
                                  {"lesion_wise_hd95", m.lesion_wise_hd95},
                                  {"volumetric_dice", m.volumetric_dice},
                                  {"volumetric_hd95", m.volumetric_hd95},
                                  {"matched", m.matched},
                                  {"false_negatives", m.false_negatives},
                                  {"false_positives", m.false_positives},
                                  {"lesions", std::move(lesions)}};
    }
    cases.push_back({{"case_id", rep.case_id}, {"regions", std::move(regions)}});
  }
  root["cases"] = std::move(cases);
  if (!reports.empty()) {
    const auto means = region_means(reports);
    nlohmann::json mean;
    for (std::size_t r = 0; r < 3; ++r) {
      nlohmann::json row;
      for (std::size_t c = 0; c < kMetricColumns.size(); ++c) row[kMetricColumns[c]] = means[r][c];
      mean[kRegionNames[r]] = std::move(row);
    }
    root["mean"] = std::move(mean);
  }
  return root;
}

void write_report_json(const std::filesystem::path& path, const std::vector<CaseReport>& reports,
                       const LesionMatchParams& params) {
  write_json_file(path, report_to_json(reports, params));
}

}  // namespace segpipe
