#include "segpipe/volume.hpp"

#include <algorithm>
#include <cmath>

namespace segpipe {

Connectivity connectivity_from_int(int value) {
  switch (value) {
    case 6: return Connectivity::faces6;
    case 18: return Connectivity::edges18;
    case 26: return Connectivity::corners26;
    default: throw std::invalid_argument("connectivity must be 6, 18 or 26, got " + std::to_string(value));
  }
}

const std::vector<std::array<int, 3>>& neighbor_offsets(Connectivity conn) {
  static const auto build = [](int max_l1) {
    std::vector<std::array<int, 3>> offs;
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const int l1 = std::abs(di) + std::abs(dj) + std::abs(dk);
          if (l1 > 0 && l1 <= max_l1) offs.push_back({di, dj, dk});
        }
    return offs;
  };
  static const std::vector<std::array<int, 3>> six = build(1);
  static const std::vector<std::array<int, 3>> eighteen = build(2);
  static const std::vector<std::array<int, 3>> twentysix = build(3);
  switch (conn) {
    case Connectivity::faces6: return six;
    case Connectivity::edges18: return eighteen;
    default: return twentysix;
  }
}

void Geometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0)
      throw std::invalid_argument("Geometry: dims[" + std::to_string(a) + "] must be positive");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw std::invalid_argument("Geometry: spacing[" + std::to_string(a) + "] must be positive");
  }
  for (int c = 0; c < 3; ++c) {
    const double norm = affine.block<3, 1>(0, c).norm();
    if (std::abs(norm - spacing[c]) > 1e-6 * spacing[c])
      throw std::invalid_argument("Geometry: affine column " + std::to_string(c) +
                                  " norm " + std::to_string(norm) + " does not match spacing " +
                                  std::to_string(spacing[c]));
  }
}

bool Geometry::same_grid(const Geometry& other, double abs_tol) const {
  if (dims != other.dims) return false;
  for (int a = 0; a < 3; ++a)
    if (std::abs(spacing[a] - other.spacing[a]) > abs_tol) return false;
  return ((affine - other.affine).cwiseAbs().maxCoeff() <= abs_tol);
}

Geometry Geometry::axis_aligned(std::array<int, 3> dims, Eigen::Vector3d spacing) {
  Geometry g;
  g.dims = dims;
  g.spacing = spacing;
  g.affine = Eigen::Matrix4d::Identity();
  for (int a = 0; a < 3; ++a) g.affine(a, a) = spacing[a];
  return g;
}

RegionMasks regions_from_labels(const LabelVolume& labels) {
  RegionMasks r{BinaryMask(labels.geometry()), BinaryMask(labels.geometry()), BinaryMask(labels.geometry())};
  const std::size_t n = labels.size();
  for (std::size_t idx = 0; idx < n; ++idx) {
    const std::uint8_t v = labels[idx];
    if (v == 0) continue;
    r.wt[idx] = 1;
    if (v == kNecroticCore || v == kEnhancingTumor) r.tc[idx] = 1;
    if (v == kEnhancingTumor) r.et[idx] = 1;
  }
  return r;
}

LabelVolume labels_from_regions(const RegionMasks& regions) {
  const auto& g = regions.et.geometry();
  if (regions.tc.dims() != g.dims || regions.wt.dims() != g.dims)
    throw std::invalid_argument("labels_from_regions: region masks differ in dims");
  Volume<std::uint8_t> out(g);
  const std::size_t n = out.size();
  for (std::size_t idx = 0; idx < n; ++idx) {
    if (regions.et[idx]) out[idx] = kEnhancingTumor;
    else if (regions.tc[idx]) out[idx] = kNecroticCore;
    else if (regions.wt[idx]) out[idx] = kEdema;
  }
  return LabelVolume(std::move(out));
}

BinaryMask mask_of_label(const LabelVolume& labels, std::uint8_t value) {
  BinaryMask out(labels.geometry());
  const std::size_t n = labels.size();
  for (std::size_t idx = 0; idx < n; ++idx) out[idx] = labels[idx] == value ? 1 : 0;
  return out;
}

std::size_t count_foreground(const BinaryMask& mask) {
  std::size_t n = 0;
  for (std::uint8_t v : mask.data()) n += (v != 0);
  return n;
}

std::optional<std::array<std::array<int, 3>, 2>> foreground_bbox(const BinaryMask& mask) {
  const auto& d = mask.dims();
  std::array<int, 3> lo{d[0], d[1], d[2]};
  std::array<int, 3> hi{-1, -1, -1};
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        if (!mask[mask.linear(i, j, k)]) continue;
        lo = {std::min(lo[0], i), std::min(lo[1], j), std::min(lo[2], k)};
        hi = {std::max(hi[0], i), std::max(hi[1], j), std::max(hi[2], k)};
      }
  if (hi[0] < 0) return std::nullopt;
  return std::array<std::array<int, 3>, 2>{lo, hi};
}

}  // namespace segpipe
