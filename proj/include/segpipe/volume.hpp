#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

/// Core dense 3D volume types shared by every pipeline stage.
///
/// Voxel data is stored in NIfTI disk order: for a voxel index (i, j, k)
/// the linear offset is  i + dims[0] * (j + dims[1] * k),  i.e. the first
/// axis varies fastest. All coordinate conventions in the toolkit (surface
/// extraction, texture directions, plane names) refer to these axes:
/// axial slices fix k, coronal slices fix j, sagittal slices fix i.
///
/// Types are treated as immutable once constructed; operations are pure
/// functions returning new volumes, so values can be shared freely across
/// threads.
namespace segpipe {

enum class Connectivity : int { faces6 = 6, edges18 = 18, corners26 = 26 };

Connectivity connectivity_from_int(int value);

/// Neighbor offsets (di,dj,dk) for a connectivity, excluding (0,0,0).
const std::vector<std::array<int, 3>>& neighbor_offsets(Connectivity conn);

/// Grid metadata: voxel counts, physical spacing (mm) and the voxel->world
/// affine. The affine's upper-left 3x3 must have column norms equal to the
/// spacing (within 1e-6 relative), which holds for any rotation + scaling.
struct Geometry {
  std::array<int, 3> dims{0, 0, 0};
  Eigen::Vector3d spacing{1.0, 1.0, 1.0};
  Eigen::Matrix4d affine = Eigen::Matrix4d::Identity();

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }

  /// Throws std::invalid_argument if dims/spacing/affine are inconsistent.
  void validate() const;

  /// Same dims, spacing and affine (affine entries within abs_tol).
  bool same_grid(const Geometry& other, double abs_tol = 1e-4) const;

  /// Axis-aligned geometry: affine = diag(spacing), zero origin.
  static Geometry axis_aligned(std::array<int, 3> dims, Eigen::Vector3d spacing);
};

/// Dense scalar field over a Geometry. Scalar is the storage type; numeric
/// work happens in double regardless.
template <typename Scalar>
class Volume {
 public:
  Volume() = default;

  Volume(Geometry geom, Scalar fill = Scalar{0}) : geom_(std::move(geom)) {
    geom_.validate();
    data_.assign(geom_.voxel_count(), fill);
  }

  Volume(Geometry geom, std::vector<Scalar> data) : geom_(std::move(geom)), data_(std::move(data)) {
    geom_.validate();
    if (data_.size() != geom_.voxel_count())
      throw std::invalid_argument("Volume: data length does not match dims");
  }

  const Geometry& geometry() const { return geom_; }
  const std::array<int, 3>& dims() const { return geom_.dims; }
  const Eigen::Vector3d& spacing() const { return geom_.spacing; }
  std::size_t size() const { return data_.size(); }

  std::size_t linear(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(geom_.dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(geom_.dims[1]) * static_cast<std::size_t>(k));
  }
  bool in_bounds(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < geom_.dims[0] && j < geom_.dims[1] && k < geom_.dims[2];
  }

  Scalar& at(int i, int j, int k) { return data_[linear(i, j, k)]; }
  Scalar at(int i, int j, int k) const { return data_[linear(i, j, k)]; }
  Scalar& operator[](std::size_t idx) { return data_[idx]; }
  Scalar operator[](std::size_t idx) const { return data_[idx]; }

  std::vector<Scalar>& data() { return data_; }
  const std::vector<Scalar>& data() const { return data_; }

  bool operator==(const Volume& other) const {
    return geom_.dims == other.geom_.dims && data_ == other.data_;
  }

 private:
  Geometry geom_;
  std::vector<Scalar> data_;
};

using VoxelGrid = Volume<float>;

/// Binary field; values are 0/1 by convention.
using BinaryMask = Volume<std::uint8_t>;

/// BraTS 2023 adult-glioma label integers.
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kNecroticCore = 1;   // NCR
inline constexpr std::uint8_t kEdema = 2;          // ED
inline constexpr std::uint8_t kEnhancingTumor = 3; // ET

/// Integer label field restricted to {0 BG, 1 NCR, 2 ED, 3 ET}; construction
/// validates the range.
class LabelVolume {
 public:
  LabelVolume() = default;
  explicit LabelVolume(Volume<std::uint8_t> vol) : vol_(std::move(vol)) {
    for (std::uint8_t v : vol_.data())
      if (v > 3) throw std::invalid_argument("LabelVolume: voxel value " + std::to_string(v) + " outside {0,1,2,3}");
  }

  const Geometry& geometry() const { return vol_.geometry(); }
  const std::array<int, 3>& dims() const { return vol_.dims(); }
  std::size_t size() const { return vol_.size(); }
  std::uint8_t operator[](std::size_t idx) const { return vol_[idx]; }
  std::uint8_t at(int i, int j, int k) const { return vol_.at(i, j, k); }

  const Volume<std::uint8_t>& vol() const { return vol_; }

  bool operator==(const LabelVolume& other) const { return vol_ == other.vol_; }

 private:
  Volume<std::uint8_t> vol_;
};

/// The three nested evaluation regions: enhancing tumor (label 3), tumor
/// core (labels 1|3) and whole tumor (labels 1|2|3).
struct RegionMasks {
  BinaryMask et;
  BinaryMask tc;
  BinaryMask wt;
};

inline constexpr std::array<const char*, 3> kRegionNames{"ET", "TC", "WT"};

/// wt = {1,2,3}, tc = {1,3}, et = {3}; nesting et <= tc <= wt holds by
/// construction.
RegionMasks regions_from_labels(const LabelVolume& labels);

///// Hierarchical decode with inner-region priority: 3 where et, else 1 where
/// tc, else 2 where wt, else 0. Inconsistent triples resolve in that order.
LabelVolume labels_from_regions(const RegionMasks& regions);

/// Per-label binary mask (labels == value).
BinaryMask mask_of_label(const LabelVolume& labels, std::uint8_t value);

std::size_t count_foreground(const BinaryMask& mask);

/// Inclusive voxel-index bounding box {lo, hi} of the foreground, or nullopt
/// for an empty mask.
std::optional<std::array<std::array<int, 3>, 2>> foreground_bbox(const BinaryMask& mask);

/// Sub-volume copy over the inclusive index box [lo, hi]; the result gets an
/// axis-aligned geometry with the source spacing (crops are working buffers,
/// not world-registered volumes).
template <typename Scalar>
Volume<Scalar> crop_volume(const Volume<Scalar>& vol, std::array<int, 3> lo, std::array<int, 3> hi) {
  for (int a = 0; a < 3; ++a)
    if (lo[a] < 0 || hi[a] < lo[a] || hi[a] >= vol.dims()[a])
      throw std::invalid_argument("crop_volume: box out of bounds");
  Geometry g = Geometry::axis_aligned({hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}, vol.spacing());
  Volume<Scalar> out(g);
  for (int k = lo[2]; k <= hi[2]; ++k)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int i = lo[0]; i <= hi[0]; ++i) out.at(i - lo[0], j - lo[1], k - lo[2]) = vol.at(i, j, k);
  return out;
}

}  // namespace segpipe
