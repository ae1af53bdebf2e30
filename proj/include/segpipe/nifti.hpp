#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "segpipe/volume.hpp"

/// NIfTI-1 reader/writer. Single-file little-endian volumes (.nii, .nii.gz)
/// with the 348-byte fixed header; extensions are ignored on read and never
/// written. Supported voxel datatypes: uint8, int16, int32, float32,
/// float64.
namespace segpipe::nifti {

enum class DataType : std::int16_t {
  u8 = 2,
  i16 = 4,
  i32 = 8,
  f32 = 16,
  f64 = 64,
};

int bytes_per_voxel(DataType dt);

/// Raw decoded volume: geometry plus the voxel payload exactly as stored
/// (little-endian, untransformed). Keeping the payload verbatim makes
/// write(read(f)) byte-exact per datatype.
struct NiftiImage {
  Geometry geom;
  DataType dtype = DataType::f32;
  std::vector<std::byte> payload;
  float scl_slope = 0.0f;  // 0 or 1 mean "unscaled"
  float scl_inter = 0.0f;

  bool scaled() const { return !(scl_slope == 0.0f || (scl_slope == 1.0f && scl_inter == 0.0f)); }
};

/// Throws std::runtime_error on missing file, malformed header, unsupported
/// datatype, or big-endian storage.
NiftiImage read_nifti(const std::filesystem::path& path);

/// gzip is inferred from the path when gzip < 0 (".gz" suffix), otherwise
/// forced. The written stream is deterministic (no timestamps).
void write_nifti(const NiftiImage& img, const std::filesystem::path& path, int gzip = -1);

/// Scalar view: payload converted to float with scl slope/intercept applied.
VoxelGrid read_grid(const std::filesystem::path& path);

/// Label view: integer datatypes only, unscaled, values within {0..3}.
LabelVolume read_labels(const std::filesystem::path& path);

void write_grid(const VoxelGrid& grid, const std::filesystem::path& path, int gzip = -1);

/// Labels are stored as uint8.
void write_labels(const LabelVolume& labels, const std::filesystem::path& path, int gzip = -1);

/// Conversions between the raw and typed views.
VoxelGrid to_grid(const NiftiImage& img);
LabelVolume to_labels(const NiftiImage& img);
NiftiImage from_grid(const VoxelGrid& grid);
NiftiImage from_labels(const LabelVolume& labels);

}  // namespace segpipe::nifti
