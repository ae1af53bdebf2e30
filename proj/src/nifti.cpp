#include "segpipe/nifti.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace segpipe::nifti {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr float kVoxOffset = 352.0f;

#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == kHeaderSize, "nifti header layout");

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("nifti: " + path.string() + ": " + what);
}

struct GzReader {
  gzFile f = nullptr;
  explicit GzReader(const std::filesystem::path& path) {
    f = gzopen(path.string().c_str(), "rb");  // reads plain files transparently
  }
  ~GzReader() {
    if (f) gzclose(f);
  }
  bool read_exact(void* dst, std::size_t n) {
    std::size_t done = 0;
    auto* p = static_cast<unsigned char*>(dst);
    while (done < n) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30));
      const int got = gzread(f, p + done, chunk);
      if (got <= 0) return false;
      done += static_cast<std::size_t>(got);
    }
    return true;
  }
  bool skip(std::size_t n) {
    std::vector<char> buf(std::min<std::size_t>(n, 1 << 16));
    std::size_t left = n;
    while (left > 0) {
      const std::size_t chunk = std::min(left, buf.size());
      if (!read_exact(buf.data(), chunk)) return false;
      left -= chunk;
    }
    return true;
  }
};

Eigen::Matrix4d affine_from_quaternion(const Nifti1Header& h) {
  const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
  const double a2 = 1.0 - (b * b + c * c + d * d);
  const double a = a2 > 0.0 ? std::sqrt(a2) : 0.0;
  Eigen::Matrix3d rot;
  rot << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),
      2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b),
      2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c;
  const double qfac = h.pixdim[0] < 0.0f ? -1.0 : 1.0;
  Eigen::Matrix4d aff = Eigen::Matrix4d::Identity();
  for (int r = 0; r < 3; ++r) {
    aff(r, 0) = rot(r, 0) * h.pixdim[1];
    aff(r, 1) = rot(r, 1) * h.pixdim[2];
    aff(r, 2) = rot(r, 2) * h.pixdim[3] * qfac;
  }
  aff(0, 3) = h.qoffset_x;
  aff(1, 3) = h.qoffset_y;
  aff(2, 3) = h.qoffset_z;
  return aff;
}

template <typename T>
void convert_payload(const std::vector<std::byte>& payload, std::vector<float>& out, float slope, float inter,
                     bool apply_scale) {
  const std::size_t n = payload.size() / sizeof(T);
  out.resize(n);
  const T* src = reinterpret_cast<const T*>(payload.data());
  if (apply_scale) {
    for (std::size_t idx = 0; idx < n; ++idx)
      out[idx] = static_cast<float>(slope * static_cast<double>(src[idx]) + inter);
  } else {
    for (std::size_t idx = 0; idx < n; ++idx) out[idx] = static_cast<float>(src[idx]);
  }
}

template <typename T>
bool labels_from_payload(const std::vector<std::byte>& payload, std::vector<std::uint8_t>& out) {
  const std::size_t n = payload.size() / sizeof(T);
  out.resize(n);
  const T* src = reinterpret_cast<const T*>(payload.data());
  for (std::size_t idx = 0; idx < n; ++idx) {
    const T v = src[idx];
    if (v < T{0} || v > T{3}) return false;
    out[idx] = static_cast<std::uint8_t>(v);
  }
  return true;
}

}  // namespace

int bytes_per_voxel(DataType dt) {
  switch (dt) {
    case DataType::u8: return 1;
    case DataType::i16: return 2;
    case DataType::i32: return 4;
    case DataType::f32: return 4;
    case DataType::f64: return 8;
  }
  throw std::invalid_argument("unsupported nifti datatype");
}

NiftiImage read_nifti(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(path, "file not found");
  GzReader in(path);
  if (!in.f) fail(path, "cannot open");

  Nifti1Header h{};
  if (!in.read_exact(&h, kHeaderSize)) fail(path, "malformed header (shorter than 348 bytes)");

  if (h.sizeof_hdr != 348) {
    std::int32_t swapped;
    auto* p = reinterpret_cast<const unsigned char*>(&h.sizeof_hdr);
    unsigned char rev[4] = {p[3], p[2], p[1], p[0]};
    std::memcpy(&swapped, rev, 4);
    if (swapped == 348) fail(path, "big-endian NIfTI is not supported");
    fail(path, "malformed header (sizeof_hdr != 348)");
  }
  const bool single_file = std::memcmp(h.magic, "n+1", 4) == 0;
  if (!single_file) {
    if (std::memcmp(h.magic, "ni1", 4) == 0) fail(path, "two-file NIfTI (.hdr/.img) is not supported");
    fail(path, "malformed header (bad magic)");
  }
  if (h.dim[0] < 1 || h.dim[0] > 7) fail(path, "malformed header (dim[0] out of range)");
  for (int a = h.dim[0]; a >= 4; --a)
    if (h.dim[a] > 1) fail(path, "only 3D volumes are supported");

  NiftiImage img;
  switch (h.datatype) {
    case 2: img.dtype = DataType::u8; break;
    case 4: img.dtype = DataType::i16; break;
    case 8: img.dtype = DataType::i32; break;
    case 16: img.dtype = DataType::f32; break;
    case 64: img.dtype = DataType::f64; break;
    default: fail(path, "unsupported datatype code " + std::to_string(h.datatype));
  }

  img.geom.dims = {h.dim[1], std::max<int>(1, h.dim[0] >= 2 ? h.dim[2] : 1),
                   std::max<int>(1, h.dim[0] >= 3 ? h.dim[3] : 1)};
  for (int a = 0; a < 3; ++a) {
    const float pd = h.pixdim[a + 1];
    img.geom.spacing[a] = (a < h.dim[0] && pd > 0.0f) ? pd : 1.0;
  }
  if (h.sform_code > 0) {
    Eigen::Matrix4d aff = Eigen::Matrix4d::Identity();
    for (int c = 0; c < 4; ++c) {
      aff(0, c) = h.srow_x[c];
      aff(1, c) = h.srow_y[c];
      aff(2, c) = h.srow_z[c];
    }
    img.geom.affine = aff;
  } else if (h.qform_code > 0) {
    img.geom.affine = affine_from_quaternion(h);
  } else {
    img.geom.affine = Geometry::axis_aligned(img.geom.dims, img.geom.spacing).affine;
  }
  try {
    img.geom.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, std::string("inconsistent header geometry: ") + e.what());
  }

  img.scl_slope = h.scl_slope;
  img.scl_inter = h.scl_inter;

  const std::size_t offset = static_cast<std::size_t>(h.vox_offset);
  if (offset < kHeaderSize + 4) fail(path, "malformed header (vox_offset too small)");
  if (!in.skip(offset - kHeaderSize)) fail(path, "truncated file (before voxel data)");

  const std::size_t nbytes = img.geom.voxel_count() * static_cast<std::size_t>(bytes_per_voxel(img.dtype));
  img.payload.resize(nbytes);
  if (!in.read_exact(img.payload.data(), nbytes)) fail(path, "truncated voxel data");
  return img;
}

void write_nifti(const NiftiImage& img, const std::filesystem::path& path, int gzip) {
  img.geom.validate();
  const std::size_t expect = img.geom.voxel_count() * static_cast<std::size_t>(bytes_per_voxel(img.dtype));
  if (img.payload.size() != expect) fail(path, "payload size does not match dims/datatype");

  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(img.geom.dims[0]);
  h.dim[2] = static_cast<std::int16_t>(img.geom.dims[1]);
  h.dim[3] = static_cast<std::int16_t>(img.geom.dims[2]);
  for (int a = 4; a < 8; ++a) h.dim[a] = 1;
  h.datatype = static_cast<std::int16_t>(img.dtype);
  h.bitpix = static_cast<std::int16_t>(8 * bytes_per_voxel(img.dtype));
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(img.geom.spacing[a]);
  h.vox_offset = kVoxOffset;
  h.scl_slope = img.scl_slope;
  h.scl_inter = img.scl_inter;
  h.xyzt_units = 10;  // mm | sec
  std::snprintf(h.descrip, sizeof(h.descrip), "segpipe");
  h.sform_code = 1;
  h.qform_code = 0;
  for (int c = 0; c < 4; ++c) {
    h.srow_x[c] = static_cast<float>(img.geom.affine(0, c));
    h.srow_y[c] = static_cast<float>(img.geom.affine(1, c));
    h.srow_z[c] = static_cast<float>(img.geom.affine(2, c));
  }
  std::memcpy(h.magic, "n+1", 4);

  const char zero_ext[4] = {0, 0, 0, 0};
  const bool use_gzip = gzip >= 0 ? gzip > 0 : path.extension() == ".gz";
  if (use_gzip) {
    gzFile f = gzopen(path.string().c_str(), "wb6");
    if (!f) fail(path, "cannot open for writing");
    bool ok = gzwrite(f, &h, kHeaderSize) == static_cast<int>(kHeaderSize) && gzwrite(f, zero_ext, 4) == 4;
    std::size_t done = 0;
    while (ok && done < img.payload.size()) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(img.payload.size() - done, 1u << 30));
      ok = gzwrite(f, img.payload.data() + done, chunk) == static_cast<int>(chunk);
      done += chunk;
    }
    const int rc = gzclose(f);
    if (!ok || rc != Z_OK) fail(path, "write failed");
  } else {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(path, "cannot open for writing");
    out.write(reinterpret_cast<const char*>(&h), kHeaderSize);
    out.write(zero_ext, 4);
    out.write(reinterpret_cast<const char*>(img.payload.data()), static_cast<std::streamsize>(img.payload.size()));
    out.flush();
    if (!out) fail(path, "write failed");
  }
}

VoxelGrid to_grid(const NiftiImage& img) {
  std::vector<float> values;
  const bool scale = img.scaled();
  switch (img.dtype) {
    case DataType::u8: convert_payload<std::uint8_t>(img.payload, values, img.scl_slope, img.scl_inter, scale); break;
    case DataType::i16: convert_payload<std::int16_t>(img.payload, values, img.scl_slope, img.scl_inter, scale); break;
    case DataType::i32: convert_payload<std::int32_t>(img.payload, values, img.scl_slope, img.scl_inter, scale); break;
    case DataType::f32: convert_payload<float>(img.payload, values, img.scl_slope, img.scl_inter, scale); break;
    case DataType::f64: convert_payload<double>(img.payload, values, img.scl_slope, img.scl_inter, scale); break;
  }
  return VoxelGrid(img.geom, std::move(values));
}

LabelVolume to_labels(const NiftiImage& img) {
  if (img.dtype == DataType::f32 || img.dtype == DataType::f64)
    throw std::runtime_error("nifti: label view requires an integer datatype");
  if (img.scaled()) throw std::runtime_error("nifti: label view requires unscaled data");
  std::vector<std::uint8_t> values;
  bool ok = false;
  switch (img.dtype) {
    case DataType::u8: ok = labels_from_payload<std::uint8_t>(img.payload, values); break;
    case DataType::i16: ok = labels_from_payload<std::int16_t>(img.payload, values); break;
    case DataType::i32: ok = labels_from_payload<std::int32_t>(img.payload, values); break;
    default: break;
  }
  if (!ok) throw std::runtime_error("nifti: label view requested but voxel values fall outside {0,1,2,3}");
  return LabelVolume(Volume<std::uint8_t>(img.geom, std::move(values)));
}

NiftiImage from_grid(const VoxelGrid& grid) {
  NiftiImage img;
  img.geom = grid.geometry();
  img.dtype = DataType::f32;
  img.payload.resize(grid.size() * sizeof(float));
  std::memcpy(img.payload.data(), grid.data().data(), img.payload.size());
  return img;
}

NiftiImage from_labels(const LabelVolume& labels) {
  NiftiImage img;
  img.geom = labels.geometry();
  img.dtype = DataType::u8;
  img.payload.resize(labels.size());
  std::memcpy(img.payload.data(), labels.vol().data().data(), img.payload.size());
  return img;
}

VoxelGrid read_grid(const std::filesystem::path& path) { return to_grid(read_nifti(path)); }

LabelVolume read_labels(const std::filesystem::path& path) { return to_labels(read_nifti(path)); }

void write_grid(const VoxelGrid& grid, const std::filesystem::path& path, int gzip) {
  write_nifti(from_grid(grid), path, gzip);
}

void write_labels(const LabelVolume& labels, const std::filesystem::path& path, int gzip) {
  write_nifti(from_labels(labels), path, gzip);
}

}  // namespace segpipe::nifti
