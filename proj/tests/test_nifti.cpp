#include <doctest.h>

#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "segpipe/nifti.hpp"

using namespace segpipe;
using namespace segpipe::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("segpipe-nifti-" + std::to_string(::getpid()) + "-" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int counter;
};
int TempDir::counter = 0;

template <typename Fn>
bool throws_containing(Fn&& fn, const std::string& needle) {
  try {
    fn();
  } catch (const std::runtime_error& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

nifti::NiftiImage sample_image(nifti::DataType dt) {
  nifti::NiftiImage img;
  img.geom = make_geometry({3, 2, 2}, {1.25, 0.5, 2.0});
  img.geom.affine(0, 3) = 3.5;
  img.geom.affine(1, 3) = -7.0;
  img.geom.affine(2, 3) = 0.25;
  img.dtype = dt;
  const std::size_t n = img.geom.voxel_count();
  img.payload.resize(n * static_cast<std::size_t>(nifti::bytes_per_voxel(dt)));
  switch (dt) {
    case nifti::DataType::u8:
      for (std::size_t i = 0; i < n; ++i) img.payload[i] = static_cast<std::byte>(17 * i % 251);
      break;
    case nifti::DataType::i16: {
      std::vector<std::int16_t> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::int16_t>(1000 - 173 * static_cast<int>(i));
      std::memcpy(img.payload.data(), v.data(), img.payload.size());
      break;
    }
    case nifti::DataType::i32: {
      std::vector<std::int32_t> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::int32_t>(-50000 + 9871 * static_cast<int>(i));
      std::memcpy(img.payload.data(), v.data(), img.payload.size());
      break;
    }
    case nifti::DataType::f32: {
      std::vector<float> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = -1.5f + 0.625f * static_cast<float>(i);
      std::memcpy(img.payload.data(), v.data(), img.payload.size());
      break;
    }
    case nifti::DataType::f64: {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = 1e-3 * static_cast<double>(i) - 2.25;
      std::memcpy(img.payload.data(), v.data(), img.payload.size());
      break;
    }
  }
  return img;
}

}  // namespace

TEST_SUITE_BEGIN("nifti");

TEST_CASE("round trip is byte-exact for every datatype, plain and gzip") {
  TempDir tmp;
  for (nifti::DataType dt : {nifti::DataType::u8, nifti::DataType::i16, nifti::DataType::i32,
                             nifti::DataType::f32, nifti::DataType::f64}) {
    const nifti::NiftiImage img = sample_image(dt);
    for (const char* ext : {".nii", ".nii.gz"}) {
      const fs::path p1 = tmp.path / (std::string("a-") + std::to_string(static_cast<int>(dt)) + ext);
      const fs::path p2 = tmp.path / (std::string("b-") + std::to_string(static_cast<int>(dt)) + ext);
      nifti::write_nifti(img, p1);
      const nifti::NiftiImage back = nifti::read_nifti(p1);
      CHECK(back.dtype == img.dtype);
      CHECK(back.payload == img.payload);
      CHECK(back.geom.same_grid(img.geom));
      nifti::write_nifti(back, p2);
      CHECK(slurp(p1) == slurp(p2));
    }
  }
}

TEST_CASE("gzip writes are deterministic and sniffed independently of extension") {
  TempDir tmp;
  const nifti::NiftiImage img = sample_image(nifti::DataType::i16);
  const fs::path gz1 = tmp.path / "x1.nii.gz";
  const fs::path gz2 = tmp.path / "x2.nii.gz";
  nifti::write_nifti(img, gz1);
  nifti::write_nifti(img, gz2);
  const std::string b1 = slurp(gz1);
  CHECK(b1 == slurp(gz2));
  REQUIRE(b1.size() >= 2);
  CHECK(static_cast<unsigned char>(b1[0]) == 0x1f);
  CHECK(static_cast<unsigned char>(b1[1]) == 0x8b);

  // Forced gzip with a plain extension still reads back.
  const fs::path odd = tmp.path / "forced.nii";
  nifti::write_nifti(img, odd, 1);
  const std::string ob = slurp(odd);
  CHECK(static_cast<unsigned char>(ob[0]) == 0x1f);
  CHECK(nifti::read_nifti(odd).payload == img.payload);
}

TEST_CASE("grid round trip keeps values, spacing and affine") {
  TempDir tmp;
  VoxelGrid grid(make_geometry({4, 3, 2}, {1.25, 0.5, 2.0}));
  grid.data()[0] = -3.75f;
  for (std::size_t i = 1; i < grid.size(); ++i) grid[i] = 0.25f * static_cast<float>(i);
  const fs::path p = tmp.path / "grid.nii.gz";
  nifti::write_grid(grid, p);
  const VoxelGrid back = nifti::read_grid(p);
  CHECK(back.geometry().same_grid(grid.geometry()));
  CHECK(back.data() == grid.data());
}

TEST_CASE("label round trip and validation") {
  Rng rng(3);
  const LabelVolume labels = random_labels(rng, {5, 4, 3}, 0.5);
  TempDir tmp;
  const fs::path p = tmp.path / "seg.nii.gz";
  nifti::write_labels(labels, p);
  CHECK(nifti::read_labels(p) == labels);

  // A float file is not a valid label source.
  const fs::path f = tmp.path / "float.nii";
  nifti::write_grid(VoxelGrid(make_geometry({2, 2, 2}), 1.0f), f);
  CHECK_THROWS_AS(nifti::read_labels(f), std::runtime_error);

  // Integer data with values outside {0..3} is rejected as labels.
  nifti::NiftiImage img = sample_image(nifti::DataType::u8);
  img.payload[3] = static_cast<std::byte>(7);
  const fs::path bad = tmp.path / "bad-labels.nii";
  nifti::write_nifti(img, bad);
  CHECK_THROWS_AS(nifti::read_labels(bad), std::runtime_error);
}

TEST_CASE("scale slope and intercept apply to the grid view") {
  nifti::NiftiImage img = sample_image(nifti::DataType::i16);
  img.scl_slope = 2.0f;
  img.scl_inter = -1.0f;
  TempDir tmp;
  const fs::path p = tmp.path / "scaled.nii";
  nifti::write_nifti(img, p);
  const VoxelGrid grid = nifti::read_grid(p);
  std::vector<std::int16_t> raw(img.geom.voxel_count());
  std::memcpy(raw.data(), img.payload.data(), img.payload.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(grid[i] == doctest::Approx(2.0 * raw[i] - 1.0).epsilon(1e-6));
  CHECK_THROWS_AS(nifti::read_labels(p), std::runtime_error);  // scaled labels rejected
}

TEST_CASE("reader rejects garbage, wrong magic, big-endian and truncation") {
  TempDir tmp;
  CHECK_THROWS_AS(nifti::read_nifti(tmp.path / "missing.nii"), std::runtime_error);

  const nifti::NiftiImage img = sample_image(nifti::DataType::u8);
  const fs::path good = tmp.path / "good.nii";
  nifti::write_nifti(img, good);
  const std::string bytes = slurp(good);

  SUBCASE("bad magic") {
    std::string b = bytes;
    b[344] = 'x';
    spit(tmp.path / "badmagic.nii", b);
    CHECK(throws_containing([&] { nifti::read_nifti(tmp.path / "badmagic.nii"); }, "bad magic"));
  }
  SUBCASE("two-file magic") {
    std::string b = bytes;
    b[344] = 'n';
    b[345] = 'i';
    b[346] = '1';
    b[347] = '\0';
    spit(tmp.path / "twofile.nii", b);
    CHECK(throws_containing([&] { nifti::read_nifti(tmp.path / "twofile.nii"); }, "two-file"));
  }
  SUBCASE("big-endian header") {
    std::string b = bytes;
    std::swap(b[0], b[3]);
    std::swap(b[1], b[2]);
    spit(tmp.path / "be.nii", b);
    CHECK(throws_containing([&] { nifti::read_nifti(tmp.path / "be.nii"); }, "big-endian"));
  }
  SUBCASE("wrong sizeof_hdr") {
    std::string b = bytes;
    b[0] = 42;
    spit(tmp.path / "junk.nii", b);
    CHECK_THROWS_AS(nifti::read_nifti(tmp.path / "junk.nii"), std::runtime_error);
  }
  SUBCASE("unsupported datatype code") {
    std::string b = bytes;
    b[70] = static_cast<char>(128);  // RGB24
    b[71] = 0;
    spit(tmp.path / "rgb.nii", b);
    CHECK_THROWS_AS(nifti::read_nifti(tmp.path / "rgb.nii"), std::runtime_error);
  }
  SUBCASE("truncated payload") {
    spit(tmp.path / "trunc.nii", bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(nifti::read_nifti(tmp.path / "trunc.nii"), std::runtime_error);
  }
}

TEST_CASE("typed conversions round trip") {
  VoxelGrid grid(make_geometry({3, 3, 3}, {1.0, 1.0, 1.0}));
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<float>(i) - 13.0f;
  CHECK(nifti::to_grid(nifti::from_grid(grid)).data() == grid.data());

  Rng rng(8);
  const LabelVolume labels = random_labels(rng, {3, 3, 3}, 0.6);
  CHECK(nifti::to_labels(nifti::from_labels(labels)) == labels);
}

TEST_SUITE_END();
