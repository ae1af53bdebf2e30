#include <doctest.h>

#include <algorithm>
#include <set>

#include "helpers.hpp"
#include "segpipe/volume.hpp"

using namespace segpipe;
using namespace segpipe::testing;

TEST_SUITE_BEGIN("volume");

TEST_CASE("connectivity enum values are the neighbor counts") {
  CHECK(static_cast<int>(Connectivity::faces6) == 6);
  CHECK(static_cast<int>(Connectivity::edges18) == 18);
  CHECK(static_cast<int>(Connectivity::corners26) == 26);
  CHECK(connectivity_from_int(6) == Connectivity::faces6);
  CHECK(connectivity_from_int(18) == Connectivity::edges18);
  CHECK(connectivity_from_int(26) == Connectivity::corners26);
  CHECK_THROWS_AS(connectivity_from_int(5), std::invalid_argument);
  CHECK_THROWS_AS(connectivity_from_int(0), std::invalid_argument);
}

TEST_CASE("neighbor offsets are unique, symmetric and radius one") {
  for (Connectivity conn : {Connectivity::faces6, Connectivity::edges18, Connectivity::corners26}) {
    const auto& offs = neighbor_offsets(conn);
    CHECK(offs.size() == static_cast<std::size_t>(conn));
    std::set<std::array<int, 3>> seen(offs.begin(), offs.end());
    CHECK(seen.size() == offs.size());
    for (const auto& o : offs) {
      CHECK(seen.count({-o[0], -o[1], -o[2]}) == 1);
      CHECK(std::max({std::abs(o[0]), std::abs(o[1]), std::abs(o[2])}) == 1);
      const int manhattan = std::abs(o[0]) + std::abs(o[1]) + std::abs(o[2]);
      if (conn == Connectivity::faces6) CHECK(manhattan == 1);
      if (conn == Connectivity::edges18) CHECK(manhattan <= 2);
    }
  }
}

TEST_CASE("geometry counts, volume and validation") {
  const Geometry g = Geometry::axis_aligned({4, 5, 6}, {1.0, 2.0, 0.5});
  CHECK(g.voxel_count() == 120);
  CHECK(g.voxel_volume() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_NOTHROW(g.validate());

  Geometry bad = g;
  bad.affine(0, 0) = 3.0;  // column norm no longer matches spacing[0]
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  Geometry neg = g;
  neg.dims = {0, 5, 6};
  CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}

TEST_CASE("same_grid tolerates tiny affine noise only") {
  const Geometry a = Geometry::axis_aligned({4, 4, 4}, {1.0, 1.0, 1.0});
  Geometry b = a;
  b.affine(0, 3) = 5e-5;
  CHECK(a.same_grid(b));
  b.affine(0, 3) = 0.5;
  CHECK_FALSE(a.same_grid(b));
  Geometry c = a;
  c.dims = {4, 4, 5};
  CHECK_FALSE(a.same_grid(c));
}

TEST_CASE("volume layout has the first axis fastest") {
  const Geometry g = Geometry::axis_aligned({3, 4, 5}, {1.0, 1.0, 1.0});
  VoxelGrid v(g);
  CHECK(v.linear(1, 0, 0) == 1);
  CHECK(v.linear(0, 1, 0) == 3);
  CHECK(v.linear(0, 0, 1) == 12);
  v.at(2, 3, 4) = 7.5f;
  CHECK(v[v.size() - 1] == 7.5f);
  CHECK(v.in_bounds(2, 3, 4));
  CHECK_FALSE(v.in_bounds(3, 0, 0));
  CHECK_FALSE(v.in_bounds(0, -1, 0));
}

TEST_CASE("volume construction validates data length") {
  const Geometry g = Geometry::axis_aligned({2, 2, 2}, {1.0, 1.0, 1.0});
  CHECK_THROWS_AS(VoxelGrid(g, std::vector<float>(7, 0.0f)), std::invalid_argument);
  const VoxelGrid filled(g, 3.0f);
  CHECK(std::all_of(filled.data().begin(), filled.data().end(), [](float x) { return x == 3.0f; }));
}

TEST_CASE("label volume rejects values outside 0..3") {
  const Geometry g = Geometry::axis_aligned({2, 1, 1}, {1.0, 1.0, 1.0});
  Volume<std::uint8_t> raw(g, 0);
  raw[1] = 4;
  CHECK_THROWS_AS(LabelVolume(std::move(raw)), std::invalid_argument);
}

TEST_CASE("regions nest and the round trip is the identity") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const LabelVolume labels = random_labels(rng, {7, 6, 5}, 0.35);
    const RegionMasks regions = regions_from_labels(labels);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      CHECK(regions.et[i] <= regions.tc[i]);
      CHECK(regions.tc[i] <= regions.wt[i]);
      CHECK(regions.et[i] == (labels[i] == 3 ? 1 : 0));
      CHECK(regions.tc[i] == ((labels[i] == 1 || labels[i] == 3) ? 1 : 0));
      CHECK(regions.wt[i] == (labels[i] != 0 ? 1 : 0));
    }
    CHECK(labels_from_regions(regions) == labels);
  }
}

TEST_CASE("hierarchical decode resolves inconsistent triples inner-first") {
  const Geometry g = Geometry::axis_aligned({4, 1, 1}, {1.0, 1.0, 1.0});
  RegionMasks r{BinaryMask(g), BinaryMask(g), BinaryMask(g)};
  // voxel 0: et only, voxel 1: tc only, voxel 2: wt only, voxel 3: nothing.
  r.et[0] = 1;
  r.tc[1] = 1;
  r.wt[2] = 1;
  const LabelVolume out = labels_from_regions(r);
  CHECK(out[0] == 3);
  CHECK(out[1] == 1);
  CHECK(out[2] == 2);
  CHECK(out[3] == 0);
}

TEST_CASE("mask_of_label and count_foreground agree with direct counting") {
  Rng rng(7);
  const LabelVolume labels = random_labels(rng, {6, 6, 6}, 0.4);
  std::size_t direct[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) ++direct[labels[i]];
  for (std::uint8_t v = 0; v <= 3; ++v) {
    const BinaryMask m = mask_of_label(labels, v);
    CHECK(count_foreground(m) == direct[v]);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] == (labels[i] == v ? 1 : 0));
  }
}

TEST_CASE("foreground bbox is inclusive and empty masks have none") {
  const BinaryMask empty(Geometry::axis_aligned({3, 3, 3}, {1.0, 1.0, 1.0}));
  CHECK_FALSE(foreground_bbox(empty).has_value());

  const BinaryMask box = box_mask({8, 8, 8}, {2, 3, 1}, {5, 3, 6});
  const auto bbox = foreground_bbox(box);
  REQUIRE(bbox.has_value());
  CHECK((*bbox)[0] == std::array<int, 3>{2, 3, 1});
  CHECK((*bbox)[1] == std::array<int, 3>{5, 3, 6});
}

TEST_CASE("crop copies the inclusive box and keeps spacing") {
  Rng rng(11);
  VoxelGrid v(make_geometry({6, 5, 4}, {1.0, 2.0, 3.0}));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(rng.uniform01());
  const VoxelGrid c = crop_volume(v, {1, 0, 2}, {4, 3, 3});
  CHECK(c.dims() == std::array<int, 3>{4, 4, 2});
  CHECK(c.spacing() == Eigen::Vector3d(1.0, 2.0, 3.0));
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) CHECK(c.at(i, j, k) == v.at(i + 1, j, k + 2));
  CHECK_THROWS_AS(crop_volume(v, {0, 0, 0}, {6, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(crop_volume(v, {2, 0, 0}, {1, 1, 1}), std::invalid_argument);
}

TEST_SUITE_END();
