#include "segpipe/components.hpp"

#include <numeric>

namespace segpipe {

namespace {

// Union-find over provisional labels, path halving.
class DisjointSet {
 public:
  std::int32_t make() {
    parent_.push_back(static_cast<std::int32_t>(parent_.size()));
    return parent_.back();
  }
  std::int32_t find(std::int32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) parent_[b] = a; else parent_[a] = b;
  }
  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::int32_t> parent_;
};

// Backward half of the neighborhood: offsets strictly preceding the current
// voxel in scan order.
std::vector<std::array<int, 3>> backward_offsets(Connectivity conn) {
  std::vector<std::array<int, 3>> out;
  for (const auto& off : neighbor_offsets(conn)) {
    if (off[2] < 0 || (off[2] == 0 && (off[1] < 0 || (off[1] == 0 && off[0] < 0)))) out.push_back(off);
  }
  return out;
}

}  // namespace

ComponentLabeling connected_components(const BinaryMask& mask, Connectivity conn) {
  const auto& d = mask.dims();
  Volume<std::int32_t> provisional(mask.geometry(), -1);
  DisjointSet ds;
  const auto offs = backward_offsets(conn);

  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const std::size_t idx = mask.linear(i, j, k);
        if (!mask[idx]) continue;
        std::int32_t label = -1;
        for (const auto& off : offs) {
          const int ni = i + off[0], nj = j + off[1], nk = k + off[2];
          if (!mask.in_bounds(ni, nj, nk)) continue;
          const std::int32_t nl = provisional[mask.linear(ni, nj, nk)];
          if (nl < 0) continue;
          if (label < 0) label = ds.find(nl);
          else ds.unite(label, nl);
        }
        if (label < 0) label = ds.make();
        provisional[idx] = label;
      }

  // Final ids in first-appearance scan order == ascending min linear index.
  std::vector<std::int32_t> remap(ds.size(), 0);
  ComponentLabeling out;
  out.labels = Volume<std::int32_t>(mask.geometry(), 0);
  out.connectivity = conn;
  std::int32_t next_id = 0;
  const std::size_t n = mask.size();
  for (std::size_t idx = 0; idx < n; ++idx) {
    const std::int32_t p = provisional[idx];
    if (p < 0) continue;
    const std::int32_t root = ds.find(p);
    if (remap[root] == 0) {
      remap[root] = ++next_id;
      out.sizes.push_back(0);
    }
    out.labels[idx] = remap[root];
    ++out.sizes[remap[root] - 1];
  }
  return out;
}

BinaryMask component_mask(const ComponentLabeling& cl, int id) {
  BinaryMask out(cl.labels.geometry());
  const std::size_t n = cl.labels.size();
  for (std::size_t idx = 0; idx < n; ++idx) out[idx] = cl.labels[idx] == id ? 1 : 0;
  return out;
}

BinaryMask remove_small_components(const BinaryMask& mask, std::int64_t min_voxels, Connectivity conn) {
  if (min_voxels <= 0) return mask;
  const ComponentLabeling cl = connected_components(mask, conn);
  BinaryMask out(mask.geometry());
  const std::size_t n = mask.size();
  for (std::size_t idx = 0; idx < n; ++idx) {
    const std::int32_t id = cl.labels[idx];
    out[idx] = (id > 0 && cl.sizes[id - 1] >= min_voxels) ? 1 : 0;
  }
  return out;
}

BinaryMask dilate(const BinaryMask& mask, int radius_voxels, Connectivity conn) {
  if (radius_voxels <= 0) throw std::invalid_argument("dilate: radius must be positive");
  const auto& d = mask.dims();
  const auto& offs = neighbor_offsets(conn);
  BinaryMask cur = mask;
  for (int it = 0; it < radius_voxels; ++it) {
    BinaryMask next = cur;
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          if (cur[cur.linear(i, j, k)]) continue;
          for (const auto& off : offs) {
            const int ni = i + off[0], nj = j + off[1], nk = k + off[2];
            if (cur.in_bounds(ni, nj, nk) && cur[cur.linear(ni, nj, nk)]) {
              next[next.linear(i, j, k)] = 1;
              break;
            }
          }
        }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace segpipe
