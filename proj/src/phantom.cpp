#include "segpipe/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "segpipe/rng.hpp"

namespace segpipe {

void PhantomSpec::validate() const {
  for (int d : dims)
    if (d < 8) throw std::invalid_argument("phantom dims must be at least 8");
  for (double s : spacing)
    if (!(s > 0)) throw std::invalid_argument("phantom spacing must be positive");
  if (min_lesions < 0 || max_lesions < min_lesions)
    throw std::invalid_argument("phantom lesion count range is invalid");
  if (!(min_radius_mm > 0) || max_radius_mm < min_radius_mm)
    throw std::invalid_argument("phantom radius range is invalid");
  if (et_fraction < 0 || ncr_fraction < 0 || et_fraction + ncr_fraction > 1)
    throw std::invalid_argument("phantom tissue fractions must be nonnegative and sum to <= 1");
  if (noise_sigma < 0) throw std::invalid_argument("phantom noise sigma must be nonnegative");
}

namespace {

Geometry phantom_geometry(const PhantomSpec& spec) {
  Geometry geo;
  geo.dims = spec.dims;
  geo.spacing = Eigen::Vector3d(spec.spacing[0], spec.spacing[1], spec.spacing[2]);
  geo.affine = Eigen::Matrix4d::Identity();
  geo.affine(0, 0) = spec.spacing[0];
  geo.affine(1, 1) = spec.spacing[1];
  geo.affine(2, 2) = spec.spacing[2];
  return geo;
}

/// Mean intensity per sequence and tissue class (background, NCR, edema, ET).
/// The values only need to give each sequence a distinct, plausible contrast.
constexpr double kClassMeans[4][4] = {
    {0.20, 0.35, 0.30, 0.45},  // t1
    {0.20, 0.30, 0.35, 0.80},  // t1ce
    {0.25, 0.50, 0.70, 0.50},  // t2
    {0.25, 0.45, 0.75, 0.55},  // flair
};

}  // namespace

CaseBundle generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Geometry geo = phantom_geometry(spec);
  Rng rng(spec.seed);

  Volume<std::uint8_t> labels(geo, kBackground);
  const int n_lesions =
      spec.min_lesions +
      static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_lesions - spec.min_lesions + 1)));

  const double r_et = std::cbrt(spec.et_fraction);
  const double r_ncr = std::cbrt(spec.et_fraction + spec.ncr_fraction);

  for (int lesion = 0; lesion < n_lesions; ++lesion) {
    double axes[3];
    for (double& a : axes) a = rng.uniform(spec.min_radius_mm, spec.max_radius_mm);
    // Center such that the lesion's bounding box stays inside the volume.
    double center[3];
    for (int d = 0; d < 3; ++d) {
      const double extent = static_cast<double>(spec.dims[d]) * spec.spacing[d];
      const double margin = axes[d] + spec.spacing[d];
      if (2 * margin >= extent)
        throw std::invalid_argument("phantom lesion does not fit inside the volume");
      center[d] = rng.uniform(margin, extent - margin);
    }

    for (int k = 0; k < spec.dims[2]; ++k)
      for (int j = 0; j < spec.dims[1]; ++j)
        for (int i = 0; i < spec.dims[0]; ++i) {
          const std::size_t idx = labels.linear(i, j, k);
          if (labels[idx] != kBackground) continue;  // first lesion wins overlaps
          const double dx = (i + 0.5) * spec.spacing[0] - center[0];
          const double dy = (j + 0.5) * spec.spacing[1] - center[1];
          const double dz = (k + 0.5) * spec.spacing[2] - center[2];
          const double rho = std::sqrt(dx * dx / (axes[0] * axes[0]) +
                                       dy * dy / (axes[1] * axes[1]) +
                                       dz * dz / (axes[2] * axes[2]));
          if (rho <= r_et)
            labels[idx] = kEnhancingTumor;
          else if (rho <= r_ncr)
            labels[idx] = kNecroticCore;
          else if (rho <= 1.0)
            labels[idx] = kEdema;
        }
  }

  CaseBundle bundle;
  bundle.case_id = "phantom-" + std::to_string(spec.seed);
  std::array<VoxelGrid*, 4> grids{&bundle.t1, &bundle.t1ce, &bundle.t2, &bundle.flair};
  for (std::size_t s = 0; s < 4; ++s) {
    *grids[s] = VoxelGrid(geo, 0.0f);
    for (std::size_t idx = 0; idx < grids[s]->size(); ++idx) {
      const double mean = kClassMeans[s][labels[idx]];
      (*grids[s])[idx] = static_cast<float>(mean + spec.noise_sigma * rng.normal());
    }
  }
  bundle.labels = LabelVolume(std::move(labels));
  return bundle;
}

VoxelGrid gaussian_blur(const VoxelGrid& grid, double sigma_voxels) {
  if (sigma_voxels <= 0) return grid;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_voxels));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius) + 1);
  double total = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    const double w = std::exp(-0.5 * (t / sigma_voxels) * (t / sigma_voxels));
    kernel[static_cast<std::size_t>(t + radius)] = w;
    total += w;
  }
  for (double& w : kernel) w /= total;

  const auto& d = grid.dims();
  VoxelGrid src = grid;
  VoxelGrid dst(grid.geometry(), 0.0f);
  for (int axis = 0; axis < 3; ++axis) {
    const std::array<int, 3> step{axis == 0 ? 1 : 0, axis == 1 ? 1 : 0, axis == 2 ? 1 : 0};
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          double acc = 0.0;
          for (int t = -radius; t <= radius; ++t) {
            const int ni = i + t * step[0], nj = j + t * step[1], nk = k + t * step[2];
            if (!src.in_bounds(ni, nj, nk)) continue;  // zero padding
            acc += kernel[static_cast<std::size_t>(t + radius)] * src.at(ni, nj, nk);
          }
          dst[dst.linear(i, j, k)] = static_cast<float>(acc);
        }
    std::swap(src, dst);
  }
  return src;
}

RegionProbabilityMaps phantom_prob_maps(const LabelVolume& labels, double blur_sigma,
                                        double corruption, std::uint64_t seed) {
  if (corruption < 0) throw std::invalid_argument("corruption must be nonnegative");
  const RegionMasks regions = regions_from_labels(labels);
  Rng rng(seed);

  const auto to_probs = [&](const BinaryMask& mask) {
    VoxelGrid probs(mask.geometry(), 0.0f);
    for (std::size_t idx = 0; idx < mask.size(); ++idx) probs[idx] = mask[idx] ? 1.0f : 0.0f;
    probs = gaussian_blur(probs, blur_sigma);
    if (corruption > 0)
      for (std::size_t idx = 0; idx < probs.size(); ++idx) {
        const double v = probs[idx] + rng.uniform(-corruption, corruption);
        probs[idx] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    return probs;
  };

  RegionProbabilityMaps maps;
  maps.et = to_probs(regions.et);
  maps.tc = to_probs(regions.tc);
  maps.wt = to_probs(regions.wt);
  return maps;
}

}  // namespace segpipe
