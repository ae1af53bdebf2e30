#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "radiomics_internal.hpp"
#include "segpipe/radiomics.hpp"

/// Texture matrices are built on the discretized image compacted to the gray
/// levels actually present in the mask; feature formulas weigh by the actual
/// bin values, so absent intermediate bins contribute nothing. GLCM and GLRLM
/// are computed per direction and feature values averaged over directions;
/// GLCM directions with no voxel pairs are dropped from the average, and when
/// no direction has any pair (isolated voxels) the GLCM degenerates to the
/// diagonal matrix of gray-level frequencies (every voxel co-occurring with
/// itself), which yields the documented single-voxel values.
namespace segpipe {

namespace {

struct TextureContext {
  Volume<int> bins;              // cropped, 0 outside mask
  std::vector<int> levels;       // distinct bin values present, ascending
  std::vector<int> level_index;  // bin value -> index into levels, or -1
  std::size_t np = 0;            // in-mask voxel count
};

TextureContext make_context(const VoxelGrid& image, const BinaryMask& mask,
                            const FeatureParams& params) {
  const detail::CroppedPair cp = detail::crop_to_mask(image, mask);
  const DiscretizedImage disc = discretize(cp.image, cp.mask, params.bin_width);

  TextureContext ctx;
  ctx.bins = disc.bins;
  std::vector<char> present(static_cast<std::size_t>(disc.n_bins) + 1, 0);
  for (std::size_t idx = 0; idx < ctx.bins.size(); ++idx) {
    if (ctx.bins[idx] == 0) continue;
    ++ctx.np;
    present[static_cast<std::size_t>(ctx.bins[idx])] = 1;
  }
  ctx.level_index.assign(static_cast<std::size_t>(disc.n_bins) + 1, -1);
  for (int b = 1; b <= disc.n_bins; ++b)
    if (present[static_cast<std::size_t>(b)]) {
      ctx.level_index[static_cast<std::size_t>(b)] = static_cast<int>(ctx.levels.size());
      ctx.levels.push_back(b);
    }
  return ctx;
}

double entropy_of(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0) h -= p * std::log2(p);
  return h;
}

// ---------------------------------------------------------------------------
// GLCM

const std::vector<std::string> kGlcmNames{
    "Autocorrelation", "ClusterProminence", "ClusterShade", "ClusterTendency",
    "Contrast",        "Correlation",       "DifferenceAverage", "DifferenceEntropy",
    "DifferenceVariance", "Id",             "Idm",           "Idmn",
    "Idn",             "Imc1",              "Imc2",          "InverseVariance",
    "JointAverage",    "JointEnergy",       "JointEntropy",  "MCC",
    "MaximumProbability", "SumAverage",     "SumEntropy",    "SumSquares"};

/// 24 features from one normalized symmetric co-occurrence matrix. P is
/// compact over ctx.levels; rows may be zero for levels with no pairs in this
/// direction.
std::vector<double> glcm_features_from(const Eigen::MatrixXd& P, const std::vector<int>& levels) {
  const auto nl = static_cast<std::size_t>(P.rows());
  const int max_level = levels.back();

  std::vector<double> px(nl, 0.0);
  double mu = 0.0;
  for (std::size_t i = 0; i < nl; ++i) {
    px[i] = P.row(static_cast<Eigen::Index>(i)).sum();
    mu += levels[i] * px[i];
  }
  double sigma_sq = 0.0;
  for (std::size_t i = 0; i < nl; ++i) {
    const double d = levels[i] - mu;
    sigma_sq += d * d * px[i];
  }

  // Distributions of level sums and absolute level differences.
  std::vector<double> p_sum(static_cast<std::size_t>(2 * max_level) + 1, 0.0);
  std::vector<double> p_diff(static_cast<std::size_t>(max_level) + 1, 0.0);
  double autocorr = 0.0, cluster2 = 0.0, cluster3 = 0.0, cluster4 = 0.0, contrast = 0.0;
  double joint_energy = 0.0, max_prob = 0.0, sum_squares = 0.0;
  double hxy = 0.0, hxy1 = 0.0;
  for (std::size_t i = 0; i < nl; ++i)
    for (std::size_t j = 0; j < nl; ++j) {
      const double p = P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (p == 0.0) continue;
      const double li = levels[i], lj = levels[j];
      p_sum[static_cast<std::size_t>(levels[i] + levels[j])] += p;
      p_diff[static_cast<std::size_t>(std::abs(levels[i] - levels[j]))] += p;
      autocorr += li * lj * p;
      const double cd = li + lj - 2.0 * mu;
      cluster2 += cd * cd * p;
      cluster3 += cd * cd * cd * p;
      cluster4 += cd * cd * cd * cd * p;
      contrast += (li - lj) * (li - lj) * p;
      joint_energy += p * p;
      max_prob = std::max(max_prob, p);
      sum_squares += (li - mu) * (li - mu) * p;
      hxy -= p * std::log2(p);
      if (px[i] > 0 && px[j] > 0) hxy1 -= p * std::log2(px[i] * px[j]);
    }

  double hx = entropy_of(px);
  double hxy2 = 0.0;
  for (std::size_t i = 0; i < nl; ++i)
    for (std::size_t j = 0; j < nl; ++j) {
      const double q = px[i] * px[j];
      if (q > 0) hxy2 -= q * std::log2(q);
    }

  double diff_avg = 0.0;
  for (std::size_t k = 0; k < p_diff.size(); ++k) diff_avg += static_cast<double>(k) * p_diff[k];
  double diff_var = 0.0, diff_entropy = 0.0, id = 0.0, idm = 0.0, idmn = 0.0, idn = 0.0,
         inverse_variance = 0.0;
  const auto ng = static_cast<double>(std::count_if(px.begin(), px.end(),
                                                    [](double v) { return v > 0; }));
  for (std::size_t k = 0; k < p_diff.size(); ++k) {
    const double p = p_diff[k];
    if (p == 0.0) continue;
    const auto kd = static_cast<double>(k);
    diff_var += (kd - diff_avg) * (kd - diff_avg) * p;
    diff_entropy -= p * std::log2(p);
    id += p / (1.0 + kd);
    idm += p / (1.0 + kd * kd);
    idmn += p / (1.0 + (kd / ng) * (kd / ng));
    idn += p / (1.0 + kd / ng);
    if (k > 0) inverse_variance += p / (kd * kd);
  }

  double sum_avg = 0.0, sum_entropy = 0.0;
  for (std::size_t k = 0; k < p_sum.size(); ++k) {
    const double p = p_sum[k];
    if (p == 0.0) continue;
    sum_avg += static_cast<double>(k) * p;
    sum_entropy -= p * std::log2(p);
  }

  const double correlation = sigma_sq > 0 ? (autocorr - mu * mu) / sigma_sq : 1.0;
  // The matrix is symmetric, so HX == HY and max(HX, HY) is just HX.
  const double imc1 = hx > 0 ? (hxy - hxy1) / hx : 0.0;
  const double imc2 = hxy2 > hxy ? std::sqrt(1.0 - std::exp(-2.0 * (hxy2 - hxy))) : 0.0;

  // MCC on the sub-matrix of levels participating in this direction.
  double mcc = 1.0;
  {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < nl; ++i)
      if (px[i] > 0) active.push_back(i);
    if (active.size() > 1) {
      const auto na = static_cast<Eigen::Index>(active.size());
      Eigen::MatrixXd Q(na, na);
      for (Eigen::Index a = 0; a < na; ++a)
        for (Eigen::Index b = 0; b < na; ++b) {
          double q = 0.0;
          for (Eigen::Index c = 0; c < na; ++c)
            q += P(static_cast<Eigen::Index>(active[static_cast<std::size_t>(a)]),
                   static_cast<Eigen::Index>(active[static_cast<std::size_t>(c)])) *
                 P(static_cast<Eigen::Index>(active[static_cast<std::size_t>(b)]),
                   static_cast<Eigen::Index>(active[static_cast<std::size_t>(c)])) /
                 (px[active[static_cast<std::size_t>(a)]] * px[active[static_cast<std::size_t>(c)]]);
          Q(a, b) = q;
        }
      Eigen::EigenSolver<Eigen::MatrixXd> eig(Q, false);
      std::vector<double> ev;
      for (Eigen::Index e = 0; e < na; ++e) ev.push_back(eig.eigenvalues()[e].real());
      std::sort(ev.begin(), ev.end(), std::greater<>());
      mcc = std::sqrt(std::max(0.0, std::min(1.0, ev[1])));
    }
  }

  return {autocorr, cluster4,  cluster3,    cluster2,    contrast,  correlation,
          diff_avg, diff_entropy, diff_var, id,          idm,       idmn,
          idn,      imc1,      imc2,        inverse_variance, mu,   joint_energy,
          hxy,      mcc,       max_prob,    sum_avg,     sum_entropy, sum_squares};
}

std::vector<double> glcm_features(const TextureContext& ctx) {
  const auto nl = static_cast<Eigen::Index>(ctx.levels.size());
  const auto& d = ctx.bins.dims();
  std::vector<std::vector<double>> per_direction;

  for (const auto& dir : detail::texture_directions()) {
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(nl, nl);
    double total = 0.0;
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          const int b = ctx.bins.at(i, j, k);
          if (b == 0) continue;
          const int ni = i + dir[0], nj = j + dir[1], nk = k + dir[2];
          if (!ctx.bins.in_bounds(ni, nj, nk)) continue;
          const int nb = ctx.bins.at(ni, nj, nk);
          if (nb == 0) continue;
          const auto a = static_cast<Eigen::Index>(ctx.level_index[static_cast<std::size_t>(b)]);
          const auto bb = static_cast<Eigen::Index>(ctx.level_index[static_cast<std::size_t>(nb)]);
          counts(a, bb) += 1.0;
          counts(bb, a) += 1.0;
          total += 2.0;
        }
    if (total == 0.0) continue;
    per_direction.push_back(glcm_features_from(counts / total, ctx.levels));
  }

  if (per_direction.empty()) {
    // No voxel pair in any direction: every voxel co-occurs with itself.
    Eigen::MatrixXd self = Eigen::MatrixXd::Zero(nl, nl);
    for (std::size_t idx = 0; idx < ctx.bins.size(); ++idx) {
      const int b = ctx.bins[idx];
      if (b == 0) continue;
      const auto a = static_cast<Eigen::Index>(ctx.level_index[static_cast<std::size_t>(b)]);
      self(a, a) += 1.0 / static_cast<double>(ctx.np);
    }
    per_direction.push_back(glcm_features_from(self, ctx.levels));
  }

  std::vector<double> mean(kGlcmNames.size(), 0.0);
  for (const auto& feats : per_direction)
    for (std::size_t f = 0; f < mean.size(); ++f) mean[f] += feats[f];
  for (double& v : mean) v /= static_cast<double>(per_direction.size());
  return mean;
}

// ---------------------------------------------------------------------------
// GLRLM

const std::vector<std::string> kGlrlmNames{
    "GrayLevelNonUniformity", "GrayLevelNonUniformityNormalized", "GrayLevelVariance",
    "HighGrayLevelRunEmphasis", "LongRunEmphasis", "LongRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis", "LowGrayLevelRunEmphasis", "RunEntropy",
    "RunLengthNonUniformity", "RunLengthNonUniformityNormalized", "RunPercentage",
    "RunVariance", "ShortRunEmphasis", "ShortRunHighGrayLevelEmphasis",
    "ShortRunLowGrayLevelEmphasis"};

std::vector<double> glrlm_features_from(const std::vector<std::vector<double>>& R,
                                        const std::vector<int>& levels, std::size_t np) {
  const std::size_t nl = R.size();
  const std::size_t max_len = R.empty() ? 0 : R[0].size();
  double nr = 0.0;
  std::vector<double> by_level(nl, 0.0), by_length(max_len, 0.0);
  for (std::size_t i = 0; i < nl; ++i)
    for (std::size_t r = 0; r < max_len; ++r) {
      nr += R[i][r];
      by_level[i] += R[i][r];
      by_length[r] += R[i][r];
    }

  double sre = 0.0, lre = 0.0, hglre = 0.0, lglre = 0.0, srhgle = 0.0, srlgle = 0.0,
         lrhgle = 0.0, lrlgle = 0.0, mu_l = 0.0, mu_r = 0.0, entropy = 0.0;
  for (std::size_t i = 0; i < nl; ++i) {
    const double li = levels[i];
    for (std::size_t r = 0; r < max_len; ++r) {
      const double c = R[i][r];
      if (c == 0.0) continue;
      const double rl = static_cast<double>(r) + 1.0;
      const double p = c / nr;
      sre += c / (rl * rl);
      lre += c * rl * rl;
      hglre += c * li * li;
      lglre += c / (li * li);
      srhgle += c * li * li / (rl * rl);
      srlgle += c / (li * li * rl * rl);
      lrhgle += c * li * li * rl * rl;
      lrlgle += c * rl * rl / (li * li);
      mu_l += p * li;
      mu_r += p * rl;
      entropy -= p * std::log2(p);
    }
  }
  double glv = 0.0, rv = 0.0;
  for (std::size_t i = 0; i < nl; ++i)
    for (std::size_t r = 0; r < max_len; ++r) {
      const double c = R[i][r];
      if (c == 0.0) continue;
      const double p = c / nr;
      const double li = levels[i];
      const double rl = static_cast<double>(r) + 1.0;
      glv += p * (li - mu_l) * (li - mu_l);
      rv += p * (rl - mu_r) * (rl - mu_r);
    }
  double gln = 0.0, rln = 0.0;
  for (double s : by_level) gln += s * s;
  for (double s : by_length) rln += s * s;

  return {gln / nr,       gln / (nr * nr), glv,
          hglre / nr,     lre / nr,        lrhgle / nr,
          lrlgle / nr,    lglre / nr,      entropy,
          rln / nr,       rln / (nr * nr), nr / static_cast<double>(np),
          rv,             sre / nr,        srhgle / nr,
          srlgle / nr};
}

std::vector<double> glrlm_features(const TextureContext& ctx) {
  const auto& d = ctx.bins.dims();
  const std::size_t nl = ctx.levels.size();
  const auto max_len = static_cast<std::size_t>(std::max({d[0], d[1], d[2]}));
  std::vector<double> mean(kGlrlmNames.size(), 0.0);
  const auto& dirs = detail::texture_directions();

  for (const auto& dir : dirs) {
    std::vector<std::vector<double>> R(nl, std::vector<double>(max_len, 0.0));
    // A line start is any voxel whose predecessor along the direction falls
    // outside the volume.
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          if (ctx.bins.in_bounds(i - dir[0], j - dir[1], k - dir[2])) continue;
          int run_level = 0, run_len = 0;
          for (int ci = i, cj = j, ck = k; ctx.bins.in_bounds(ci, cj, ck);
               ci += dir[0], cj += dir[1], ck += dir[2]) {
            const int b = ctx.bins.at(ci, cj, ck);
            if (b == run_level) {
              if (b != 0) ++run_len;
              continue;
            }
            if (run_level != 0)
              R[static_cast<std::size_t>(ctx.level_index[static_cast<std::size_t>(run_level)])]
               [static_cast<std::size_t>(run_len - 1)] += 1.0;
            run_level = b;
            run_len = b != 0 ? 1 : 0;
          }
          if (run_level != 0)
            R[static_cast<std::size_t>(ctx.level_index[static_cast<std::size_t>(run_level)])]
             [static_cast<std::size_t>(run_len - 1)] += 1.0;
        }
    const std::vector<double> feats = glrlm_features_from(R, ctx.levels, ctx.np);
    for (std::size_t f = 0; f < mean.size(); ++f) mean[f] += feats[f];
  }
  for (double& v : mean) v /= static_cast<double>(dirs.size());
  return mean;
}

// ---------------------------------------------------------------------------
// GLSZM

const std::vector<std::string> kGlszmNames{
    "GrayLevelNonUniformity", "GrayLevelNonUniformityNormalized", "GrayLevelVariance",
    "HighGrayLevelZoneEmphasis", "LargeAreaEmphasis", "LargeAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis", "LowGrayLevelZoneEmphasis", "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized", "SmallAreaEmphasis", "SmallAreaHighGrayLevelEmphasis",
    "SmallAreaLowGrayLevelEmphasis", "ZoneEntropy", "ZonePercentage", "ZoneVariance"};

struct Zone {
  int level_idx;
  std::int64_t size;
};

std::vector<Zone> find_zones(const TextureContext& ctx) {
  const auto& d = ctx.bins.dims();
  std::vector<char> visited(ctx.bins.size(), 0);
  std::vector<Zone> zones;
  std::vector<std::array<int, 3>> stack;
  const auto& offsets = neighbor_offsets(Connectivity::corners26);

  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const std::size_t idx = ctx.bins.linear(i, j, k);
        if (visited[idx] || ctx.bins[idx] == 0) continue;
        const int level = ctx.bins[idx];
        std::int64_t size = 0;
        visited[idx] = 1;
        stack.push_back({i, j, k});
        while (!stack.empty()) {
          const auto [ci, cj, ck] = stack.back();
          stack.pop_back();
          ++size;
          for (const auto& off : offsets) {
            const int ni = ci + off[0], nj = cj + off[1], nk = ck + off[2];
            if (!ctx.bins.in_bounds(ni, nj, nk)) continue;
            const std::size_t nidx = ctx.bins.linear(ni, nj, nk);
            if (visited[nidx] || ctx.bins[nidx] != level) continue;
            visited[nidx] = 1;
            stack.push_back({ni, nj, nk});
          }
        }
        zones.push_back({ctx.level_index[static_cast<std::size_t>(level)], size});
      }
  return zones;
}

std::vector<double> glszm_features(const TextureContext& ctx) {
  const std::vector<Zone> zones = find_zones(ctx);
  // Aggregate zone counts per (level, size).
  std::map<std::pair<int, std::int64_t>, double> counts;
  for (const Zone& z : zones) counts[{z.level_idx, z.size}] += 1.0;
  const double nz = static_cast<double>(zones.size());

  std::vector<double> by_level(ctx.levels.size(), 0.0);
  std::map<std::int64_t, double> by_size;
  double sae = 0.0, lae = 0.0, hgl = 0.0, lgl = 0.0, salgl = 0.0, sahgl = 0.0, lalgl = 0.0,
         lahgl = 0.0, mu_l = 0.0, mu_s = 0.0, entropy = 0.0;
  for (const auto& [key, c] : counts) {
    const double li = ctx.levels[static_cast<std::size_t>(key.first)];
    const auto s = static_cast<double>(key.second);
    const double p = c / nz;
    by_level[static_cast<std::size_t>(key.first)] += c;
    by_size[key.second] += c;
    sae += c / (s * s);
    lae += c * s * s;
    hgl += c * li * li;
    lgl += c / (li * li);
    sahgl += c * li * li / (s * s);
    salgl += c / (li * li * s * s);
    lahgl += c * li * li * s * s;
    lalgl += c * s * s / (li * li);
    mu_l += p * li;
    mu_s += p * s;
    entropy -= p * std::log2(p);
  }
  double glv = 0.0, zv = 0.0;
  for (const auto& [key, c] : counts) {
    const double li = ctx.levels[static_cast<std::size_t>(key.first)];
    const auto s = static_cast<double>(key.second);
    const double p = c / nz;
    glv += p * (li - mu_l) * (li - mu_l);
    zv += p * (s - mu_s) * (s - mu_s);
  }
  double gln = 0.0, szn = 0.0;
  for (double c : by_level) gln += c * c;
  for (const auto& entry : by_size) szn += entry.second * entry.second;

  return {gln / nz,   gln / (nz * nz),  glv,        hgl / nz,
          lae / nz,   lahgl / nz,       lalgl / nz, lgl / nz,
          szn / nz,   szn / (nz * nz),  sae / nz,   sahgl / nz,
          salgl / nz, entropy,          nz / static_cast<double>(ctx.np), zv};
}

// ---------------------------------------------------------------------------
// GLDM

const std::vector<std::string> kGldmNames{
    "DependenceEntropy", "DependenceNonUniformity", "DependenceNonUniformityNormalized",
    "DependenceVariance", "GrayLevelNonUniformity", "GrayLevelVariance",
    "HighGrayLevelEmphasis", "LargeDependenceEmphasis", "LargeDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis", "LowGrayLevelEmphasis", "SmallDependenceEmphasis",
    "SmallDependenceHighGrayLevelEmphasis", "SmallDependenceLowGrayLevelEmphasis"};

std::vector<double> gldm_features(const TextureContext& ctx) {
  const auto& d = ctx.bins.dims();
  const auto& offsets = neighbor_offsets(Connectivity::corners26);
  const std::size_t nl = ctx.levels.size();
  // Dependence = same-level 26-neighbors + 1 (the center), so 1..27.
  std::vector<std::vector<double>> D(nl, std::vector<double>(27, 0.0));
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const int b = ctx.bins.at(i, j, k);
        if (b == 0) continue;
        int dep = 1;
        for (const auto& off : offsets) {
          const int ni = i + off[0], nj = j + off[1], nk = k + off[2];
          if (ctx.bins.in_bounds(ni, nj, nk) && ctx.bins.at(ni, nj, nk) == b) ++dep;
        }
        D[static_cast<std::size_t>(ctx.level_index[static_cast<std::size_t>(b)])]
         [static_cast<std::size_t>(dep - 1)] += 1.0;
      }

  const auto nz = static_cast<double>(ctx.np);
  std::vector<double> by_level(nl, 0.0), by_dep(27, 0.0);
  double sde = 0.0, lde = 0.0, hgl = 0.0, lgl = 0.0, sdhgl = 0.0, sdlgl = 0.0, ldhgl = 0.0,
         ldlgl = 0.0, mu_l = 0.0, mu_d = 0.0, entropy = 0.0;
  for (std::size_t i = 0; i < nl; ++i) {
    const double li = ctx.levels[i];
    for (std::size_t dd = 0; dd < 27; ++dd) {
      const double c = D[i][dd];
      if (c == 0.0) continue;
      const double dj = static_cast<double>(dd) + 1.0;
      const double p = c / nz;
      by_level[i] += c;
      by_dep[dd] += c;
      sde += c / (dj * dj);
      lde += c * dj * dj;
      hgl += c * li * li;
      lgl += c / (li * li);
      sdhgl += c * li * li / (dj * dj);
      sdlgl += c / (li * li * dj * dj);
      ldhgl += c * li * li * dj * dj;
      ldlgl += c * dj * dj / (li * li);
      mu_l += p * li;
      mu_d += p * dj;
      entropy -= p * std::log2(p);
    }
  }
  double glv = 0.0, dv = 0.0, gln = 0.0, dn = 0.0;
  for (std::size_t i = 0; i < nl; ++i)
    for (std::size_t dd = 0; dd < 27; ++dd) {
      const double c = D[i][dd];
      if (c == 0.0) continue;
      const double p = c / nz;
      const double li = ctx.levels[i];
      const double dj = static_cast<double>(dd) + 1.0;
      glv += p * (li - mu_l) * (li - mu_l);
      dv += p * (dj - mu_d) * (dj - mu_d);
    }
  for (double c : by_level) gln += c * c;
  for (double c : by_dep) dn += c * c;

  return {entropy,    dn / nz,   dn / (nz * nz), dv,
          gln / nz,   glv,       hgl / nz,       lde / nz,
          ldhgl / nz, ldlgl / nz, lgl / nz,      sde / nz,
          sdhgl / nz, sdlgl / nz};
}

// ---------------------------------------------------------------------------
// NGTDM

const std::vector<std::string> kNgtdmNames{"Busyness", "Coarseness", "Complexity", "Contrast",
                                           "Strength"};

std::vector<double> ngtdm_features(const TextureContext& ctx) {
  const auto& d = ctx.bins.dims();
  const auto& offsets = neighbor_offsets(Connectivity::corners26);
  const std::size_t nl = ctx.levels.size();
  std::vector<double> s(nl, 0.0), n(nl, 0.0);
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const int b = ctx.bins.at(i, j, k);
        if (b == 0) continue;
        double sum = 0.0;
        int cnt = 0;
        for (const auto& off : offsets) {
          const int ni = i + off[0], nj = j + off[1], nk = k + off[2];
          if (!ctx.bins.in_bounds(ni, nj, nk)) continue;
          const int nb = ctx.bins.at(ni, nj, nk);
          if (nb == 0) continue;
          sum += nb;
          ++cnt;
        }
        if (cnt == 0) continue;  // isolated voxel: no neighborhood to compare
        const auto li = static_cast<std::size_t>(ctx.level_index[static_cast<std::size_t>(b)]);
        s[li] += std::abs(static_cast<double>(b) - sum / cnt);
        n[li] += 1.0;
      }

  double nvp = 0.0;
  for (double c : n) nvp += c;
  if (nvp == 0.0) return {0.0, 1e6, 0.0, 0.0, 0.0};

  std::vector<double> p(nl, 0.0);
  for (std::size_t i = 0; i < nl; ++i) p[i] = n[i] / nvp;
  std::vector<std::size_t> present;
  for (std::size_t i = 0; i < nl; ++i)
    if (n[i] > 0) present.push_back(i);
  const auto ngp = static_cast<double>(present.size());

  double ps_sum = 0.0, s_sum = 0.0;
  for (std::size_t i : present) {
    ps_sum += p[i] * s[i];
    s_sum += s[i];
  }

  const double coarseness = ps_sum != 0.0 ? 1.0 / ps_sum : 1e6;

  double contrast = 0.0;
  if (ngp > 1) {
    double acc = 0.0;
    for (std::size_t a : present)
      for (std::size_t b : present) {
        const double dl = static_cast<double>(ctx.levels[a]) - static_cast<double>(ctx.levels[b]);
        acc += p[a] * p[b] * dl * dl;
      }
    contrast = acc / (ngp * (ngp - 1.0)) * (s_sum / nvp);
  }

  double busy_den = 0.0, complexity = 0.0, strength_num = 0.0;
  for (std::size_t a : present)
    for (std::size_t b : present) {
      const double la = ctx.levels[a], lb = ctx.levels[b];
      busy_den += std::abs(la * p[a] - lb * p[b]);
      complexity += std::abs(la - lb) * (p[a] * s[a] + p[b] * s[b]) / (p[a] + p[b]);
      strength_num += (p[a] + p[b]) * (la - lb) * (la - lb);
    }
  const double busyness = busy_den != 0.0 ? ps_sum / busy_den : 0.0;
  complexity /= nvp;
  const double strength = s_sum != 0.0 ? strength_num / s_sum : 0.0;

  return {busyness, coarseness, complexity, contrast, strength};
}

}  // namespace

FeatureVector texture_features(const VoxelGrid& image, const BinaryMask& mask,
                               const FeatureParams& params) {
  const TextureContext ctx = make_context(image, mask, params);

  FeatureVector fv;
  const auto append = [&fv](const char* family, const std::vector<std::string>& names,
                            const std::vector<double>& values) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      fv.names.push_back(std::string(family) + "." + names[i]);
      fv.values.push_back(values[i]);
    }
  };
  append("glcm", kGlcmNames, glcm_features(ctx));
  append("glrlm", kGlrlmNames, glrlm_features(ctx));
  append("glszm", kGlszmNames, glszm_features(ctx));
  append("gldm", kGldmNames, gldm_features(ctx));
  append("ngtdm", kNgtdmNames, ngtdm_features(ctx));
  if (fv.values.size() != 75) throw std::logic_error("texture feature vector has wrong arity");
  return fv;
}

}  // namespace segpipe
