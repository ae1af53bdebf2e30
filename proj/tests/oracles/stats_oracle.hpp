#pragma once

// Straight-line reference implementations for the first-order features and a
// covariance-eigendecomposition PCA used to cross-check the SVD-based one.
// Accumulation runs in long double and the histogram is built with its own
// floor-based discretization, independent of the library internals.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "segpipe/volume.hpp"

namespace segpipe::testing {

/// Inclusive linear-interpolation percentile, written as a convex blend of
/// the two bracketing order statistics.
inline double oracle_percentile_sorted(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  const double h = static_cast<double>(n - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  if (hi >= n) return sorted[n - 1];
  const double f = h - static_cast<double>(lo);
  return sorted[lo] * (1.0 - f) + sorted[hi] * f;
}

inline std::map<std::string, double> oracle_first_order(const VoxelGrid& image,
                                                        const BinaryMask& mask,
                                                        double bin_width) {
  std::vector<double> vals;
  for (std::size_t idx = 0; idx < mask.size(); ++idx)
    if (mask[idx]) vals.push_back(static_cast<double>(image[idx]));
  std::sort(vals.begin(), vals.end());
  const auto n = static_cast<long double>(vals.size());

  long double sum = 0.0L, sum_sq = 0.0L;
  for (double x : vals) {
    sum += x;
    sum_sq += static_cast<long double>(x) * x;
  }
  const long double mean = sum / n;
  long double m2 = 0.0L, m3 = 0.0L, m4 = 0.0L, abs_dev = 0.0L;
  for (double x : vals) {
    const long double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    abs_dev += std::abs(static_cast<double>(d));
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const long double sigma = std::sqrt(static_cast<double>(m2));

  const double p10 = oracle_percentile_sorted(vals, 0.10);
  const double p25 = oracle_percentile_sorted(vals, 0.25);
  const double p75 = oracle_percentile_sorted(vals, 0.75);
  const double p90 = oracle_percentile_sorted(vals, 0.90);

  long double robust_sum = 0.0L;
  std::size_t robust_n = 0;
  for (double x : vals)
    if (x >= p10 && x <= p90) {
      robust_sum += x;
      ++robust_n;
    }
  long double robust_mad = 0.0L;
  if (robust_n > 0) {
    const long double robust_mean = robust_sum / static_cast<long double>(robust_n);
    for (double x : vals)
      if (x >= p10 && x <= p90) robust_mad += std::abs(static_cast<double>(x - robust_mean));
    robust_mad /= static_cast<long double>(robust_n);
  }

  // Histogram over floor-based bins relative to the in-mask minimum.
  std::map<int, long double> hist;
  for (double x : vals)
    hist[static_cast<int>(std::floor((x - vals.front()) / bin_width)) + 1] += 1.0L;
  long double entropy = 0.0L, uniformity = 0.0L;
  for (const auto& [bin, c] : hist) {
    const long double p = c / n;
    entropy -= p * std::log2(static_cast<double>(p));
    uniformity += p * p;
  }

  return {{"Energy", static_cast<double>(sum_sq)},
          {"TotalEnergy", image.geometry().voxel_volume() * static_cast<double>(sum_sq)},
          {"Entropy", static_cast<double>(entropy)},
          {"Minimum", vals.front()},
          {"10Percentile", p10},
          {"90Percentile", p90},
          {"Maximum", vals.back()},
          {"Mean", static_cast<double>(mean)},
          {"Median", oracle_percentile_sorted(vals, 0.5)},
          {"InterquartileRange", p75 - p25},
          {"Range", vals.back() - vals.front()},
          {"MeanAbsoluteDeviation", static_cast<double>(abs_dev / n)},
          {"RobustMeanAbsoluteDeviation", static_cast<double>(robust_mad)},
          {"RootMeanSquared", std::sqrt(static_cast<double>(sum_sq / n))},
          {"Skewness", sigma > 0 ? static_cast<double>(m3 / (sigma * sigma * sigma)) : 0.0},
          {"Kurtosis", sigma > 0 ? static_cast<double>(m4 / (m2 * m2)) : 0.0},
          {"Variance", static_cast<double>(m2)},
          {"Uniformity", static_cast<double>(uniformity)}};
}

/// Eigenvalues of the biased (1/n) covariance matrix, descending. These equal
/// the per-component explained variances of a PCA.
inline std::vector<double> oracle_pca_variances(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  std::vector<double> ev(eig.eigenvalues().data(), eig.eigenvalues().data() + eig.eigenvalues().size());
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

/// Unit eigenvectors of the covariance matrix, one column per component,
/// ordered by descending eigenvalue. Sign is arbitrary; compare spans.
inline Eigen::MatrixXd oracle_pca_axes(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Eigen::MatrixXd axes(cov.rows(), cov.cols());
  const Eigen::Index last = cov.cols() - 1;
  for (Eigen::Index c = 0; c <= last; ++c) axes.col(c) = eig.eigenvectors().col(last - c);
  return axes;
}

}  // namespace segpipe::testing
