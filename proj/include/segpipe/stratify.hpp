#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "segpipe/radiomics.hpp"
#include "segpipe/rng.hpp"

/// Case stratification: radiomic feature rows are standardized, projected
/// with PCA, clustered with k-means, and the clusters dealt into
/// cross-validation folds so each fold sees every cluster in proportion.
/// Every stage is deterministic given the seed.
namespace segpipe {

/// Per-column standardization. Stddevs are population (ddof 0); a constant
/// column scales to exactly zero rather than dividing by zero.
struct Scaler {
  std::vector<double> means;
  std::vector<double> stddevs;

  static Scaler fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;

  nlohmann::json to_json() const;
  static Scaler from_json(const nlohmann::json& j);
};

/// Principal components of the standardized feature matrix. `components`
/// holds one unit-norm component per row; the sign convention makes each
/// component's largest-magnitude coefficient positive. For a degenerate
/// input with no variance the model keeps one canonical axis and an empty
/// variance-ratio list.
struct PCAModel {
  std::vector<double> mean;
  Eigen::MatrixXd components;                    // n_components x n_features
  std::vector<double> explained_variance_ratio;  // per retained component

  /// Keeps the smallest number of components whose cumulative explained
  /// variance reaches `retention` (with a 1e-12 slack against roundoff).
  static PCAModel fit(const Eigen::MatrixXd& x, double retention);
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;

  nlohmann::json to_json() const;
  static PCAModel from_json(const nlohmann::json& j);
};

struct KMeansModel {
  int k = 0;
  Eigen::MatrixXd centroids;  // k x dims
  double inertia = 0.0;
  std::uint64_t seed = 0;

  /// k-means++ seeding followed by Lloyd iterations, restarted `restarts`
  /// times with consecutive seeds; the run with the lowest inertia wins,
  /// earlier seed breaking ties. An emptied cluster is reseeded at the point
  /// farthest from its assigned centroid.
  static KMeansModel fit(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int restarts = 10,
                         int max_iter = 300);
  /// Nearest centroid by squared Euclidean distance, lower id on ties.
  int predict(const Eigen::VectorXd& point) const;
  std::vector<int> predict_all(const Eigen::MatrixXd& x) const;

  nlohmann::json to_json() const;
  static KMeansModel from_json(const nlohmann::json& j);
};

/// Mean silhouette coefficient over all points, O(n^2). Points in singleton
/// clusters score zero. Requires at least two distinct clusters.
double silhouette_score(const Eigen::MatrixXd& x, const std::vector<int>& labels);

/// Fits k-means for every candidate k and returns the k with the highest
/// silhouette score, preferring the smaller k on ties. Candidates outside
/// [2, n-1] are skipped; an empty candidate set is an error.
int select_k(const Eigen::MatrixXd& x, const std::vector<int>& k_range, std::uint64_t seed);

struct StratificationModel {
  std::vector<std::string> feature_names;
  Scaler scaler;
  PCAModel pca;
  KMeansModel kmeans;

  /// Scale, project, and assign one raw feature row to its cluster.
  int assign(const std::vector<double>& features) const;
  std::vector<int> assign_all(const FeatureTable& table) const;

  nlohmann::json to_json() const;
  static StratificationModel from_json(const nlohmann::json& j);
};

struct StratifyParams {
  double retention = 0.99;
  std::vector<int> k_range{2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::uint64_t seed = 0;
};

StratificationModel fit_stratification(const FeatureTable& table, const StratifyParams& params);

struct FoldAssignment {
  int n_folds = 0;
  std::map<std::string, int> folds;     // case id -> fold
  std::map<std::string, int> clusters;  // case id -> cluster

  nlohmann::json to_json() const;
  static FoldAssignment from_json(const nlohmann::json& j);
};

/// Deals each cluster's cases into folds round-robin after a seeded shuffle.
/// The dealing start rotates by the number of cases already dealt, so fold
/// sizes stay within one of each other overall, not just per cluster.
FoldAssignment assign_folds(const std::vector<std::string>& case_ids,
                            const std::vector<int>& clusters, int n_folds, Rng& rng);

}  // namespace segpipe
