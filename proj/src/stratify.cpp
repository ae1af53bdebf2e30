#include "segpipe/stratify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

namespace segpipe {

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + " must be an array of rows");
  const auto n_rows = static_cast<Eigen::Index>(j.size());
  if (n_rows == 0) return Eigen::MatrixXd(0, 0);
  const auto n_cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != n_cols)
      throw std::invalid_argument(std::string(what) + " rows have inconsistent lengths");
    for (Eigen::Index c = 0; c < n_cols; ++c)
      m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

std::vector<double> vector_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + " must be an array");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& e : j) v.push_back(e.get<double>());
  return v;
}

double squared_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).squaredNorm();
}

}  // namespace

// ---------------------------------------------------------------------------
// Scaler

Scaler Scaler::fit(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw std::invalid_argument("scaler needs at least 2 rows");
  Scaler s;
  const auto n = static_cast<double>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().sum() / n;
    s.means.push_back(mean);
    s.stddevs.push_back(std::sqrt(var));
  }
  return s;
}

Eigen::MatrixXd Scaler::transform(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.cols()) != means.size())
    throw std::invalid_argument("scaler dimension mismatch");
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (stddevs[ci] > 0)
      out.col(c) = (x.col(c).array() - means[ci]) / stddevs[ci];
    else
      out.col(c).setZero();
  }
  return out;
}

nlohmann::json Scaler::to_json() const { return {{"means", means}, {"stddevs", stddevs}}; }

Scaler Scaler::from_json(const nlohmann::json& j) {
  Scaler s;
  s.means = vector_from_json(j.at("means"), "scaler means");
  s.stddevs = vector_from_json(j.at("stddevs"), "scaler stddevs");
  if (s.means.size() != s.stddevs.size())
    throw std::invalid_argument("scaler means/stddevs length mismatch");
  return s;
}

// ---------------------------------------------------------------------------
// PCA

PCAModel PCAModel::fit(const Eigen::MatrixXd& x, double retention) {
  if (x.rows() < 2) throw std::invalid_argument("pca needs at least 2 rows");
  if (retention <= 0 || retention > 1) throw std::invalid_argument("retention must be in (0, 1]");

  PCAModel model;
  const Eigen::RowVectorXd mean = x.colwise().mean();
  model.mean.assign(mean.data(), mean.data() + mean.size());
  const Eigen::MatrixXd centered = x.rowwise() - mean;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const auto n = static_cast<double>(x.rows());

  std::vector<double> variances;
  double total = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    const double v = sigma[i] * sigma[i] / n;
    variances.push_back(v);
    total += v;
  }

  if (total <= 0.0) {
    // All rows identical: keep one canonical axis so transforms stay defined.
    model.components = Eigen::MatrixXd::Zero(1, x.cols());
    model.components(0, 0) = 1.0;
    return model;
  }

  Eigen::Index keep = 1;
  double cum = variances[0];
  while (cum / total < retention - 1e-12 && keep < static_cast<Eigen::Index>(variances.size())) {
    cum += variances[static_cast<std::size_t>(keep)];
    ++keep;
  }

  model.components = svd.matrixV().leftCols(keep).transpose();
  for (Eigen::Index r = 0; r < model.components.rows(); ++r) {
    Eigen::Index arg_max = 0;
    model.components.row(r).cwiseAbs().maxCoeff(&arg_max);
    if (model.components(r, arg_max) < 0) model.components.row(r) *= -1.0;
  }
  for (Eigen::Index i = 0; i < keep; ++i)
    model.explained_variance_ratio.push_back(variances[static_cast<std::size_t>(i)] / total);
  return model;
}

Eigen::MatrixXd PCAModel::transform(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.cols()) != mean.size())
    throw std::invalid_argument("pca dimension mismatch");
  const Eigen::RowVectorXd mu =
      Eigen::Map<const Eigen::RowVectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  return (x.rowwise() - mu) * components.transpose();
}

nlohmann::json PCAModel::to_json() const {
  return {{"mean", mean},
          {"components", matrix_to_json(components)},
          {"explained_variance_ratio", explained_variance_ratio}};
}

PCAModel PCAModel::from_json(const nlohmann::json& j) {
  PCAModel m;
  m.mean = vector_from_json(j.at("mean"), "pca mean");
  m.components = matrix_from_json(j.at("components"), "pca components");
  m.explained_variance_ratio =
      vector_from_json(j.at("explained_variance_ratio"), "pca explained_variance_ratio");
  if (static_cast<std::size_t>(m.components.cols()) != m.mean.size())
    throw std::invalid_argument("pca components/mean dimension mismatch");
  return m;
}

// ---------------------------------------------------------------------------
// k-means

namespace {

struct LloydResult {
  Eigen::MatrixXd centroids;
  double inertia = std::numeric_limits<double>::infinity();
};

int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(centroids.row(c).transpose(), p);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

LloydResult run_kmeans_once(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int max_iter) {
  const Eigen::Index n = x.rows();
  Rng rng(seed);

  // k-means++ seeding.
  Eigen::MatrixXd centroids(k, x.cols());
  centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen;
    if (total > 0) {
      const double target = rng.uniform01() * total;
      double cum = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        cum += d2[i];
        if (cum >= target) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = x.row(chosen);
    d2 = d2.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = nearest_centroid(centroids, x.row(i).transpose());
      if (c != assign[static_cast<std::size_t>(i)]) {
        assign[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    if (!changed) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Reseed an emptied cluster at the point farthest from its own
        // centroid, the standard escape from a degenerate partition.
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d = squared_distance(
              centroids.row(assign[static_cast<std::size_t>(i)]).transpose(), x.row(i).transpose());
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids.row(c) = x.row(far);
      }
    }
  }

  LloydResult result;
  result.centroids = centroids;
  result.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = nearest_centroid(centroids, x.row(i).transpose());
    result.inertia += squared_distance(centroids.row(c).transpose(), x.row(i).transpose());
  }
  return result;
}

}  // namespace

KMeansModel KMeansModel::fit(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int restarts,
                             int max_iter) {
  if (k < 1) throw std::invalid_argument("k must be positive");
  if (x.rows() < k) throw std::invalid_argument("k exceeds the number of points");
  if (restarts < 1) throw std::invalid_argument("restarts must be positive");

  KMeansModel best;
  best.k = k;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int t = 0; t < restarts; ++t) {
    const std::uint64_t run_seed = seed + static_cast<std::uint64_t>(t);
    const LloydResult run = run_kmeans_once(x, k, run_seed, max_iter);
    if (run.inertia < best.inertia) {
      best.centroids = run.centroids;
      best.inertia = run.inertia;
      best.seed = run_seed;
    }
  }
  return best;
}

int KMeansModel::predict(const Eigen::VectorXd& point) const {
  if (point.size() != centroids.cols()) throw std::invalid_argument("kmeans dimension mismatch");
  return nearest_centroid(centroids, point);
}

std::vector<int> KMeansModel::predict_all(const Eigen::MatrixXd& x) const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(predict(x.row(i).transpose()));
  return out;
}

nlohmann::json KMeansModel::to_json() const {
  return {{"k", k}, {"centroids", matrix_to_json(centroids)}, {"inertia", inertia}, {"seed", seed}};
}

KMeansModel KMeansModel::from_json(const nlohmann::json& j) {
  KMeansModel m;
  m.k = j.at("k").get<int>();
  m.centroids = matrix_from_json(j.at("centroids"), "kmeans centroids");
  m.inertia = j.at("inertia").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  if (m.centroids.rows() != m.k) throw std::invalid_argument("kmeans centroid count mismatch");
  return m;
}

// ---------------------------------------------------------------------------
// Model selection and folds

double silhouette_score(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (labels.size() != n) throw std::invalid_argument("labels length mismatch");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2)
    throw std::invalid_argument("silhouette needs at least two clusters");

  std::map<int, std::size_t> cluster_sizes;
  for (int l : labels) ++cluster_sizes[l];

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (cluster_sizes[labels[i]] == 1) continue;  // singleton scores zero
    std::map<int, double> dist_sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      dist_sum[labels[j]] += std::sqrt(squared_distance(
          x.row(static_cast<Eigen::Index>(i)).transpose(),
          x.row(static_cast<Eigen::Index>(j)).transpose()));
    }
    const double a =
        dist_sum[labels[i]] / static_cast<double>(cluster_sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [cl, sum] : dist_sum) {
      if (cl == labels[i]) continue;
      b = std::min(b, sum / static_cast<double>(cluster_sizes[cl]));
    }
    const double denom = std::max(a, b);
    if (denom > 0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

int select_k(const Eigen::MatrixXd& x, const std::vector<int>& k_range, std::uint64_t seed) {
  std::vector<int> candidates;
  for (int k : k_range)
    if (k >= 2 && k <= static_cast<int>(x.rows()) - 1) candidates.push_back(k);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.empty()) throw std::invalid_argument("no feasible k in range");

  int best_k = candidates.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (int k : candidates) {
    const KMeansModel model = KMeansModel::fit(x, k, seed);
    const double score = silhouette_score(x, model.predict_all(x));
    if (score > best_score) {
      best_score = score;
      best_k = k;
    }
  }
  return best_k;
}

int StratificationModel::assign(const std::vector<double>& features) const {
  if (features.size() != feature_names.size())
    throw std::invalid_argument("feature vector length mismatch");
  Eigen::MatrixXd row(1, static_cast<Eigen::Index>(features.size()));
  for (std::size_t c = 0; c < features.size(); ++c)
    row(0, static_cast<Eigen::Index>(c)) = features[c];
  const Eigen::MatrixXd z = pca.transform(scaler.transform(row));
  return kmeans.predict(z.row(0).transpose());
}

std::vector<int> StratificationModel::assign_all(const FeatureTable& table) const {
  if (table.names != feature_names)
    throw std::invalid_argument("feature table columns do not match the model");
  const Eigen::MatrixXd z = pca.transform(scaler.transform(table.to_matrix()));
  return kmeans.predict_all(z);
}

nlohmann::json StratificationModel::to_json() const {
  return {{"feature_names", feature_names},
          {"scaler", scaler.to_json()},
          {"pca", pca.to_json()},
          {"kmeans", kmeans.to_json()}};
}

StratificationModel StratificationModel::from_json(const nlohmann::json& j) {
  StratificationModel m;
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.scaler = Scaler::from_json(j.at("scaler"));
  m.pca = PCAModel::from_json(j.at("pca"));
  m.kmeans = KMeansModel::from_json(j.at("kmeans"));
  return m;
}

StratificationModel fit_stratification(const FeatureTable& table, const StratifyParams& params) {
  table.validate();
  const Eigen::MatrixXd x = table.to_matrix();
  if (!x.allFinite())
    throw std::invalid_argument("feature table has non-finite values; impute before fitting");

  StratificationModel model;
  model.feature_names = table.names;
  model.scaler = Scaler::fit(x);
  const Eigen::MatrixXd xs = model.scaler.transform(x);
  model.pca = PCAModel::fit(xs, params.retention);
  const Eigen::MatrixXd z = model.pca.transform(xs);
  const int k = select_k(z, params.k_range, params.seed);
  model.kmeans = KMeansModel::fit(z, k, params.seed);
  return model;
}

nlohmann::json FoldAssignment::to_json() const {
  return {{"n_folds", n_folds}, {"folds", folds}, {"clusters", clusters}};
}

FoldAssignment FoldAssignment::from_json(const nlohmann::json& j) {
  FoldAssignment f;
  f.n_folds = j.at("n_folds").get<int>();
  f.folds = j.at("folds").get<std::map<std::string, int>>();
  f.clusters = j.at("clusters").get<std::map<std::string, int>>();
  return f;
}

FoldAssignment assign_folds(const std::vector<std::string>& case_ids,
                            const std::vector<int>& clusters, int n_folds, Rng& rng) {
  if (case_ids.size() != clusters.size())
    throw std::invalid_argument("case/cluster count mismatch");
  if (n_folds < 1) throw std::invalid_argument("n_folds must be positive");

  std::map<int, std::vector<std::string>> by_cluster;
  for (std::size_t i = 0; i < case_ids.size(); ++i)
    by_cluster[clusters[i]].push_back(case_ids[i]);

  FoldAssignment out;
  out.n_folds = n_folds;
  std::size_t dealt = 0;
  for (auto& [cluster, ids] : by_cluster) {
    std::sort(ids.begin(), ids.end());
    rng.shuffle(ids);
    const std::size_t start = dealt % static_cast<std::size_t>(n_folds);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      out.folds[ids[i]] = static_cast<int>((start + i) % static_cast<std::size_t>(n_folds));
      out.clusters[ids[i]] = cluster;
    }
    dealt += ids.size();
  }
  return out;
}

}  // namespace segpipe
