#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "segpipe/case_io.hpp"
#include "segpipe/ensemble.hpp"
#include "segpipe/io_util.hpp"
#include "segpipe/metrics.hpp"
#include "segpipe/nifti.hpp"
#include "segpipe/parallel.hpp"
#include "segpipe/phantom.hpp"
#include "segpipe/postprocess.hpp"
#include "segpipe/radiomics.hpp"
#include "segpipe/rng.hpp"
#include "segpipe/stratify.hpp"
#include "segpipe/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace segpipe;

namespace {

constexpr const char* kVersion = "0.1.0";

struct GlobalOpts {
  int threads = 1;
  std::uint64_t seed = 0;
  bool verbose = false;
  std::string config_path;
  json config = json::object();
};

std::mutex g_log_mutex;

void log_line(const std::string& msg) {
  const std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "[segpipe] " << msg << "\n";
}

void log_verbose(const GlobalOpts& g, const std::string& msg) {
  if (g.verbose) log_line(msg);
}

/// Pre-scan for --config so the file's values can seed option defaults
/// before CLI11 parses; explicit flags then override them.
json load_config_from_argv(int argc, char** argv, std::string& path_out) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    std::string path;
    if (arg == "--config" && i + 1 < argc)
      path = argv[i + 1];
    else if (arg.rfind("--config=", 0) == 0)
      path = arg.substr(9);
    else
      continue;
    path_out = path;
    return read_json_file(path);
  }
  return json::object();
}

template <typename T>
void cfg_default(const json& cfg, const char* key, T& var) {
  if (cfg.contains(key)) var = cfg.at(key).get<T>();
}

// ---------------------------------------------------------------------------
// Atomic output helpers. NIfTI writers pick gzip by extension, so the
// temporary keeps the final name as a suffix and lives in the same directory
// to keep the rename atomic.

fs::path tmp_sibling(const fs::path& path) {
  return path.parent_path() / (".tmp-" + path.filename().string());
}

void write_labels_atomic(const LabelVolume& labels, const fs::path& path) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = tmp_sibling(path);
  nifti::write_labels(labels, tmp);
  fs::rename(tmp, path);
}

void write_grid_atomic(const VoxelGrid& grid, const fs::path& path) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = tmp_sibling(path);
  nifti::write_grid(grid, tmp);
  fs::rename(tmp, path);
}

/// Run manifest beside the command's primary output: a file output gets
/// "<file>.manifest.json", a directory output gets "<dir>/manifest.json".
/// No timestamps, so reruns stay byte-identical.
void write_manifest(const fs::path& primary_output, bool output_is_dir, const std::string& command,
                    const json& parameters, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, std::size_t cases_total,
                    const std::map<std::string, std::string>& failures) {
  const json manifest{{"command", command},
                      {"version", kVersion},
                      {"parameters", parameters},
                      {"inputs", inputs},
                      {"outputs", outputs},
                      {"cases_total", cases_total},
                      {"cases_failed", failures.size()},
                      {"failures", failures}};
  const fs::path path = output_is_dir ? primary_output / "manifest.json"
                                      : fs::path(primary_output.string() + ".manifest.json");
  write_json_file(path, manifest);
}

/// Runs fn over ids with case-level parallelism; exceptions become per-case
/// failure records instead of aborting the batch.
std::map<std::string, std::string> for_each_case(const std::vector<std::string>& ids, int threads,
                                                 const std::function<void(std::size_t)>& fn) {
  std::vector<std::string> errors(ids.size());
  parallel_for(ids.size(), threads, [&](std::size_t i) {
    try {
      fn(i);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::map<std::string, std::string> failures;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!errors[i].empty()) {
      failures[ids[i]] = errors[i];
      log_line("case " + ids[i] + ": " + errors[i]);
    }
  return failures;
}

int finish(const std::map<std::string, std::string>& failures, std::size_t total,
           const std::string& what) {
  if (!failures.empty()) {
    log_line(what + ": " + std::to_string(failures.size()) + " of " + std::to_string(total) +
             " cases failed");
    return 1;
  }
  return 0;
}

std::vector<std::string> string_paths(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

/// Case ids in a directory of flat per-model probability maps, from the
/// "<id>-prob_et.nii[.gz]" files.
std::vector<std::string> prob_case_ids(const fs::path& dir, const NamingScheme& naming) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("model directory not found: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    for (const auto& ext : naming.extensions) {
      const std::string tail = naming.prob_et + ext;
      if (name.size() > tail.size() && name.ends_with(tail)) {
        ids.push_back(name.substr(0, name.size() - tail.size()));
        break;
      }
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

LesionMatchParams match_params_from(int connectivity, int dilation_radius, double penalty_mm,
                                    std::int64_t min_fp_size) {
  LesionMatchParams p;
  p.connectivity = connectivity_from_int(connectivity);
  p.dilation_radius = dilation_radius;
  p.penalty_mm = penalty_mm;
  p.min_fp_size = min_fp_size;
  return p;
}

// ---------------------------------------------------------------------------
// features

struct FeaturesOpts {
  std::string cases_dir;
  std::string output;
  std::string mask_source = "ground_truth";
  std::string pred_dir;
  double bin_width = 25.0;
};

int cmd_features(const GlobalOpts& g, const FeaturesOpts& o) {
  const std::vector<fs::path> case_dirs = list_case_dirs(o.cases_dir);
  std::vector<std::string> ids;
  for (const auto& dir : case_dirs) ids.push_back(dir.filename().string());

  std::map<std::string, fs::path> pred_files;
  if (o.mask_source == "prediction") {
    if (o.pred_dir.empty())
      throw CLI::ValidationError("--pred-dir is required with --mask-source prediction");
    pred_files = collect_label_files(o.pred_dir);
  }

  FeatureParams params;
  params.bin_width = o.bin_width;

  std::vector<std::optional<FeatureVector>> rows(ids.size());
  const auto failures = for_each_case(ids, g.threads, [&](std::size_t i) {
    const CaseBundle bundle = load_case(case_dirs[i]);
    LabelVolume labels;
    if (o.mask_source == "prediction") {
      const auto it = pred_files.find(bundle.case_id);
      if (it == pred_files.end()) throw std::runtime_error("no prediction segmentation found");
      labels = nifti::read_labels(it->second);
      if (!labels.geometry().same_grid(bundle.t1.geometry()))
        throw std::runtime_error("prediction grid does not match the case");
    } else {
      if (!bundle.labels) throw std::runtime_error("case has no segmentation");
      labels = *bundle.labels;
    }
    const BinaryMask wt = regions_from_labels(labels).wt;
    rows[i] = case_features(bundle, wt, params);
    log_verbose(g, "case " + bundle.case_id + ": " + std::to_string(rows[i]->values.size()) +
                       " features");
  });

  FeatureTable table;
  for (const auto& row : rows)
    if (row) {
      if (table.names.empty()) table.names = row->names;
      table.rows.push_back(*row);
    }
  write_feature_csv(o.output, table);

  write_manifest(o.output, false, "features",
                 {{"cases", o.cases_dir},
                  {"mask_source", o.mask_source},
                  {"pred_dir", o.pred_dir},
                  {"bin_width", o.bin_width},
                  {"threads", g.threads}},
                 string_paths(case_dirs), {o.output}, ids.size(), failures);
  return finish(failures, ids.size(), "features");
}

// ---------------------------------------------------------------------------
// stratify

struct StratifyOpts {
  std::string features_csv;
  std::string output_model;
  std::string output_folds;
  int n_folds = 5;
  double retention = 0.99;
  std::vector<int> k_range;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_stratify(const GlobalOpts& g, const StratifyOpts& o) {
  FeatureTable table = read_feature_csv(o.features_csv);
  table.validate();
  if (static_cast<int>(table.rows.size()) < o.n_folds)
    throw std::runtime_error("fewer cases (" + std::to_string(table.rows.size()) +
                             ") than folds (" + std::to_string(o.n_folds) + ")");
  impute_nan_with_column_median(table);

  StratifyParams params;
  params.retention = o.retention;
  if (!o.k_range.empty()) params.k_range = o.k_range;
  params.seed = o.seed_set ? o.seed : g.seed;

  const StratificationModel model = fit_stratification(table, params);
  const std::vector<int> clusters = model.assign_all(table);
  log_verbose(g, "selected k=" + std::to_string(model.kmeans.k) + ", " +
                     std::to_string(model.pca.components.rows()) + " principal components");

  Rng fold_rng(params.seed);
  const FoldAssignment folds = assign_folds(table.case_ids(), clusters, o.n_folds, fold_rng);

  write_json_file(o.output_model, model.to_json());
  write_json_file(o.output_folds, folds.to_json());

  write_manifest(o.output_folds, false, "stratify",
                 {{"features", o.features_csv},
                  {"n_folds", o.n_folds},
                  {"retention", o.retention},
                  {"k_range", params.k_range},
                  {"seed", params.seed}},
                 {o.features_csv}, {o.output_model, o.output_folds}, table.rows.size(), {});
  return 0;
}

// ---------------------------------------------------------------------------
// ensemble

struct EnsembleOpts {
  std::vector<std::string> model_dirs;  // name=path
  std::string weights_file;
  std::string output_dir;
  double threshold = -1.0;  // <0: take from the weights file
  bool write_probs = false;
};

int cmd_ensemble(const GlobalOpts& g, const EnsembleOpts& o) {
  std::vector<std::pair<std::string, fs::path>> models;
  for (const auto& spec : o.model_dirs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
      throw CLI::ValidationError("--model expects name=directory, got '" + spec + "'");
    models.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
  }
  if (models.empty()) throw CLI::ValidationError("at least one --model is required");

  const json wj = read_json_file(o.weights_file);
  const EnsembleWeights weights(wj.at("models").get<std::map<std::string, double>>());
  const double threshold = o.threshold >= 0 ? o.threshold : wj.value("threshold", 0.5);
  for (const auto& [name, dir] : models)
    if (!weights.weights().count(name))
      throw std::runtime_error("weights file has no weight for model '" + name + "'");

  const NamingScheme naming;
  const std::vector<std::string> ids = prob_case_ids(models.front().second, naming);
  fs::create_directories(o.output_dir);

  const auto failures = for_each_case(ids, g.threads, [&](std::size_t i) {
    const std::string& id = ids[i];
    std::vector<RegionProbabilityMaps> maps;
    for (const auto& [name, dir] : models) maps.push_back(load_prob_maps(dir, id, name, naming));
    const RegionProbabilityMaps combined = ensemble(maps, weights);
    const LabelVolume labels = decode(combined, threshold);
    write_labels_atomic(labels, fs::path(o.output_dir) / (id + naming.seg + ".nii.gz"));
    if (o.write_probs) {
      write_grid_atomic(combined.et, fs::path(o.output_dir) / (id + naming.prob_et + ".nii.gz"));
      write_grid_atomic(combined.tc, fs::path(o.output_dir) / (id + naming.prob_tc + ".nii.gz"));
      write_grid_atomic(combined.wt, fs::path(o.output_dir) / (id + naming.prob_wt + ".nii.gz"));
    }
    log_verbose(g, "case " + id + ": ensembled " + std::to_string(maps.size()) + " models");
  });

  json params{{"weights_file", o.weights_file},
              {"threshold", threshold},
              {"write_probs", o.write_probs},
              {"threads", g.threads}};
  std::vector<std::string> inputs;
  for (const auto& [name, dir] : models) inputs.push_back(name + "=" + dir.string());
  params["models"] = inputs;
  write_manifest(o.output_dir, true, "ensemble", params, inputs, {o.output_dir}, ids.size(),
                 failures);
  return finish(failures, ids.size(), "ensemble");
}

// ---------------------------------------------------------------------------
// weights-from-cv

struct WeightsOpts {
  std::string scores_file;
  std::string output;
  double threshold = 0.5;
};

int cmd_weights_from_cv(const WeightsOpts& o) {
  const json sj = read_json_file(o.scores_file);
  const auto scores = sj.get<std::map<std::string, double>>();
  if (scores.empty()) throw std::runtime_error("scores file has no models");
  double total = 0.0;
  for (const auto& [name, score] : scores) {
    if (!(score > 0)) throw std::runtime_error("score for '" + name + "' must be positive");
    total += score;
  }
  json models;
  for (const auto& [name, score] : scores) models[name] = score / total;
  write_json_file(o.output, json{{"models", models}, {"threshold", o.threshold}});
  write_manifest(o.output, false, "weights-from-cv",
                 {{"scores", o.scores_file}, {"threshold", o.threshold}}, {o.scores_file},
                 {o.output}, scores.size(), {});
  return 0;
}

// ---------------------------------------------------------------------------
// fit-postprocess / postprocess

struct FitPostprocessOpts {
  std::string gt_dir;
  std::string pred_dir;
  std::string features_csv;
  std::string model_file;
  std::string output;
  std::vector<std::int64_t> size_grid;
  std::vector<double> ratio_grid;
  int connectivity = 26;
  int dilation_radius = 1;
  double penalty_mm = 374.0;
  std::int64_t min_fp_size = 0;
};

/// Mean lesion-wise Dice over the three regions for one prediction.
double mean_region_dice(const LabelVolume& gt, const LabelVolume& pred,
                        const LesionMatchParams& match) {
  const RegionMasks g = regions_from_labels(gt);
  const RegionMasks p = regions_from_labels(pred);
  const Eigen::Vector3d spacing = gt.geometry().spacing;
  double sum = 0.0;
  sum += lesion_wise(g.et, p.et, spacing, match).dice;
  sum += lesion_wise(g.tc, p.tc, spacing, match).dice;
  sum += lesion_wise(g.wt, p.wt, spacing, match).dice;
  return sum / 3.0;
}

int cmd_fit_postprocess(const GlobalOpts& g, const FitPostprocessOpts& o) {
  const auto gt_files = collect_label_files(o.gt_dir);
  const auto pred_files = collect_label_files(o.pred_dir);
  FeatureTable table = read_feature_csv(o.features_csv);
  table.validate();
  impute_nan_with_column_median(table);
  const StratificationModel model = StratificationModel::from_json(read_json_file(o.model_file));
  const std::vector<int> clusters = model.assign_all(table);
  std::map<std::string, int> cluster_of;
  const std::vector<std::string> table_ids = table.case_ids();
  for (std::size_t i = 0; i < table_ids.size(); ++i) cluster_of[table_ids[i]] = clusters[i];

  FitPolicyParams params;
  if (!o.size_grid.empty()) params.size_grid = o.size_grid;
  if (!o.ratio_grid.empty()) params.ratio_grid = o.ratio_grid;
  params.connectivity = connectivity_from_int(o.connectivity);
  params.match = match_params_from(o.connectivity, o.dilation_radius, o.penalty_mm, o.min_fp_size);

  std::vector<std::string> ids;
  for (const auto& [id, path] : gt_files) ids.push_back(id);
  std::vector<std::optional<PostprocessCase>> loaded(ids.size());
  const auto failures = for_each_case(ids, g.threads, [&](std::size_t i) {
    const std::string& id = ids[i];
    const auto pred_it = pred_files.find(id);
    if (pred_it == pred_files.end()) throw std::runtime_error("no prediction for this case");
    const auto cluster_it = cluster_of.find(id);
    if (cluster_it == cluster_of.end()) throw std::runtime_error("no feature row for this case");
    PostprocessCase pc;
    pc.case_id = id;
    pc.ground_truth = nifti::read_labels(gt_files.at(id));
    pc.prediction = nifti::read_labels(pred_it->second);
    pc.cluster = cluster_it->second;
    loaded[i] = std::move(pc);
  });

  std::vector<PostprocessCase> cases;
  for (auto& pc : loaded)
    if (pc) cases.push_back(std::move(*pc));

  const PostprocessPolicy policy = fit_policy(cases, model.kmeans.k, params);

  // Per-cluster before/after objective, printed as the fitting summary.
  for (int cluster = 0; cluster < model.kmeans.k; ++cluster) {
    double before = 0.0, after = 0.0;
    int count = 0;
    for (const PostprocessCase& pc : cases) {
      if (pc.cluster != cluster) continue;
      before += mean_region_dice(pc.ground_truth, pc.prediction, params.match);
      after += mean_region_dice(
          pc.ground_truth,
          apply_policy(pc.prediction, policy.for_cluster(cluster), policy.connectivity),
          params.match);
      ++count;
    }
    char line[160];
    if (count > 0)
      std::snprintf(line, sizeof(line),
                    "cluster %d: %d cases, mean lesion-wise dice %.4f -> %.4f", cluster, count,
                    before / count, after / count);
    else
      std::snprintf(line, sizeof(line), "cluster %d: no cases, thresholds stay zero", cluster);
    std::cout << line << "\n";
  }

  write_json_file(o.output, policy.to_json());
  write_manifest(o.output, false, "fit-postprocess",
                 {{"gt", o.gt_dir},
                  {"pred", o.pred_dir},
                  {"features", o.features_csv},
                  {"model", o.model_file},
                  {"size_grid", params.size_grid},
                  {"ratio_grid", params.ratio_grid},
                  {"match", params.match.to_json()},
                  {"threads", g.threads}},
                 {o.gt_dir, o.pred_dir, o.features_csv, o.model_file}, {o.output}, ids.size(),
                 failures);
  return finish(failures, ids.size(), "fit-postprocess");
}

struct PostprocessOpts {
  std::string pred_dir;
  std::string features_csv;
  std::string model_file;
  std::string policy_file;
  std::string output_dir;
};

int cmd_postprocess(const GlobalOpts& g, const PostprocessOpts& o) {
  const auto pred_files = collect_label_files(o.pred_dir);
  const PostprocessPolicy policy = PostprocessPolicy::from_json(read_json_file(o.policy_file));
  FeatureTable table = read_feature_csv(o.features_csv);
  table.validate();
  impute_nan_with_column_median(table);
  const StratificationModel model = StratificationModel::from_json(read_json_file(o.model_file));
  const std::vector<int> clusters = model.assign_all(table);
  std::map<std::string, int> cluster_of;
  const std::vector<std::string> table_ids = table.case_ids();
  for (std::size_t i = 0; i < table_ids.size(); ++i) cluster_of[table_ids[i]] = clusters[i];

  std::vector<std::string> ids;
  for (const auto& [id, path] : pred_files) ids.push_back(id);
  fs::create_directories(o.output_dir);
  const NamingScheme naming;

  const auto failures = for_each_case(ids, g.threads, [&](std::size_t i) {
    const std::string& id = ids[i];
    const LabelVolume pred = nifti::read_labels(pred_files.at(id));
    LabelVolume out;
    const auto cluster_it = cluster_of.find(id);
    if (cluster_it == cluster_of.end()) {
      // No feature row (typically an empty prediction): pass through as-is.
      out = pred;
      log_line("case " + id + ": no feature row, passed through unchanged");
    } else {
      out = apply_policy(pred, policy.for_cluster(cluster_it->second), policy.connectivity);
      log_verbose(g, "case " + id + ": cluster " + std::to_string(cluster_it->second));
    }
    write_labels_atomic(out, fs::path(o.output_dir) / (id + naming.seg + ".nii.gz"));
  });

  write_manifest(o.output_dir, true, "postprocess",
                 {{"pred", o.pred_dir},
                  {"features", o.features_csv},
                  {"model", o.model_file},
                  {"policy", o.policy_file},
                  {"threads", g.threads}},
                 {o.pred_dir, o.features_csv, o.model_file, o.policy_file}, {o.output_dir},
                 ids.size(), failures);
  return finish(failures, ids.size(), "postprocess");
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
  std::string gt_dir;
  std::string pred_dir;
  std::string output_csv;
  std::string output_json;
  int connectivity = 26;
  int dilation_radius = 1;
  double penalty_mm = 374.0;
  std::int64_t min_fp_size = 0;
};

int cmd_evaluate(const GlobalOpts& g, const EvaluateOpts& o) {
  if (o.output_csv.empty() && o.output_json.empty())
    throw CLI::ValidationError("at least one of --output-csv/--output-json is required");
  const auto gt_files = collect_label_files(o.gt_dir);
  const auto pred_files = collect_label_files(o.pred_dir);
  const LesionMatchParams match =
      match_params_from(o.connectivity, o.dilation_radius, o.penalty_mm, o.min_fp_size);

  std::vector<std::string> ids;
  for (const auto& [id, path] : gt_files) ids.push_back(id);
  std::vector<std::optional<CaseReport>> reports(ids.size());
  const auto failures = for_each_case(ids, g.threads, [&](std::size_t i) {
    const std::string& id = ids[i];
    const auto pred_it = pred_files.find(id);
    if (pred_it == pred_files.end()) throw std::runtime_error("no prediction for this case");
    const LabelVolume gt = nifti::read_labels(gt_files.at(id));
    const LabelVolume pred = nifti::read_labels(pred_it->second);
    if (!gt.geometry().same_grid(pred.geometry()))
      throw std::runtime_error("prediction grid does not match the ground truth");
    reports[i] = evaluate_case(gt, pred, gt.geometry().spacing, match);
    log_verbose(g, "case " + id + ": evaluated");
  });

  std::vector<CaseReport> done;
  for (auto& r : reports)
    if (r) done.push_back(std::move(*r));

  if (!o.output_csv.empty()) {
    std::ostringstream csv;
    write_report_csv(csv, done, match);
    atomic_write_file(o.output_csv, csv.str());
  }
  if (!o.output_json.empty()) write_json_file(o.output_json, report_to_json(done, match));

  const fs::path primary = !o.output_csv.empty() ? o.output_csv : o.output_json;
  std::vector<std::string> outputs;
  if (!o.output_csv.empty()) outputs.push_back(o.output_csv);
  if (!o.output_json.empty()) outputs.push_back(o.output_json);
  write_manifest(primary, false, "evaluate",
                 {{"gt", o.gt_dir},
                  {"pred", o.pred_dir},
                  {"match", match.to_json()},
                  {"threads", g.threads}},
                 {o.gt_dir, o.pred_dir}, outputs, ids.size(), failures);
  return finish(failures, ids.size(), "evaluate");
}

// ---------------------------------------------------------------------------
// phantom

struct PhantomOpts {
  std::string output_dir;
  int n_cases = 10;
  std::vector<std::string> models{"nnunet", "mednext"};
  std::vector<int> dims{48, 48, 48};
  std::vector<double> spacing{1.0, 1.0, 1.0};
  int min_lesions = 1;
  int max_lesions = 3;
  double min_radius = 4.0;
  double max_radius = 10.0;
  double et_fraction = 0.3;
  double ncr_fraction = 0.3;
  double noise_sigma = 0.05;
  double blur_sigma = 1.0;
  double corruption = 0.15;
  bool no_probs = false;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_phantom(const GlobalOpts& g, const PhantomOpts& o) {
  if (o.dims.size() != 3 || o.spacing.size() != 3)
    throw CLI::ValidationError("--dims and --spacing expect three values");
  const std::uint64_t base_seed = o.seed_set ? o.seed : g.seed;
  const NamingScheme naming;

  std::vector<std::string> ids;
  for (int c = 0; c < o.n_cases; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "phantom-%03d", c);
    ids.push_back(buf);
  }

  const auto failures = for_each_case(ids, g.threads, [&](std::size_t i) {
    PhantomSpec spec;
    spec.dims = {o.dims[0], o.dims[1], o.dims[2]};
    spec.spacing = {o.spacing[0], o.spacing[1], o.spacing[2]};
    spec.min_lesions = o.min_lesions;
    spec.max_lesions = o.max_lesions;
    spec.min_radius_mm = o.min_radius;
    spec.max_radius_mm = o.max_radius;
    spec.et_fraction = o.et_fraction;
    spec.ncr_fraction = o.ncr_fraction;
    spec.noise_sigma = o.noise_sigma;
    spec.seed = base_seed + i;

    CaseBundle bundle = generate_phantom(spec);
    bundle.case_id = ids[i];
    const fs::path case_dir = fs::path(o.output_dir) / "cases" / bundle.case_id;
    write_grid_atomic(bundle.t1, case_dir / (bundle.case_id + naming.t1 + ".nii.gz"));
    write_grid_atomic(bundle.t1ce, case_dir / (bundle.case_id + naming.t1ce + ".nii.gz"));
    write_grid_atomic(bundle.t2, case_dir / (bundle.case_id + naming.t2 + ".nii.gz"));
    write_grid_atomic(bundle.flair, case_dir / (bundle.case_id + naming.flair + ".nii.gz"));
    write_labels_atomic(*bundle.labels, case_dir / (bundle.case_id + naming.seg + ".nii.gz"));

    if (!o.no_probs) {
      for (std::size_t m = 0; m < o.models.size(); ++m) {
        const std::uint64_t prob_seed = base_seed + 7919 * (m + 1) + i;
        const RegionProbabilityMaps maps =
            phantom_prob_maps(*bundle.labels, o.blur_sigma, o.corruption, prob_seed);
        const fs::path model_dir = fs::path(o.output_dir) / "probs" / o.models[m];
        write_grid_atomic(maps.et, model_dir / (bundle.case_id + naming.prob_et + ".nii.gz"));
        write_grid_atomic(maps.tc, model_dir / (bundle.case_id + naming.prob_tc + ".nii.gz"));
        write_grid_atomic(maps.wt, model_dir / (bundle.case_id + naming.prob_wt + ".nii.gz"));
      }
    }
    log_verbose(g, "case " + ids[i] + ": generated");
  });

  write_manifest(o.output_dir, true, "phantom",
                 {{"cases", o.n_cases},
                  {"models", o.models},
                  {"dims", o.dims},
                  {"spacing", o.spacing},
                  {"lesions", {o.min_lesions, o.max_lesions}},
                  {"radius_mm", {o.min_radius, o.max_radius}},
                  {"et_fraction", o.et_fraction},
                  {"ncr_fraction", o.ncr_fraction},
                  {"noise_sigma", o.noise_sigma},
                  {"blur_sigma", o.blur_sigma},
                  {"corruption", o.corruption},
                  {"probs", !o.no_probs},
                  {"seed", base_seed},
                  {"threads", g.threads}},
                 {}, {o.output_dir}, ids.size(), failures);
  return finish(failures, ids.size(), "phantom");
}

}  // namespace

int main(int argc, char** argv) {
  GlobalOpts g;
  try {
    g.config = load_config_from_argv(argc, argv, g.config_path);
  } catch (const std::exception& e) {
    std::cerr << "[segpipe] config error: " << e.what() << "\n";
    return 2;
  }
  cfg_default(g.config, "threads", g.threads);
  cfg_default(g.config, "seed", g.seed);
  cfg_default(g.config, "verbose", g.verbose);

  CLI::App app{"Brain tumor segmentation pipeline toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  app.add_option("--config", g.config_path, "JSON config file providing option defaults")
      ->envname("SEGPIPE_CONFIG");
  app.add_option("--threads", g.threads, "Worker threads for case-level parallelism")
      ->envname("SEGPIPE_THREADS")
      ->capture_default_str();
  app.add_option("--seed", g.seed, "Base random seed")->envname("SEGPIPE_SEED")->capture_default_str();
  app.add_flag("--verbose", g.verbose, "Per-case progress on stderr")->envname("SEGPIPE_VERBOSE");

  FeaturesOpts features;
  cfg_default(g.config, "bin_width", features.bin_width);
  auto* features_cmd = app.add_subcommand("features", "Extract radiomic features per case");
  features_cmd->add_option("--cases", features.cases_dir, "Directory of case directories")
      ->required();
  features_cmd->add_option("--output", features.output, "Output feature CSV")->required();
  features_cmd
      ->add_option("--mask-source", features.mask_source,
                   "Mask to extract features on: ground_truth or prediction")
      ->check(CLI::IsMember({"ground_truth", "prediction"}))
      ->capture_default_str();
  features_cmd->add_option("--pred-dir", features.pred_dir,
                           "Directory of predicted segmentations (for --mask-source prediction)");
  features_cmd->add_option("--bin-width", features.bin_width, "Intensity discretization bin width")
      ->capture_default_str();

  StratifyOpts stratify;
  cfg_default(g.config, "n_folds", stratify.n_folds);
  cfg_default(g.config, "retention", stratify.retention);
  cfg_default(g.config, "k_range", stratify.k_range);
  auto* stratify_cmd =
      app.add_subcommand("stratify", "Fit the stratification model and deal folds");
  stratify_cmd->add_option("--features", stratify.features_csv, "Feature CSV")->required();
  stratify_cmd->add_option("--output-model", stratify.output_model, "Output model JSON")
      ->required();
  stratify_cmd->add_option("--output-folds", stratify.output_folds, "Output fold assignment JSON")
      ->required();
  stratify_cmd->add_option("--folds", stratify.n_folds, "Number of folds")->capture_default_str();
  stratify_cmd->add_option("--retention", stratify.retention, "PCA variance retention")
      ->capture_default_str();
  stratify_cmd->add_option("--k-range", stratify.k_range, "Candidate cluster counts");
  stratify_cmd->add_option("--seed", stratify.seed, "Seed override for this command")
      ->trigger_on_parse()
      ->each([&stratify](const std::string&) { stratify.seed_set = true; });

  EnsembleOpts ens;
  cfg_default(g.config, "threshold", ens.threshold);
  auto* ensemble_cmd = app.add_subcommand("ensemble", "Weighted-average model probability maps");
  ensemble_cmd
      ->add_option("--model", ens.model_dirs, "Model probability directory as name=path (repeat)")
      ->required();
  ensemble_cmd->add_option("--weights", ens.weights_file, "Weights JSON file")->required();
  ensemble_cmd->add_option("--output", ens.output_dir, "Output directory")->required();
  ensemble_cmd->add_option("--threshold", ens.threshold,
                           "Decode threshold (default: from the weights file)");
  ensemble_cmd->add_flag("--write-probs", ens.write_probs, "Also write combined probability maps");

  WeightsOpts weights;
  auto* weights_cmd =
      app.add_subcommand("weights-from-cv", "Normalize cross-validation scores into weights");
  weights_cmd->add_option("--scores", weights.scores_file, "JSON of model -> mean Dice")
      ->required();
  weights_cmd->add_option("--output", weights.output, "Output weights JSON")->required();
  weights_cmd->add_option("--threshold", weights.threshold, "Decode threshold to embed")
      ->capture_default_str();

  FitPostprocessOpts fitpp;
  cfg_default(g.config, "connectivity", fitpp.connectivity);
  cfg_default(g.config, "dilation_radius", fitpp.dilation_radius);
  cfg_default(g.config, "penalty_mm", fitpp.penalty_mm);
  cfg_default(g.config, "min_fp_size", fitpp.min_fp_size);
  auto* fitpp_cmd =
      app.add_subcommand("fit-postprocess", "Grid-search per-cluster cleanup thresholds");
  fitpp_cmd->add_option("--gt", fitpp.gt_dir, "Ground-truth segmentation directory")->required();
  fitpp_cmd->add_option("--pred", fitpp.pred_dir, "Predicted segmentation directory")->required();
  fitpp_cmd->add_option("--features", fitpp.features_csv, "Feature CSV for cluster assignment")
      ->required();
  fitpp_cmd->add_option("--model", fitpp.model_file, "Stratification model JSON")->required();
  fitpp_cmd->add_option("--output", fitpp.output, "Output policy JSON")->required();
  fitpp_cmd->add_option("--size-grid", fitpp.size_grid, "Candidate component-size thresholds");
  fitpp_cmd->add_option("--ratio-grid", fitpp.ratio_grid, "Candidate ET/WT ratio thresholds");
  fitpp_cmd->add_option("--connectivity", fitpp.connectivity, "Component connectivity (6/18/26)")
      ->capture_default_str();
  fitpp_cmd->add_option("--dilation-radius", fitpp.dilation_radius, "Match dilation radius")
      ->capture_default_str();
  fitpp_cmd->add_option("--penalty", fitpp.penalty_mm, "Unmatched-lesion HD95 penalty (mm)")
      ->capture_default_str();
  fitpp_cmd->add_option("--min-fp-size", fitpp.min_fp_size, "Ignore false positives at or below this size")
      ->capture_default_str();

  PostprocessOpts pp;
  auto* pp_cmd = app.add_subcommand("postprocess", "Apply a cleanup policy to predictions");
  pp_cmd->add_option("--pred", pp.pred_dir, "Predicted segmentation directory")->required();
  pp_cmd->add_option("--features", pp.features_csv, "Feature CSV for cluster assignment")
      ->required();
  pp_cmd->add_option("--model", pp.model_file, "Stratification model JSON")->required();
  pp_cmd->add_option("--policy", pp.policy_file, "Policy JSON")->required();
  pp_cmd->add_option("--output", pp.output_dir, "Output directory")->required();

  EvaluateOpts eval;
  cfg_default(g.config, "connectivity", eval.connectivity);
  cfg_default(g.config, "dilation_radius", eval.dilation_radius);
  cfg_default(g.config, "penalty_mm", eval.penalty_mm);
  cfg_default(g.config, "min_fp_size", eval.min_fp_size);
  auto* eval_cmd = app.add_subcommand("evaluate", "Lesion-wise and volumetric metrics");
  eval_cmd->add_option("--gt", eval.gt_dir, "Ground-truth segmentation directory")->required();
  eval_cmd->add_option("--pred", eval.pred_dir, "Predicted segmentation directory")->required();
  eval_cmd->add_option("--output-csv", eval.output_csv, "Report CSV path");
  eval_cmd->add_option("--output-json", eval.output_json, "Report JSON path");
  eval_cmd->add_option("--connectivity", eval.connectivity, "Component connectivity (6/18/26)")
      ->capture_default_str();
  eval_cmd->add_option("--dilation-radius", eval.dilation_radius, "Match dilation radius")
      ->capture_default_str();
  eval_cmd->add_option("--penalty", eval.penalty_mm, "Unmatched-lesion HD95 penalty (mm)")
      ->capture_default_str();
  eval_cmd->add_option("--min-fp-size", eval.min_fp_size, "Ignore false positives at or below this size")
      ->capture_default_str();

  PhantomOpts ph;
  auto* phantom_cmd = app.add_subcommand("phantom", "Generate synthetic cases");
  phantom_cmd->add_option("--output", ph.output_dir, "Output directory")->required();
  phantom_cmd->add_option("--cases", ph.n_cases, "Number of cases")->capture_default_str();
  phantom_cmd->add_option("--models", ph.models, "Model names for probability maps")
      ->capture_default_str();
  phantom_cmd->add_option("--dims", ph.dims, "Volume dimensions i j k")->expected(3);
  phantom_cmd->add_option("--spacing", ph.spacing, "Voxel spacing (mm)")->expected(3);
  phantom_cmd->add_option("--min-lesions", ph.min_lesions, "")->capture_default_str();
  phantom_cmd->add_option("--max-lesions", ph.max_lesions, "")->capture_default_str();
  phantom_cmd->add_option("--min-radius", ph.min_radius, "Minimum semi-axis (mm)")
      ->capture_default_str();
  phantom_cmd->add_option("--max-radius", ph.max_radius, "Maximum semi-axis (mm)")
      ->capture_default_str();
  phantom_cmd->add_option("--et-fraction", ph.et_fraction, "")->capture_default_str();
  phantom_cmd->add_option("--ncr-fraction", ph.ncr_fraction, "")->capture_default_str();
  phantom_cmd->add_option("--noise", ph.noise_sigma, "Intensity noise sigma")
      ->capture_default_str();
  phantom_cmd->add_option("--blur", ph.blur_sigma, "Probability blur sigma (voxels)")
      ->capture_default_str();
  phantom_cmd->add_option("--corruption", ph.corruption, "Probability corruption amplitude")
      ->capture_default_str();
  phantom_cmd->add_flag("--no-probs", ph.no_probs, "Skip probability map generation");
  phantom_cmd->add_option("--seed", ph.seed, "Seed override for this command")
      ->trigger_on_parse()
      ->each([&ph](const std::string&) { ph.seed_set = true; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(features_cmd)) return cmd_features(g, features);
    if (app.got_subcommand(stratify_cmd)) return cmd_stratify(g, stratify);
    if (app.got_subcommand(ensemble_cmd)) return cmd_ensemble(g, ens);
    if (app.got_subcommand(weights_cmd)) return cmd_weights_from_cv(weights);
    if (app.got_subcommand(fitpp_cmd)) return cmd_fit_postprocess(g, fitpp);
    if (app.got_subcommand(pp_cmd)) return cmd_postprocess(g, pp);
    if (app.got_subcommand(eval_cmd)) return cmd_evaluate(g, eval);
    if (app.got_subcommand(phantom_cmd)) return cmd_phantom(g, ph);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "[segpipe] " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "[segpipe] error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
