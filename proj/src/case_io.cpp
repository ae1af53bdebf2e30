#include "segpipe/case_io.hpp"

#include <algorithm>

namespace segpipe {

namespace fs = std::filesystem;

namespace {

std::optional<fs::path> find_with_extensions(const fs::path& stem, const std::vector<std::string>& exts) {
  for (const auto& ext : exts) {
    fs::path p = stem;
    p += ext;
    if (fs::exists(p)) return p;
  }
  return std::nullopt;
}

fs::path require_file(const fs::path& dir, const std::string& case_id, const std::string& suffix,
                      const std::string& what, const NamingScheme& naming) {
  const auto found = find_with_extensions(dir / (case_id + suffix), naming.extensions);
  if (!found)
    throw std::runtime_error("case '" + case_id + "': missing " + what + " file (" + case_id + suffix + ".nii[.gz]) in " +
                             dir.string());
  return *found;
}

void check_same_grid(const std::string& case_id, const Geometry& ref, const Geometry& other,
                     const std::string& what) {
  if (!ref.same_grid(other))
    throw std::runtime_error("case '" + case_id + "': geometry mismatch between t1 and " + what);
}

}  // namespace

const VoxelGrid& CaseBundle::sequence(const std::string& name) const {
  if (name == "t1") return t1;
  if (name == "t1ce") return t1ce;
  if (name == "t2") return t2;
  if (name == "flair") return flair;
  throw std::invalid_argument("unknown sequence '" + name + "'");
}

CaseBundle load_case(const fs::path& dir, const NamingScheme& naming) {
  if (!fs::is_directory(dir)) throw std::runtime_error("case directory not found: " + dir.string());
  CaseBundle bundle;
  bundle.case_id = dir.filename().string();

  bundle.t1 = nifti::read_grid(require_file(dir, bundle.case_id, naming.t1, "t1", naming));
  bundle.t1ce = nifti::read_grid(require_file(dir, bundle.case_id, naming.t1ce, "t1ce", naming));
  bundle.t2 = nifti::read_grid(require_file(dir, bundle.case_id, naming.t2, "t2", naming));
  bundle.flair = nifti::read_grid(require_file(dir, bundle.case_id, naming.flair, "flair", naming));

  const Geometry& ref = bundle.t1.geometry();
  check_same_grid(bundle.case_id, ref, bundle.t1ce.geometry(), "t1ce");
  check_same_grid(bundle.case_id, ref, bundle.t2.geometry(), "t2");
  check_same_grid(bundle.case_id, ref, bundle.flair.geometry(), "flair");

  if (const auto seg = find_with_extensions(dir / (bundle.case_id + naming.seg), naming.extensions)) {
    bundle.labels = nifti::read_labels(*seg);
    check_same_grid(bundle.case_id, ref, bundle.labels->geometry(), "seg");
  }
  return bundle;
}

RegionProbabilityMaps load_prob_maps(const fs::path& dir, const std::string& case_id,
                                     const std::string& model_name, const NamingScheme& naming) {
  RegionProbabilityMaps maps;
  maps.model_name = model_name;
  maps.et = nifti::read_grid(require_file(dir, case_id, naming.prob_et, "prob_et", naming));
  maps.tc = nifti::read_grid(require_file(dir, case_id, naming.prob_tc, "prob_tc", naming));
  maps.wt = nifti::read_grid(require_file(dir, case_id, naming.prob_wt, "prob_wt", naming));
  maps.check_geometry();
  return activate(maps);
}

std::vector<fs::path> list_case_dirs(const fs::path& root, const NamingScheme& naming) {
  if (!fs::is_directory(root)) throw std::runtime_error("cases root not found: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string id = entry.path().filename().string();
    if (find_with_extensions(entry.path() / (id + naming.t1), naming.extensions)) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::map<std::string, fs::path> collect_label_files(const fs::path& root, const NamingScheme& naming) {
  if (!fs::is_directory(root)) throw std::runtime_error("label directory not found: " + root.string());
  std::map<std::string, fs::path> out;
  const auto strip = [&](const std::string& filename) -> std::optional<std::string> {
    for (const auto& ext : naming.extensions) {
      const std::string tail = naming.seg + ext;
      if (filename.size() > tail.size() && filename.ends_with(tail))
        return filename.substr(0, filename.size() - tail.size());
    }
    return std::nullopt;
  };
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_regular_file()) {
      if (const auto id = strip(entry.path().filename().string())) out[*id] = entry.path();
    } else if (entry.is_directory()) {
      const std::string id = entry.path().filename().string();
      if (const auto seg = find_with_extensions(entry.path() / (id + naming.seg), naming.extensions)) out[id] = *seg;
    }
  }
  return out;
}

}  // namespace segpipe
