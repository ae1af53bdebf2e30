#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segpipe/ensemble.hpp"
#include "segpipe/nifti.hpp"
#include "segpipe/volume.hpp"

namespace segpipe {

/// File-name suffixes for the sequences of a case directory. Defaults follow
/// the BraTS 2023/2024 convention: <case>/<case>-t1n.nii.gz etc.
struct NamingScheme {
  std::string t1 = "-t1n";
  std::string t1ce = "-t1c";
  std::string t2 = "-t2w";
  std::string flair = "-t2f";
  std::string seg = "-seg";
  std::string prob_et = "-prob_et";
  std::string prob_tc = "-prob_tc";
  std::string prob_wt = "-prob_wt";
  std::vector<std::string> extensions{".nii.gz", ".nii"};
};

/// One multi-sequence case: the four MRI sequences, optional ground-truth
/// labels, and optional per-model region probability maps.
struct CaseBundle {
  std::string case_id;
  VoxelGrid t1;
  VoxelGrid t1ce;
  VoxelGrid t2;
  VoxelGrid flair;
  std::optional<LabelVolume> labels;
  std::map<std::string, RegionProbabilityMaps> prob_maps;

  const VoxelGrid& sequence(const std::string& name) const;
};

inline constexpr std::array<const char*, 4> kSequenceNames{"t1", "t1ce", "t2", "flair"};

/// Loads the four sequences (and the segmentation when present) from a case
/// directory, checking that all volumes share one grid.
CaseBundle load_case(const std::filesystem::path& dir, const NamingScheme& naming = {});

/// Loads <case>-prob_{et,tc,wt} maps for one model from a directory of flat
/// files, applying the activation rule.
RegionProbabilityMaps load_prob_maps(const std::filesystem::path& dir, const std::string& case_id,
                                     const std::string& model_name, const NamingScheme& naming = {});

/// Case directories under a root: subdirectories containing a t1 sequence
/// file, sorted by case id.
std::vector<std::filesystem::path> list_case_dirs(const std::filesystem::path& root,
                                                  const NamingScheme& naming = {});

/// Label volumes for evaluation or post-processing: accepts flat
/// "<id>-seg.nii[.gz]" files and "<id>/<id>-seg.nii[.gz]" case layouts.
std::map<std::string, std::filesystem::path> collect_label_files(const std::filesystem::path& root,
                                                                 const NamingScheme& naming = {});

}  // namespace segpipe
