#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "segpipe/case_io.hpp"
#include "segpipe/volume.hpp"

/// Radiomic features of the whole-tumor mask: 14 shape features plus, per MRI
/// sequence, 93 intensity features (18 first-order + 24 GLCM + 16 GLRLM +
/// 16 GLSZM + 14 GLDM + 5 NGTDM), following the IBSI-aligned definitions of
/// the de-facto standard radiomics feature set.
///
/// Conventions that keep every feature finite (no NaN ever leaves this
/// module):
///   - skewness and kurtosis of constant data are 0
///   - GLCM correlation with zero marginal variance is 1
///   - NGTDM coarseness with a zero denominator is 1e6
///   - a single-voxel mask yields the documented degenerate texture values
///     (its GLCM is taken as the 1x1 identity distribution on its gray level)
///   - elongation/flatness of a zero-variance (single-voxel) mask are 1
///
/// Inputs are cropped to the mask bounding box before any computation, which
/// makes every feature bit-identical under whole-voxel translations.
namespace segpipe {

struct FeatureParams {
  double bin_width = 25.0;  // fixed-bin-width discretization, intensity units
};

struct FeatureVector {
  std::string case_id;
  std::vector<std::string> names;
  std::vector<double> values;
};

/// Rectangular collection of FeatureVectors sharing one name list.
struct FeatureTable {
  std::vector<std::string> names;
  std::vector<FeatureVector> rows;

  /// Throws if any row's names differ from the table's.
  void validate() const;

  /// Row-major matrix of values (rows x features).
  Eigen::MatrixXd to_matrix() const;

  std::vector<std::string> case_ids() const;
};

/// Fixed-bin-width discretization anchored at the in-mask minimum:
/// bin = floor((x - min)/bin_width) + 1. Bin 0 marks out-of-mask voxels.
struct DiscretizedImage {
  Volume<int> bins;
  int n_bins = 0;
  double bin_width = 0.0;
  double min_intensity = 0.0;
};

DiscretizedImage discretize(const VoxelGrid& image, const BinaryMask& mask, double bin_width);

/// 14 shape features of the mask in physical units. Mesh quantities (volume,
/// area, sphericity) come from a marching-cubes isosurface of the 0.5 level
/// with midpoint interpolation; diameters are max pairwise distances between
/// voxel corner points (3D, and per axial/coronal/sagittal slice in-plane);
/// axis lengths are 4*sqrt(eigenvalue) of the voxel-center covariance.
FeatureVector shape_features(const BinaryMask& mask, const Eigen::Vector3d& spacing);

/// 18 first-order statistics; entropy and uniformity use the discretized
/// histogram, everything else the raw intensities.
FeatureVector first_order_features(const VoxelGrid& image, const BinaryMask& mask,
                                   const FeatureParams& params = {});

/// 75 texture features on the discretized image: GLCM and GLRLM averaged
/// over the 13 unique 3D directions at distance 1, GLSZM with 26-connected
/// zones, GLDM with dependence = same-level 26-neighbors + 1, NGTDM on the
/// 26-neighborhood mean.
FeatureVector texture_features(const VoxelGrid& image, const BinaryMask& mask,
                               const FeatureParams& params = {});

/// first_order ++ texture for one sequence (93 values, unprefixed names).
FeatureVector intensity_features(const VoxelGrid& image, const BinaryMask& mask,
                                 const FeatureParams& params = {});

/// Full per-case vector: shape block, then the 93 intensity features per
/// sequence in order t1, t1ce, t2, flair, names prefixed like
/// "shape.Sphericity" / "t1ce.glcm.Contrast". Length 386.
FeatureVector case_features(const CaseBundle& bundle, const BinaryMask& mask,
                            const FeatureParams& params = {});

/// Replaces NaN cells by their column median (columns that are entirely NaN
/// become 0). Features computed here are always finite; this guards tables
/// read from external CSV before clustering.
void impute_nan_with_column_median(FeatureTable& table);

/// CSV with header "case_id,<name>,..."; values in shortest round-trip form.
void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable read_feature_csv(const std::filesystem::path& path);

}  // namespace segpipe
