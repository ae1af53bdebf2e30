#include "segpipe/radiomics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "radiomics_internal.hpp"
#include "segpipe/io_util.hpp"

namespace segpipe {

namespace detail {

CroppedPair crop_to_mask(const VoxelGrid& image, const BinaryMask& mask) {
  if (image.dims() != mask.dims())
    throw std::invalid_argument("image and mask have different dimensions");
  const auto bbox = foreground_bbox(mask);
  if (!bbox) throw std::invalid_argument("empty mask");
  return {crop_volume(image, (*bbox)[0], (*bbox)[1]), crop_volume(mask, (*bbox)[0], (*bbox)[1])};
}

BinaryMask crop_to_mask(const BinaryMask& mask) {
  const auto bbox = foreground_bbox(mask);
  if (!bbox) throw std::invalid_argument("empty mask");
  return crop_volume(mask, (*bbox)[0], (*bbox)[1]);
}

const std::vector<std::array<int, 3>>& texture_directions() {
  // One representative of each +/- offset pair: keep offsets whose last
  // nonzero component (in k, j, i precedence) is positive.
  static const std::vector<std::array<int, 3>> dirs = [] {
    std::vector<std::array<int, 3>> out;
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          if (di == 0 && dj == 0 && dk == 0) continue;
          if (dk > 0 || (dk == 0 && dj > 0) || (dk == 0 && dj == 0 && di > 0))
            out.push_back({di, dj, dk});
        }
    return out;
  }();
  return dirs;
}

double sorted_percentile(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  const double h = static_cast<double>(n - 1) * q;
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

void FeatureTable::validate() const {
  for (const FeatureVector& row : rows) {
    if (row.names != names)
      throw std::invalid_argument("feature table row '" + row.case_id +
                                  "' does not share the table's feature names");
    if (row.values.size() != names.size())
      throw std::invalid_argument("feature table row '" + row.case_id + "' has wrong arity");
  }
}

Eigen::MatrixXd FeatureTable::to_matrix() const {
  validate();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < names.size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r].values[c];
  return m;
}

std::vector<std::string> FeatureTable::case_ids() const {
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (const FeatureVector& row : rows) ids.push_back(row.case_id);
  return ids;
}

DiscretizedImage discretize(const VoxelGrid& image, const BinaryMask& mask, double bin_width) {
  if (!(bin_width > 0)) throw std::invalid_argument("bin_width must be positive");
  if (image.dims() != mask.dims())
    throw std::invalid_argument("image and mask have different dimensions");
  if (count_foreground(mask) == 0) throw std::invalid_argument("empty mask");

  double min_val = std::numeric_limits<double>::infinity();
  for (std::size_t idx = 0; idx < mask.size(); ++idx)
    if (mask[idx]) min_val = std::min(min_val, static_cast<double>(image[idx]));

  DiscretizedImage out;
  out.bins = Volume<int>(image.geometry());
  out.bin_width = bin_width;
  out.min_intensity = min_val;
  for (std::size_t idx = 0; idx < mask.size(); ++idx) {
    if (!mask[idx]) continue;
    const int bin =
        static_cast<int>(std::floor((static_cast<double>(image[idx]) - min_val) / bin_width)) + 1;
    out.bins[idx] = bin;
    out.n_bins = std::max(out.n_bins, bin);
  }
  return out;
}

namespace {

const std::vector<std::string> kFirstOrderNames{
    "Energy",  "TotalEnergy",
    "Entropy", "Minimum",
    "10Percentile", "90Percentile",
    "Maximum", "Mean",
    "Median",  "InterquartileRange",
    "Range",   "MeanAbsoluteDeviation",
    "RobustMeanAbsoluteDeviation", "RootMeanSquared",
    "Skewness", "Kurtosis",
    "Variance", "Uniformity"};

}  // namespace

FeatureVector first_order_features(const VoxelGrid& image, const BinaryMask& mask,
                                   const FeatureParams& params) {
  const detail::CroppedPair cp = detail::crop_to_mask(image, mask);

  std::vector<double> values;
  for (std::size_t idx = 0; idx < cp.mask.size(); ++idx)
    if (cp.mask[idx]) values.push_back(static_cast<double>(cp.image[idx]));
  const auto n = static_cast<double>(values.size());

  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());

  double sum = 0.0, sum_sq = 0.0;
  for (double x : values) {
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0, abs_dev = 0.0;
  for (double x : values) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    abs_dev += std::abs(d);
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double sigma = std::sqrt(m2);

  const double p10 = detail::sorted_percentile(sorted, 0.10);
  const double p25 = detail::sorted_percentile(sorted, 0.25);
  const double p75 = detail::sorted_percentile(sorted, 0.75);
  const double p90 = detail::sorted_percentile(sorted, 0.90);

  // Robust MAD: deviation from the mean of the values inside [P10, P90].
  double robust_sum = 0.0;
  std::size_t robust_n = 0;
  for (double x : sorted)
    if (x >= p10 && x <= p90) {
      robust_sum += x;
      ++robust_n;
    }
  double robust_mad = 0.0;
  if (robust_n > 0) {
    const double robust_mean = robust_sum / static_cast<double>(robust_n);
    for (double x : sorted)
      if (x >= p10 && x <= p90) robust_mad += std::abs(x - robust_mean);
    robust_mad /= static_cast<double>(robust_n);
  }

  // Histogram features on the discretized intensities.
  const DiscretizedImage disc = discretize(cp.image, cp.mask, params.bin_width);
  std::vector<double> hist(static_cast<std::size_t>(disc.n_bins), 0.0);
  for (std::size_t idx = 0; idx < disc.bins.size(); ++idx)
    if (disc.bins[idx] > 0) hist[static_cast<std::size_t>(disc.bins[idx]) - 1] += 1.0;
  double entropy = 0.0, uniformity = 0.0;
  for (double c : hist) {
    if (c == 0.0) continue;
    const double p = c / n;
    entropy -= p * std::log2(p);
    uniformity += p * p;
  }

  FeatureVector fv;
  fv.names = kFirstOrderNames;
  fv.values = {
      sum_sq,
      cp.image.geometry().voxel_volume() * sum_sq,
      entropy,
      sorted.front(),
      p10,
      p90,
      sorted.back(),
      mean,
      detail::sorted_percentile(sorted, 0.5),
      p75 - p25,
      sorted.back() - sorted.front(),
      abs_dev / n,
      robust_mad,
      std::sqrt(sum_sq / n),
      sigma > 0 ? m3 / (sigma * sigma * sigma) : 0.0,
      sigma > 0 ? m4 / (m2 * m2) : 0.0,
      m2,
      uniformity,
  };
  return fv;
}

FeatureVector intensity_features(const VoxelGrid& image, const BinaryMask& mask,
                                 const FeatureParams& params) {
  FeatureVector fo = first_order_features(image, mask, params);
  FeatureVector tx = texture_features(image, mask, params);
  FeatureVector out;
  out.names.reserve(fo.names.size() + tx.names.size());
  out.values.reserve(fo.values.size() + tx.values.size());
  for (std::size_t i = 0; i < fo.names.size(); ++i) {
    out.names.push_back("firstorder." + fo.names[i]);
    out.values.push_back(fo.values[i]);
  }
  for (std::size_t i = 0; i < tx.names.size(); ++i) {
    out.names.push_back(tx.names[i]);
    out.values.push_back(tx.values[i]);
  }
  return out;
}

FeatureVector case_features(const CaseBundle& bundle, const BinaryMask& mask,
                            const FeatureParams& params) {
  FeatureVector out;
  out.case_id = bundle.case_id;

  const FeatureVector shape = shape_features(mask, mask.spacing());
  for (std::size_t i = 0; i < shape.names.size(); ++i) {
    out.names.push_back("shape." + shape.names[i]);
    out.values.push_back(shape.values[i]);
  }
  for (const char* seq : kSequenceNames) {
    const FeatureVector fv = intensity_features(bundle.sequence(seq), mask, params);
    for (std::size_t i = 0; i < fv.names.size(); ++i) {
      out.names.push_back(std::string(seq) + "." + fv.names[i]);
      out.values.push_back(fv.values[i]);
    }
  }
  if (out.values.size() != 386)
    throw std::logic_error("case feature vector has wrong arity");
  return out;
}

void impute_nan_with_column_median(FeatureTable& table) {
  table.validate();
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    std::vector<double> finite;
    for (const FeatureVector& row : table.rows)
      if (std::isfinite(row.values[c])) finite.push_back(row.values[c]);
    double fill = 0.0;
    if (!finite.empty()) {
      std::sort(finite.begin(), finite.end());
      fill = detail::sorted_percentile(finite, 0.5);
    }
    for (FeatureVector& row : table.rows)
      if (!std::isfinite(row.values[c])) row.values[c] = fill;
  }
}

void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table) {
  table.validate();
  std::ostringstream ss;
  ss << "case_id";
  for (const std::string& name : table.names) ss << ',' << name;
  ss << "\n";
  for (const FeatureVector& row : table.rows) {
    ss << row.case_id;
    for (double v : row.values) ss << ',' << format_double(v);
    ss << "\n";
  }
  atomic_write_file(path, ss.str());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

}  // namespace

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  FeatureTable table;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (table.names.empty() && table.rows.empty()) {
      if (fields.empty() || fields[0] != "case_id")
        throw std::runtime_error(path.string() + ": first CSV column must be case_id");
      table.names.assign(fields.begin() + 1, fields.end());
      continue;
    }
    if (fields.size() != table.names.size() + 1)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(table.names.size() + 1) +
                               " fields, got " + std::to_string(fields.size()));
    FeatureVector row;
    row.case_id = fields[0];
    row.names = table.names;
    row.values.reserve(table.names.size());
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const char* begin = fields[i].c_str();
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin || *end != '\0')
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": invalid numeric field '" + fields[i] + "'");
      row.values.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace segpipe
