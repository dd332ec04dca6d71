#pragma once

// Dataset loading: IDX (MNIST), CSV, and the "VIBF" binary feature format,
// plus per-dimension standardisation and a seeded GMM sample generator.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vibgmm/checkpoint.hpp"
#include "vibgmm/errors.hpp"
#include "vibgmm/rng.hpp"
#include "vibgmm/tensor.hpp"

namespace vibgmm {

struct Normalization {
  bool standardized = false;
  std::vector<double> mean;   // per dimension
  std::vector<double> scale;  // per dimension; 1 where the column was constant
};

struct Dataset {
  Tensor features;                        // [N x n_x]
  std::optional<std::vector<int>> labels;  // evaluation only
  std::string name;
  Normalization normalization;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }

  /// The feature matrix alone; this is all training ever sees.
  const Tensor& unlabeled() const { return features; }

  void validate() const {
    if (features.rank() != 2) throw DimensionError("dataset features must be [N x n_x]");
    if (labels && labels->size() != features.rows()) {
      throw ValidationError("dataset '" + name + "' has " + std::to_string(labels->size()) +
                            " labels for " + std::to_string(features.rows()) + " samples");
    }
  }
};

// ---------------------------------------------------------------- IDX

namespace detail {

class BigEndianReader {
 public:
  BigEndianReader(const std::vector<unsigned char>& d, std::string src) : data_(d), src_(std::move(src)) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw ParseError(src_ + ": truncated " + what + " at byte offset " + std::to_string(pos_) +
                       " (need " + std::to_string(n) + " bytes, have " +
                       std::to_string(data_.size() - pos_) + ")");
    }
  }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::vector<unsigned char>& data_;
  std::string src_;
  std::size_t pos_ = 0;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace detail

inline Tensor decode_idx_images(const std::vector<unsigned char>& bytes, const std::string& src = "idx") {
  detail::BigEndianReader r(bytes, src);
  const auto magic = r.u32("magic");
  if (magic != detail::kIdxImagesMagic) {
    std::ostringstream os;
    os << src << ": bad IDX image magic 0x" << std::hex << magic << " at byte offset 0";
    throw ParseError(os.str());
  }
  const std::size_t n = r.u32("image count");
  const std::size_t h = r.u32("row count");
  const std::size_t w = r.u32("column count");
  if (n == 0 || h == 0 || w == 0) throw ParseError(src + ": zero dimension in IDX header");
  const std::size_t payload = n * h * w;
  r.need(payload, "pixel payload");
  std::vector<double> out(payload);
  const std::size_t base = r.pos();
  for (std::size_t i = 0; i < payload; ++i) out[i] = static_cast<double>(bytes[base + i]) / 255.0;
  return Tensor(Shape{n, h * w}, std::move(out));
}

inline std::vector<int> decode_idx_labels(const std::vector<unsigned char>& bytes, const std::string& src = "idx") {
  detail::BigEndianReader r(bytes, src);
  const auto magic = r.u32("magic");
  if (magic != detail::kIdxLabelsMagic) {
    std::ostringstream os;
    os << src << ": bad IDX label magic 0x" << std::hex << magic << " at byte offset 0";
    throw ParseError(os.str());
  }
  const std::size_t n = r.u32("label count");
  r.need(n, "label payload");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = bytes[r.pos() + i];
  return out;
}

inline Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path = {}) {
  Dataset ds;
  ds.name = images_path;
  ds.features = decode_idx_images(detail::read_file_bytes(images_path), images_path);
  if (labels_path) {
    auto labels = decode_idx_labels(detail::read_file_bytes(*labels_path), *labels_path);
    if (labels.size() != ds.features.rows()) {
      throw ParseError(*labels_path + ": label count " + std::to_string(labels.size()) +
                       " at byte offset 4 does not match image count " +
                       std::to_string(ds.features.rows()));
    }
    ds.labels = std::move(labels);
  }
  return ds;
}

// ---------------------------------------------------------------- CSV

struct CsvOptions {
  bool header = false;
  bool label_column = false;  // last column holds integer labels
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline double parse_cell(const std::string& raw, std::size_t row, std::size_t col, const std::string& src) {
  const std::string cell = trim(raw);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (cell.empty() || used != cell.size()) {
    throw ParseError(src + ": row " + std::to_string(row) + ", column " + std::to_string(col + 1) +
                     ": non-numeric cell '" + cell + "'");
  }
  return v;
}

}  // namespace detail

/// Parses comma-separated text. Row numbers in errors are 1-based file lines.
/// A header whose last cell is "label" turns on the label column.
inline Dataset parse_csv(std::istream& in, CsvOptions opt = {}, const std::string& src = "csv") {
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  std::vector<double> values;
  std::vector<int> labels;
  bool use_labels = opt.label_column;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty() || detail::trim(line) == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (opt.header && lineno == 1) {
      if (detail::trim(cells.back()) == "label") use_labels = true;
      width = cells.size();
      continue;
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw ParseError(src + ": row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(width));
    }
    const std::size_t nf = use_labels ? width - 1 : width;
    if (nf == 0) throw ParseError(src + ": row " + std::to_string(lineno) + " has no feature columns");
    for (std::size_t j = 0; j < nf; ++j) values.push_back(detail::parse_cell(cells[j], lineno, j, src));
    if (use_labels) {
      const double l = detail::parse_cell(cells[nf], lineno, nf, src);
      if (l < 0 || l != std::floor(l)) {
        throw ParseError(src + ": row " + std::to_string(lineno) + ": label must be a non-negative integer");
      }
      labels.push_back(static_cast<int>(l));
    }
  }
  if (values.empty()) throw ParseError(src + ": no data rows");
  const std::size_t nf = use_labels ? width - 1 : width;
  Dataset ds;
  ds.name = src;
  const std::size_t rows = values.size() / nf;
  ds.features = Tensor(Shape{rows, nf}, std::move(values));
  if (use_labels) ds.labels = std::move(labels);
  return ds;
}

inline Dataset load_csv(const std::string& path, CsvOptions opt = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return parse_csv(in, opt, path);
}

inline void write_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out.precision(17);
  const std::size_t n = ds.size(), d = ds.dim();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << ds.features[i * d + j];
    if (ds.labels) out << "," << (*ds.labels)[i];
    out << "\n";
  }
}

// ---------------------------------------------------------------- VIBF

inline constexpr char kFeatureMagic[4] = {'V', 'I', 'B', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline std::vector<unsigned char> encode_vibf(const Dataset& ds) {
  detail::ByteWriter w;
  w.bytes(kFeatureMagic, 4);
  w.u32(kFeatureVersion);
  w.u64(ds.size());
  w.u64(ds.dim());
  for (double v : ds.features.data()) w.f64(v);
  if (ds.labels) {
    for (int l : *ds.labels) w.u32(static_cast<std::uint32_t>(l));
  }
  return w.buffer();
}

/// Trailing bytes after the payload must be absent or exactly N u32 labels.
inline Dataset decode_vibf(std::vector<unsigned char> bytes, const std::string& src = "vibf") {
  detail::ByteReader r(std::move(bytes), src);
  if (r.str(4, "magic") != std::string(kFeatureMagic, 4)) {
    throw ParseError(src + ": bad magic at byte offset 0");
  }
  const auto version = r.u32("version");
  if (version != kFeatureVersion) {
    throw ParseError(src + ": unsupported version " + std::to_string(version) + " at byte offset 4");
  }
  const auto n = r.u64("sample count");
  const auto d = r.u64("dimension");
  if (n == 0 || d == 0) throw ParseError(src + ": zero dimension in header at byte offset 8");
  if (d != 0 && n > (std::uint64_t{1} << 40) / d) throw ParseError(src + ": header sizes overflow");
  std::vector<double> vals(n * d);
  r.need(vals.size() * 8, "payload");
  for (auto& v : vals) v = r.f64("payload");
  Dataset ds;
  ds.name = src;
  ds.features = Tensor(Shape{static_cast<std::size_t>(n), static_cast<std::size_t>(d)}, std::move(vals));
  if (!r.done()) {
    if (r.remaining() != 4 * n) {
      throw ParseError(src + ": " + std::to_string(r.remaining()) + " trailing bytes at byte offset " +
                       std::to_string(r.offset()) + ", expected 0 or " + std::to_string(4 * n));
    }
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(r.u32("labels"));
    ds.labels = std::move(labels);
  }
  return ds;
}

inline Dataset load_vibf(const std::string& path) { return decode_vibf(detail::read_file_bytes(path), path); }
inline void save_vibf(const std::string& path, const Dataset& ds) {
  detail::write_file_bytes(path, encode_vibf(ds));
}

enum class FeatureFormat { csv, vibf, idx };

inline FeatureFormat parse_feature_format(const std::string& s) {
  if (s == "csv") return FeatureFormat::csv;
  if (s == "vibf") return FeatureFormat::vibf;
  if (s == "idx") return FeatureFormat::idx;
  throw ConfigError("unknown dataset format '" + s + "' (expected csv, vibf or idx)");
}

// ---------------------------------------------------------------- normalisation

/// Per-dimension zero mean, unit (population) variance. Constant columns are
/// only centred.
inline void standardize(Dataset& ds) {
  if (ds.normalization.standardized) return;
  const std::size_t n = ds.size(), d = ds.dim();
  auto& nm = ds.normalization;
  nm.mean.assign(d, 0.0);
  nm.scale.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) nm.mean[j] += ds.features[i * d + j];
  for (auto& m : nm.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = ds.features[i * d + j] - nm.mean[j];
      nm.scale[j] += diff * diff;
    }
  for (auto& s : nm.scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 0.0)) s = 1.0;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) ds.features[i * d + j] = (ds.features[i * d + j] - nm.mean[j]) / nm.scale[j];
  nm.standardized = true;
}

inline void destandardize(Dataset& ds) {
  auto& nm = ds.normalization;
  if (!nm.standardized) return;
  const std::size_t n = ds.size(), d = ds.dim();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) ds.features[i * d + j] = ds.features[i * d + j] * nm.scale[j] + nm.mean[j];
  nm = Normalization{};
}

// ---------------------------------------------------------------- synthetic

struct SyntheticGmmSpec {
  std::size_t components = 3;
  std::size_t dim = 2;
  Tensor means;      // [k x d]
  Tensor variances;  // [k x d], zero allowed (degenerate draw)
  std::vector<double> weights;
  std::size_t samples = 1500;
  std::uint64_t seed = 0;

  void validate() const {
    if (components == 0 || dim == 0 || samples == 0) throw ValidationError("synthetic spec has a zero size");
    if (means.shape() != Shape{components, dim}) throw DimensionError("synthetic means must be [k x d]");
    if (variances.shape() != Shape{components, dim}) throw DimensionError("synthetic variances must be [k x d]");
    for (double v : variances.data()) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("synthetic variances must be finite and >= 0");
    }
    if (weights.size() != components) throw DimensionError("synthetic weights must have k entries");
    double s = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw ValidationError("synthetic weights must be non-negative");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("synthetic weights must sum to 1");
  }

  /// k equal-weight isotropic components with means evenly spaced on a circle
  /// in the first two coordinates, adjacent means `separation` sigmas apart.
  static SyntheticGmmSpec separated(std::size_t k, std::size_t d, double separation, double sigma,
                                    std::size_t n, std::uint64_t seed) {
    SyntheticGmmSpec s;
    s.components = k;
    s.dim = d;
    s.samples = n;
    s.seed = seed;
    s.means = Tensor(Shape{k, d});
    s.variances = Tensor(Shape{k, d}, sigma * sigma);
    s.weights.assign(k, 1.0 / static_cast<double>(k));
    if (k > 1) {
      const double pi = 3.14159265358979323846;
      const double radius = k == 2 ? separation * sigma / 2.0
                                   : separation * sigma / (2.0 * std::sin(pi / static_cast<double>(k)));
      for (std::size_t c = 0; c < k; ++c) {
        const double a = 2.0 * pi * static_cast<double>(c) / static_cast<double>(k);
        s.means.at(c, 0) = radius * std::cos(a);
        if (d > 1) s.means.at(c, 1) = radius * std::sin(a);
      }
    }
    return s;
  }
};

inline Dataset generate_synthetic(const SyntheticGmmSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, Stream::synthetic);
  std::discrete_distribution<int> pick(spec.weights.begin(), spec.weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = spec.samples, d = spec.dim;
  std::vector<double> x(n * d);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = pick(rng);
    labels[i] = c;
    const auto cu = static_cast<std::size_t>(c);
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(spec.variances.at(cu, j));
      const double z = normal(rng);
      x[i * d + j] = spec.means.at(cu, j) + sd * z;
    }
  }
  Dataset ds;
  ds.name = "synthetic";
  ds.features = Tensor(Shape{n, d}, std::move(x));
  ds.labels = std::move(labels);
  return ds;
}

// ---------------------------------------------------------------- label files

inline void write_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (int l : labels) out << l << "\n";
}

inline std::vector<int> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    std::size_t used = 0;
    long v = -1;
    try {
      v = std::stol(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size() || v < 0) {
      throw ParseError(path + ": row " + std::to_string(lineno) + ": expected a non-negative integer label");
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace vibgmm
