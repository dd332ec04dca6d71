#pragma once

// Flat "key = value" run configuration. One pair per line, '#' starts a
// comment, unknown keys are rejected.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vibgmm/data.hpp"
#include "vibgmm/errors.hpp"
#include "vibgmm/vib.hpp"

namespace vibgmm {

struct DatasetConfig {
  std::string path;
  FeatureFormat format = FeatureFormat::csv;
  std::string labels_path;  // idx only
  bool header = false;
  bool label_column = false;
  bool standardize = false;
};

struct RunConfig {
  DatasetConfig dataset;
  std::string output_dir = "run";
  ModelSpec model;
  TrainConfig train;
  AnnealSchedule anneal;

  // Keys that fell back to their defaults, with the value used.
  std::vector<std::pair<std::string, std::string>> defaulted;
};

namespace detail {

inline std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

inline std::vector<std::size_t> to_dims(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty() || v == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto d = to_size(key, strip(item));
    if (d == 0) throw ConfigError("'" + key + "' entries must be positive");
    out.push_back(d);
  }
  return out;
}

inline std::string dims_string(const std::vector<std::size_t>& d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
  return s.empty() ? "none" : s;
}

inline std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

inline std::string to_string(FeatureFormat f) {
  switch (f) {
    case FeatureFormat::csv: return "csv";
    case FeatureFormat::vibf: return "vibf";
    case FeatureFormat::idx: return "idx";
  }
  return "csv";
}

/// Parses configuration text. `dataset.path` is required; every other key
/// has a default. Errors name the offending line or key.
inline RunConfig parse_run_config(std::istream& in, const std::string& src = "config") {
  using namespace detail;
  RunConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  using Getter = std::function<std::string()>;
  // key -> (setter, current value as text)
  std::map<std::string, std::pair<Setter, Getter>> keys{
      {"dataset.path", {[&](auto&, auto& v) { c.dataset.path = v; }, [&] { return c.dataset.path; }}},
      {"dataset.format",
       {[&](auto&, auto& v) { c.dataset.format = parse_feature_format(v); },
        [&] { return to_string(c.dataset.format); }}},
      {"dataset.labels", {[&](auto&, auto& v) { c.dataset.labels_path = v; }, [&] { return c.dataset.labels_path; }}},
      {"dataset.header",
       {[&](auto& k, auto& v) { c.dataset.header = to_bool(k, v); },
        [&] { return std::string(c.dataset.header ? "true" : "false"); }}},
      {"dataset.label_column",
       {[&](auto& k, auto& v) { c.dataset.label_column = to_bool(k, v); },
        [&] { return std::string(c.dataset.label_column ? "true" : "false"); }}},
      {"dataset.standardize",
       {[&](auto& k, auto& v) { c.dataset.standardize = to_bool(k, v); },
        [&] { return std::string(c.dataset.standardize ? "true" : "false"); }}},
      {"output.dir", {[&](auto&, auto& v) { c.output_dir = v; }, [&] { return c.output_dir; }}},
      {"seed",
       {[&](auto& k, auto& v) { c.train.seed = to_u64(k, v); }, [&] { return std::to_string(c.train.seed); }}},
      {"model.latent_dim",
       {[&](auto& k, auto& v) { c.model.latent_dim = to_size(k, v); },
        [&] { return std::to_string(c.model.latent_dim); }}},
      {"model.clusters",
       {[&](auto& k, auto& v) { c.model.clusters = to_size(k, v); },
        [&] { return std::to_string(c.model.clusters); }}},
      {"model.encoder_hidden",
       {[&](auto& k, auto& v) { c.model.encoder_hidden = to_dims(k, v); },
        [&] { return dims_string(c.model.encoder_hidden); }}},
      {"model.decoder_hidden",
       {[&](auto& k, auto& v) { c.model.decoder_hidden = to_dims(k, v); },
        [&] { return dims_string(c.model.decoder_hidden); }}},
      {"model.decoder_output",
       {[&](auto&, auto& v) { c.model.decoder_output = parse_activation(v); },
        [&] { return std::string(to_string(c.model.decoder_output)); }}},
      {"train.batch_size",
       {[&](auto& k, auto& v) { c.train.batch_size = to_size(k, v); },
        [&] { return std::to_string(c.train.batch_size); }}},
      {"train.mc_samples",
       {[&](auto& k, auto& v) { c.train.mc_samples = to_size(k, v); },
        [&] { return std::to_string(c.train.mc_samples); }}},
      {"train.epochs",
       {[&](auto& k, auto& v) { c.train.epochs = to_size(k, v); }, [&] { return std::to_string(c.train.epochs); }}},
      {"train.variance_floor",
       {[&](auto& k, auto& v) { c.train.variance_floor = to_double(k, v); },
        [&] { return num(c.train.variance_floor); }}},
      {"train.reconstruction",
       {[&](auto&, auto& v) { c.train.reconstruction = parse_reconstruction(v); },
        [&] { return std::string(to_string(c.train.reconstruction)); }}},
      {"train.kmeans_init_epochs",
       {[&](auto& k, auto& v) { c.train.kmeans_init_epochs = to_size(k, v); },
        [&] { return std::to_string(c.train.kmeans_init_epochs); }}},
      {"lr.initial",
       {[&](auto& k, auto& v) { c.train.lr.initial_rate = to_double(k, v); },
        [&] { return num(c.train.lr.initial_rate); }}},
      {"lr.decay",
       {[&](auto& k, auto& v) { c.train.lr.decay = to_double(k, v); }, [&] { return num(c.train.lr.decay); }}},
      {"lr.interval",
       {[&](auto& k, auto& v) { c.train.lr.interval_epochs = to_size(k, v); },
        [&] { return std::to_string(c.train.lr.interval_epochs); }}},
      {"lr.floor",
       {[&](auto& k, auto& v) { c.train.lr.floor = to_double(k, v); }, [&] { return num(c.train.lr.floor); }}},
      {"anneal.s_min",
       {[&](auto& k, auto& v) { c.anneal.s_min = to_double(k, v); }, [&] { return num(c.anneal.s_min); }}},
      {"anneal.s_max",
       {[&](auto& k, auto& v) { c.anneal.s_max = to_double(k, v); }, [&] { return num(c.anneal.s_max); }}},
      {"anneal.step_factor",
       {[&](auto& k, auto& v) {
          if (v == "auto") c.anneal.step_factor.reset();
          else c.anneal.step_factor = to_double(k, v);
        },
        [&] { return c.anneal.step_factor ? num(*c.anneal.step_factor) : std::string("auto"); }}},
  };

  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(src + ": line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError(src + ": line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (seen.count(key)) {
      throw ConfigError(src + ": line " + std::to_string(lineno) + ": duplicate key '" + key + "' (first on line " +
                        std::to_string(seen[key]) + ")");
    }
    seen[key] = lineno;
    try {
      it->second.first(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(src + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }

  if (c.dataset.path.empty()) throw ConfigError(src + ": required key 'dataset.path' is missing");
  for (const auto& [key, acc] : keys) {
    if (!seen.count(key)) c.defaulted.emplace_back(key, acc.second());
  }
  c.train.validate();
  c.anneal.validate();
  if (c.model.latent_dim == 0 || c.model.clusters == 0) {
    throw ConfigError(src + ": model.latent_dim and model.clusters must be positive");
  }
  (void)c.anneal.s_values(c.train.epochs);
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_run_config(in, path);
}

inline Dataset load_dataset(const DatasetConfig& dc) {
  Dataset ds;
  switch (dc.format) {
    case FeatureFormat::csv: ds = load_csv(dc.path, CsvOptions{dc.header, dc.label_column}); break;
    case FeatureFormat::vibf: ds = load_vibf(dc.path); break;
    case FeatureFormat::idx:
      ds = load_idx(dc.path, dc.labels_path.empty() ? std::optional<std::string>{}
                                                    : std::optional<std::string>{dc.labels_path});
      break;
  }
  ds.validate();
  if (dc.standardize) standardize(ds);
  return ds;
}

}  // namespace vibgmm
