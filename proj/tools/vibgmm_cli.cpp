// vibgmm: train, cluster, evaluate and self-check from the command line.
//
// Exit codes: 0 success, 1 property or assignment failure, 2 configuration or
// I/O error, 3 training aborted on a non-finite value.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vibgmm/baselines.hpp"
#include "vibgmm/checkpoint.hpp"
#include "vibgmm/config.hpp"
#include "vibgmm/data.hpp"
#include "vibgmm/metrics.hpp"
#include "vibgmm/oracle_suite.hpp"
#include "vibgmm/vib.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace vibgmm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;

json tensor_json(const Tensor& t) {
  json shape = json::array();
  for (auto d : t.shape()) shape.push_back(d);
  return {{"shape", shape}, {"data", t.values()}};
}

json model_json(const discrete::DiscreteModel& m) {
  return {{"p_cx", tensor_json(m.p_cx)},
          {"p_u_given_x", tensor_json(m.p_u_given_x)},
          {"q_x_given_u", tensor_json(m.q_x_given_u)},
          {"q_u", tensor_json(m.q_u)},
          {"q_c", tensor_json(m.q_c)},
          {"q_u_given_c", tensor_json(m.q_u_given_c)},
          {"q_c_given_u", tensor_json(m.q_c_given_u)}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Sidecar written next to a checkpoint: what is needed to rebuild the model.
json spec_json(const ModelSpec& s, const TrainConfig& t, const AnnealSchedule& a, const Normalization& nm) {
  json anneal = {{"s_min", a.s_min}, {"s_max", a.s_max}};
  anneal["step_factor"] = a.step_factor ? json(*a.step_factor) : json("auto");
  const json train = {{"batch_size", t.batch_size},
                      {"mc_samples", t.mc_samples},
                      {"epochs", t.epochs},
                      {"seed", t.seed},
                      {"reconstruction", std::string(to_string(t.reconstruction))},
                      {"kmeans_init_epochs", t.kmeans_init_epochs},
                      {"lr", {{"initial", t.lr.initial_rate},
                              {"decay", t.lr.decay},
                              {"interval", t.lr.interval_epochs},
                              {"floor", t.lr.floor}}}};
  return {{"input_dim", s.input_dim},
          {"latent_dim", s.latent_dim},
          {"clusters", s.clusters},
          {"encoder_hidden", s.encoder_hidden},
          {"decoder_hidden", s.decoder_hidden},
          {"decoder_output", std::string(to_string(s.decoder_output))},
          {"variance_floor", t.variance_floor},
          {"standardized", nm.standardized},
          {"norm_mean", nm.mean},
          {"norm_scale", nm.scale},
          {"train", train},
          {"anneal", anneal}};
}

struct LoadedModel {
  VibModel model;
  Normalization normalization;
};

LoadedModel load_model(const fs::path& checkpoint) {
  fs::path sidecar = checkpoint;
  sidecar.replace_extension(".json");
  const json j = read_json(sidecar);
  ModelSpec spec;
  double floor = kDefaultVarianceFloor;
  LoadedModel lm;
  try {
    spec.input_dim = j.at("input_dim").get<std::size_t>();
    spec.latent_dim = j.at("latent_dim").get<std::size_t>();
    spec.clusters = j.at("clusters").get<std::size_t>();
    spec.encoder_hidden = j.at("encoder_hidden").get<std::vector<std::size_t>>();
    spec.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
    spec.decoder_output = parse_activation(j.at("decoder_output").get<std::string>());
    floor = j.at("variance_floor").get<double>();
    lm.normalization.standardized = j.at("standardized").get<bool>();
    lm.normalization.mean = j.at("norm_mean").get<std::vector<double>>();
    lm.normalization.scale = j.at("norm_scale").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ParseError(sidecar.string() + ": " + e.what());
  }
  Rng rng(0);
  lm.model = VibModel::create(spec, rng, floor);
  restore(lm.model.parameters(), load_checkpoint(checkpoint.string()));
  return lm;
}

void apply_normalization(Dataset& ds, const Normalization& nm) {
  if (!nm.standardized) return;
  const std::size_t n = ds.size(), d = ds.dim();
  if (nm.mean.size() != d) return;  // width check happens against the model
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) ds.features[i * d + j] = (ds.features[i * d + j] - nm.mean[j]) / nm.scale[j];
  ds.normalization = nm;
}

json record_json(const EpochRecord& r) {
  return {{"epoch", r.epoch}, {"s", r.s},         {"lr", r.lr},          {"recon", r.recon},
          {"kl", r.kl},       {"total", r.total}, {"wall_ms", r.wall_ms}};
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  bool no_timing = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc = load_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  if (a.output_dir) rc.output_dir = *a.output_dir;
  for (const auto& [k, v] : rc.defaulted) std::cerr << "default " << k << " = " << v << "\n";

  Dataset ds;
  try {
    ds = load_dataset(rc.dataset);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("dataset.path: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(std::string("dataset.path: ") + e.what());
  }
  rc.model.input_dim = ds.dim();
  rc.model.validate();

  const fs::path out = rc.output_dir;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("output.dir: cannot create '" + out.string() + "': " + ec.message());
  std::ofstream log(out / "train_log.jsonl");
  if (!log) throw ConfigError("output.dir: cannot write to '" + out.string() + "'");

  std::cerr << "training on " << ds.size() << " x " << ds.dim() << " ('" << ds.name << "'), "
            << rc.train.epochs << " epochs\n";
  TrainState state = init_train_state(rc.model, rc.train);
  try {
    anneal_train(ds.unlabeled(), state, rc.train, rc.anneal, [&](const EpochRecord& r) {
      EpochRecord shown = r;
      if (a.no_timing) shown.wall_ms = 0.0;
      log << record_json(shown).dump() << "\n";
      log.flush();
    });
  } catch (const TrainingAborted& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAborted;
  }

  save_checkpoint((out / "checkpoint.vibw").string(), snapshot(state.model.parameters()));
  write_json(out / "checkpoint.json", spec_json(rc.model, rc.train, rc.anneal, ds.normalization));
  const auto& last = state.history.back();
  write_json(out / "summary.json", {{"epochs", state.history.size()},
                                    {"final_s", state.s},
                                    {"final_losses", {{"recon", last.recon}, {"kl", last.kl}, {"total", last.total}}},
                                    {"s_values", state.s_sequence.size()}});
  std::cerr << "wrote " << (out / "checkpoint.vibw").string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ cluster

struct DataArgs {
  std::string path;
  std::string format = "csv";
  bool header = false;
  bool label_column = false;
  bool standardize = false;
};

Dataset load_data_args(const DataArgs& d) {
  DatasetConfig dc;
  dc.path = d.path;
  dc.format = parse_feature_format(d.format);
  dc.header = d.header;
  dc.label_column = d.label_column;
  dc.standardize = d.standardize;
  return load_dataset(dc);
}

void write_matrix_csv(const std::string& path, const Tensor& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out.precision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m.at(i, j);
    out << "\n";
  }
}

struct ClusterArgs {
  std::string algo = "vibgmm";
  std::string checkpoint;
  DataArgs data;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string out = "labels.txt";
  std::string latents_out;
};

int cmd_cluster(const ClusterArgs& a) {
  Dataset ds = load_data_args(a.data);
  std::vector<int> labels;
  if (a.algo == "vibgmm") {
    if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required for --algo vibgmm");
    LoadedModel lm = load_model(a.checkpoint);
    if (ds.dim() != lm.model.input_dim()) {
      throw DimensionError("dataset has n_x = " + std::to_string(ds.dim()) + ", checkpoint expects n_x = " +
                           std::to_string(lm.model.input_dim()));
    }
    apply_normalization(ds, lm.normalization);
    labels = assign_clusters(ds.unlabeled(), lm.model);
    if (!a.latents_out.empty()) write_matrix_csv(a.latents_out, latent_means(ds.unlabeled(), lm.model));
  } else if (a.algo == "kmeans" || a.algo == "gmm") {
    if (a.k == 0) throw ConfigError("--k is required for --algo " + a.algo);
    labels = a.algo == "kmeans" ? kmeans(ds.unlabeled(), a.k, a.seed).assignments
                                : em_gmm(ds.unlabeled(), a.k, a.seed).assignments();
  } else {
    throw ConfigError("unknown --algo '" + a.algo + "' (expected vibgmm, kmeans or gmm)");
  }
  write_labels(a.out, labels);
  std::cerr << "wrote " << labels.size() << " labels to " << a.out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
  std::string pred;
  std::string truth;
  std::string latents;
  std::string projection_out;
};

int cmd_eval(const EvalArgs& a) {
  const auto pred = read_labels(a.pred);
  const auto truth = read_labels(a.truth);
  if (pred.size() != truth.size()) {
    throw ValidationError("label files differ in length: " + std::to_string(pred.size()) + " predictions vs " +
                          std::to_string(truth.size()) + " true labels");
  }
  const auto cm = confusion_matrix(pred, truth);
  json confusion = json::array();
  for (std::size_t p = 0; p < cm.k_pred; ++p) {
    json row = json::array();
    for (std::size_t t = 0; t < cm.k_true; ++t) row.push_back(cm.at(p, t));
    confusion.push_back(row);
  }
  json report = {{"acc", static_cast<double>(best_matching_count(cm)) / static_cast<double>(pred.size())},
                 {"n", pred.size()},
                 {"k_pred", cm.k_pred},
                 {"k_true", cm.k_true},
                 {"confusion", confusion}};

  if (!a.projection_out.empty()) {
    if (a.latents.empty()) throw ConfigError("--emit-projection needs --latents");
    const Dataset lat = load_csv(a.latents);
    if (lat.size() != pred.size()) {
      throw ValidationError("latents file has " + std::to_string(lat.size()) + " rows, labels have " +
                            std::to_string(pred.size()));
    }
    const Projection pr = pca_project_2d(lat.features);
    std::ofstream out(a.projection_out);
    if (!out) throw Error("cannot write '" + a.projection_out + "'");
    out.precision(17);
    out << "x,y,pred,true\n";
    for (std::size_t i = 0; i < pred.size(); ++i) {
      out << pr.coords.at(i, 0) << "," << pr.coords.at(i, 1) << "," << pred[i] << "," << truth[i] << "\n";
    }
    report["captured_variance"] = pr.captured_variance;
  }
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ oracle-check

struct OracleArgs {
  std::uint64_t seed = 0;
  std::size_t trials = 200;
  std::size_t q_per_model = 10;
  std::string fault = "none";
  std::string out;
};

int cmd_oracle(const OracleArgs& a) {
  if (a.trials == 0) throw ConfigError("--trials must be >= 1");
  discrete::OracleSuiteOptions o;
  o.seed = a.seed;
  o.trials = a.trials;
  o.q_per_model = a.q_per_model;
  if (a.fault == "q-normalization") {
    o.fault = discrete::OracleFault::q_normalization;
  } else if (a.fault != "none") {
    throw ConfigError("unknown --inject-fault '" + a.fault + "' (expected none or q-normalization)");
  }
  const auto results = discrete::run_oracle_suite(o);
  const bool ok = discrete::all_passed(results);
  json props = json::array();
  for (const auto& r : results) {
    json p = {{"name", r.name}, {"passed", r.passed}, {"checks", r.checks}, {"worst", r.worst}};
    if (!r.passed) {
      p["message"] = r.message;
      if (r.counterexample) p["counterexample"] = model_json(*r.counterexample);
    }
    props.push_back(p);
  }
  const json report = {{"seed", a.seed}, {"trials", a.trials}, {"passed", ok}, {"properties", props}};
  if (!a.out.empty()) write_json(a.out, report);
  std::cout << report.dump(2) << "\n";
  return ok ? kExitOk : kExitFailure;
}

// ------------------------------------------------------------------ gen-synthetic

struct SynthArgs {
  std::size_t k = 3;
  std::size_t dim = 2;
  double separation = 6.0;
  double sigma = 1.0;
  std::size_t samples = 1500;
  std::uint64_t seed = 0;
  std::string out = "synthetic.csv";
  std::string format = "csv";
  std::string labels_out;
};

int cmd_gen_synthetic(const SynthArgs& a) {
  const Dataset ds = generate_synthetic(
      SyntheticGmmSpec::separated(a.k, a.dim, a.separation, a.sigma, a.samples, a.seed));
  if (a.format == "csv") {
    std::ofstream out(a.out);
    if (!out) throw Error("cannot write '" + a.out + "'");
    out.precision(17);
    for (std::size_t j = 0; j < ds.dim(); ++j) out << "x" << j << ",";
    out << "label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      for (std::size_t j = 0; j < ds.dim(); ++j) out << ds.features.at(i, j) << ",";
      out << (*ds.labels)[i] << "\n";
    }
  } else if (a.format == "vibf") {
    save_vibf(a.out, ds);
  } else {
    throw ConfigError("unknown --format '" + a.format + "' (expected csv or vibf)");
  }
  if (!a.labels_out.empty()) write_labels(a.labels_out, *ds.labels);
  std::cerr << "wrote " << ds.size() << " samples to " << a.out << "\n";
  return kExitOk;
}

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--data", d.path, "feature file")->required();
  cmd->add_option("--format", d.format, "csv, vibf or idx")->capture_default_str();
  cmd->add_flag("--header", d.header, "CSV has a header row");
  cmd->add_flag("--label-column", d.label_column, "last CSV column holds labels");
  cmd->add_flag("--standardize", d.standardize, "standardise features (baselines only)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustering with a variational information bottleneck and a GMM latent prior"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", train.config, "key = value config file")->required();
  train_cmd->add_option("--seed", train.seed, "override the config seed");
  train_cmd->add_option("--output", train.output_dir, "override output.dir");
  train_cmd->add_flag("--no-timing", train.no_timing, "log wall_ms as 0 for byte-stable logs");

  ClusterArgs cluster;
  auto* cluster_cmd = app.add_subcommand("cluster", "assign cluster labels");
  cluster_cmd->add_option("--algo", cluster.algo, "vibgmm, kmeans or gmm")->capture_default_str();
  cluster_cmd->add_option("--checkpoint", cluster.checkpoint, "checkpoint.vibw from train");
  add_data_options(cluster_cmd, cluster.data);
  cluster_cmd->add_option("--k", cluster.k, "cluster count for the baselines");
  cluster_cmd->add_option("--seed", cluster.seed, "baseline seed")->capture_default_str();
  cluster_cmd->add_option("--out", cluster.out, "labels output")->capture_default_str();
  cluster_cmd->add_option("--emit-latents", cluster.latents_out, "write latent means as CSV");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "score predicted labels against the truth");
  eval_cmd->add_option("--pred", eval.pred, "predicted labels")->required();
  eval_cmd->add_option("--truth", eval.truth, "true labels")->required();
  eval_cmd->add_option("--latents", eval.latents, "latent CSV for the projection");
  eval_cmd->add_option("--emit-projection", eval.projection_out, "write a 2-D PCA projection CSV");

  OracleArgs oracle;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "run the discrete property suite");
  oracle_cmd->add_option("--seed", oracle.seed)->capture_default_str();
  oracle_cmd->add_option("--trials", oracle.trials)->capture_default_str();
  oracle_cmd->add_option("--q-per-model", oracle.q_per_model)->capture_default_str();
  oracle_cmd->add_option("--inject-fault", oracle.fault, "none or q-normalization")->capture_default_str();
  oracle_cmd->add_option("--out", oracle.out, "also write the report here");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("gen-synthetic", "sample a labelled isotropic GMM dataset");
  synth_cmd->add_option("--k", synth.k)->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim)->capture_default_str();
  synth_cmd->add_option("--separation", synth.separation, "adjacent-mean distance in sigmas")->capture_default_str();
  synth_cmd->add_option("--sigma", synth.sigma)->capture_default_str();
  synth_cmd->add_option("--samples", synth.samples)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth.out)->capture_default_str();
  synth_cmd->add_option("--format", synth.format, "csv or vibf")->capture_default_str();
  synth_cmd->add_option("--labels-out", synth.labels_out, "write the true labels here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*cluster_cmd) return cmd_cluster(cluster);
    if (*eval_cmd) return cmd_eval(eval);
    if (*oracle_cmd) return cmd_oracle(oracle);
    if (*synth_cmd) return cmd_gen_synthetic(synth);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAborted;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
