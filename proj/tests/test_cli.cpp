#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;  // stdout
  std::string err;  // stderr
  std::string all() const { return out + err; }
};

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("vibgmm_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
  const std::string cmd =
      std::string(VIBGMM_CLI_PATH) + " " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

std::string p(const fs::path& path) { return "'" + path.string() + "'"; }

fs::path toy_data() {
  static const fs::path data = [] {
    const fs::path d = work_dir() / "toy.csv";
    const auto r = run("gen-synthetic --k 3 --dim 2 --separation 6 --sigma 3 --samples 300 --seed 1 --out " + p(d) +
                       " --labels-out " + p(work_dir() / "toy_labels.txt"));
    EXPECT_EQ(r.code, 0) << r.all();
    return d;
  }();
  return data;
}

fs::path toy_config(const std::string& name, const std::string& extra = "") {
  const fs::path cfg = work_dir() / (name + ".cfg");
  std::ofstream out(cfg);
  out << "dataset.path = " << toy_data().string() << "\n"
      << "dataset.header = true\n"
      << "output.dir = " << (work_dir() / name).string() << "\n"
      << "model.latent_dim = 2\nmodel.clusters = 3\n"
      << "model.encoder_hidden = 8\nmodel.decoder_hidden = 8\n"
      << "train.epochs = 12\ntrain.batch_size = 50\ntrain.kmeans_init_epochs = 4\n"
      << extra;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST(CliTrain, SmokeRunWritesArtifacts) {
  const auto r = run("train --config " + p(toy_config("smoke")) + " --no-timing");
  ASSERT_EQ(r.code, 0) << r.all();
  const fs::path dir = work_dir() / "smoke";
  EXPECT_TRUE(fs::exists(dir / "checkpoint.vibw"));
  EXPECT_TRUE(fs::exists(dir / "checkpoint.json"));
  EXPECT_EQ(count_lines(dir / "train_log.jsonl"), 12u);
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(summary["epochs"], 12);
  EXPECT_EQ(summary["final_s"], 5.0);
  // Defaults are echoed.
  EXPECT_NE(r.all().find("lr.initial"), std::string::npos);
}

TEST(CliTrain, LogLinesDecompose) {
  ASSERT_EQ(run("train --config " + p(toy_config("decomp")) + " --no-timing").code, 0);
  std::ifstream in(work_dir() / "decomp" / "train_log.jsonl");
  std::string line;
  double prev_s = 0.0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const double s = j["s"];
    EXPECT_NEAR(j["total"].get<double>(), j["recon"].get<double>() - s * j["kl"].get<double>(), 1e-12);
    EXPECT_GT(s, prev_s);
    EXPECT_LE(s, 5.0);
    prev_s = s;
  }
}

TEST(CliTrain, SeededRunsAreByteIdentical) {
  ASSERT_EQ(run("train --config " + p(toy_config("det_a")) + " --seed 7 --no-timing").code, 0);
  ASSERT_EQ(run("train --config " + p(toy_config("det_b")) + " --seed 7 --no-timing").code, 0);
  EXPECT_EQ(slurp(work_dir() / "det_a" / "train_log.jsonl"), slurp(work_dir() / "det_b" / "train_log.jsonl"));
  EXPECT_EQ(slurp(work_dir() / "det_a" / "checkpoint.vibw"), slurp(work_dir() / "det_b" / "checkpoint.vibw"));
}

TEST(CliTrain, MissingDatasetPathIsConfigError) {
  const fs::path cfg = work_dir() / "nopath.cfg";
  write_text(cfg, "seed = 1\n");
  const auto r = run("train --config " + p(cfg));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.all().find("dataset.path"), std::string::npos) << r.all();
}

TEST(CliTrain, NonexistentDatasetNamesKey) {
  const fs::path cfg = work_dir() / "nofile.cfg";
  write_text(cfg, "dataset.path = /nonexistent/data.csv\n");
  const auto r = run("train --config " + p(cfg));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.all().find("dataset.path"), std::string::npos) << r.all();
}

TEST(CliTrain, UnknownKeyIsConfigError) {
  const auto r = run("train --config " + p(toy_config("unknown", "train.momentum = 0.9\n")));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.all().find("train.momentum"), std::string::npos);
}

TEST(CliCluster, VibgmmLabelsInRangeAndEvaluable) {
  ASSERT_EQ(run("train --config " + p(toy_config("clus")) + " --no-timing").code, 0);
  const fs::path labels = work_dir() / "clus_pred.txt", latents = work_dir() / "clus_latents.csv";
  const auto r = run("cluster --algo vibgmm --checkpoint " + p(work_dir() / "clus" / "checkpoint.vibw") + " --data " +
                     p(toy_data()) + " --header --label-column --out " + p(labels) + " --emit-latents " + p(latents));
  ASSERT_EQ(r.code, 0) << r.all();
  std::ifstream in(labels);
  int v = 0;
  std::size_t n = 0;
  while (in >> v) {
    EXPECT_GE(v, 0);
    EXPECT_LT(v, 3);
    ++n;
  }
  EXPECT_EQ(n, 300u);
  const fs::path proj = work_dir() / "proj.csv";
  const auto e = run("eval --pred " + p(labels) + " --truth " + p(work_dir() / "toy_labels.txt") + " --latents " +
                     p(latents) + " --emit-projection " + p(proj));
  ASSERT_EQ(e.code, 0) << e.all();
  const auto j = nlohmann::json::parse(e.out);
  EXPECT_GE(j["acc"].get<double>(), 0.0);
  EXPECT_LE(j["captured_variance"].get<double>(), 1.0);
  EXPECT_EQ(slurp(proj).substr(0, 14), "x,y,pred,true\n");
  EXPECT_EQ(count_lines(proj), 301u);
}

TEST(CliCluster, DimensionMismatchIsConfigError) {
  ASSERT_EQ(run("train --config " + p(toy_config("dim")) + " --no-timing").code, 0);
  const fs::path wide = work_dir() / "wide.csv";
  write_text(wide, "1,2,3\n4,5,6\n");
  const auto r = run("cluster --checkpoint " + p(work_dir() / "dim" / "checkpoint.vibw") + " --data " + p(wide) +
                     " --out " + p(work_dir() / "dim_pred.txt"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.all().find("n_x = 3"), std::string::npos) << r.all();
}

TEST(CliCluster, KmeansSingleClusterIsAllZero) {
  const fs::path labels = work_dir() / "km1.txt";
  ASSERT_EQ(run("cluster --algo kmeans --k 1 --data " + p(toy_data()) + " --header --out " + p(labels)).code, 0);
  std::ifstream in(labels);
  int v = 0;
  while (in >> v) EXPECT_EQ(v, 0);
}

TEST(CliCluster, GmmBaselineOnSeparatedData) {
  const fs::path labels = work_dir() / "gmm.txt";
  ASSERT_EQ(run("cluster --algo gmm --k 3 --data " + p(toy_data()) + " --header --out " + p(labels)).code, 0);
  const auto e = run("eval --pred " + p(labels) + " --truth " + p(work_dir() / "toy_labels.txt"));
  ASSERT_EQ(e.code, 0) << e.all();
  EXPECT_GE(nlohmann::json::parse(e.out)["acc"].get<double>(), 0.95);
}

TEST(CliEval, IdenticalPermutedAndWorkedExample) {
  const fs::path a = work_dir() / "a.txt", b = work_dir() / "b.txt", c = work_dir() / "c.txt", d = work_dir() / "d.txt";
  write_text(a, "0\n1\n2\n2\n");
  write_text(b, "2\n0\n1\n1\n");
  write_text(c, "0\n0\n1\n1\n");
  write_text(d, "1\n1\n0\n2\n");
  auto acc = [&](const fs::path& x, const fs::path& y) {
    const auto r = run("eval --pred " + p(x) + " --truth " + p(y));
    EXPECT_EQ(r.code, 0) << r.all();
    return nlohmann::json::parse(r.out)["acc"].get<double>();
  };
  EXPECT_EQ(acc(a, a), 1.0);
  EXPECT_EQ(acc(b, a), 1.0);
  EXPECT_EQ(acc(c, d), 0.75);
}

TEST(CliEval, LengthMismatchIsError) {
  const fs::path a = work_dir() / "len_a.txt", b = work_dir() / "len_b.txt";
  write_text(a, "0\n1\n");
  write_text(b, "0\n1\n1\n");
  EXPECT_EQ(run("eval --pred " + p(a) + " --truth " + p(b)).code, 2);
}

TEST(CliOracle, PassesAndIsDeterministic) {
  const auto a = run("oracle-check --seed 5 --trials 50");
  const auto b = run("oracle-check --seed 5 --trials 50");
  EXPECT_EQ(a.code, 0) << a.all();
  EXPECT_EQ(a.out, b.out);
  EXPECT_TRUE(nlohmann::json::parse(a.out)["passed"].get<bool>());
}

TEST(CliOracle, InjectedFaultExitsOneWithCounterexample) {
  const auto r = run("oracle-check --trials 5 --inject-fault q-normalization");
  EXPECT_EQ(r.code, 1);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_FALSE(j["passed"].get<bool>());
  EXPECT_NE(r.out.find("counterexample"), std::string::npos);
}

TEST(CliGeneral, BadArgumentsExitTwo) {
  EXPECT_EQ(run("cluster --algo spectral --data x.csv").code, 2);
  EXPECT_EQ(run("gen-synthetic --format parquet --out " + p(work_dir() / "x.bin")).code, 2);
  EXPECT_EQ(run("nosuchcommand").code, 2);
}
