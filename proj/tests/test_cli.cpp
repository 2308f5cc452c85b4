#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli_app.hpp"
#include "cursor_attn/synthetic.hpp"

using namespace cursor_attn;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("cursor_attn_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& p) const { return path_ / p; }

 private:
  fs::path path_;
};

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

// 12 raw logs: 8 usable, 2 with too few moves, 2 neutral.
fs::path write_fixture_logs(const TempDir& dir) {
  SyntheticOptions so;
  so.sessions = 12;
  so.seed = 3;
  auto sessions = synthesize_corpus(so);
  for (int i : {1, 6}) sessions[i].events.resize(3);
  for (int i : {4, 9}) sessions[i].likert = 3;
  const auto path = dir / "logs.jsonl";
  std::ofstream out(path);
  for (const auto& s : sessions) out << to_json(s).dump() << "\n";
  return path;
}

fs::path write_synth(const TempDir& dir, int sessions) {
  const auto path = dir / "raw.jsonl";
  EXPECT_EQ(invoke({"synth", "-o", path.string(), "--sessions", std::to_string(sessions), "--seed", "4"}).code, 0);
  const auto clean = dir / "clean.jsonl";
  EXPECT_EQ(invoke({"ingest", path.string(), "-o", clean.string()}).code, 0);
  return clean;
}

std::vector<std::string> quick_train(const fs::path& data, const fs::path& out, const std::string& arch = "gru") {
  return {"train", "--dataset", data.string(), "-o", out.string(), "--arch", arch, "--budget", "2", "--k", "1",
          "--max-epochs", "3", "--patience", "1", "--seed", "11"};
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~ScopedEnv() { ::unsetenv(name_); }

 private:
  const char* name_;
};

}  // namespace

TEST(Cli, IngestKeepsCleanSessions) {
  TempDir dir;
  const auto logs = write_fixture_logs(dir);
  const auto r = invoke({"ingest", logs.string(), "-o", (dir / "clean.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("kept 8, dropped-short 2, dropped-neutral 2"), std::string::npos) << r.out;
  EXPECT_EQ(line_count(dir / "clean.jsonl"), 8u);
}

TEST(Cli, IngestEmptyDirectoryWritesEmptyDataset) {
  TempDir dir;
  fs::create_directories(dir / "empty");
  const auto r = invoke({"ingest", (dir / "empty").string(), "-o", (dir / "clean.jsonl").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(dir / "clean.jsonl"), 0u);
  EXPECT_NE(r.out.find("warning"), std::string::npos);
}

TEST(Cli, IngestReportsCorruptLineNumber) {
  TempDir dir;
  const auto logs = write_fixture_logs(dir);
  std::ofstream(logs, std::ios::app) << "{not json\n";
  const auto r = invoke({"ingest", logs.string(), "-o", (dir / "clean.jsonl").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.err.rfind("error:MalformedInput: ", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("logs.jsonl:13:"), std::string::npos) << r.err;
}

TEST(Cli, MissingInputIsIoFailure) {
  TempDir dir;
  const auto r = invoke({"ingest", (dir / "nope").string(), "-o", (dir / "x.jsonl").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error:IOFailure: ", 0), 0u) << r.err;
}

TEST(Cli, ParseErrorsAndHelp) {
  auto r = invoke({"render"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error:InvalidValue: ", 0), 0u) << r.err;
  r = invoke({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--arch"), std::string::npos);
  r = invoke({"frobnicate"});
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, SplitWritesThreeParts) {
  TempDir dir;
  const auto data = (fs::path(CURSOR_ATTN_TEST_DATA) / "sessions8.jsonl").string();
  const auto r = invoke({"split", data, "-o", (dir / "split").string(), "--seed", "2", "--ratios", "0.5", "0.25", "0.25"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(dir / "split/train.jsonl") + line_count(dir / "split/val.jsonl") +
                line_count(dir / "split/test.jsonl"),
            8u);
  EXPECT_EQ(invoke({"split", data, "-o", (dir / "s2").string(), "--ratios", "0.5", "0.5", "0.5"}).code, 1);
}

TEST(Cli, RenderWritesPngsAndManifest) {
  TempDir dir;
  const auto data = (fs::path(CURSOR_ATTN_TEST_DATA) / "sessions8.jsonl").string();
  auto r = invoke({"render", data, "-o", (dir / "a").string(), "--style", "traj-color", "--ad"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(dir / "a/renders")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 8u);
  const auto manifest = nlohmann::json::parse(slurp(dir / "a/renders/manifest.json"));
  ASSERT_EQ(manifest["renders"].size(), 8u);
  EXPECT_EQ(manifest["renders"][0]["style"], "traj-color-ad");
  EXPECT_TRUE(fs::exists(dir / "a/renders" / manifest["renders"][0]["file"].get<std::string>()));

  r = invoke({"render", data, "-o", (dir / "b").string(), "--all-styles", "--jobs", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t all = 0;
  for (const auto& e : fs::directory_iterator(dir / "b/renders")) all += e.path().extension() == ".png";
  EXPECT_EQ(all, 80u);
  // Byte-identical regardless of worker count.
  for (const auto& e : fs::directory_iterator(dir / "a/renders"))
    if (e.path().extension() == ".png") {
      EXPECT_EQ(slurp(e.path()), slurp(dir / "b/renders" / e.path().filename())) << e.path().filename();
    }
}

TEST(Cli, RenderUnknownStyle) {
  TempDir dir;
  const auto data = (fs::path(CURSOR_ATTN_TEST_DATA) / "sessions8.jsonl").string();
  const auto r = invoke({"render", data, "-o", dir.path().string(), "--style", "spiral"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error:InvalidValue: ", 0), 0u);
}

TEST(Cli, EncodeCsv) {
  TempDir dir;
  const auto data = (fs::path(CURSOR_ATTN_TEST_DATA) / "sessions8.jsonl").string();
  const auto r = invoke({"encode", data, "-o", (dir / "enc.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GE(line_count(dir / "enc.csv"), 8u);
}

TEST(Cli, TrainRecurrentWritesArtifactsDeterministically) {
  TempDir dir;
  const auto data = write_synth(dir, 60);
  auto r = invoke(quick_train(data, dir / "o1"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("test AUC"), std::string::npos);
  const auto report = nlohmann::json::parse(slurp(dir / "o1/reports/gru-timeseries.json"));
  EXPECT_TRUE(report.contains("auc"));
  EXPECT_EQ(report["representation"], "timeseries");
  EXPECT_EQ(line_count(dir / "o1/logs/gru-timeseries-trials.jsonl"), 2u);
  EXPECT_TRUE(fs::exists(dir / "o1/models/gru-timeseries.model"));

  auto args = quick_train(data, dir / "o2");
  args.insert(args.end(), {"--jobs", "2"});
  r = invoke(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "o1/reports/gru-timeseries.json"), slurp(dir / "o2/reports/gru-timeseries.json"));
  EXPECT_EQ(slurp(dir / "o1/models/gru-timeseries.model"), slurp(dir / "o2/models/gru-timeseries.model"));
}

TEST(Cli, TrainRejectsConvOnTimeSeries) {
  TempDir dir;
  const auto data = (fs::path(CURSOR_ATTN_TEST_DATA) / "sessions8.jsonl").string();
  auto r = invoke({"train", "--dataset", data, "-o", dir.path().string(), "--arch", "cnn", "--repr", "timeseries"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error:InvalidValue: ", 0), 0u) << r.err;
  r = invoke({"train", "--dataset", data, "-o", dir.path().string(), "--arch", "gru", "--repr", "traj"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error:InvalidValue: ", 0), 0u) << r.err;
}

TEST(Cli, TrainConvFromRenderManifest) {
  TempDir dir;
  const auto data = write_synth(dir, 30);
  ASSERT_EQ(invoke({"render", data.string(), "-o", (dir / "r").string(), "--style", "traj", "--ad"}).code, 0);
  const auto r = invoke({"train", "--renders", (dir / "r/renders/manifest.json").string(), "-o", (dir / "o").string(),
                      "--arch", "cnn", "--repr", "traj", "--ad", "--max-epochs", "2", "--patience", "1",
                      "--lr-steps", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(dir / "o/reports/cnn-traj-ad.json"));
  EXPECT_TRUE(report["placeholder"].get<bool>());
  EXPECT_EQ(report["ad_format"], "organic");
}

TEST(Cli, CompareTwoReports) {
  TempDir dir;
  const auto a = make_report("a", "r", {"1", "2", "3", "4", "5", "6"}, {0.9, 0.2, 0.8, 0.3, 0.7, 0.1},
                             {1, 0, 1, 0, 1, 0});
  const auto b = make_report("b", "r", {"1", "2", "3", "4", "5", "6"}, {0.4, 0.6, 0.3, 0.7, 0.45, 0.5},
                             {1, 0, 1, 0, 1, 0});
  std::ofstream(dir / "a.json") << to_json(a).dump();
  std::ofstream(dir / "b.json") << to_json(b).dump();
  const auto r = invoke({"compare", (dir / "a.json").string(), (dir / "b.json").string(), "-o", (dir / "c.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto c = nlohmann::json::parse(slurp(dir / "c.json"));
  EXPECT_TRUE(c["omnibus"].is_null());
  ASSERT_EQ(c["pairwise"].size(), 1u);
  EXPECT_EQ(c["pairwise"][0]["test"], "wilcoxon");
  EXPECT_TRUE(c["pairwise"][0]["exact"].get<bool>());
  ASSERT_EQ(c["inputs"].size(), 2u);
  EXPECT_EQ(c["inputs"][0]["sha256"].get<std::string>().size(), 64u);
  EXPECT_EQ(c["inputs"][0]["sha256"], cli::sha256_hex(slurp(dir / "a.json")));

  const auto one = invoke({"compare", (dir / "a.json").string()});
  EXPECT_EQ(one.code, 1);
  EXPECT_EQ(one.err.rfind("error:TooFewReports: ", 0), 0u) << one.err;
}

TEST(Cli, Sha256KnownVector) {
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, ConfigFileSuppliesDefaults) {
  TempDir dir;
  const auto data = (fs::path(CURSOR_ATTN_TEST_DATA) / "sessions8.jsonl").string();
  std::ofstream(dir / "cfg.json") << R"({"seed": 5, "render": {"style": "heatmap", "ad": true}})";
  auto r = invoke({"render", data, "-o", (dir / "x").string(), "--config", (dir / "cfg.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "x/renders/fx-0-heatmap-ad.png"));

  // Command-line values win over the file.
  r = invoke({"render", data, "-o", (dir / "y").string(), "--style", "traj", "--config", (dir / "cfg.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "y/renders/fx-0-traj-ad.png"));

  std::ofstream(dir / "bad.json") << R"({"render": {"colour": "red"}})";
  r = invoke({"render", data, "-o", (dir / "z").string(), "--config", (dir / "bad.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error:InvalidValue: ", 0), 0u) << r.err;
}

TEST(Cli, JobsEnvironmentVariable) {
  TempDir dir;
  const auto data = (fs::path(CURSOR_ATTN_TEST_DATA) / "sessions8.jsonl").string();
  {
    ScopedEnv env("CURSOR_ATTN_JOBS", "3");
    EXPECT_EQ(cli::default_jobs(), 3);
    EXPECT_EQ(invoke({"render", data, "-o", (dir / "a").string()}).code, 0);
  }
  {
    ScopedEnv env("CURSOR_ATTN_JOBS", "zero");
    const auto r = invoke({"render", data, "-o", (dir / "b").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error:InvalidValue: ", 0), 0u) << r.err;
  }
  EXPECT_EQ(cli::default_jobs(), 1);
}

TEST(Cli, RunManifestTrainsAndCompares) {
  TempDir dir;
  write_synth(dir, 60);
  std::ofstream(dir / "run.json") << R"({"dataset": "clean.jsonl", "out": "out", "seed": 2, "budget": 1,
    "repeats": 1, "max_epochs": 3, "patience": 1,
    "runs": [{"arch": "gru", "repr": "timeseries"}, {"arch": "simplernn", "repr": "timeseries"}]})";
  const auto r = invoke({"run", (dir / "run.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "out/reports/gru-timeseries.json"));
  EXPECT_TRUE(fs::exists(dir / "out/reports/simplernn-timeseries.json"));
  EXPECT_TRUE(fs::exists(dir / "out/reports/comparison.json"));
}
