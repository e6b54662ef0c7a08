#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "judgecal/cli.hpp"
#include "judgecal/error.hpp"
#include "judgecal/harness.hpp"
#include "judgecal/io.hpp"

using namespace judgecal;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

RunResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "judgecal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  RunResult r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Rows of a tab-separated file, header included.
std::vector<std::vector<std::string>> table(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, '\t');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::map<std::string, std::string> key_values(const fs::path& p) {
  std::map<std::string, std::string> out;
  for (const auto& row : table(p)) {
    if (row.size() >= 2) out[row[0]] = row[1];
  }
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("judgecal_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path synth(const std::string& name, std::vector<std::string> extra = {}) {
    std::map<std::string, std::string> opts = {
        {"--generators", "4"}, {"--validators", "5"}, {"--items_per_generator", "80"}, {"--seed", "3"}};
    for (std::size_t k = 0; k + 1 < extra.size(); k += 2) opts[extra[k]] = extra[k + 1];
    std::vector<std::string> args = {"synth", "--out", path(name).string()};
    for (const auto& [k, v] : opts) {
      args.push_back(k);
      args.push_back(v);
    }
    const auto r = run_cli(args);
    EXPECT_EQ(r.code, 0) << r.err;
    return path(name);
  }

  fs::path dir_;
};

const char* kTwo =
    "{\"generator\":\"G1\",\"validator\":\"V1\",\"task\":\"t\",\"line\":1,\"feedback\":\"f\",\"label\":\"valid\"}\n"
    "{\"generator\":\"G1\",\"validator\":\"V2\",\"task\":\"t\",\"line\":1,\"feedback\":\"f\",\"label\":\"invalid\"}\n";

}  // namespace

TEST(CliConfig, ParsesFlatFileAndRejectsUnknownKeys) {
  std::istringstream ok("# solver\nrestarts = 3\n\n lambda_g=4 # heavier\n");
  const auto v = cli::parse_config(ok);
  EXPECT_EQ(v.at("restarts"), "3");
  EXPECT_EQ(v.at("lambda_g"), "4");
  std::istringstream unknown("restart = 3\n");
  EXPECT_THROW(cli::parse_config(unknown), Error);
  std::istringstream malformed("restarts\n");
  EXPECT_THROW(cli::parse_config(malformed), Error);
}

TEST(CliConfig, DefaultsMatchModuleDefaults) {
  const auto& d = cli::config_defaults();
  EXPECT_EQ(d.at("lambda_g"), "2");
  EXPECT_EQ(d.at("lambda_v_plus"), "1");
  EXPECT_EQ(d.at("lambda_v_minus"), "10");
  EXPECT_EQ(d.at("tolerance"), "1e-06");
  EXPECT_EQ(d.at("restarts"), "10");
  EXPECT_EQ(d.at("similarity_threshold"), "85");
  EXPECT_EQ(d.at("missing_rate"), "0.097");
  EXPECT_EQ(d.at("repairable_fraction"), "0.64");
}

TEST(CliUtil, HashesAndDoubles) {
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  for (double x : {0.1, 1.0 / 3.0, 0.939, 1e-300, 123456.789}) {
    EXPECT_EQ(std::stod(cli::format_double(x)), x);
  }
  EXPECT_EQ(cli::format_double(0.5), "0.5");

  cli::RunManifest m;
  m.command = "matrix";
  m.config = {{"seed", "1"}, {"restarts", "3"}};
  EXPECT_EQ(m.to_json(), m.to_json());
  EXPECT_EQ(m.config_hash().size(), 8u);
  auto other = m;
  other.config["restarts"] = "4";
  EXPECT_NE(other.config_hash(), m.config_hash());
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"nonsense"}).code, 1);
  EXPECT_EQ(run_cli({"matrix"}).code, 1);
  EXPECT_EQ(run_cli({"matrix", "--out", path("o").string(), "--store", "x", "--bogus", "1"}).code, 1);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST_F(CliTest, ModuleErrorsExitTwo) {
  const auto r = run_cli({"matrix", "--store", path("absent").string(), "--out", path("o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("IoError"), std::string::npos);

  spit(path("bad.cfg"), "restarts = 3\nfoo = 1\n");
  const auto store = synth("s");
  const auto c = run_cli({"matrix", "--store", store.string(), "--out", path("o").string(), "--config",
                          path("bad.cfg").string()});
  EXPECT_EQ(c.code, 2);
  EXPECT_NE(c.err.find("foo"), std::string::npos);
}

TEST_F(CliTest, IngestTwoRecords) {
  spit(path("two.jsonl"), kTwo);
  const auto r = run_cli({"ingest", "--judgments", path("two.jsonl").string(), "--out", path("store").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("judgments\t2"), std::string::npos);
  EXPECT_EQ(io::read_judgments(path("store") / "judgments.jsonl").size(), 2u);
  EXPECT_TRUE(fs::exists(path("store") / "manifest.json"));
}

TEST_F(CliTest, IngestConflictNamesBothRecords) {
  spit(path("dup.jsonl"), std::string(kTwo) +
                              "{\"generator\":\"G1\",\"validator\":\"V1\",\"task\":\"t\",\"line\":1,"
                              "\"feedback\":\"f\",\"label\":\"invalid\"}\n");
  const auto r = run_cli({"ingest", "--judgments", path("dup.jsonl").string(), "--out", path("store").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("1 and 3"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("store") / "judgments.jsonl"));

  spit(path("raw.jsonl"), std::string(kTwo) + "\n" +
                              "{\"generator\":\"G1\",\"validator\":\"V2\",\"task\":\"t\",\"line\":1,"
                              "\"feedback\":\"f\",\"label\":\"valid\"}\n");
  spit(path("items.jsonl"), "{\"generator\":\"G1\",\"task\":\"t\",\"line\":1,\"feedback\":\"f\"}\n");
  const auto raw = run_cli({"ingest", "--raw", path("raw.jsonl").string(), "--items", path("items.jsonl").string(),
                            "--out", path("store").string()});
  EXPECT_EQ(raw.code, 2);
  EXPECT_NE(raw.err.find("lines 2 and 4"), std::string::npos) << raw.err;
}

TEST_F(CliTest, SynthCorpusRoundTripsThroughIngest) {
  const auto s = synth("s");
  const auto r = run_cli({"ingest", "--raw", (s / "raw.jsonl").string(), "--items", (s / "items.jsonl").string(),
                          "--annotations", (s / "annotations.jsonl").string(), "--out", path("store").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"raw.jsonl", "items.jsonl", "annotations.jsonl", "judgments.jsonl"}) {
    EXPECT_EQ(slurp(path("store") / f), slurp(s / f)) << f;
  }
}

TEST_F(CliTest, RepairCleanStoreChangesNothing) {
  const auto s = synth("s", {"--missing_rate", "0"});
  const auto r = run_cli({"repair", "--store", s.string(), "--out", path("r").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto kv = key_values(path("r") / "repair_summary.tsv");
  EXPECT_EQ(kv.at("missing_before"), kv.at("missing_after"));
  EXPECT_EQ(kv.at("missing_before"), "0");
  EXPECT_EQ(slurp(path("r") / "judgments.jsonl"), slurp(s / "judgments.jsonl"));
}

TEST_F(CliTest, RepairStatsMatchInjectionLedger) {
  const auto s = synth("s", {"--items_per_generator", "300"});
  ASSERT_EQ(run_cli({"repair", "--store", s.string(), "--out", path("r").string()}).code, 0);

  std::map<std::string, std::size_t> before, repairable;
  for (const auto& row : table(s / "injection.tsv")) {
    if (row[0] == "fault") continue;
    const auto n = std::stoul(row[3]);
    before[row[1]] += n;
    if (row[2] == "true") repairable[row[1]] += n;
  }
  for (const auto& row : table(path("r") / "repair_report.tsv")) {
    if (row[0] == "error_kind") continue;
    EXPECT_EQ(std::stoul(row[1]), before[row[0]]) << row[0];
    EXPECT_EQ(std::stoul(row[2]), repairable[row[0]]) << row[0];
    EXPECT_EQ(std::stoul(row[3]), before[row[0]] - repairable[row[0]]) << row[0];
  }

  // Repairing the repaired store is a fixed point.
  ASSERT_EQ(run_cli({"repair", "--store", path("r").string(), "--out", path("r2").string()}).code, 0);
  EXPECT_EQ(slurp(path("r2") / "judgments.jsonl"), slurp(path("r") / "judgments.jsonl"));
}

TEST_F(CliTest, StrictOnlyChangesAccounting) {
  const auto s = synth("s");
  ASSERT_EQ(run_cli({"repair", "--store", s.string(), "--out", path("a").string()}).code, 0);
  ASSERT_EQ(run_cli({"repair", "--store", s.string(), "--out", path("b").string(), "--strict"}).code, 0);
  EXPECT_EQ(slurp(path("a") / "judgments.jsonl"), slurp(path("b") / "judgments.jsonl"));
  EXPECT_EQ(key_values(path("b") / "repair_summary.tsv").at("missing_policy"), "count-as-invalid");

  ASSERT_EQ(run_cli({"matrix", "--store", path("a").string(), "--out", path("ma").string()}).code, 0);
  ASSERT_EQ(run_cli({"matrix", "--store", path("a").string(), "--out", path("mb").string(), "--strict"}).code, 0);
  const auto ta = table(path("ma") / "matrix.tsv");
  const auto tb = table(path("mb") / "matrix.tsv");
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t k = 1; k < ta.size(); ++k) {
    EXPECT_EQ(ta[k][2], tb[k][2]);
    EXPECT_EQ(ta[k][3], tb[k][3]);
    if (ta[k][4] != "0") EXPECT_LT(std::stod(tb[k][5]), std::stod(ta[k][5]));
  }
}

TEST_F(CliTest, CommandsNeverTouchInputs) {
  const auto s = synth("s");
  std::map<std::string, std::string> hashes;
  for (const auto& e : fs::directory_iterator(s)) hashes[e.path().string()] = cli::sha256_file(e.path());

  const auto into_store = run_cli({"repair", "--store", s.string(), "--out", s.string()});
  EXPECT_EQ(into_store.code, 2);
  EXPECT_EQ(run_cli({"matrix", "--store", s.string(), "--out", path("m").string()}).code, 0);
  EXPECT_EQ(run_cli({"estimate", "--store", s.string(), "--out", path("e").string(), "--method", "veto"}).code, 0);
  for (const auto& [p, h] : hashes) EXPECT_EQ(cli::sha256_file(p), h) << p;
}

TEST_F(CliTest, EstimateMeanOnConstantRows) {
  std::ostringstream text;
  for (int v = 0; v < 3; ++v) {
    for (std::uint32_t k = 0; k < 10; ++k) {
      text << "{\"generator\":\"G1\",\"validator\":\"V" << v << "\",\"task\":\"t\",\"line\":" << k
           << ",\"feedback\":\"f\",\"label\":\"" << (k < 7 ? "valid" : "invalid") << "\"}\n";
    }
  }
  fs::create_directories(path("store"));
  spit(path("store") / "judgments.jsonl", text.str());
  const auto r = run_cli({"estimate", "--store", path("store").string(), "--out", path("e").string(), "--method", "mean"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = table(path("e") / "estimates.tsv");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_DOUBLE_EQ(std::stod(t[1][3]), 0.7);
  EXPECT_EQ(t[1][4], "NA");
}

TEST_F(CliTest, EstimateRegressionRecoversQuotaStore) {
  // Item labels are laid out in exact quotas so every cell fraction equals
  // the cell model at the rounded parameters.
  const std::vector<double> g = {0.95, 0.9, 0.86, 0.92, 0.88, 0.93};
  const std::vector<double> vp = {0.98, 0.97, 0.96, 0.99, 0.838};
  const std::vector<double> vm = {0.2, 0.1, 0.3, 0.15, 0.535};
  const std::uint32_t n = 4000;
  std::vector<Judgment> judgments;
  std::vector<AnnotationRecord> annotations;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::string gen = generator_id(i);
    const auto valid = static_cast<std::uint32_t>(std::lround(g[i] * n));
    for (std::uint32_t k = 0; k < n; ++k) {
      const bool is_valid = k < valid;
      annotations.push_back({gen, "t", k, "f", is_valid ? FeedbackCategory::TP : FeedbackCategory::FP_I});
    }
    for (std::size_t j = 0; j < vp.size(); ++j) {
      const auto tp = static_cast<std::uint32_t>(std::lround(vp[j] * valid));
      const auto tn = static_cast<std::uint32_t>(std::lround(vm[j] * (n - valid)));
      for (std::uint32_t k = 0; k < n; ++k) {
        const bool says_valid = k < valid ? k < tp : k - valid >= tn;
        judgments.push_back({gen, validator_id(j), "t", k, "f", says_valid ? Label::valid() : Label::invalid()});
      }
    }
  }
  fs::create_directories(path("store"));
  {
    std::ofstream j(path("store") / "judgments.jsonl"), a(path("store") / "annotations.jsonl");
    io::write_judgments(j, judgments);
    io::write_annotations(a, annotations);
  }
  spit(path("anchors.txt"), "G01\nG02\n");
  const auto r = run_cli({"estimate", "--store", path("store").string(), "--out", path("e").string(), "--method",
                          "regression", "--anchors", path("anchors.txt").string(), "--restarts", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& row : table(path("e") / "estimates.tsv")) {
    if (row[0] == "generator" || row[0] == "G01" || row[0] == "G02") continue;
    EXPECT_LE(std::stod(row[5]), 0.005) << row[0];
  }
  const auto fit = table(path("e") / "fit_report.tsv");
  EXPECT_EQ(fit[1][2], "anchored");
  EXPECT_EQ(fit[3][2], "free");
  EXPECT_EQ(key_values(path("e") / "fit_summary.tsv").count("training_loss"), 1u);
}

TEST_F(CliTest, CalibratedVetoMatchesLibrary) {
  const auto s = synth("s", {"--validators", "8", "--items_per_generator", "200"});
  const auto cal = run_cli({"calibrate-threshold", "--store", s.string(), "--out", path("c").string()});
  ASSERT_EQ(cal.code, 0) << cal.err;
  std::string n;
  for (const auto& row : table(path("c") / "threshold_sweep.tsv")) {
    if (row[4] == "true") n = row[1];
  }
  ASSERT_FALSE(n.empty());
  EXPECT_NE(cal.out.find("threshold\t" + n), std::string::npos);

  const auto est = run_cli({"estimate", "--store", s.string(), "--out", path("e").string(), "--method", "veto",
                            "--threshold", n});
  ASSERT_EQ(est.code, 0) << est.err;

  const auto judgments = io::read_judgments(s / "judgments.jsonl");
  const auto items = io::read_feedback_items(s / "items.jsonl");
  const auto annotations = io::read_annotations(s / "annotations.jsonl");
  const auto lib = calibrate_threshold(ItemTallies(judgments, items), ground_truth_precision(annotations),
                                       StrategyFamily::InvalidVeto);
  EXPECT_EQ(std::to_string(lib.strategy.threshold), n);
  const auto expected = ensemble_precision(judgments, lib.strategy, items);
  const auto t = table(path("e") / "estimates.tsv");
  ASSERT_EQ(t.size(), expected.size() + 1);
  for (std::size_t k = 1; k < t.size(); ++k) {
    EXPECT_EQ(t[k][2], n);
    EXPECT_EQ(std::stod(t[k][3]), expected.at(t[k][0]));
  }
}

TEST_F(CliTest, ExperimentRowsAndDeterminism) {
  const auto s = synth("s", {"--generators", "3"});
  const std::vector<std::string> args = {"experiment", "--store", s.string(), "--restarts", "2"};
  auto a = args, b = args;
  a.insert(a.end(), {"--out", path("a").string()});
  b.insert(b.end(), {"--out", path("b").string()});
  ASSERT_EQ(run_cli(a).code, 0);
  ASSERT_EQ(run_cli(b).code, 0);

  std::vector<fs::path> tables;
  for (const auto& e : fs::directory_iterator(path("a"))) tables.push_back(e.path().filename());
  ASSERT_EQ(tables.size(), 3u);
  for (const auto& f : tables) {
    EXPECT_NE(f.string().find("seed0_"), std::string::npos);
    EXPECT_EQ(slurp(path("a") / f), slurp(path("b") / f)) << f;
  }

  fs::path detail;
  for (const auto& f : tables) {
    if (f.string().rfind("experiment_", 0) == 0) detail = path("a") / f;
  }
  std::map<std::string, std::size_t> rows;
  for (const auto& row : table(detail)) {
    if (row[0] != "s") ++rows[row[1]];
  }
  ASSERT_EQ(rows.size(), 7u);
  for (const auto& [method, count] : rows) EXPECT_EQ(count, 1u + 3u + 3u) << method;

  auto c = args;
  c.insert(c.end(), {"--out", path("c").string(), "--seed", "4", "--methods", "regression,minority-veto"});
  ASSERT_EQ(run_cli(c).code, 0);
  std::size_t kept = 0;
  for (const auto& e : fs::directory_iterator(path("c"))) {
    if (e.path().filename().string().rfind("summary_seed4_", 0) == 0) kept = table(e.path()).size() - 1;
  }
  EXPECT_EQ(kept, 6u);

  auto bad = args;
  bad.insert(bad.end(), {"--out", path("d").string(), "--s_max", "3"});
  EXPECT_EQ(run_cli(bad).code, 2);
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
  const auto s = synth("s");
  spit(path("run.cfg"), "restarts = 2\nseed = 9\n");
  ASSERT_EQ(run_cli({"estimate", "--store", s.string(), "--out", path("a").string(), "--method", "regression",
                     "--config", path("run.cfg").string()})
                .code,
            0);
  ASSERT_EQ(run_cli({"estimate", "--store", s.string(), "--out", path("b").string(), "--method", "regression",
                     "--config", path("run.cfg").string(), "--seed", "11"})
                .code,
            0);
  const auto a = slurp(path("a") / "manifest.json");
  const auto b = slurp(path("b") / "manifest.json");
  EXPECT_NE(a.find("\"restarts\": \"2\""), std::string::npos) << a;
  EXPECT_NE(a.find("\"seed\": 9"), std::string::npos) << a;
  EXPECT_NE(b.find("\"seed\": 11"), std::string::npos) << b;
  EXPECT_NE(a.find(cli::sha256_file(s / "judgments.jsonl")), std::string::npos);
}
