#include <gtest/gtest.h>

#include "cli_runner.hpp"
#include "support.hpp"

using namespace steer;
using namespace testing_support;

namespace {

// init-toy + extract once for the whole suite.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const auto r = run_cli("init-toy --out " + quote(dir_->path() / "toy"), dir_->path());
    ASSERT_EQ(r.exit_code, 0) << r.err;
    config_ = dir_->path() / "toy" / "toy.ini";
    const auto e = run_cli("extract --config " + quote(config_) + " --out " + quote(dir_->path() / "run"),
                           dir_->path());
    ASSERT_EQ(e.exit_code, 0) << e.err;
    svec_ = dir_->path() / "run" / "steering" / "toy-source-6L__toy.svec";
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::string base(const std::string& out) {
    return "--config " + quote(config_) + " --steering " + quote(svec_) + " --out " + quote(dir_->path() / out);
  }

  static inline TempDir* dir_ = nullptr;
  static inline std::filesystem::path config_;
  static inline std::filesystem::path svec_;
};

}  // namespace

TEST_F(CliPipeline, ExtractWritesRoundTrippableHeader) {
  ASSERT_TRUE(std::filesystem::exists(svec_));
  const auto set = read_steering_set(svec_);
  EXPECT_EQ(set.source_model_id, "toy-source-6L");
  EXPECT_EQ(set.num_layers, 6u);
  EXPECT_EQ(set.dataset_id, "toy");
  EXPECT_EQ(decode_steering_set(encode_steering_set(set)).directions, set.directions);
}

TEST_F(CliPipeline, ExtractRerunIsByteIdentical) {
  const auto r = run_cli("extract --config " + quote(config_) + " --out " + quote(dir_->path() / "rerun"),
                         dir_->path());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(io::read_file(dir_->path() / "rerun" / "steering" / "toy-source-6L__toy.svec"), io::read_file(svec_));
}

TEST_F(CliPipeline, MissingDatasetIsUsageErrorNamingPath) {
  const auto r = run_cli("extract --config " + quote(config_) + " --train /nope/train.jsonl --out " +
                             quote(dir_->path() / "x"),
                         dir_->path());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("/nope/train.jsonl"), std::string::npos) << r.err;
  const auto j = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
  EXPECT_EQ(j.at("error").at("exit"), 2);
  EXPECT_FALSE(std::filesystem::exists(dir_->path() / "x"));
}

TEST_F(CliPipeline, SingletonGridTune) {
  const auto r = run_cli("tune " + base("tune1") + " --grid 0.3", dir_->path());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto s = read_sweep_summary(dir_->path() / "tune1" / "tune" / "sweep_summary.json");
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_EQ(s.lambda_best, 0.3);
  EXPECT_NE(r.out.find("lambda_best 0.3"), std::string::npos);
  const auto again = run_cli("tune " + base("tune2") + " --grid 0.3", dir_->path());
  EXPECT_EQ(io::read_file(dir_->path() / "tune2" / "tune" / "sweep_summary.json"),
            io::read_file(dir_->path() / "tune1" / "tune" / "sweep_summary.json"));
}

TEST_F(CliPipeline, EvalLambdaZeroMatchesBaseline) {
  const auto r = run_cli("eval " + base("eval0") + " --lambda 0.0", dir_->path());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto dir = dir_->path() / "eval0" / "eval";
  const auto baseline = read_report(dir / "toy-source-6L__toy-target-4L__toy__baseline.jsonl");
  const auto steered = read_report(dir / "toy-source-6L__toy-target-4L__toy__lambda-0.0.jsonl");
  ASSERT_EQ(baseline.records.size(), steered.records.size());
  for (std::size_t i = 0; i < baseline.records.size(); ++i) {
    EXPECT_EQ(baseline.records[i].raw_output, steered.records[i].raw_output);
    EXPECT_EQ(baseline.records[i].extracted, steered.records[i].extracted);
  }
  EXPECT_EQ(baseline.accuracy, steered.accuracy);
}

TEST_F(CliPipeline, EvalModeFlagsAreExclusive) {
  const auto both = run_cli("eval " + base("evalx") + " --lambda 0.1 --with-its", dir_->path());
  EXPECT_EQ(both.exit_code, 2);
  const auto none = run_cli("eval " + base("evalx"), dir_->path());
  EXPECT_EQ(none.exit_code, 2);
}

TEST_F(CliPipeline, EvalFromSummaryAndSmallIts) {
  ASSERT_EQ(run_cli("tune " + base("chain") + " --grid 0.05,0.4", dir_->path()).exit_code, 0);
  const auto r = run_cli("eval " + base("chain") + " --lambda-from-summary " +
                             quote(dir_->path() / "chain" / "tune" / "sweep_summary.json"),
                         dir_->path());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("lambda 0.4"), std::string::npos) << r.out;
  const auto its = run_cli("eval " + base("chain-its") + " --with-its --grid 0.05,0.4", dir_->path());
  ASSERT_EQ(its.exit_code, 0) << its.err;
  EXPECT_TRUE(std::filesystem::exists(dir_->path() / "chain-its" / "eval" /
                                      "toy-source-6L__toy-target-4L__toy__its.jsonl"));
}

TEST_F(CliPipeline, AnalyzeSelfGivesUnitDiagonal) {
  const auto r = run_cli("analyze --a " + quote(svec_) + " --out " + quote(dir_->path() / "an"), dir_->path());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto m = import_heatmap_data(dir_->path() / "an" / "analysis" /
                                     "toy-source-6L_toy__toy-source-6L_toy__cosine.csv");
  for (std::size_t i = 0; i < m.rows(); ++i) EXPECT_EQ(m.entries[i][i], 1.0);
}

TEST_F(CliPipeline, PlotSummaryAndMalformedMatrix) {
  ASSERT_EQ(run_cli("tune " + base("plotsrc"), dir_->path()).exit_code, 0);
  const auto summary = dir_->path() / "plotsrc" / "tune" / "sweep_summary.json";
  ASSERT_EQ(read_sweep_summary(summary).rows.size(), 19u);
  const auto r = run_cli("plot --input " + quote(summary) + " --out " + quote(dir_->path() / "plots1"), dir_->path());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::size_t svgs = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir_->path() / "plots1"))
    svgs += e.path().extension() == ".svg";
  EXPECT_EQ(svgs, 1u);

  io::write_file(dir_->path() / "broken.csv", "layer,0,1\n0,0.5\n");
  const auto bad = run_cli("plot --input " + quote(dir_->path() / "broken.csv") + " --out " +
                               quote(dir_->path() / "plots2"),
                           dir_->path());
  EXPECT_EQ(bad.exit_code, 1);
  EXPECT_NE(bad.err.find("broken.csv:2"), std::string::npos) << bad.err;
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir dir("cli-usage");
  EXPECT_EQ(run_cli("", dir.path()).exit_code, 2);
  EXPECT_EQ(run_cli("frobnicate", dir.path()).exit_code, 2);
  EXPECT_EQ(run_cli("tune --grid 0.1,0.1 --out " + quote(dir.path()), dir.path()).exit_code, 2);
}

TEST(Cli, SeedPrecedenceFlagOverEnvOverConfig) {
  TempDir dir("cli-seed");
  io::write_file(dir / "c.ini", "seed = 1\n");
  auto weights = [&](const std::string& extra, const std::string& env, const std::string& out) {
    const auto r = run_cli("init-toy --kind random --config " + quote(dir / "c.ini") + " " + extra +
                               " --out " + quote(dir / out),
                           dir.path(), env);
    EXPECT_EQ(r.exit_code, 0) << r.err;
    return io::read_file(dir / out / "toy-random.sfwt");
  };
  const auto cfg = weights("", "", "a");
  const auto env = weights("", "STEER_SEED=2", "b");
  const auto flag = weights("--seed 3", "STEER_SEED=2", "c");
  EXPECT_EQ(cfg, encode_model(toy::random_model(load_model(dir / "a" / "toy-random.sfwt").spec(), 1)));
  EXPECT_EQ(env, encode_model(toy::random_model(load_model(dir / "b" / "toy-random.sfwt").spec(), 2)));
  EXPECT_EQ(flag, encode_model(toy::random_model(load_model(dir / "c" / "toy-random.sfwt").spec(), 3)));
}

TEST(Cli, InitToyFromHandSpecifiedJson) {
  TempDir dir("cli-json");
  io::write_file(dir / "m.json", R"({"spec": {"model_id": "hand", "num_layers": 1, "hidden_dim": 4,
      "num_heads": 1, "max_context": 8, "ffn_dim": 4}})");
  const auto r = run_cli("init-toy --kind json --weights-json " + quote(dir / "m.json") + " --out " +
                             quote(dir.path()),
                         dir.path());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto m = load_model(dir / "hand.sfwt");
  EXPECT_EQ(m.spec().hidden_dim, 4u);
  io::write_file(dir / "bad.json", "{");
  EXPECT_EQ(run_cli("init-toy --kind json --weights-json " + quote(dir / "bad.json") + " --out " +
                        quote(dir.path()),
                    dir.path())
                .exit_code,
            1);
}
