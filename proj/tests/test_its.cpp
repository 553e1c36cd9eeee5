#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace steer;
using namespace testing_support;

namespace {

// Counts every answer, then picks the highest count and, among ties, the
// answer whose first occurrence has the smallest lambda.
Answer brute_force_mode(const AggregationInput& in) {
  std::vector<std::string> answers;
  for (const auto& [l, a] : in)
    if (a) answers.push_back(*a);
  if (answers.empty()) return std::nullopt;
  std::string best;
  std::size_t best_count = 0;
  double best_first = 1e300;
  for (const auto& cand : answers) {
    std::size_t count = 0;
    double first = 1e300;
    for (const auto& [l, a] : in) {
      if (a && *a == cand) {
        ++count;
        first = std::min(first, l);
      }
    }
    if (count > best_count || (count == best_count && first < best_first)) {
      best = cand;
      best_count = count;
      best_first = first;
    }
  }
  return best;
}

}  // namespace

TEST(ModeAggregate, Examples) {
  const auto a = mode_aggregate({{0.01, "4"}, {0.02, "4"}, {0.03, "5"}});
  EXPECT_EQ(a.final_answer, Answer{"4"});
  EXPECT_EQ(a.support_count, 2u);
  EXPECT_EQ(a.contributing_lambdas, (std::vector<double>{0.01, 0.02}));
  EXPECT_EQ(mode_aggregate({{0.01, "7"}, {0.02, "9"}}).final_answer, Answer{"7"});
  const auto none = mode_aggregate({{0.01, std::nullopt}, {0.02, std::nullopt}});
  EXPECT_FALSE(none.final_answer);
  EXPECT_GE(none.support_count, 1u);
  EXPECT_THROW(mode_aggregate({}), Error);
}

TEST(ModeAggregate, SentinelsNeverOutvoteAnswers) {
  const auto r = mode_aggregate({{0.01, std::nullopt}, {0.02, std::nullopt}, {0.03, "x"}});
  EXPECT_EQ(r.final_answer, Answer{"x"});
  EXPECT_EQ(r.support_count, 1u);
}

TEST(ModeAggregate, MatchesBruteForceOracle) {
  std::mt19937_64 gen(99);
  const auto grid = default_grid().values;
  for (int trial = 0; trial < 1000; ++trial) {
    AggregationInput in;
    const std::size_t n = 1 + gen() % grid.size();
    const int alphabet = 1 + static_cast<int>(gen() % 4);
    for (std::size_t i = 0; i < n; ++i) {
      const double l = grid[gen() % grid.size()];
      const int pick = static_cast<int>(gen() % (alphabet + 1));
      in[l] = pick == alphabet ? Answer{} : Answer{std::string(1, static_cast<char>('a' + pick))};
    }
    const auto got = mode_aggregate(in);
    EXPECT_EQ(got.final_answer, brute_force_mode(in));
    if (got.final_answer) {
      std::size_t count = 0;
      for (const auto& [l, a] : in) count += a == got.final_answer;
      EXPECT_EQ(got.support_count, count);
    }
  }
}

TEST(AggregateReports, SingletonGridEqualsThatReport) {
  const auto task = toy::planted_task();
  ExtractionOptions o;
  o.dataset_id = "toy";
  const auto set = extract_steering_set(task.source, ByteTokenizer{}, build_contrastive_pairs(task.train), o);
  const EvalTask test{"toy", task.test, {}, "", task.style};
  const auto r = run_with_its(task.target, ByteTokenizer{}, set, std::nullopt, test, parse_grid("0.2"), task.params);
  EXPECT_EQ(r.aggregated.accuracy, r.per_lambda.points[0].report.accuracy);
  for (std::size_t i = 0; i < r.examples.size(); ++i) {
    EXPECT_EQ(r.aggregated.records[i].extracted, r.per_lambda.points[0].report.records[i].extracted);
  }
  EXPECT_EQ(r.aggregated.meta.label, RunLabel::its());
}

TEST(AggregateReports, ReplayMatchesOracleAndMajorityFixesSingleLambda) {
  const std::vector<DatasetRecord> rs = {{"a", "q", std::nullopt, "1"}, {"b", "q", std::nullopt, "2"}};
  auto make = [&](double lambda, Answer a0, Answer a1) {
    std::vector<Prediction> ps = {{"a", "", a0, ""}, {"b", "", a1, ""}};
    return score(rs, ps, {"d", "s", "t", RunLabel::at(lambda), {}});
  };
  const std::vector<EvalReport> reports = {make(0.01, "1", "3"), make(0.02, "1", "2"),
                                           make(0.03, "9", "2")};
  const auto [agg, examples] = aggregate_reports(rs, reports, reports[0].meta);
  EXPECT_EQ(agg.correct, 2u);
  EXPECT_EQ(agg.accuracy, 1.0);
  for (const auto& ex : examples) EXPECT_EQ(ex.result.final_answer, brute_force_mode(ex.votes));
  // Lambda 0.03 got example "a" wrong; the majority is right.
  EXPECT_FALSE(reports[2].records[0].correct);
  EXPECT_TRUE(agg.records[0].correct);

  std::vector<EvalReport> dup = {reports[0], reports[0]};
  EXPECT_THROW(aggregate_reports(rs, dup, reports[0].meta), Error);
}

TEST(ItsFiles, AggregatedFileCarriesVotes) {
  TempDir dir("its");
  const auto task = toy::planted_task();
  ExtractionOptions o;
  o.dataset_id = "toy";
  const auto set = extract_steering_set(task.source, ByteTokenizer{}, build_contrastive_pairs(task.train), o);
  const EvalTask test{"toy", task.test, {}, "", task.style};
  const auto r = run_with_its(task.target, ByteTokenizer{}, set, std::nullopt, test, parse_grid("0.05,0.1,0.5"),
                              task.params);
  write_its(r, dir.path());
  const auto agg_path = dir / report_file_name(r.aggregated.meta);
  ASSERT_TRUE(std::filesystem::exists(agg_path));
  const auto back = read_report(agg_path);
  EXPECT_EQ(back.accuracy, r.aggregated.accuracy);
  std::istringstream in(io::read_file(agg_path));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("votes").size(), 3u);
  EXPECT_TRUE(j.contains("support"));
  EXPECT_TRUE(std::filesystem::exists(dir / "its_sweep_summary.json"));
  // Replaying the persisted per-lambda files reproduces the aggregate.
  std::vector<EvalReport> persisted;
  for (const auto& p : r.per_lambda.points) persisted.push_back(read_report(dir / report_file_name(p.report.meta)));
  EXPECT_EQ(aggregate_reports(test.records, persisted, persisted[0].meta).first.records, r.aggregated.records);
}
