#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"

using namespace steer;
using namespace testing_support;

namespace {

struct Planted {
  toy::PlantedTask task = toy::planted_task();
  SteeringVectorSet set;
  EvalTask val;

  Planted() {
    ExtractionOptions o;
    o.dataset_id = "toy";
    set = extract_steering_set(task.source, ByteTokenizer{}, build_contrastive_pairs(task.train), o);
    val = EvalTask{"toy", task.val, {}, "", task.style};
  }
};

const Planted& planted() {
  static const Planted p;
  return p;
}

}  // namespace

TEST(DefaultGrid, ExactNineteenValues) {
  const auto g = default_grid();
  ASSERT_EQ(g.values.size(), 19u);
  EXPECT_EQ(g.values.front(), 0.01);
  EXPECT_EQ(g.values.back(), 1.0);
  EXPECT_NE(std::find(g.values.begin(), g.values.end(), 0.09), g.values.end());
  EXPECT_NE(std::find(g.values.begin(), g.values.end(), 0.1), g.values.end());
  EXPECT_EQ(std::find(g.values.begin(), g.values.end(), 0.095), g.values.end());
  EXPECT_TRUE(std::is_sorted(g.values.begin(), g.values.end()));
  EXPECT_TRUE(std::adjacent_find(g.values.begin(), g.values.end()) == g.values.end());
  EXPECT_NO_THROW(g.validate());
}

TEST(ParseGrid, OverridesAndErrors) {
  EXPECT_EQ(parse_grid("0.5").values, (std::vector<double>{0.5}));
  EXPECT_EQ(parse_grid(" 0.3, 0.1 ,0.2").values, (std::vector<double>{0.1, 0.2, 0.3}));
  EXPECT_THROW(parse_grid("0.1,0.1"), Error);
  EXPECT_THROW(parse_grid("-1"), Error);
  EXPECT_THROW(parse_grid("abc"), Error);
  EXPECT_THROW(parse_grid(""), Error);
}

TEST(SelectBestLambda, ArgmaxWithSmallestTieBreak) {
  const std::vector<std::pair<double, double>> table = {{0.01, 0.5}, {0.02, 0.7}, {0.03, 0.7}};
  EXPECT_EQ(select_best_lambda(table), 0.02);
  const std::vector<std::pair<double, double>> reversed = {{0.03, 0.7}, {0.02, 0.7}, {0.01, 0.5}};
  EXPECT_EQ(select_best_lambda(reversed), 0.02);
  EXPECT_THROW(select_best_lambda({}), Error);
}

TEST(Sweep, ZeroGridEqualsBaseline) {
  const auto& p = planted();
  const auto r = sweep(p.task.target, ByteTokenizer{}, p.set, std::nullopt, p.val, LambdaGrid{{0.0}},
                       p.task.params);
  EXPECT_EQ(r.lambda_best, 0.0);
  ASSERT_TRUE(r.baseline);
  EXPECT_EQ(r.points[0].metric, r.baseline->accuracy);
  for (std::size_t i = 0; i < r.points[0].report.records.size(); ++i) {
    EXPECT_EQ(r.points[0].report.records[i].raw_output, r.baseline->records[i].raw_output);
  }
}

TEST(Sweep, PlantedTaskArgmaxContract) {
  const auto& p = planted();
  SweepOptions opts;
  opts.lambda_workers = 4;
  const auto r = sweep(p.task.target, ByteTokenizer{}, p.set, std::nullopt, p.val, default_grid(),
                       p.task.params, opts);
  ASSERT_EQ(r.points.size(), 19u);
  double best = 0.0;
  for (const auto& pt : r.points) best = std::max(best, pt.metric);
  const auto it = std::find_if(r.points.begin(), r.points.end(),
                               [&](const SweepPoint& pt) { return pt.lambda == r.lambda_best; });
  ASSERT_NE(it, r.points.end());
  EXPECT_EQ(it->metric, best);
  for (auto pt = r.points.begin(); pt != it; ++pt) EXPECT_LT(pt->metric, best);
  EXPECT_GT(best, r.baseline->accuracy);
  for (const auto& pt : r.points) EXPECT_EQ(pt.report.meta.provenance.source_set_id, "toy-source-6L:toy");
}

TEST(Sweep, RerunningOneLambdaReproducesItsReport) {
  const auto& p = planted();
  const auto full = sweep(p.task.target, ByteTokenizer{}, p.set, std::nullopt, p.val, parse_grid("0.1,0.3"),
                          p.task.params);
  const auto single = sweep(p.task.target, ByteTokenizer{}, p.set, std::nullopt, p.val, parse_grid("0.3"),
                            p.task.params);
  EXPECT_EQ(single.points[0].report.records, full.points[1].report.records);
  EXPECT_EQ(single.lambda_best, 0.3);
}

TEST(Sweep, EmptySplitRejected) {
  const auto& p = planted();
  EvalTask empty = p.val;
  empty.records.clear();
  EXPECT_THROW(sweep(p.task.target, ByteTokenizer{}, p.set, std::nullopt, empty, default_grid(), p.task.params),
               Error);
}

TEST(Sweep, PersistedSummaryListsTheCurve) {
  TempDir dir("sweep");
  const auto& p = planted();
  const auto r = sweep(p.task.target, ByteTokenizer{}, p.set, std::nullopt, p.val, parse_grid("0.05,0.5"),
                       p.task.params);
  const auto path = write_sweep(r, dir.path());
  const auto s = read_sweep_summary(path);
  ASSERT_EQ(s.rows.size(), 2u);
  EXPECT_EQ(s.lambda_best, r.lambda_best);
  EXPECT_EQ(s.rows[1].accuracy, r.points[1].metric);
  EXPECT_EQ(*s.baseline_accuracy, r.baseline->accuracy);
  double best = 0.0;
  for (const auto& row : s.rows) best = std::max(best, row.accuracy);
  for (const auto& row : s.rows) {
    if (row.lambda == s.lambda_best) EXPECT_EQ(row.accuracy, best);
  }
  std::size_t reports = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) reports += e.path().extension() == ".jsonl";
  EXPECT_EQ(reports, 3u);
  io::write_file(dir / "bad.json", R"({"kind": "other"})");
  EXPECT_THROW(read_sweep_summary(dir / "bad.json"), Error);
}
