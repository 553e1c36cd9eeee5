#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "steer/binary_io.hpp"
#include "steer/error.hpp"
#include "steer/extraction.hpp"
#include "steer/harness.hpp"
#include "steer/parallel.hpp"
#include "steer/transfer.hpp"

namespace steer {

struct LambdaGrid {
  std::vector<double> values;

  void validate() const {
    if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "lambda grid is empty");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(values[i] >= 0.0) || !std::isfinite(values[i])) {
        throw Error(ErrorCode::kInvalidArgument, "lambda values must be finite and >= 0");
      }
      if (i > 0 && !(values[i] > values[i - 1])) {
        throw Error(ErrorCode::kInvalidArgument, "lambda grid must be strictly increasing");
      }
    }
  }
};

// {0.01, ..., 0.09} then {0.1, ..., 1.0}: 19 values.
inline LambdaGrid default_grid() {
  LambdaGrid g;
  for (int k = 1; k <= 9; ++k) g.values.push_back(k / 100.0);
  for (int k = 1; k <= 10; ++k) g.values.push_back(k / 10.0);
  return g;
}

// Parses "0.1,0.2,0.5"; the result is sorted and must be duplicate-free.
inline LambdaGrid parse_grid(std::string_view text) {
  LambdaGrid g;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto item = trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                           : comma - pos));
    pos = comma == std::string_view::npos ? text.size() + 1 : comma + 1;
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      g.values.push_back(std::stod(std::string(item), &used));
      if (used != item.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad lambda value '" + std::string(item) + "'");
    }
  }
  std::sort(g.values.begin(), g.values.end());
  g.validate();
  return g;
}

struct SweepPoint {
  double lambda = 0.0;
  double metric = 0.0;
  EvalReport report;
};

struct SweepResult {
  std::vector<SweepPoint> points;  // grid order
  double lambda_best = 0.0;
  std::optional<EvalReport> baseline;
};

// argmax over (lambda, metric); ties go to the smallest lambda.
inline double select_best_lambda(std::span<const std::pair<double, double>> metric_by_lambda) {
  if (metric_by_lambda.empty()) throw Error(ErrorCode::kInvalidArgument, "no sweep points");
  const auto* best = &metric_by_lambda.front();
  for (const auto& p : metric_by_lambda) {
    if (p.second > best->second || (p.second == best->second && p.first < best->first)) best = &p;
  }
  return best->first;
}

struct SweepOptions {
  EvalOptions eval;
  bool include_baseline = true;
  // Points evaluated concurrently (each uses eval.workers threads).
  std::size_t lambda_workers = 1;
};

inline ReportMeta sweep_meta(const SteeringVectorSet& set, const Model& target,
                             const EvalTask& task, RunLabel label) {
  return {task.dataset_id, set.source_model_id, target.spec().model_id, label, {}};
}

// Evaluates every grid value on the task with identical prompts and params.
inline SweepResult sweep(const Model& target, const Tokenizer& tokenizer,
                         const SteeringVectorSet& set,
                         const std::optional<DimensionAdapter>& adapter, const EvalTask& task,
                         const LambdaGrid& grid, const GenerationParams& params,
                         const SweepOptions& options = {}) {
  grid.validate();
  if (task.records.empty()) throw Error(ErrorCode::kInsufficientData, "validation split is empty");
  const auto adapted = adapt_directions(set, target.spec(), adapter);

  SweepResult result;
  result.points.resize(grid.values.size());
  parallel_for(grid.values.size(), options.lambda_workers, [&](std::size_t i) {
    const double lambda = grid.values[i];
    const auto plan = scale_plan(adapted, lambda);
    auto& pt = result.points[i];
    pt.lambda = lambda;
    pt.report = evaluate(target, tokenizer, task, plan, params,
                         sweep_meta(set, target, task, RunLabel::at(lambda)), options.eval);
    pt.metric = pt.report.accuracy;
  });
  if (options.include_baseline) {
    result.baseline = evaluate(target, tokenizer, task, SteeringPlan{}, params,
                               sweep_meta(set, target, task, RunLabel::baseline()), options.eval);
  }
  std::vector<std::pair<double, double>> curve;
  for (const auto& p : result.points) curve.emplace_back(p.lambda, p.metric);
  result.lambda_best = select_best_lambda(curve);
  return result;
}

inline nlohmann::json sweep_summary_json(const SweepResult& r) {
  nlohmann::json j;
  j["kind"] = "sweep_summary";
  j["lambda_best"] = r.lambda_best;
  if (!r.points.empty()) {
    const auto& meta = r.points.front().report.meta;
    j["dataset_id"] = meta.dataset_id;
    j["source_model_id"] = meta.source_model_id;
    j["target_model_id"] = meta.target_model_id;
    j["provenance"] = {{"source_set_id", meta.provenance.source_set_id},
                       {"adapter", meta.provenance.adapter_kind},
                       {"mapping", meta.provenance.mapping_summary}};
  }
  if (r.baseline) {
    j["baseline"] = {{"accuracy", r.baseline->accuracy},
                     {"correct", r.baseline->correct},
                     {"total", r.baseline->total},
                     {"report", report_file_name(r.baseline->meta)}};
  }
  j["rows"] = nlohmann::json::array();
  for (const auto& p : r.points) {
    j["rows"].push_back({{"lambda", p.lambda},
                         {"accuracy", p.metric},
                         {"correct", p.report.correct},
                         {"total", p.report.total},
                         {"unparsed", p.report.unparsed},
                         {"report", report_file_name(p.report.meta)}});
  }
  return j;
}

// One report per lambda (plus the baseline) and the summary file.
inline std::filesystem::path write_sweep(const SweepResult& r, const std::filesystem::path& dir,
                                         const std::string& summary_name = "sweep_summary.json") {
  for (const auto& p : r.points) write_report(p.report, dir / report_file_name(p.report.meta));
  if (r.baseline) write_report(*r.baseline, dir / report_file_name(r.baseline->meta));
  const auto summary = dir / summary_name;
  io::write_file(summary, sweep_summary_json(r).dump(2) + "\n");
  return summary;
}

struct SweepSummaryRow {
  double lambda = 0.0;
  double accuracy = 0.0;
};

struct SweepSummary {
  double lambda_best = 0.0;
  std::optional<double> baseline_accuracy;
  std::vector<SweepSummaryRow> rows;
};

inline SweepSummary read_sweep_summary(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(io::read_file(path));
    if (j.value("kind", "") != "sweep_summary") {
      throw Error(ErrorCode::kParse, path.string() + ": not a sweep summary");
    }
    SweepSummary s;
    s.lambda_best = j.at("lambda_best");
    if (j.contains("baseline")) s.baseline_accuracy = j.at("baseline").at("accuracy").get<double>();
    for (const auto& row : j.at("rows")) s.rows.push_back({row.at("lambda"), row.at("accuracy")});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

}  // namespace steer
