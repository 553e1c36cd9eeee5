#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "steer/error.hpp"
#include "steer/harness.hpp"
#include "steer/tuner.hpp"

namespace steer {

// Per-lambda extracted answers for one example.
using AggregationInput = std::map<double, Answer>;

struct AggregatedResult {
  Answer final_answer;
  std::size_t support_count = 0;
  std::vector<double> contributing_lambdas;

  bool operator==(const AggregatedResult&) const = default;
};

// Most frequent non-sentinel answer. Ties go to the answer first produced at
// the smallest lambda. Sentinels only win when nothing else was parsed.
inline AggregatedResult mode_aggregate(const AggregationInput& input) {
  if (input.empty()) throw Error(ErrorCode::kInvalidArgument, "nothing to aggregate");
  struct Tally {
    std::size_t count = 0;
    double first_lambda = 0.0;
  };
  std::map<std::string, Tally> tally;
  for (const auto& [lambda, answer] : input) {
    if (!answer) continue;
    auto [it, inserted] = tally.try_emplace(*answer, Tally{0, lambda});
    ++it->second.count;
  }
  AggregatedResult out;
  if (tally.empty()) {
    out.support_count = input.size();
    for (const auto& [lambda, _] : input) out.contributing_lambdas.push_back(lambda);
    return out;
  }
  const std::pair<const std::string, Tally>* best = nullptr;
  for (const auto& entry : tally) {
    if (best == nullptr || entry.second.count > best->second.count ||
        (entry.second.count == best->second.count &&
         entry.second.first_lambda < best->second.first_lambda)) {
      best = &entry;
    }
  }
  out.final_answer = best->first;
  out.support_count = best->second.count;
  for (const auto& [lambda, answer] : input) {
    if (answer && *answer == best->first) out.contributing_lambdas.push_back(lambda);
  }
  return out;
}

struct ItsExample {
  std::string example_id;
  AggregationInput votes;
  AggregatedResult result;
  bool correct = false;
};

struct ItsResult {
  SweepResult per_lambda;
  EvalReport aggregated;
  std::vector<ItsExample> examples;
};

// Aggregates already-computed per-lambda reports; a pure function of their
// extracted answers.
inline std::pair<EvalReport, std::vector<ItsExample>> aggregate_reports(
    std::span<const DatasetRecord> records, std::span<const EvalReport> per_lambda,
    ReportMeta meta) {
  if (per_lambda.empty()) throw Error(ErrorCode::kInvalidArgument, "no per-lambda reports");
  std::map<std::string, AggregationInput> votes;
  for (const auto& report : per_lambda) {
    if (report.meta.label.kind != RunLabel::Kind::kLambda) {
      throw Error(ErrorCode::kInvalidArgument, "aggregation needs per-lambda reports");
    }
    for (const auto& rec : report.records) {
      if (!votes[rec.example_id].emplace(report.meta.label.lambda, rec.extracted).second) {
        throw Error(ErrorCode::kInvalidArgument,
                    "duplicate lambda " + format_real(report.meta.label.lambda));
      }
    }
  }
  std::vector<ItsExample> examples;
  std::vector<Prediction> predictions;
  for (const auto& r : records) {
    auto it = votes.find(r.id);
    if (it == votes.end()) {
      throw Error(ErrorCode::kInvalidArgument, "no per-lambda answers for record " + r.id);
    }
    ItsExample ex{r.id, it->second, mode_aggregate(it->second), false};
    ex.correct = answer_matches(ex.result.final_answer, r);
    predictions.push_back({r.id, "", ex.result.final_answer, ""});
    examples.push_back(std::move(ex));
  }
  meta.label = RunLabel::its();
  auto report = score(records, predictions, meta);
  return {std::move(report), std::move(examples)};
}

inline ItsResult run_with_its(const Model& target, const Tokenizer& tokenizer,
                              const SteeringVectorSet& set,
                              const std::optional<DimensionAdapter>& adapter, const EvalTask& task,
                              const LambdaGrid& grid, const GenerationParams& params,
                              const SweepOptions& options = {}) {
  ItsResult out;
  out.per_lambda = sweep(target, tokenizer, set, adapter, task, grid, params, options);
  std::vector<EvalReport> reports;
  for (const auto& p : out.per_lambda.points) reports.push_back(p.report);
  auto meta = reports.front().meta;
  auto [agg, examples] = aggregate_reports(task.records, reports, meta);
  out.aggregated = std::move(agg);
  out.examples = std::move(examples);
  return out;
}

// Aggregated file: report summary header, then one line per example with all
// per-lambda answers, the mode, its support and correctness.
inline std::string encode_its_report(const EvalReport& aggregated,
                                     std::span<const ItsExample> examples) {
  std::string out = report_header_json(aggregated).dump() + "\n";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    auto j = record_json(aggregated.records.at(i));
    nlohmann::json votes = nlohmann::json::array();
    for (const auto& [lambda, answer] : ex.votes) {
      votes.push_back({{"lambda", lambda}, {"answer", answer_json(answer)}});
    }
    j["votes"] = std::move(votes);
    j["support"] = ex.result.support_count;
    j["contributing_lambdas"] = ex.result.contributing_lambdas;
    out += j.dump() + "\n";
  }
  return out;
}

inline void write_its(const ItsResult& r, const std::filesystem::path& dir) {
  write_sweep(r.per_lambda, dir, "its_sweep_summary.json");
  io::write_file(dir / report_file_name(r.aggregated.meta), encode_its_report(r.aggregated, r.examples));
}

}  // namespace steer
