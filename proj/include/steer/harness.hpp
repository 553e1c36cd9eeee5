#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "steer/binary_io.hpp"
#include "steer/error.hpp"
#include "steer/extraction.hpp"
#include "steer/parallel.hpp"
#include "steer/rng.hpp"
#include "steer/runtime.hpp"
#include "steer/steering_plan.hpp"
#include "steer/text.hpp"
#include "steer/tokenizer.hpp"

namespace steer {

// An extracted answer; nullopt is the NO_ANSWER sentinel.
using Answer = std::optional<std::string>;

enum class AnswerFormat { kBoxed, kFinalLine };

inline constexpr std::string_view kFinalAnswerMarker = "The final answer is:";

inline AnswerFormat parse_answer_format(std::string_view name) {
  if (name == "boxed") return AnswerFormat::kBoxed;
  if (name == "final_line" || name == "final-line") return AnswerFormat::kFinalLine;
  throw Error(ErrorCode::kInvalidArgument, "unknown answer format '" + std::string(name) + "'");
}

inline std::string to_string(AnswerFormat f) {
  return f == AnswerFormat::kBoxed ? "boxed" : "final_line";
}

namespace detail {

inline bool looks_numeric(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) ++i;
  if (i >= s.size() || !(s[i] >= '0' && s[i] <= '9')) return false;
  bool seen_point = false;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (c >= '0' && c <= '9') continue;
    if (c == ',' && !seen_point) continue;
    if (c == '.' && !seen_point && i + 1 < s.size()) {
      seen_point = true;
      continue;
    }
    return false;
  }
  return true;
}

}  // namespace detail

// Trims whitespace, drops trailing periods, and strips thousands separators
// from numeric answers. Non-numeric answers keep their commas.
inline std::string normalize_answer(std::string_view raw) {
  std::string_view s = trim(raw);
  while (!s.empty() && s.back() == '.') s = trim(s.substr(0, s.size() - 1));
  std::string out(s);
  if (detail::looks_numeric(out)) {
    out.erase(std::remove(out.begin(), out.end(), ','), out.end());
  }
  return out;
}

// Never fails: anything that cannot be parsed yields NO_ANSWER.
inline Answer extract_answer(std::string_view raw, AnswerFormat format) {
  std::optional<std::string_view> found;
  if (format == AnswerFormat::kBoxed) {
    constexpr std::string_view open = "\\boxed{";
    for (auto at = raw.find(open); at != std::string_view::npos; at = raw.find(open, at + 1)) {
      const std::size_t start = at + open.size();
      int depth = 1;
      std::size_t i = start;
      for (; i < raw.size(); ++i) {
        if (raw[i] == '{') ++depth;
        if (raw[i] == '}' && --depth == 0) break;
      }
      if (depth == 0) found = raw.substr(start, i - start);
    }
  } else {
    const auto at = raw.rfind(kFinalAnswerMarker);
    if (at != std::string_view::npos) {
      auto rest = raw.substr(at + kFinalAnswerMarker.size());
      found = rest.substr(0, rest.find('\n'));
    }
  }
  if (!found) return std::nullopt;
  auto norm = normalize_answer(*found);
  if (norm.empty()) return std::nullopt;
  return norm;
}

inline std::string render_answer(std::string_view answer, AnswerFormat format) {
  if (format == AnswerFormat::kBoxed) return "\\boxed{" + std::string(answer) + "}";
  return "#### " + std::string(kFinalAnswerMarker) + " " + std::string(answer);
}

// --- datasets -----------------------------------------------------------------

struct DatasetRecord {
  std::string id;
  std::string question;
  std::optional<std::string> reasoning;
  std::string answer;

  bool operator==(const DatasetRecord&) const = default;
};

enum class SplitMode { kTrain, kVal, kTest };

struct SplitSpec {
  SplitMode mode = SplitMode::kTest;
  std::vector<DatasetRecord> few_shot_exemplars;
  std::uint64_t seed = 0;
};

// One JSON object per line with id / question / answer and optional
// reasoning. Blank lines are skipped; everything else must parse.
inline std::vector<DatasetRecord> parse_records(std::string_view text,
                                                const std::string& origin = "dataset") {
  std::vector<DatasetRecord> out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    auto fail = [&](const std::string& what) {
      throw Error(ErrorCode::kParse, origin + ":" + std::to_string(line_no) + ": " + what);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed record: ") + e.what());
    }
    if (!j.is_object()) fail("record is not an object");
    DatasetRecord r;
    for (const char* field : {"id", "question", "answer"}) {
      if (!j.contains(field)) fail(std::string("missing required field \"") + field + "\"");
    }
    auto as_string = [&](const char* field) {
      const auto& v = j.at(field);
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number()) return v.dump();
      fail(std::string("field \"") + field + "\" must be a string");
      return std::string();
    };
    r.id = as_string("id");
    r.question = as_string("question");
    r.answer = as_string("answer");
    if (j.contains("reasoning") && !j.at("reasoning").is_null()) r.reasoning = as_string("reasoning");
    if (r.id.empty()) fail("empty id");
    if (normalize_answer(r.answer).empty()) fail("empty answer");
    if (!seen.insert(r.id).second) fail("duplicate id \"" + r.id + "\"");
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<DatasetRecord> load_records(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kIo, "dataset '" + path.string() + "' does not exist");
  }
  return parse_records(io::read_file(path), path.string());
}

// Records in file order with every few-shot exemplar removed.
inline std::vector<DatasetRecord> load_split(const std::filesystem::path& path,
                                             const SplitSpec& spec) {
  auto records = load_records(path);
  std::set<std::string> exclude;
  for (const auto& e : spec.few_shot_exemplars) exclude.insert(e.id);
  std::erase_if(records, [&](const DatasetRecord& r) { return exclude.contains(r.id); });
  return records;
}

// Seeded choice of k exemplars (returned in their original order).
inline std::vector<DatasetRecord> sample_exemplars(std::span<const DatasetRecord> pool,
                                                   std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  idx.resize(std::min(k, idx.size()));
  std::sort(idx.begin(), idx.end());
  std::vector<DatasetRecord> out;
  for (auto i : idx) out.push_back(pool[i]);
  return out;
}

// --- contrastive pairs --------------------------------------------------------

// Renderings with {question}, {reasoning} and {answer} placeholders.
struct PairTemplate {
  std::string positive = "{question}\n{reasoning}\n#### The final answer is: {answer}";
  std::string negative = "{question}";

  bool requires_reasoning() const {
    return positive.find("{reasoning}") != std::string::npos ||
           negative.find("{reasoning}") != std::string::npos;
  }

  PairTemplate swapped() const { return {negative, positive}; }
};

inline PairTemplate load_pair_template(const std::filesystem::path& path) {
  try {
    auto j = nlohmann::json::parse(io::read_file(path));
    return {j.at("positive").get<std::string>(), j.at("negative").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

inline std::string render_template(std::string_view tmpl, const DatasetRecord& r) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const auto key = tmpl.substr(i + 1, close - i - 1);
        if (key == "question") { out += r.question; i = close + 1; continue; }
        if (key == "reasoning") { out += r.reasoning.value_or(""); i = close + 1; continue; }
        if (key == "answer") { out += r.answer; i = close + 1; continue; }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

// Zero-shot: no exemplars are involved in pair construction.
inline std::vector<ContrastivePair> build_contrastive_pairs(std::span<const DatasetRecord> records,
                                                            const PairTemplate& tmpl = {}) {
  std::vector<ContrastivePair> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (tmpl.requires_reasoning() && (!r.reasoning || trim(*r.reasoning).empty())) {
      throw Error(ErrorCode::kInvalidArgument,
                  "record " + r.id + " has no reasoning but the pair template requires it");
    }
    out.emplace_back(render_template(tmpl.positive, r), render_template(tmpl.negative, r), r.id);
  }
  return out;
}

// --- prompts ------------------------------------------------------------------

struct PromptStyle {
  std::string question_prefix = "Question: ";
  std::string answer_prefix = "Answer:";
  AnswerFormat format = AnswerFormat::kFinalLine;
};

// system prompt, exemplars (question, reasoning, answer line), then the
// question followed by the answer cue.
inline std::string assemble_prompt(const DatasetRecord& record, const SplitSpec& spec,
                                   std::string_view system_prompt, const PromptStyle& style = {}) {
  std::string out;
  if (!system_prompt.empty()) {
    out += system_prompt;
    out += "\n\n";
  }
  for (const auto& ex : spec.few_shot_exemplars) {
    out += style.question_prefix + ex.question + "\n";
    out += style.answer_prefix;
    if (ex.reasoning && !ex.reasoning->empty()) {
      if (!style.answer_prefix.empty()) out += " ";
      out += *ex.reasoning + "\n";
    } else if (!style.answer_prefix.empty()) {
      out += " ";
    }
    out += render_answer(ex.answer, style.format) + "\n\n";
  }
  out += style.question_prefix + record.question;
  if (!style.answer_prefix.empty()) out += "\n" + style.answer_prefix;
  return out;
}

// --- scoring and reports ------------------------------------------------------

struct RunLabel {
  enum class Kind { kBaseline, kLambda, kIts };
  Kind kind = Kind::kBaseline;
  double lambda = 0.0;

  static RunLabel baseline() { return {Kind::kBaseline, 0.0}; }
  static RunLabel at(double lambda) { return {Kind::kLambda, lambda}; }
  static RunLabel its() { return {Kind::kIts, 0.0}; }

  std::string to_string() const {
    switch (kind) {
      case Kind::kBaseline: return "baseline";
      case Kind::kLambda: return "lambda=" + format_real(lambda);
      case Kind::kIts: return "ITS";
    }
    return "?";
  }

  std::string file_tag() const {
    switch (kind) {
      case Kind::kBaseline: return "baseline";
      case Kind::kLambda: return "lambda-" + format_real(lambda);
      case Kind::kIts: return "its";
    }
    return "unknown";
  }

  bool operator==(const RunLabel&) const = default;
};

struct Prediction {
  std::string example_id;
  std::string raw_output;
  Answer extracted;
  std::string error;  // non-empty when generation failed
};

struct EvalRecord {
  std::string example_id;
  std::optional<double> lambda;  // empty for baseline and ITS
  std::string raw_output;
  Answer extracted;
  bool correct = false;
  std::string error;

  bool operator==(const EvalRecord&) const = default;
};

struct ReportMeta {
  std::string dataset_id;
  std::string source_model_id;
  std::string target_model_id;
  RunLabel label;
  PlanProvenance provenance;
};

struct EvalReport {
  ReportMeta meta;
  double accuracy = 0.0;
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t unparsed = 0;
  std::vector<EvalRecord> records;
};

inline bool answer_matches(const Answer& extracted, const DatasetRecord& record) {
  return extracted && *extracted == normalize_answer(record.answer);
}

// Exact match after normalization. Predictions are matched to records by id;
// the report follows record order.
inline EvalReport score(std::span<const DatasetRecord> records,
                        std::span<const Prediction> predictions, const ReportMeta& meta) {
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.example_id, &p).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate prediction for " + p.example_id);
    }
  }
  if (by_id.size() != records.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "id mismatch: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(records.size()) + " records");
  }
  EvalReport report;
  report.meta = meta;
  std::optional<double> lambda;
  if (meta.label.kind == RunLabel::Kind::kLambda) lambda = meta.label.lambda;
  for (const auto& r : records) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::kInvalidArgument, "id mismatch: no prediction for record " + r.id);
    }
    const auto& p = *it->second;
    EvalRecord rec{r.id, lambda, p.raw_output, p.extracted, answer_matches(p.extracted, r), p.error};
    report.correct += rec.correct ? 1 : 0;
    report.unparsed += rec.extracted ? 0 : 1;
    report.records.push_back(std::move(rec));
  }
  report.total = records.size();
  report.accuracy = report.total == 0 ? 0.0
                                      : static_cast<double>(report.correct) /
                                            static_cast<double>(report.total);
  return report;
}

// Everything needed to turn a model + plan into predictions on one split.
struct EvalTask {
  std::string dataset_id;
  std::vector<DatasetRecord> records;
  SplitSpec split;
  std::string system_prompt;
  PromptStyle style;
};

struct EvalOptions {
  InjectionMode injection = InjectionMode::kCurrentPosition;
  std::size_t workers = 1;
};

inline void check_exemplars_disjoint(const EvalTask& task) {
  std::set<std::string> ids;
  for (const auto& e : task.split.few_shot_exemplars) ids.insert(e.id);
  for (const auto& r : task.records) {
    if (ids.contains(r.id)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "exemplar " + r.id + " also appears in the evaluated split");
    }
  }
}

// The generation utility: one greedy (or seeded) generation per record, with
// failures recorded as NO_ANSWER rather than aborting the run.
inline std::vector<Prediction> generate_predictions(const Model& model, const Tokenizer& tokenizer,
                                                    const EvalTask& task, const SteeringPlan& plan,
                                                    const GenerationParams& params,
                                                    const EvalOptions& options = {}) {
  check_exemplars_disjoint(task);
  params.validate();
  validate_plan(plan, model.spec());
  std::vector<Prediction> out(task.records.size());
  parallel_for(task.records.size(), options.workers, [&](std::size_t i) {
    const auto& r = task.records[i];
    auto& p = out[i];
    p.example_id = r.id;
    try {
      const auto prompt = tokenizer.encode(assemble_prompt(r, task.split, task.system_prompt, task.style));
      GenerationOptions gen;
      gen.injection = options.injection;
      p.raw_output = generate_with_steering(model, tokenizer, prompt, plan, params, gen).text;
      p.extracted = extract_answer(p.raw_output, task.style.format);
    } catch (const Error& e) {
      p.error = std::string(steer::to_string(e.code())) + ": " + e.what();
      p.extracted = std::nullopt;
    }
  });
  return out;
}

inline EvalReport evaluate(const Model& model, const Tokenizer& tokenizer, const EvalTask& task,
                           const SteeringPlan& plan, const GenerationParams& params,
                           const ReportMeta& meta, const EvalOptions& options = {}) {
  const auto predictions = generate_predictions(model, tokenizer, task, plan, params, options);
  auto report = score(task.records, predictions, meta);
  report.meta.provenance = plan.provenance;
  return report;
}

// --- report files -------------------------------------------------------------
//
// Line-delimited JSON: a summary header object first, then one object per
// EvalRecord. NO_ANSWER is stored as null.

inline std::string report_file_name(const ReportMeta& meta) {
  return file_safe(meta.source_model_id) + "__" + file_safe(meta.target_model_id) + "__" +
         file_safe(meta.dataset_id) + "__" + meta.label.file_tag() + ".jsonl";
}

inline nlohmann::json answer_json(const Answer& a) {
  return a ? nlohmann::json(*a) : nlohmann::json(nullptr);
}

inline Answer answer_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::string>();
}

inline nlohmann::json report_header_json(const EvalReport& r) {
  nlohmann::json h;
  h["kind"] = "summary";
  h["dataset_id"] = r.meta.dataset_id;
  h["source_model_id"] = r.meta.source_model_id;
  h["target_model_id"] = r.meta.target_model_id;
  h["label"] = r.meta.label.to_string();
  h["lambda"] = r.meta.label.kind == RunLabel::Kind::kLambda ? nlohmann::json(r.meta.label.lambda)
                                                             : nlohmann::json(nullptr);
  h["accuracy"] = r.accuracy;
  h["total"] = r.total;
  h["correct"] = r.correct;
  h["unparsed"] = r.unparsed;
  h["provenance"] = {{"source_set_id", r.meta.provenance.source_set_id},
                     {"adapter", r.meta.provenance.adapter_kind},
                     {"mapping", r.meta.provenance.mapping_summary}};
  return h;
}

inline nlohmann::json record_json(const EvalRecord& rec) {
  nlohmann::json j;
  j["kind"] = "record";
  j["example_id"] = rec.example_id;
  j["lambda"] = rec.lambda ? nlohmann::json(*rec.lambda) : nlohmann::json(nullptr);
  j["raw_output"] = rec.raw_output;
  j["extracted"] = answer_json(rec.extracted);
  j["correct"] = rec.correct;
  if (!rec.error.empty()) j["error"] = rec.error;
  return j;
}

inline std::string encode_report(const EvalReport& r) {
  std::string out = report_header_json(r).dump() + "\n";
  for (const auto& rec : r.records) out += record_json(rec).dump() + "\n";
  return out;
}

inline void write_report(const EvalReport& r, const std::filesystem::path& path) {
  io::write_file(path, encode_report(r));
}

inline RunLabel parse_run_label(const std::string& label, const nlohmann::json& lambda) {
  if (label == "baseline") return RunLabel::baseline();
  if (label == "ITS") return RunLabel::its();
  if (label.rfind("lambda=", 0) == 0 && lambda.is_number()) return RunLabel::at(lambda.get<double>());
  throw Error(ErrorCode::kParse, "unknown run label '" + label + "'");
}

inline EvalReport read_report(const std::filesystem::path& path) {
  const auto text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  EvalReport r;
  bool have_header = false;
  std::size_t line_no = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (!have_header) {
        if (j.at("kind") != "summary") throw Error(ErrorCode::kParse, "missing summary header");
        r.meta.dataset_id = j.at("dataset_id");
        r.meta.source_model_id = j.at("source_model_id");
        r.meta.target_model_id = j.at("target_model_id");
        r.meta.label = parse_run_label(j.at("label"), j.at("lambda"));
        r.meta.provenance = {j.at("provenance").at("source_set_id"),
                             j.at("provenance").at("adapter"), j.at("provenance").at("mapping")};
        r.accuracy = j.at("accuracy");
        r.total = j.at("total");
        r.correct = j.at("correct");
        r.unparsed = j.at("unparsed");
        have_header = true;
        continue;
      }
      EvalRecord rec;
      rec.example_id = j.at("example_id");
      if (!j.at("lambda").is_null()) rec.lambda = j.at("lambda").get<double>();
      rec.raw_output = j.at("raw_output");
      rec.extracted = answer_from_json(j.at("extracted"));
      rec.correct = j.at("correct");
      rec.error = j.value("error", "");
      r.records.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  }
  if (!have_header) throw Error(ErrorCode::kParse, path.string() + ": empty report");
  return r;
}

}  // namespace steer
