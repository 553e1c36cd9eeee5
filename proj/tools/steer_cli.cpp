// steer: command-line front end for extraction, transfer, tuning, ITS
// evaluation and alignment analysis.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "steer/steer.hpp"

namespace fs = std::filesystem;
using namespace steer;

namespace {

// Usage problems found after CLI11 parsing (exit code 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string out = "out";
  std::uint64_t seed = 7;
  std::size_t workers = 1;

  std::string source;
  std::string target;
  std::string train;
  std::string val;
  std::string test;
  std::string dataset_id;
  std::string steering;
  std::string pair_template;

  std::string adapter;
  std::optional<std::uint64_t> adapter_seed;
  std::string grid;
  std::string injection = "current";
  bool centered = false;

  std::size_t max_new_tokens = 16;
  double temperature = 0.0;
  std::size_t few_shot = 0;
  std::string exemplars;
  std::string format = "final_line";
  std::string system_prompt = "none";
  std::string system_prompt_file;
  std::string question_prefix = "Question: ";
  std::string answer_prefix = "Answer:";
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing --") + what);
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " path not found: " + path);
}

std::string dataset_id_of(const RunConfig& c, const std::string& path) {
  if (!c.dataset_id.empty()) return c.dataset_id;
  auto stem = fs::path(path).stem().string();
  for (const char* suffix : {"_train", "_val", "_test", "-train", "-val", "-test"}) {
    const std::string s(suffix);
    if (stem.size() > s.size() && stem.ends_with(s)) return stem.substr(0, stem.size() - s.size());
  }
  return stem;
}

InjectionMode parse_injection(const std::string& s) {
  if (s == "current") return InjectionMode::kCurrentPosition;
  if (s == "prompt_last") return InjectionMode::kPromptLastToken;
  if (s == "all") return InjectionMode::kAllPositions;
  throw UsageError("unknown injection mode '" + s + "' (current, prompt_last, all)");
}

std::optional<DimensionAdapter> adapter_of(const RunConfig& c, std::size_t source_dim,
                                           std::size_t target_dim) {
  if (c.adapter.empty()) return std::nullopt;
  DimensionAdapter a;
  try {
    a.kind = parse_adapter_kind(c.adapter);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  a.seed = c.adapter_seed.value_or(c.seed);
  a.source_dim = source_dim;
  a.target_dim = target_dim;
  return a;
}

GenerationParams params_of(const RunConfig& c) {
  GenerationParams p;
  p.max_new_tokens = c.max_new_tokens;
  p.temperature = c.temperature;
  p.seed = c.seed;
  return p;
}

LambdaGrid grid_of(const RunConfig& c) {
  if (c.grid.empty()) return default_grid();
  try {
    return parse_grid(c.grid);
  } catch (const Error& e) {
    throw UsageError(std::string("--grid: ") + e.what());
  }
}

std::string system_prompt_of(const RunConfig& c) {
  if (!c.system_prompt_file.empty()) return io::read_file(c.system_prompt_file);
  try {
    return std::string(prompts::by_name(c.system_prompt));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

EvalTask task_of(const RunConfig& c, const std::string& split_path) {
  EvalTask task;
  task.dataset_id = dataset_id_of(c, split_path);
  if (c.few_shot > 0) {
    const auto pool = load_records(c.exemplars.empty() ? c.train : c.exemplars);
    task.split.few_shot_exemplars = sample_exemplars(pool, c.few_shot, c.seed);
  }
  task.split.seed = c.seed;
  task.records = load_split(split_path, task.split);
  task.system_prompt = system_prompt_of(c);
  task.style.question_prefix = c.question_prefix;
  task.style.answer_prefix = c.answer_prefix;
  try {
    task.style.format = parse_answer_format(c.format);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return task;
}

SweepOptions sweep_options_of(const RunConfig& c) {
  SweepOptions o;
  o.eval.injection = parse_injection(c.injection);
  o.eval.workers = c.workers;
  return o;
}

void print_curve(const SweepResult& r) {
  if (r.baseline) std::cout << "baseline accuracy " << format_real(r.baseline->accuracy) << "\n";
  for (const auto& p : r.points) {
    std::cout << "lambda " << format_real(p.lambda) << " accuracy " << format_real(p.metric) << "\n";
  }
  std::cout << "lambda_best " << format_real(r.lambda_best) << "\n";
}

// --- subcommands ------------------------------------------------------------

struct InitToyArgs {
  std::string kind = "planted";
  std::string weights_json;
  std::string model_id = "toy-random";
  std::size_t layers = 4;
  std::size_t hidden = 32;
  std::size_t heads = 4;
  std::size_t ffn = 64;
  std::size_t context = 64;
};

int cmd_init_toy(const RunConfig& c, const InitToyArgs& a) {
  const fs::path out(c.out);
  if (a.kind == "random") {
    ModelSpec spec;
    spec.model_id = a.model_id;
    spec.num_layers = a.layers;
    spec.hidden_dim = a.hidden;
    spec.num_heads = a.heads;
    spec.head_dim = a.heads == 0 ? 0 : a.hidden / a.heads;
    spec.max_context = a.context;
    spec.ffn_dim = a.ffn;
    const auto path = out / (file_safe(a.model_id) + ".sfwt");
    save_model(toy::random_model(spec, c.seed), path);
    std::cout << path.string() << "\n";
    return 0;
  }
  if (a.kind == "json") {
    require_file(a.weights_json, "weights-json");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(io::read_file(a.weights_json));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, a.weights_json + ": " + e.what());
    }
    const auto model = toy::model_from_json(j);
    const auto path = out / (file_safe(model.spec().model_id) + ".sfwt");
    save_model(model, path);
    std::cout << path.string() << "\n";
    return 0;
  }
  if (a.kind != "planted") throw UsageError("unknown --kind '" + a.kind + "' (planted, random, json)");

  toy::PlantedTaskConfig cfg;
  cfg.seed = c.seed;
  const auto task = toy::planted_task(cfg);
  const auto abs = fs::absolute(out);
  save_model(task.source, abs / "source.sfwt");
  save_model(task.target, abs / "target.sfwt");
  toy::write_records(task.train, abs / "data" / "toy_train.jsonl");
  toy::write_records(task.val, abs / "data" / "toy_val.jsonl");
  toy::write_records(task.test, abs / "data" / "toy_test.jsonl");
  std::string ini;
  ini += "# planted-concept toy task (seed " + std::to_string(c.seed) + ")\n";
  ini += "source = \"" + (abs / "source.sfwt").string() + "\"\n";
  ini += "target = \"" + (abs / "target.sfwt").string() + "\"\n";
  ini += "train = \"" + (abs / "data" / "toy_train.jsonl").string() + "\"\n";
  ini += "val = \"" + (abs / "data" / "toy_val.jsonl").string() + "\"\n";
  ini += "test = \"" + (abs / "data" / "toy_test.jsonl").string() + "\"\n";
  ini += "dataset-id = \"toy\"\n";
  ini += "format = \"boxed\"\n";
  ini += "question-prefix = \"\"\n";
  ini += "answer-prefix = \"\"\n";
  ini += "system-prompt = \"none\"\n";
  ini += "max-new-tokens = " + std::to_string(task.params.max_new_tokens) + "\n";
  io::write_file(abs / "toy.ini", ini);
  std::cout << (abs / "toy.ini").string() << "\n";
  return 0;
}

int cmd_extract(const RunConfig& c) {
  require_file(c.source, "source");
  require_file(c.train, "train");
  if (!c.pair_template.empty()) require_file(c.pair_template, "pair-template");

  const auto model = load_model(c.source);
  const ByteTokenizer tokenizer;
  const auto records = load_records(c.train);
  const auto tmpl = c.pair_template.empty() ? PairTemplate{} : load_pair_template(c.pair_template);
  const auto pairs = build_contrastive_pairs(records, tmpl);
  ExtractionOptions opts;
  opts.centered = c.centered;
  opts.dataset_id = dataset_id_of(c, c.train);
  opts.workers = c.workers;
  const auto set = extract_steering_set(model, tokenizer, pairs, opts);
  const auto path = fs::path(c.out) / "steering" /
                    (file_safe(set.source_model_id) + "__" + file_safe(set.dataset_id) + ".svec");
  write_steering_set(set, path);
  for (std::size_t l = 0; l < set.num_layers; ++l) {
    std::cout << "layer " << l << " explained_variance " << format_real(set.explained_variance[l])
              << " pairs " << set.pairs_used[l] << "\n";
  }
  std::cout << path.string() << "\n";
  return 0;
}

int cmd_tune(const RunConfig& c) {
  require_file(c.target, "target");
  require_file(c.steering, "steering");
  require_file(c.val, "val");
  const auto grid = grid_of(c);
  const auto options = sweep_options_of(c);

  const auto target = load_model(c.target);
  const auto set = read_steering_set(c.steering);
  const ByteTokenizer tokenizer;
  const auto task = task_of(c, c.val);
  const auto adapter = adapter_of(c, set.hidden_dim, target.spec().hidden_dim);
  const auto result = sweep(target, tokenizer, set, adapter, task, grid, params_of(c), options);
  const auto summary = write_sweep(result, fs::path(c.out) / "tune");
  print_curve(result);
  std::cout << summary.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::optional<double> lambda;
  bool with_its = false;
  std::string lambda_from_summary;
};

int cmd_eval(const RunConfig& c, const EvalArgs& a) {
  const int modes = (a.lambda ? 1 : 0) + (a.with_its ? 1 : 0) + (a.lambda_from_summary.empty() ? 0 : 1);
  if (modes != 1) {
    throw UsageError("eval needs exactly one of --lambda, --lambda-from-summary, --with-its");
  }
  require_file(c.target, "target");
  require_file(c.steering, "steering");
  require_file(c.test, "test");
  if (!a.lambda_from_summary.empty()) require_file(a.lambda_from_summary, "lambda-from-summary");
  const auto options = sweep_options_of(c);
  const auto grid = a.with_its ? grid_of(c) : LambdaGrid{};

  const auto target = load_model(c.target);
  const auto set = read_steering_set(c.steering);
  const ByteTokenizer tokenizer;
  const auto task = task_of(c, c.test);
  const auto adapter = adapter_of(c, set.hidden_dim, target.spec().hidden_dim);
  const auto params = params_of(c);
  const fs::path dir = fs::path(c.out) / "eval";

  if (a.with_its) {
    const auto r = run_with_its(target, tokenizer, set, adapter, task, grid, params, options);
    write_its(r, dir);
    print_curve(r.per_lambda);
    std::cout << "ITS accuracy " << format_real(r.aggregated.accuracy) << "\n";
    return 0;
  }
  const double lambda = a.lambda ? *a.lambda : read_sweep_summary(a.lambda_from_summary).lambda_best;
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw UsageError("--lambda must be finite and >= 0");
  const auto plan = build_plan(set, target.spec(), lambda, adapter);
  const auto baseline = evaluate(target, tokenizer, task, SteeringPlan{}, params,
                                 sweep_meta(set, target, task, RunLabel::baseline()), options.eval);
  const auto steered = evaluate(target, tokenizer, task, plan, params,
                                sweep_meta(set, target, task, RunLabel::at(lambda)), options.eval);
  write_report(baseline, dir / report_file_name(baseline.meta));
  write_report(steered, dir / report_file_name(steered.meta));
  std::cout << "baseline accuracy " << format_real(baseline.accuracy) << "\n";
  std::cout << "lambda " << format_real(lambda) << " accuracy " << format_real(steered.accuracy) << "\n";
  return 0;
}

struct AnalyzeArgs {
  std::string a;
  std::string b;
  std::string measure = "cosine";
};

int cmd_analyze(const RunConfig& c, const AnalyzeArgs& args) {
  require_file(args.a, "a");
  const std::string b_path = args.b.empty() ? args.a : args.b;
  require_file(b_path, "b");
  AlignmentMeasure measure;
  try {
    measure = parse_measure(args.measure);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto a = read_steering_set(args.a);
  const auto b = read_steering_set(b_path);
  const auto m = alignment_matrix(a, b, measure, adapter_of(c, b.hidden_dim, a.hidden_dim));
  const auto path = fs::path(c.out) / "analysis" /
                    (file_safe(a.id()) + "__" + file_safe(b.id()) + "__" + to_string(measure) + ".csv");
  export_heatmap_data(m, path);
  std::cout << encode_heatmap_csv(m);
  try {
    std::cout << "explained_variance_correlation "
              << format_real(explained_variance_correlation(a, b)) << "\n";
  } catch (const Error& e) {
    std::cout << "explained_variance_correlation n/a (" << e.what() << ")\n";
  }
  if (m.adapted) std::cout << "note: columns adapted with " << c.adapter << "\n";
  std::cout << path.string() << "\n";
  return 0;
}

struct PlotArgs {
  std::vector<std::string> inputs;
  std::string kind = "auto";
  std::string title;
};

int cmd_plot(const RunConfig& c, const PlotArgs& args) {
  if (args.inputs.empty()) throw UsageError("plot needs at least one --input");
  for (const auto& p : args.inputs) require_file(p, "input");
  std::string kind = args.kind;
  const fs::path first(args.inputs.front());
  if (kind == "auto") {
    const auto ext = first.extension().string();
    kind = ext == ".csv" ? "heatmap" : ext == ".json" ? "curve" : ext == ".jsonl" ? "bars" : "";
    if (kind.empty()) throw UsageError("cannot infer plot kind from " + first.string());
  }
  std::string svg;
  if (kind == "curve") {
    svg = plot::lambda_curve_svg(read_sweep_summary(first),
                                 args.title.empty() ? "accuracy vs lambda" : args.title);
  } else if (kind == "heatmap") {
    auto m = import_heatmap_data(first);
    svg = plot::heatmap_svg(m, args.title.empty() ? first.stem().string() : args.title);
  } else if (kind == "bars") {
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& p : args.inputs) {
      const auto r = read_report(p);
      bars.emplace_back(r.meta.label.to_string(), r.accuracy);
    }
    svg = plot::bar_chart_svg(bars, args.title.empty() ? "accuracy" : args.title);
  } else {
    throw UsageError("unknown plot kind '" + kind + "' (auto, curve, heatmap, bars)");
  }
  const auto path = fs::path(c.out) / "plots" / (first.stem().string() + "__" + kind + ".svg");
  io::write_file(path, svg);
  std::cout << path.string() << "\n";
  return 0;
}

bool seed_from_command_line(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg(argv[i]);
    if (arg == "--seed" || arg.starts_with("--seed=")) return true;
  }
  return false;
}

void emit_error(const std::string& code, const std::string& message, int exit_code) {
  nlohmann::json j{{"error", {{"code", code}, {"message", message}, {"exit", exit_code}}}};
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Steering-vector extraction, transfer and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Key-value config file (INI/TOML); flags win over it");

  RunConfig c;
  app.add_option("--out", c.out, "Output directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", c.seed, "Global seed (env STEER_SEED)")->capture_default_str();
  app.add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--source", c.source, "Source model (.sfwt)");
  app.add_option("--target", c.target, "Target model (.sfwt)");
  app.add_option("--train", c.train, "Training split (JSONL)");
  app.add_option("--val", c.val, "Validation split (JSONL)");
  app.add_option("--test", c.test, "Test split (JSONL)");
  app.add_option("--dataset-id", c.dataset_id, "Dataset id (default: split file stem)");
  app.add_option("--steering", c.steering, "Steering-vector file (.svec)");
  app.add_option("--pair-template", c.pair_template, "Contrastive pair template (JSON)");
  app.add_option("--adapter", c.adapter, "identity | truncate_or_pad | seeded_projection");
  app.add_option("--adapter-seed", c.adapter_seed, "Projection seed (default: --seed)");
  app.add_option("--grid", c.grid, "Comma-separated lambda grid override");
  app.add_option("--injection", c.injection, "current | prompt_last | all")->capture_default_str();
  app.add_flag("--centered", c.centered, "Mean-centre differences before PCA");
  app.add_option("--max-new-tokens", c.max_new_tokens)->capture_default_str();
  app.add_option("--temperature", c.temperature, "0 = greedy")->capture_default_str();
  app.add_option("--few-shot", c.few_shot, "Few-shot exemplar count")->capture_default_str();
  app.add_option("--exemplars", c.exemplars, "Exemplar pool (default: --train)");
  app.add_option("--format", c.format, "boxed | final_line")->capture_default_str();
  app.add_option("--system-prompt", c.system_prompt, "math | gsm8k | arc-c | none")->capture_default_str();
  app.add_option("--system-prompt-file", c.system_prompt_file);
  app.add_option("--question-prefix", c.question_prefix)->capture_default_str();
  app.add_option("--answer-prefix", c.answer_prefix)->capture_default_str();

  InitToyArgs toy_args;
  auto* init = app.add_subcommand("init-toy", "Write toy models (planted task, random or from JSON)");
  init->add_option("--kind", toy_args.kind, "planted | random | json")->capture_default_str();
  init->add_option("--weights-json", toy_args.weights_json, "Hand-specified model (kind=json)");
  init->add_option("--model-id", toy_args.model_id)->capture_default_str();
  init->add_option("--layers", toy_args.layers)->capture_default_str();
  init->add_option("--hidden", toy_args.hidden)->capture_default_str();
  init->add_option("--heads", toy_args.heads)->capture_default_str();
  init->add_option("--ffn", toy_args.ffn)->capture_default_str();
  init->add_option("--context", toy_args.context)->capture_default_str();

  auto* extract = app.add_subcommand("extract", "Extract per-layer steering vectors from --source");
  auto* tune = app.add_subcommand("tune", "Sweep the lambda grid on --val");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate on --test (baseline always included)");
  eval->add_option("--lambda", eval_args.lambda, "Single steering strength");
  eval->add_option("--lambda-from-summary", eval_args.lambda_from_summary, "Use lambda_best from a sweep summary");
  eval->add_flag("--with-its", eval_args.with_its, "Run the full grid and aggregate answers by mode");

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Layerwise alignment between two steering sets");
  analyze->add_option("--a", analyze_args.a, "Row steering set")->required();
  analyze->add_option("--b", analyze_args.b, "Column steering set (default: --a)");
  analyze->add_option("--measure", analyze_args.measure, "cosine | pearson")->capture_default_str();

  PlotArgs plot_args;
  auto* plot_cmd = app.add_subcommand("plot", "Render a sweep summary, reports or a matrix to SVG");
  plot_cmd->add_option("--input", plot_args.inputs, "Input file(s)")->required();
  plot_cmd->add_option("--kind", plot_args.kind, "auto | curve | heatmap | bars")->capture_default_str();
  plot_cmd->add_option("--title", plot_args.title);

  try {
    app.parse(argc, argv);
    // Precedence: --seed, then STEER_SEED, then the config file.
    if (const char* env = std::getenv("STEER_SEED"); env != nullptr && !seed_from_command_line(argc, argv)) {
      seed_opt->clear();
      seed_opt->add_result(env);
      seed_opt->run_callback();
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what(), 2);
    return 2;
  }

  try {
    if (*init) return cmd_init_toy(c, toy_args);
    if (*extract) return cmd_extract(c);
    if (*tune) return cmd_tune(c);
    if (*eval) return cmd_eval(c, eval_args);
    if (*analyze) return cmd_analyze(c, analyze_args);
    if (*plot_cmd) return cmd_plot(c, plot_args);
  } catch (const UsageError& e) {
    emit_error("usage", e.what(), 2);
    return 2;
  } catch (const Error& e) {
    const int code = e.code() == ErrorCode::kConfig ? 2 : 1;
    emit_error(std::string(to_string(e.code())), e.what(), code);
    return code;
  } catch (const std::exception& e) {
    emit_error("internal", e.what(), 1);
    return 1;
  }
  return 2;
}
