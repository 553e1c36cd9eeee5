#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "steer/binary_io.hpp"
#include "steer/error.hpp"
#include "steer/harness.hpp"
#include "steer/model.hpp"
#include "steer/rng.hpp"
#include "steer/tokenizer.hpp"
#include "steer/transfer.hpp"

namespace steer::toy {

// Gaussian weights scaled by 1/sqrt(fan_in), unit norm gains.
inline Model random_model(ModelSpec spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  auto fill = [&](std::vector<float>& v, double stddev) {
    for (auto& x : v) x = static_cast<float>(rng.normal(0.0, stddev));
  };
  auto w = ModelWeights::zeros(spec);
  const double d = static_cast<double>(spec.hidden_dim);
  fill(w.token_embedding, 1.0);
  for (auto& L : w.layers) {
    fill(L.wq, 1.0 / std::sqrt(d));
    fill(L.wk, 1.0 / std::sqrt(d));
    fill(L.wv, 1.0 / std::sqrt(d));
    fill(L.wo, 1.0 / std::sqrt(d));
    fill(L.w_up, 1.0 / std::sqrt(d));
    fill(L.w_down, 1.0 / std::sqrt(static_cast<double>(spec.ffn_dim)));
  }
  fill(w.lm_head, 2.0 / std::sqrt(d));
  return Model(std::move(spec), std::move(w));
}

// {"spec": {...}, "weights": {...}}; weight blocks that are omitted keep the
// ModelWeights::zeros defaults (zero matrices, unit gains).
inline Model model_from_json(const nlohmann::json& j) {
  try {
    ModelSpec spec;
    const auto& s = j.at("spec");
    spec.model_id = s.value("model_id", "toy");
    spec.num_layers = s.at("num_layers");
    spec.hidden_dim = s.at("hidden_dim");
    spec.num_heads = s.value("num_heads", std::size_t{1});
    spec.head_dim = s.value("head_dim", spec.hidden_dim / std::max<std::size_t>(spec.num_heads, 1));
    spec.vocab_size = s.value("vocab_size", ByteTokenizer::kVocabSize);
    spec.max_context = s.value("max_context", std::size_t{64});
    spec.ffn_dim = s.value("ffn_dim", 4 * spec.hidden_dim);
    spec.norm_epsilon = s.value("norm_epsilon", 1e-5f);
    spec.validate();
    auto w = ModelWeights::zeros(spec);
    if (j.contains("weights")) {
      const auto& wj = j.at("weights");
      auto take = [](const nlohmann::json& obj, const char* key, std::vector<float>& dst) {
        if (obj.contains(key)) dst = obj.at(key).get<std::vector<float>>();
      };
      take(wj, "token_embedding", w.token_embedding);
      take(wj, "final_norm", w.final_norm);
      take(wj, "lm_head", w.lm_head);
      if (wj.contains("layers")) {
        const auto& layers = wj.at("layers");
        if (layers.size() != spec.num_layers) {
          throw Error(ErrorCode::kDimensionMismatch, "weights.layers count != num_layers");
        }
        for (std::size_t l = 0; l < spec.num_layers; ++l) {
          auto& L = w.layers[l];
          const auto& lj = layers[l];
          take(lj, "attn_norm", L.attn_norm);
          take(lj, "wq", L.wq);
          take(lj, "wk", L.wk);
          take(lj, "wv", L.wv);
          take(lj, "wo", L.wo);
          take(lj, "ffn_norm", L.ffn_norm);
          take(lj, "w_up", L.w_up);
          take(lj, "w_down", L.w_down);
        }
      }
    }
    return Model(std::move(spec), std::move(w));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("hand-specified model: ") + e.what());
  }
}

// --- planted-concept task -------------------------------------------------------
//
// Two models sharing one concept direction c. Every question ("q:NNNN=") has
// gold answer "Y". The target emits the chain "\boxed{" and then picks Y or N
// by the sign of the residual's c-component at the "{" position; a
// question-dependent term from layer-0 attention makes the unsteered answer
// vary. In the source, the answer token "Y" differs from "=" by exactly c, so
// contrastive differences (question + solution vs question) point along c.

struct PlantedTaskConfig {
  std::size_t hidden_dim = 32;
  std::size_t num_heads = 4;
  std::size_t source_layers = 6;
  std::size_t target_layers = 4;
  std::size_t max_context = 64;
  std::size_t ffn_dim = 64;
  std::uint64_t seed = 7;
  std::size_t train_size = 32;
  std::size_t val_size = 40;
  std::size_t test_size = 60;
  // Negative bias on c at "{" and the gain of the question-dependent term.
  double bias = 0.05;
  double payload_gain = 1.0;
};

struct PlantedTask {
  Model source;
  Model target;
  std::vector<float> concept_direction;
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> val;
  std::vector<DatasetRecord> test;
  PromptStyle style;
  GenerationParams params;
};

namespace detail {

inline constexpr std::string_view kChain = "=\\boxed{";

inline std::vector<std::vector<double>> orthonormal_frame(std::size_t d, std::uint64_t seed,
                                                          const std::vector<double>* first = nullptr) {
  const auto m = projection_matrix(DimensionAdapter::projection(d, d, seed));
  std::vector<std::vector<double>> rows(d, std::vector<double>(d));
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) rows[r][c] = m[r * d + c];
  }
  if (first != nullptr) {
    // Re-orthonormalise with `first` in front.
    rows.insert(rows.begin(), *first);
    rows.pop_back();
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < a; ++b) {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += rows[a][k] * rows[b][k];
        for (std::size_t k = 0; k < d; ++k) rows[a][k] -= dot * rows[b][k];
      }
      double n = 0.0;
      for (double x : rows[a]) n += x * x;
      n = std::sqrt(n);
      for (double& x : rows[a]) x /= n;
    }
  }
  return rows;
}

inline std::vector<DatasetRecord> planted_records(const std::string& split, std::size_t n,
                                                  Rng& rng) {
  std::vector<DatasetRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string q = "q:";
    for (int k = 0; k < 4; ++k) q.push_back(static_cast<char>('0' + rng.below(10)));
    q.push_back('=');
    char id[32];
    std::snprintf(id, sizeof(id), "toy-%s-%04zu", split.c_str(), i);
    out.push_back({id, q, std::string("yes"), "Y"});
  }
  return out;
}

}  // namespace detail

inline PlantedTask planted_task(const PlantedTaskConfig& cfg = {}) {
  const std::size_t d = cfg.hidden_dim;
  if (d < 24) throw Error(ErrorCode::kInvalidArgument, "planted task needs hidden_dim >= 24");
  if (d % cfg.num_heads != 0) throw Error(ErrorCode::kInvalidArgument, "heads must divide width");
  Rng rng(cfg.seed);

  const auto frame = detail::orthonormal_frame(d, cfg.seed ^ 0x9e3779b97f4a7c15ull);
  const auto& concept_dir = frame[0];
  const auto& answer_slot = frame[1];
  const auto& payload = frame[2];
  // Code directions for chain tokens: '=', '\', 'b', 'o', 'x', 'e', 'd', {Y,N}, '}'.
  auto code = [&](std::size_t k) -> const std::vector<double>& { return frame[3 + k]; };
  const std::size_t noise_begin = 12;

  auto add = [](std::vector<float>& dst, std::size_t row, std::size_t width,
                const std::vector<double>& dir, double scale) {
    for (std::size_t i = 0; i < width; ++i) dst[row * width + i] += static_cast<float>(scale * dir[i]);
  };
  auto small = [&](std::vector<float>& v, double stddev) {
    for (auto& x : v) x = static_cast<float>(rng.normal(0.0, stddev));
  };

  // Target.
  ModelSpec ts;
  ts.model_id = "toy-target-" + std::to_string(cfg.target_layers) + "L";
  ts.num_layers = cfg.target_layers;
  ts.hidden_dim = d;
  ts.num_heads = cfg.num_heads;
  ts.head_dim = d / cfg.num_heads;
  ts.vocab_size = ByteTokenizer::kVocabSize;
  ts.max_context = cfg.max_context;
  ts.ffn_dim = cfg.ffn_dim;
  auto tw = ModelWeights::zeros(ts);
  for (std::size_t t = 0; t < ts.vocab_size; ++t) {
    for (std::size_t k = noise_begin; k < d; ++k) add(tw.token_embedding, t, d, frame[k], rng.normal(0.0, 0.12));
  }
  const double amp = 6.0;
  const double margin = 1.0;
  auto chain_step = [&](unsigned char from, TokenId to, std::size_t k) {
    add(tw.token_embedding, from, d, code(k), 1.0);
    add(tw.lm_head, to, d, code(k), amp);
  };
  for (std::size_t k = 0; k + 1 < detail::kChain.size(); ++k) {
    chain_step(static_cast<unsigned char>(detail::kChain[k]),
               static_cast<unsigned char>(detail::kChain[k + 1]), k);
  }
  add(tw.token_embedding, '{', d, answer_slot, 1.0);
  add(tw.token_embedding, '{', d, concept_dir, -cfg.bias);
  add(tw.lm_head, 'Y', d, answer_slot, amp);
  add(tw.lm_head, 'Y', d, concept_dir, margin);
  add(tw.lm_head, 'N', d, answer_slot, amp);
  add(tw.lm_head, 'N', d, concept_dir, -margin);
  add(tw.token_embedding, 'Y', d, code(7), 1.0);
  add(tw.token_embedding, 'N', d, code(7), 1.0);
  add(tw.lm_head, '}', d, code(7), amp);
  add(tw.token_embedding, '}', d, code(8), 1.0);
  add(tw.lm_head, ByteTokenizer::kEos, d, code(8), amp);
  // Digit payloads are standardised so the unsteered answer rate depends on
  // `bias` rather than on the draw.
  std::array<double, 10> digit_payload{};
  for (auto& v : digit_payload) v = rng.normal();
  {
    double mean = 0.0, sq = 0.0;
    for (double v : digit_payload) mean += v / 10.0;
    for (double v : digit_payload) sq += (v - mean) * (v - mean) / 10.0;
    for (auto& v : digit_payload) v = (v - mean) / std::sqrt(sq);
  }
  for (int k = 0; k < 10; ++k) {
    add(tw.token_embedding, static_cast<unsigned char>('0' + k), d, payload, digit_payload[k]);
  }
  // Layer 0: uniform attention (zero queries/keys) copying the mean payload
  // onto the concept direction.
  {
    auto& L0 = tw.layers[0];
    for (std::size_t i = 0; i < d; ++i) {
      L0.wv[0 * d + i] = static_cast<float>(payload[i]);
      L0.wo[i * d + 0] = static_cast<float>(cfg.payload_gain * concept_dir[i]);
    }
  }
  for (std::size_t l = 1; l < ts.num_layers; ++l) {
    auto& L = tw.layers[l];
    small(L.wq, 0.02);
    small(L.wk, 0.02);
    small(L.wv, 0.02);
    small(L.wo, 0.02);
    small(L.w_up, 0.05);
    small(L.w_down, 0.01);
  }

  // Source: its own random frame except for the shared concept direction.
  ModelSpec ss = ts;
  ss.model_id = "toy-source-" + std::to_string(cfg.source_layers) + "L";
  ss.num_layers = cfg.source_layers;
  auto sw = ModelWeights::zeros(ss);
  small(sw.token_embedding, 0.5 / std::sqrt(static_cast<double>(d)));
  for (std::size_t i = 0; i < d; ++i) {
    sw.token_embedding['Y' * d + i] =
        sw.token_embedding['=' * d + i] + static_cast<float>(concept_dir[i]);
  }
  for (auto& L : sw.layers) {
    small(L.wq, 0.02);
    small(L.wk, 0.02);
    small(L.wv, 0.02);
    small(L.wo, 0.02);
    small(L.w_up, 0.05);
    small(L.w_down, 0.01);
  }
  small(sw.lm_head, 0.1);

  PlantedTask task{Model(ss, std::move(sw)), Model(ts, std::move(tw)), {}, {}, {}, {}, {}, {}};
  task.concept_direction.assign(concept_dir.begin(), concept_dir.end());
  Rng data_rng(cfg.seed + 1);
  task.train = detail::planted_records("train", cfg.train_size, data_rng);
  task.val = detail::planted_records("val", cfg.val_size, data_rng);
  task.test = detail::planted_records("test", cfg.test_size, data_rng);
  task.style.question_prefix = "";
  task.style.answer_prefix = "";
  task.style.format = AnswerFormat::kBoxed;
  task.params.max_new_tokens = 12;
  return task;
}

inline void write_records(const std::vector<DatasetRecord>& records,
                          const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id}, {"question", r.question}, {"answer", r.answer}};
    if (r.reasoning) j["reasoning"] = *r.reasoning;
    out += j.dump() + "\n";
  }
  io::write_file(path, out);
}

}  // namespace steer::toy
