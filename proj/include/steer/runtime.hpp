#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "steer/error.hpp"
#include "steer/model.hpp"
#include "steer/rng.hpp"
#include "steer/steering_plan.hpp"
#include "steer/tokenizer.hpp"

namespace steer {

// Last-position residual-stream output of every block, captured after any
// steering has been added.
struct ActivationTrace {
  std::vector<std::vector<float>> layer_states;
  std::size_t position = 0;

  std::size_t num_layers() const { return layer_states.size(); }

  void validate(const ModelSpec& spec) const {
    if (layer_states.size() != spec.num_layers) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "trace has " + std::to_string(layer_states.size()) + " layers, model has " +
                      std::to_string(spec.num_layers));
    }
    for (std::size_t l = 0; l < layer_states.size(); ++l) {
      if (layer_states[l].size() != spec.hidden_dim) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "trace layer " + std::to_string(l) + " has width " +
                        std::to_string(layer_states[l].size()));
      }
      for (float v : layer_states[l]) {
        if (!std::isfinite(v)) {
          throw Error(ErrorCode::kDegenerate,
                      "trace layer " + std::to_string(l) + " has a non-finite entry");
        }
      }
    }
  }

  bool operator==(const ActivationTrace&) const = default;
};

struct GenerationParams {
  std::size_t max_new_tokens = 16;
  double temperature = 0.0;  // 0 = greedy
  std::uint64_t seed = 0;
  std::vector<std::string> stop_sequences;

  void validate() const {
    if (max_new_tokens < 1) {
      throw Error(ErrorCode::kInvalidArgument, "max_new_tokens must be >= 1");
    }
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
      throw Error(ErrorCode::kInvalidArgument, "temperature must be finite and >= 0");
    }
  }
};

// Which positions receive the plan's vectors.
enum class InjectionMode {
  kCurrentPosition,  // last prompt token, then every generated token
  kPromptLastToken,  // last prompt token only
  kAllPositions,     // every prompt token and every generated token
};

inline void validate_plan(const SteeringPlan& plan, const ModelSpec& spec) {
  if (plan.layer_vectors.size() > spec.num_layers) {
    throw Error(ErrorCode::kLayerOutOfRange,
                "plan addresses layer " + std::to_string(plan.layer_vectors.size() - 1) +
                    " but the model has " + std::to_string(spec.num_layers) + " layers");
  }
  for (std::size_t l = 0; l < plan.layer_vectors.size(); ++l) {
    const auto& v = plan.layer_vectors[l];
    if (!v.empty() && v.size() != spec.hidden_dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "plan vector for layer " + std::to_string(l) + " has length " +
                      std::to_string(v.size()) + ", model hidden_dim is " +
                      std::to_string(spec.hidden_dim));
    }
  }
}

namespace detail {

// out[r] = sum_c m[r, c] * x[c]; m is row-major [rows x cols].
inline void matvec(std::span<const float> m, std::span<const float> x, std::span<float> out) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    const float* row = m.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += static_cast<double>(row[c]) * x[c];
    out[r] = static_cast<float>(acc);
  }
}

inline void rms_norm(std::span<const float> x, std::span<const float> gain, float eps,
                     std::span<float> out) {
  double ss = 0.0;
  for (float v : x) ss += static_cast<double>(v) * v;
  const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<float>(x[i] * inv * gain[i]);
  }
}

// Rotates consecutive pairs of each head by position-dependent angles.
inline void apply_rope(std::span<float> v, std::size_t num_heads, std::size_t head_dim,
                       std::size_t pos) {
  for (std::size_t h = 0; h < num_heads; ++h) {
    float* head = v.data() + h * head_dim;
    for (std::size_t i = 0; i + 1 < head_dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / head_dim);
      const double angle = static_cast<double>(pos) * freq;
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      const double a = head[i];
      const double b = head[i + 1];
      head[i] = static_cast<float>(a * c - b * s);
      head[i + 1] = static_cast<float>(a * s + b * c);
    }
  }
}

inline float silu(float x) { return static_cast<float>(x / (1.0 + std::exp(-static_cast<double>(x)))); }

}  // namespace detail

// Mutable decode state (KV cache) over a shared immutable Model. Single
// threaded; run independent sessions for parallel work.
class Session {
 public:
  explicit Session(Model model) : model_(std::move(model)) {
    const auto& s = model_.spec();
    k_cache_.assign(s.num_layers, std::vector<float>(s.max_context * s.hidden_dim));
    v_cache_.assign(s.num_layers, std::vector<float>(s.max_context * s.hidden_dim));
    x_.resize(s.hidden_dim);
    norm_.resize(s.hidden_dim);
    q_.resize(s.hidden_dim);
    attn_.resize(s.hidden_dim);
    proj_.resize(s.hidden_dim);
    up_.resize(s.ffn_dim);
    scores_.resize(s.max_context);
  }

  const Model& model() const { return model_; }
  std::size_t position() const { return pos_; }

  // Feeds one token at the next position and returns the logits there.
  // `steer` (if non-null) is added to each block's output; `capture` (if
  // non-null) receives the post-steering per-layer states.
  std::vector<float> step(TokenId token, const SteeringPlan* steer = nullptr,
                          ActivationTrace* capture = nullptr) {
    const auto& s = model_.spec();
    const auto& w = model_.weights();
    const std::size_t d = s.hidden_dim;
    if (pos_ >= s.max_context) {
      throw Error(ErrorCode::kContextOverflow,
                  "context overflow: position " + std::to_string(pos_) + " >= max_context " +
                      std::to_string(s.max_context));
    }
    if (token >= s.vocab_size) {
      throw Error(ErrorCode::kInvalidArgument, "token " + std::to_string(token) +
                                                   " outside vocabulary");
    }
    std::copy_n(w.token_embedding.begin() + static_cast<std::ptrdiff_t>(token * d), d,
                x_.begin());
    if (capture != nullptr) {
      capture->layer_states.assign(s.num_layers, {});
      capture->position = pos_;
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(s.head_dim));
    for (std::size_t l = 0; l < s.num_layers; ++l) {
      const auto& L = w.layers[l];
      std::span<float> k_row(k_cache_[l].data() + pos_ * d, d);
      std::span<float> v_row(v_cache_[l].data() + pos_ * d, d);

      detail::rms_norm(x_, L.attn_norm, s.norm_epsilon, norm_);
      detail::matvec(L.wq, norm_, q_);
      detail::matvec(L.wk, norm_, k_row);
      detail::matvec(L.wv, norm_, v_row);
      detail::apply_rope(q_, s.num_heads, s.head_dim, pos_);
      detail::apply_rope(k_row, s.num_heads, s.head_dim, pos_);

      for (std::size_t h = 0; h < s.num_heads; ++h) {
        const std::size_t off = h * s.head_dim;
        double max_score = -INFINITY;
        for (std::size_t j = 0; j <= pos_; ++j) {
          const float* kj = k_cache_[l].data() + j * d + off;
          double dot = 0.0;
          for (std::size_t i = 0; i < s.head_dim; ++i) dot += static_cast<double>(q_[off + i]) * kj[i];
          scores_[j] = dot * scale;
          max_score = std::max(max_score, scores_[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j <= pos_; ++j) {
          scores_[j] = std::exp(scores_[j] - max_score);
          denom += scores_[j];
        }
        for (std::size_t i = 0; i < s.head_dim; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j <= pos_; ++j) acc += scores_[j] * v_cache_[l][j * d + off + i];
          attn_[off + i] = static_cast<float>(acc / denom);
        }
      }
      detail::matvec(L.wo, attn_, proj_);
      for (std::size_t i = 0; i < d; ++i) x_[i] += proj_[i];

      detail::rms_norm(x_, L.ffn_norm, s.norm_epsilon, norm_);
      detail::matvec(L.w_up, norm_, up_);
      for (auto& u : up_) u = detail::silu(u);
      detail::matvec(L.w_down, up_, proj_);
      for (std::size_t i = 0; i < d; ++i) x_[i] += proj_[i];

      if (steer != nullptr && l < steer->layer_vectors.size()) {
        const auto& add = steer->layer_vectors[l];
        if (!add.empty()) {
          for (std::size_t i = 0; i < d; ++i) x_[i] += add[i];
        }
      }
      if (capture != nullptr) capture->layer_states[l].assign(x_.begin(), x_.end());
    }

    detail::rms_norm(x_, w.final_norm, s.norm_epsilon, norm_);
    std::vector<float> logits(s.vocab_size);
    detail::matvec(w.lm_head, norm_, logits);
    ++pos_;
    return logits;
  }

 private:
  Model model_;
  std::size_t pos_ = 0;
  std::vector<std::vector<float>> k_cache_;
  std::vector<std::vector<float>> v_cache_;
  std::vector<float> x_, norm_, q_, attn_, proj_, up_;
  std::vector<double> scores_;
};

struct ForwardResult {
  std::vector<float> logits;
  ActivationTrace trace;
};

// Runs `input` through the model and captures every layer at the final
// position. A non-null plan is injected according to `mode` (for a bare
// forward pass kCurrentPosition and kPromptLastToken both mean the final
// position).
inline ForwardResult forward_with_capture(const Model& model, const TokenSequence& input,
                                          const SteeringPlan* plan = nullptr,
                                          InjectionMode mode = InjectionMode::kCurrentPosition) {
  if (input.empty()) throw Error(ErrorCode::kInvalidArgument, "input sequence is empty");
  input.validate(model.spec());
  if (plan != nullptr) validate_plan(*plan, model.spec());
  Session session(model);
  ForwardResult result;
  const std::size_t last = input.length() - 1;
  for (std::size_t i = 0; i < input.length(); ++i) {
    const bool inject = plan != nullptr && (i == last || mode == InjectionMode::kAllPositions);
    auto logits = session.step(input.tokens[i], inject ? plan : nullptr,
                               i == last ? &result.trace : nullptr);
    if (i == last) result.logits = std::move(logits);
  }
  return result;
}

inline TokenId argmax_token(std::span<const float> logits) {
  return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

// Inverse-CDF sampling over softmax(logits / temperature).
inline TokenId sample_token(std::span<const float> logits, double temperature, Rng& rng) {
  if (temperature <= 0.0) return argmax_token(logits);
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  std::vector<double> weights(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    weights[i] = std::exp((logits[i] - max_logit) / temperature);
    total += weights[i];
  }
  const double target = rng.uniform() * total;
  double cumulative = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) last_nonzero = i;
    cumulative += weights[i];
    if (target < cumulative) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last_nonzero);
}

struct GenerationOptions {
  InjectionMode injection = InjectionMode::kCurrentPosition;
  bool capture_traces = false;
};

struct GenerationResult {
  std::vector<TokenId> tokens;  // generated tokens, EOS excluded
  std::string text;
  // step_traces[k] is captured at the position whose logits chose token k.
  std::vector<ActivationTrace> step_traces;
  bool stopped_on_eos = false;
};

inline GenerationResult generate_with_steering(const Model& model, const Tokenizer& tokenizer,
                                               const TokenSequence& prompt,
                                               const SteeringPlan& plan,
                                               const GenerationParams& params,
                                               const GenerationOptions& options = {}) {
  const auto& spec = model.spec();
  if (prompt.empty()) throw Error(ErrorCode::kInvalidArgument, "prompt is empty");
  prompt.validate(spec);
  params.validate();
  validate_plan(plan, spec);

  const SteeringPlan* steer = plan.empty() ? nullptr : &plan;
  Session session(model);
  Rng rng(params.seed);
  GenerationResult result;

  ActivationTrace trace;
  ActivationTrace* capture = options.capture_traces ? &trace : nullptr;
  std::vector<float> logits;
  const std::size_t last = prompt.length() - 1;
  for (std::size_t i = 0; i < prompt.length(); ++i) {
    const bool inject = i == last || options.injection == InjectionMode::kAllPositions;
    logits = session.step(prompt.tokens[i], inject ? steer : nullptr,
                          i == last ? capture : nullptr);
  }

  const auto eos = tokenizer.eos();
  while (true) {
    if (capture != nullptr) result.step_traces.push_back(trace);
    const TokenId next = sample_token(logits, params.temperature, rng);
    if (eos && next == *eos) {
      result.stopped_on_eos = true;
      break;
    }
    result.tokens.push_back(next);
    result.text = tokenizer.decode(result.tokens);

    bool stop = false;
    for (const auto& seq : params.stop_sequences) {
      if (!seq.empty() && result.text.size() >= seq.size() &&
          std::string_view(result.text).substr(result.text.size() - seq.size()) == seq) {
        result.text.resize(result.text.size() - seq.size());
        stop = true;
        break;
      }
    }
    if (stop || result.tokens.size() >= params.max_new_tokens ||
        session.position() >= spec.max_context) {
      break;
    }
    const bool inject = options.injection != InjectionMode::kPromptLastToken;
    logits = session.step(next, inject ? steer : nullptr, capture);
  }
  return result;
}

}  // namespace steer
