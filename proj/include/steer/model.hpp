#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "steer/binary_io.hpp"
#include "steer/error.hpp"

namespace steer {

// Architecture of a decoder-only transformer: pre-norm blocks with RMSNorm,
// rotary multi-head causal attention and a SiLU MLP.
struct ModelSpec {
  std::string model_id;
  std::size_t num_layers = 1;
  std::size_t hidden_dim = 16;
  std::size_t num_heads = 1;
  std::size_t head_dim = 16;
  std::size_t vocab_size = 258;
  std::size_t max_context = 64;
  std::size_t ffn_dim = 64;
  float norm_epsilon = 1e-5f;

  void validate() const {
    auto fail = [](const std::string& what) {
      throw Error(ErrorCode::kDimensionMismatch, "invalid model spec: " + what);
    };
    if (num_layers < 1) fail("num_layers must be >= 1");
    if (num_heads < 1 || head_dim < 1) fail("num_heads and head_dim must be >= 1");
    if (hidden_dim != num_heads * head_dim) {
      fail("hidden_dim (" + std::to_string(hidden_dim) + ") != num_heads * head_dim (" +
           std::to_string(num_heads) + " * " + std::to_string(head_dim) + ")");
    }
    if (vocab_size < 2) fail("vocab_size must be >= 2");
    if (max_context < 1) fail("max_context must be >= 1");
    if (ffn_dim < 1) fail("ffn_dim must be >= 1");
    if (!(norm_epsilon >= 0.0f) || !std::isfinite(norm_epsilon)) {
      fail("norm_epsilon must be finite and >= 0");
    }
  }

  bool operator==(const ModelSpec&) const = default;
};

// Row-major matrices: a [rows x cols] block maps a cols-vector to a rows-vector.
struct LayerWeights {
  std::vector<float> attn_norm;  // [hidden]
  std::vector<float> wq;         // [hidden x hidden]
  std::vector<float> wk;         // [hidden x hidden]
  std::vector<float> wv;         // [hidden x hidden]
  std::vector<float> wo;         // [hidden x hidden]
  std::vector<float> ffn_norm;   // [hidden]
  std::vector<float> w_up;       // [ffn x hidden]
  std::vector<float> w_down;     // [hidden x ffn]

  bool operator==(const LayerWeights&) const = default;
};

struct ModelWeights {
  std::vector<float> token_embedding;  // [vocab x hidden]
  std::vector<LayerWeights> layers;
  std::vector<float> final_norm;  // [hidden]
  std::vector<float> lm_head;     // [vocab x hidden]

  bool operator==(const ModelWeights&) const = default;

  // Zero-initialised weights with norm gains at 1, shaped for `spec`.
  static ModelWeights zeros(const ModelSpec& spec) {
    const std::size_t d = spec.hidden_dim;
    ModelWeights w;
    w.token_embedding.assign(spec.vocab_size * d, 0.0f);
    w.layers.resize(spec.num_layers);
    for (auto& layer : w.layers) {
      layer.attn_norm.assign(d, 1.0f);
      layer.wq.assign(d * d, 0.0f);
      layer.wk.assign(d * d, 0.0f);
      layer.wv.assign(d * d, 0.0f);
      layer.wo.assign(d * d, 0.0f);
      layer.ffn_norm.assign(d, 1.0f);
      layer.w_up.assign(spec.ffn_dim * d, 0.0f);
      layer.w_down.assign(d * spec.ffn_dim, 0.0f);
    }
    w.final_norm.assign(d, 1.0f);
    w.lm_head.assign(spec.vocab_size * d, 0.0f);
    return w;
  }

  void check_against(const ModelSpec& spec) const {
    const std::size_t d = spec.hidden_dim;
    auto expect = [](const std::vector<float>& v, std::size_t n, const std::string& name) {
      if (v.size() != n) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "weight block '" + name + "' has " + std::to_string(v.size()) +
                        " values, expected " + std::to_string(n));
      }
      for (float x : v) {
        if (!std::isfinite(x)) {
          throw Error(ErrorCode::kCorruptFile, "corrupt weights: non-finite value in '" + name + "'");
        }
      }
    };
    expect(token_embedding, spec.vocab_size * d, "token_embedding");
    if (layers.size() != spec.num_layers) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "model has " + std::to_string(layers.size()) + " layers, spec says " +
                      std::to_string(spec.num_layers));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      const std::string p = "layers." + std::to_string(l) + ".";
      expect(L.attn_norm, d, p + "attn_norm");
      expect(L.wq, d * d, p + "wq");
      expect(L.wk, d * d, p + "wk");
      expect(L.wv, d * d, p + "wv");
      expect(L.wo, d * d, p + "wo");
      expect(L.ffn_norm, d, p + "ffn_norm");
      expect(L.w_up, spec.ffn_dim * d, p + "w_up");
      expect(L.w_down, d * spec.ffn_dim, p + "w_down");
    }
    expect(final_norm, d, "final_norm");
    expect(lm_head, spec.vocab_size * d, "lm_head");
  }
};

// Immutable model: spec plus shared weights. Copies are cheap and may be used
// from many threads at once; all mutable decode state lives in Session.
class Model {
 public:
  Model(ModelSpec spec, ModelWeights weights) {
    spec.validate();
    weights.check_against(spec);
    spec_ = std::move(spec);
    weights_ = std::make_shared<const ModelWeights>(std::move(weights));
  }

  const ModelSpec& spec() const { return spec_; }
  const ModelWeights& weights() const { return *weights_; }

 private:
  ModelSpec spec_;
  std::shared_ptr<const ModelWeights> weights_;
};

// --- SFWT weight file --------------------------------------------------------
//
// magic "SFWT" | u16 version (=1) | str model_id | u32 num_layers | u32 hidden_dim
// | u32 num_heads | u32 head_dim | u32 vocab_size | u32 max_context | u32 ffn_dim
// | f32 norm_epsilon | weight blocks (f32, little-endian) in this order:
//   token_embedding, then per layer {attn_norm, wq, wk, wv, wo, ffn_norm, w_up,
//   w_down}, then final_norm, lm_head.
// `str` is a u32 byte length followed by UTF-8 bytes.

inline constexpr std::string_view kWeightMagic = "SFWT";
inline constexpr std::uint16_t kWeightVersion = 1;

inline std::string encode_model(const Model& model) {
  const auto& s = model.spec();
  const auto& w = model.weights();
  io::ByteWriter out;
  out.raw(kWeightMagic);
  out.u16(kWeightVersion);
  out.str(s.model_id);
  for (std::size_t v : {s.num_layers, s.hidden_dim, s.num_heads, s.head_dim, s.vocab_size,
                        s.max_context, s.ffn_dim}) {
    out.u32(static_cast<std::uint32_t>(v));
  }
  out.f32(s.norm_epsilon);
  out.f32s(w.token_embedding);
  for (const auto& L : w.layers) {
    for (const auto* block : {&L.attn_norm, &L.wq, &L.wk, &L.wv, &L.wo, &L.ffn_norm, &L.w_up,
                              &L.w_down}) {
      out.f32s(*block);
    }
  }
  out.f32s(w.final_norm);
  out.f32s(w.lm_head);
  return out.bytes();
}

inline Model decode_model(std::string_view bytes, const std::string& origin = "weights") {
  io::ByteReader in(bytes, origin);
  if (bytes.size() < 4 || in.raw(4, "magic") != kWeightMagic) {
    throw Error(ErrorCode::kCorruptFile, origin + ": bad magic, not an SFWT weight file");
  }
  const auto version = in.u16("version");
  if (version != kWeightVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                origin + ": unsupported version " + std::to_string(version) +
                    " (supported: " + std::to_string(kWeightVersion) + ")");
  }
  ModelSpec spec;
  spec.model_id = in.str("model_id");
  spec.num_layers = in.u32("num_layers");
  spec.hidden_dim = in.u32("hidden_dim");
  spec.num_heads = in.u32("num_heads");
  spec.head_dim = in.u32("head_dim");
  spec.vocab_size = in.u32("vocab_size");
  spec.max_context = in.u32("max_context");
  spec.ffn_dim = in.u32("ffn_dim");
  spec.norm_epsilon = in.f32("norm_epsilon");
  spec.validate();

  const std::size_t d = spec.hidden_dim;
  const std::size_t per_layer = 2 * d + 4 * d * d + 2 * spec.ffn_dim * d;
  const std::size_t expected =
      4 * (2 * spec.vocab_size * d + spec.num_layers * per_layer + d);
  if (in.remaining() < expected) {
    throw Error(ErrorCode::kCorruptFile,
                origin + ": corrupt weights: truncated weight block (" +
                    std::to_string(in.remaining()) + " bytes, expected " +
                    std::to_string(expected) + ")");
  }
  if (in.remaining() > expected) {
    throw Error(ErrorCode::kCorruptFile,
                origin + ": corrupt weights: " + std::to_string(in.remaining() - expected) +
                    " trailing bytes");
  }

  auto block = [&](std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = in.f32("weights");
    return v;
  };
  ModelWeights w;
  w.token_embedding = block(spec.vocab_size * d);
  w.layers.resize(spec.num_layers);
  for (auto& L : w.layers) {
    L.attn_norm = block(d);
    L.wq = block(d * d);
    L.wk = block(d * d);
    L.wv = block(d * d);
    L.wo = block(d * d);
    L.ffn_norm = block(d);
    L.w_up = block(spec.ffn_dim * d);
    L.w_down = block(d * spec.ffn_dim);
  }
  w.final_norm = block(d);
  w.lm_head = block(spec.vocab_size * d);
  return Model(std::move(spec), std::move(w));
}

inline void save_model(const Model& model, const std::filesystem::path& path) {
  io::write_file(path, encode_model(model));
}

inline Model load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kIo, "model file '" + path.string() + "' does not exist");
  }
  return decode_model(io::read_file(path), path.string());
}

}  // namespace steer
