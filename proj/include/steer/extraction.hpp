#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "steer/binary_io.hpp"
#include "steer/error.hpp"
#include "steer/model.hpp"
#include "steer/parallel.hpp"
#include "steer/pca.hpp"
#include "steer/runtime.hpp"
#include "steer/tokenizer.hpp"

namespace steer {

struct ContrastivePair {
  std::string positive_prompt;
  std::string negative_prompt;
  std::string pair_id;

  ContrastivePair(std::string positive, std::string negative, std::string id)
      : positive_prompt(std::move(positive)),
        negative_prompt(std::move(negative)),
        pair_id(std::move(id)) {
    if (positive_prompt.empty() || negative_prompt.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "pair " + pair_id + ": prompts must be nonempty");
    }
    if (positive_prompt == negative_prompt) {
      throw Error(ErrorCode::kInvalidArgument,
                  "pair " + pair_id + ": positive and negative prompts are identical");
    }
  }
};

// Per-layer unit difference; nullopt marks a degenerate layer (|a - b| ~ 0).
struct PairDifference {
  std::vector<std::optional<std::vector<double>>> layer_diffs;

  bool any_degenerate() const {
    for (const auto& d : layer_diffs) {
      if (!d) return true;
    }
    return false;
  }
};

enum class SignConvention : std::uint8_t {
  kMeanProjectionNonNegative = 1,
};

struct SteeringVectorSet {
  std::string source_model_id;
  std::string dataset_id;
  std::size_t num_layers = 0;
  std::size_t hidden_dim = 0;
  std::vector<std::vector<float>> directions;  // [num_layers][hidden_dim], unit norm
  bool centered = false;
  SignConvention sign_convention = SignConvention::kMeanProjectionNonNegative;
  std::vector<float> explained_variance;  // [num_layers]
  // Sidecar-only metadata.
  std::vector<std::size_t> pairs_used;        // per layer
  std::vector<std::size_t> degenerate_pairs;  // per layer
  std::map<std::string, std::string> annotations;

  std::string id() const { return source_model_id + ":" + dataset_id; }

  void validate() const {
    auto fail = [](const std::string& what) {
      throw Error(ErrorCode::kDimensionMismatch, "invalid steering set: " + what);
    };
    if (num_layers < 1 || hidden_dim < 1) fail("num_layers and hidden_dim must be >= 1");
    if (directions.size() != num_layers) fail("direction count != num_layers");
    if (explained_variance.size() != num_layers) fail("explained_variance count != num_layers");
    for (std::size_t l = 0; l < num_layers; ++l) {
      if (directions[l].size() != hidden_dim) fail("layer " + std::to_string(l) + " width");
      double s = 0.0;
      for (float v : directions[l]) s += static_cast<double>(v) * v;
      if (!(std::abs(std::sqrt(s) - 1.0) <= 1e-6)) {
        fail("layer " + std::to_string(l) + " direction is not unit norm");
      }
      const float ev = explained_variance[l];
      if (!(ev >= 0.0f && ev <= 1.0f)) {
        fail("layer " + std::to_string(l) + " explained_variance outside [0, 1]");
      }
    }
  }
};

inline std::vector<std::pair<ActivationTrace, ActivationTrace>> collect_pair_traces(
    const Model& model, const Tokenizer& tokenizer, std::span<const ContrastivePair> pairs,
    std::size_t workers = 1) {
  if (pairs.empty()) throw Error(ErrorCode::kInsufficientData, "no contrastive pairs supplied");
  std::vector<std::pair<ActivationTrace, ActivationTrace>> out(pairs.size());
  std::vector<std::optional<Error>> errors(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    try {
      out[i].first = forward_with_capture(model, tokenizer.encode(pairs[i].positive_prompt)).trace;
      out[i].second = forward_with_capture(model, tokenizer.encode(pairs[i].negative_prompt)).trace;
    } catch (const Error& e) {
      errors[i] = Error(e.code(), "pair " + pairs[i].pair_id + ": " + e.what());
    }
  });
  for (auto& e : errors) {
    if (e) throw *e;
  }
  return out;
}

inline PairDifference normalized_difference(const ActivationTrace& a, const ActivationTrace& b) {
  if (a.num_layers() != b.num_layers()) {
    throw Error(ErrorCode::kDimensionMismatch, "traces have different layer counts");
  }
  PairDifference out;
  out.layer_diffs.resize(a.num_layers());
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    const auto& x = a.layer_states[l];
    const auto& y = b.layer_states[l];
    if (x.size() != y.size()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "traces differ in width at layer " + std::to_string(l));
    }
    std::vector<double> diff(x.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      diff[i] = static_cast<double>(x[i]) - static_cast<double>(y[i]);
      norm += diff[i] * diff[i];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) continue;
    for (double& v : diff) v /= norm;
    out.layer_diffs[l] = std::move(diff);
  }
  return out;
}

struct ExtractionOptions {
  bool centered = false;
  std::string dataset_id = "unknown";
  PcaOptions pca;
  std::size_t workers = 1;
};

// PC1 of the normalized differences, layer by layer. Degenerate pairs are
// dropped per layer; each layer needs at least two usable pairs.
inline SteeringVectorSet extract_from_traces(
    std::span<const std::pair<ActivationTrace, ActivationTrace>> trace_pairs,
    const std::string& source_model_id, const ExtractionOptions& options = {}) {
  if (trace_pairs.empty()) throw Error(ErrorCode::kInsufficientData, "no trace pairs supplied");
  const std::size_t num_layers = trace_pairs.front().first.num_layers();
  if (num_layers == 0) throw Error(ErrorCode::kInvalidArgument, "traces have no layers");
  const std::size_t hidden = trace_pairs.front().first.layer_states.front().size();

  std::vector<std::vector<std::vector<double>>> per_layer(num_layers);
  SteeringVectorSet set;
  set.degenerate_pairs.assign(num_layers, 0);
  for (const auto& [a, b] : trace_pairs) {
    auto diff = normalized_difference(a, b);
    for (std::size_t l = 0; l < num_layers; ++l) {
      if (diff.layer_diffs[l]) {
        if (diff.layer_diffs[l]->size() != hidden) {
          throw Error(ErrorCode::kDimensionMismatch, "trace pairs differ in hidden width");
        }
        per_layer[l].push_back(std::move(*diff.layer_diffs[l]));
      } else {
        ++set.degenerate_pairs[l];
      }
    }
  }

  set.source_model_id = source_model_id;
  set.dataset_id = options.dataset_id;
  set.num_layers = num_layers;
  set.hidden_dim = hidden;
  set.centered = options.centered;
  set.directions.resize(num_layers);
  set.explained_variance.resize(num_layers);
  set.pairs_used.resize(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    if (per_layer[l].size() < 2) {
      throw Error(ErrorCode::kInsufficientData,
                  "layer " + std::to_string(l) + ": only " + std::to_string(per_layer[l].size()) +
                      " usable pairs (" + std::to_string(set.degenerate_pairs[l]) +
                      " degenerate), need at least 2");
    }
    PrincipalComponent pc;
    try {
      pc = first_principal_component(per_layer[l], options.centered, options.pca);
    } catch (const Error& e) {
      throw Error(e.code(), "layer " + std::to_string(l) + ": " + e.what());
    }
    // Renormalise after narrowing to f32.
    double norm = 0.0;
    for (double v : pc.direction) norm += static_cast<double>(static_cast<float>(v)) * static_cast<float>(v);
    norm = std::sqrt(norm);
    auto& dir = set.directions[l];
    dir.resize(hidden);
    for (std::size_t i = 0; i < hidden; ++i) dir[i] = static_cast<float>(pc.direction[i] / norm);
    set.explained_variance[l] = static_cast<float>(pc.explained_variance);
    set.pairs_used[l] = per_layer[l].size();
  }
  return set;
}

inline SteeringVectorSet extract_steering_set(const Model& model, const Tokenizer& tokenizer,
                                              std::span<const ContrastivePair> pairs,
                                              const ExtractionOptions& options = {}) {
  auto traces = collect_pair_traces(model, tokenizer, pairs, options.workers);
  auto set = extract_from_traces(traces, model.spec().model_id, options);
  if (set.hidden_dim != model.spec().hidden_dim || set.num_layers != model.spec().num_layers) {
    throw Error(ErrorCode::kDimensionMismatch, "extracted set does not match the source model");
  }
  return set;
}

// --- SVEC steering-vector file ------------------------------------------------
//
// magic "SVEC" | u16 version (=1) | str source_model_id | str dataset_id
// | u32 num_layers | u32 hidden_dim | u8 centered | u8 sign_convention
// | num_layers x hidden_dim f32 directions | num_layers f32 explained_variance
// All little-endian; `str` is a u32 byte length followed by the bytes.
// A JSON sidecar (<file>.json) carries the human-readable metadata.

inline constexpr std::string_view kSvecMagic = "SVEC";
inline constexpr std::uint16_t kSvecVersion = 1;

inline std::string encode_steering_set(const SteeringVectorSet& set) {
  set.validate();
  io::ByteWriter out;
  out.raw(kSvecMagic);
  out.u16(kSvecVersion);
  out.str(set.source_model_id);
  out.str(set.dataset_id);
  out.u32(static_cast<std::uint32_t>(set.num_layers));
  out.u32(static_cast<std::uint32_t>(set.hidden_dim));
  out.u8(set.centered ? 1 : 0);
  out.u8(static_cast<std::uint8_t>(set.sign_convention));
  for (const auto& dir : set.directions) out.f32s(dir);
  out.f32s(set.explained_variance);
  return out.bytes();
}

inline SteeringVectorSet decode_steering_set(std::string_view bytes,
                                             const std::string& origin = "steering set") {
  io::ByteReader in(bytes, origin);
  if (bytes.size() < 4 || in.raw(4, "magic") != kSvecMagic) {
    throw Error(ErrorCode::kCorruptFile, origin + ": bad magic, not an SVEC file");
  }
  const auto version = in.u16("version");
  if (version != kSvecVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                origin + ": unsupported version " + std::to_string(version));
  }
  SteeringVectorSet set;
  set.source_model_id = in.str("source_model_id");
  set.dataset_id = in.str("dataset_id");
  set.num_layers = in.u32("num_layers");
  set.hidden_dim = in.u32("hidden_dim");
  const auto centered = in.u8("centered flag");
  if (centered > 1) throw Error(ErrorCode::kCorruptFile, origin + ": bad centered flag");
  set.centered = centered == 1;
  const auto sign = in.u8("sign convention");
  if (sign != static_cast<std::uint8_t>(SignConvention::kMeanProjectionNonNegative)) {
    throw Error(ErrorCode::kCorruptFile,
                origin + ": unknown sign convention " + std::to_string(sign));
  }
  const std::size_t expected = 4 * (set.num_layers * set.hidden_dim + set.num_layers);
  if (in.remaining() != expected) {
    throw Error(ErrorCode::kCorruptFile,
                origin + ": body is " + std::to_string(in.remaining()) + " bytes, expected " +
                    std::to_string(expected));
  }
  set.directions.assign(set.num_layers, std::vector<float>(set.hidden_dim));
  for (auto& dir : set.directions) {
    for (auto& v : dir) v = in.f32("directions");
  }
  set.explained_variance.resize(set.num_layers);
  for (auto& v : set.explained_variance) v = in.f32("explained_variance");
  set.validate();
  return set;
}

inline nlohmann::json steering_set_metadata(const SteeringVectorSet& set) {
  nlohmann::json j;
  j["format"] = "SVEC";
  j["version"] = kSvecVersion;
  j["source_model_id"] = set.source_model_id;
  j["dataset_id"] = set.dataset_id;
  j["num_layers"] = set.num_layers;
  j["hidden_dim"] = set.hidden_dim;
  j["centered"] = set.centered;
  j["sign_convention"] = "mean_projection_nonnegative";
  j["explained_variance"] = set.explained_variance;
  j["pairs_used"] = set.pairs_used;
  j["degenerate_pairs"] = set.degenerate_pairs;
  j["annotations"] = set.annotations;
  return j;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& svec) {
  return std::filesystem::path(svec.string() + ".json");
}

inline void write_steering_set(const SteeringVectorSet& set, const std::filesystem::path& path) {
  io::write_file(path, encode_steering_set(set));
  io::write_file(sidecar_path(path), steering_set_metadata(set).dump(2) + "\n");
}

// Reads the binary file and, when present, the sidecar's extra metadata.
inline SteeringVectorSet read_steering_set(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kIo, "steering set '" + path.string() + "' does not exist");
  }
  auto set = decode_steering_set(io::read_file(path), path.string());
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(io::read_file(side));
      if (j.contains("pairs_used")) set.pairs_used = j.at("pairs_used").get<std::vector<std::size_t>>();
      if (j.contains("degenerate_pairs")) {
        set.degenerate_pairs = j.at("degenerate_pairs").get<std::vector<std::size_t>>();
      }
      if (j.contains("annotations")) {
        set.annotations = j.at("annotations").get<std::map<std::string, std::string>>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, side.string() + ": " + e.what());
    }
    if (j.value("source_model_id", set.source_model_id) != set.source_model_id ||
        j.value("dataset_id", set.dataset_id) != set.dataset_id) {
      throw Error(ErrorCode::kCorruptFile, side.string() + ": sidecar does not match binary header");
    }
  }
  return set;
}

}  // namespace steer
