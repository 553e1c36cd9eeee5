#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "steer/error.hpp"
#include "steer/extraction.hpp"
#include "steer/model.hpp"
#include "steer/rng.hpp"
#include "steer/steering_plan.hpp"

namespace steer {

// Greedy n -> n mapping: source layer i drives target layer i for every
// i < min(L_source, L_target).
struct LayerMapping {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (source, target)
  std::vector<std::size_t> unmapped_target_layers;

  std::string summary() const {
    std::string s;
    if (!pairs.empty()) {
      s = std::to_string(pairs.front().first) + "->" + std::to_string(pairs.front().second);
      if (pairs.size() > 1) {
        s += ".." + std::to_string(pairs.back().first) + "->" + std::to_string(pairs.back().second);
      }
    }
    s += "; unmapped target:";
    if (unmapped_target_layers.empty()) s += " none";
    for (auto l : unmapped_target_layers) s += " " + std::to_string(l);
    return s;
  }

  bool operator==(const LayerMapping&) const = default;
};

inline LayerMapping map_layers(std::size_t source_layers, std::size_t target_layers) {
  if (source_layers < 1 || target_layers < 1) {
    throw Error(ErrorCode::kInvalidArgument, "layer counts must be >= 1");
  }
  LayerMapping m;
  const std::size_t shared = std::min(source_layers, target_layers);
  for (std::size_t i = 0; i < shared; ++i) m.pairs.emplace_back(i, i);
  for (std::size_t i = shared; i < target_layers; ++i) m.unmapped_target_layers.push_back(i);
  return m;
}

struct DimensionAdapter {
  enum class Kind { kIdentity, kTruncateOrPad, kSeededProjection };
  Kind kind = Kind::kIdentity;
  std::uint64_t seed = 0;
  std::size_t source_dim = 0;
  std::size_t target_dim = 0;

  static DimensionAdapter identity(std::size_t dim) { return {Kind::kIdentity, 0, dim, dim}; }
  static DimensionAdapter truncate_or_pad(std::size_t from, std::size_t to) {
    return {Kind::kTruncateOrPad, 0, from, to};
  }
  static DimensionAdapter projection(std::size_t from, std::size_t to, std::uint64_t seed) {
    return {Kind::kSeededProjection, seed, from, to};
  }
};

inline std::string to_string(DimensionAdapter::Kind kind) {
  switch (kind) {
    case DimensionAdapter::Kind::kIdentity: return "identity";
    case DimensionAdapter::Kind::kTruncateOrPad: return "truncate_or_pad";
    case DimensionAdapter::Kind::kSeededProjection: return "seeded_projection";
  }
  return "unknown";
}

inline DimensionAdapter::Kind parse_adapter_kind(const std::string& name) {
  if (name == "identity") return DimensionAdapter::Kind::kIdentity;
  if (name == "truncate_or_pad" || name == "truncate") return DimensionAdapter::Kind::kTruncateOrPad;
  if (name == "seeded_projection" || name == "projection") {
    return DimensionAdapter::Kind::kSeededProjection;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown adapter '" + name + "'");
}

// [target_dim x source_dim] Gaussian matrix made orthonormal by two passes of
// modified Gram-Schmidt: rows when target_dim <= source_dim, columns
// otherwise (an isometric embedding).
inline std::vector<double> projection_matrix(const DimensionAdapter& adapter) {
  const std::size_t rows = adapter.target_dim;
  const std::size_t cols = adapter.source_dim;
  std::vector<double> m(rows * cols);
  Rng rng(adapter.seed);
  for (auto& v : m) v = rng.normal();

  const bool by_rows = rows <= cols;
  const std::size_t count = by_rows ? rows : cols;
  const std::size_t length = by_rows ? cols : rows;
  auto at = [&](std::size_t vec, std::size_t k) -> double& {
    return by_rows ? m[vec * cols + k] : m[k * cols + vec];
  };
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t a = 0; a < count; ++a) {
      for (std::size_t b = 0; b < a; ++b) {
        double dot = 0.0;
        for (std::size_t k = 0; k < length; ++k) dot += at(a, k) * at(b, k);
        for (std::size_t k = 0; k < length; ++k) at(a, k) -= dot * at(b, k);
      }
      double norm = 0.0;
      for (std::size_t k = 0; k < length; ++k) norm += at(a, k) * at(a, k);
      norm = std::sqrt(norm);
      for (std::size_t k = 0; k < length; ++k) at(a, k) /= norm;
    }
  }
  return m;
}

namespace detail {

inline std::vector<float> renormalized(const std::vector<double>& v, const char* what) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 1e-12)) {
    throw Error(ErrorCode::kDegenerate, std::string(what) + " produced the zero vector");
  }
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

}  // namespace detail

inline std::vector<float> adapt_vector(std::span<const float> v, const DimensionAdapter& adapter) {
  if (v.size() != adapter.source_dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "vector has length " + std::to_string(v.size()) + ", adapter expects " +
                    std::to_string(adapter.source_dim));
  }
  switch (adapter.kind) {
    case DimensionAdapter::Kind::kIdentity:
      if (adapter.source_dim != adapter.target_dim) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "identity adapter requires equal widths (" +
                        std::to_string(adapter.source_dim) + " vs " +
                        std::to_string(adapter.target_dim) + ")");
      }
      return {v.begin(), v.end()};
    case DimensionAdapter::Kind::kTruncateOrPad: {
      std::vector<double> out(adapter.target_dim, 0.0);
      const std::size_t n = std::min(adapter.source_dim, adapter.target_dim);
      for (std::size_t i = 0; i < n; ++i) out[i] = v[i];
      return detail::renormalized(out, "truncation");
    }
    case DimensionAdapter::Kind::kSeededProjection: {
      const auto p = projection_matrix(adapter);
      std::vector<double> out(adapter.target_dim, 0.0);
      for (std::size_t r = 0; r < adapter.target_dim; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < adapter.source_dim; ++c) acc += p[r * adapter.source_dim + c] * v[c];
        out[r] = acc;
      }
      return detail::renormalized(out, "projection");
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown adapter kind");
}

// Resolves the adapter for a (source, target) width pair: nullopt means
// identity, which only exists for equal widths.
inline DimensionAdapter resolve_adapter(std::size_t source_dim, std::size_t target_dim,
                                        const std::optional<DimensionAdapter>& adapter) {
  if (!adapter) {
    if (source_dim != target_dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "source width " + std::to_string(source_dim) + " != target width " +
                      std::to_string(target_dim) + "; choose a dimension adapter explicitly");
    }
    return DimensionAdapter::identity(source_dim);
  }
  if (adapter->source_dim != source_dim || adapter->target_dim != target_dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "adapter maps " + std::to_string(adapter->source_dim) + " -> " +
                    std::to_string(adapter->target_dim) + " but the pair is " +
                    std::to_string(source_dim) + " -> " + std::to_string(target_dim));
  }
  return *adapter;
}

// Unit directions already mapped and adapted onto the target; scaling by λ
// turns them into a plan. Unmapped layers hold zeros.
struct AdaptedDirections {
  std::vector<std::vector<float>> per_target_layer;
  LayerMapping mapping;
  PlanProvenance provenance;
};

inline AdaptedDirections adapt_directions(const SteeringVectorSet& set, const ModelSpec& target,
                                          const std::optional<DimensionAdapter>& adapter = {}) {
  set.validate();
  const auto resolved = resolve_adapter(set.hidden_dim, target.hidden_dim, adapter);
  AdaptedDirections out;
  out.mapping = map_layers(set.num_layers, target.num_layers);
  out.per_target_layer.assign(target.num_layers, std::vector<float>(target.hidden_dim, 0.0f));
  for (const auto& [src, dst] : out.mapping.pairs) {
    out.per_target_layer[dst] = adapt_vector(set.directions[src], resolved);
  }
  out.provenance = {set.id(), to_string(resolved.kind), out.mapping.summary()};
  return out;
}

inline SteeringPlan scale_plan(const AdaptedDirections& adapted, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must be finite and >= 0");
  }
  SteeringPlan plan;
  plan.lambda = lambda;
  plan.provenance = adapted.provenance;
  plan.layer_vectors.reserve(adapted.per_target_layer.size());
  for (const auto& dir : adapted.per_target_layer) {
    std::vector<float> v(dir.size());
    for (std::size_t i = 0; i < dir.size(); ++i) v[i] = static_cast<float>(lambda * dir[i]);
    plan.layer_vectors.push_back(std::move(v));
  }
  return plan;
}

inline SteeringPlan build_plan(const SteeringVectorSet& set, const ModelSpec& target, double lambda,
                               const std::optional<DimensionAdapter>& adapter = {}) {
  return scale_plan(adapt_directions(set, target, adapter), lambda);
}

}  // namespace steer
