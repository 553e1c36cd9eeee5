#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "steer/binary_io.hpp"
#include "steer/error.hpp"
#include "steer/extraction.hpp"
#include "steer/text.hpp"
#include "steer/transfer.hpp"

namespace steer {

enum class AlignmentMeasure { kPearson, kCosine };

inline std::string to_string(AlignmentMeasure m) {
  return m == AlignmentMeasure::kPearson ? "pearson" : "cosine";
}

inline AlignmentMeasure parse_measure(std::string_view name) {
  if (name == "pearson") return AlignmentMeasure::kPearson;
  if (name == "cosine") return AlignmentMeasure::kCosine;
  throw Error(ErrorCode::kInvalidArgument, "unknown measure '" + std::string(name) + "'");
}

// Single pass over centered products (means computed first).
template <typename T>
double pearson(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) throw Error(ErrorCode::kDimensionMismatch, "pearson: length mismatch");
  if (u.size() < 2) throw Error(ErrorCode::kInvalidArgument, "pearson: need at least 2 values");
  const double n = static_cast<double>(u.size());
  double mu = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mu += u[i];
    mv += v[i];
  }
  mu /= n;
  mv /= n;
  double suv = 0.0, suu = 0.0, svv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i] - mu;
    const double b = v[i] - mv;
    suv += a * b;
    suu += a * a;
    svv += b * b;
  }
  if (suu == 0.0 || svv == 0.0) {
    throw Error(ErrorCode::kDegenerate, "pearson: zero-variance input");
  }
  return std::clamp(suv / std::sqrt(suu * svv), -1.0, 1.0);
}

template <typename T>
double cosine(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) throw Error(ErrorCode::kDimensionMismatch, "cosine: length mismatch");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += static_cast<double>(u[i]) * v[i];
    uu += static_cast<double>(u[i]) * u[i];
    vv += static_cast<double>(v[i]) * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorCode::kDegenerate, "cosine: zero vector");
  return std::clamp(uv / std::sqrt(uu * vv), -1.0, 1.0);
}

struct AlignmentMatrix {
  std::string row_model_id;
  std::string col_model_id;
  AlignmentMeasure measure = AlignmentMeasure::kCosine;
  bool adapted = false;
  std::vector<std::vector<double>> entries;  // [rows][cols]

  std::size_t rows() const { return entries.size(); }
  std::size_t cols() const { return entries.empty() ? 0 : entries.front().size(); }
};

// entry (i, j) = measure(a.layer[i], b.layer[j]). Widths must match unless an
// adapter maps b's width onto a's.
inline AlignmentMatrix alignment_matrix(const SteeringVectorSet& a, const SteeringVectorSet& b,
                                        AlignmentMeasure measure,
                                        const std::optional<DimensionAdapter>& adapter = {}) {
  a.validate();
  b.validate();
  AlignmentMatrix m;
  m.row_model_id = a.source_model_id;
  m.col_model_id = b.source_model_id;
  m.measure = measure;
  std::vector<std::vector<float>> cols = b.directions;
  if (a.hidden_dim != b.hidden_dim || adapter) {
    if (!adapter) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "sets have widths " + std::to_string(a.hidden_dim) + " and " +
                      std::to_string(b.hidden_dim) + "; an adapter is required");
    }
    const auto resolved = resolve_adapter(b.hidden_dim, a.hidden_dim, adapter);
    for (auto& c : cols) c = adapt_vector(c, resolved);
    m.adapted = true;
  }
  m.entries.assign(a.num_layers, std::vector<double>(cols.size()));
  for (std::size_t i = 0; i < a.num_layers; ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      std::span<const float> u(a.directions[i]);
      std::span<const float> v(cols[j]);
      m.entries[i][j] =
          measure == AlignmentMeasure::kPearson ? pearson(u, v) : cosine(u, v);
    }
  }
  return m;
}

// Pearson correlation of the two explained-variance profiles over the
// shared leading layers.
inline double explained_variance_correlation(const SteeringVectorSet& a,
                                             const SteeringVectorSet& b) {
  const std::size_t n = std::min(a.num_layers, b.num_layers);
  return pearson(std::span<const float>(a.explained_variance.data(), n),
                 std::span<const float>(b.explained_variance.data(), n));
}

// CSV: header "layer,<col indices>", then one row per row-layer. Values use
// the shortest round-trip decimal form.
inline std::string encode_heatmap_csv(const AlignmentMatrix& m) {
  std::string out = "layer";
  for (std::size_t j = 0; j < m.cols(); ++j) out += "," + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += std::to_string(i);
    for (double v : m.entries[i]) out += "," + format_real(v);
    out += "\n";
  }
  return out;
}

inline void export_heatmap_data(const AlignmentMatrix& m, const std::filesystem::path& path) {
  io::write_file(path, encode_heatmap_csv(m));
}

inline AlignmentMatrix parse_heatmap_csv(std::string_view text, const std::string& origin = "matrix") {
  AlignmentMatrix m;
  std::vector<std::string> lines;
  {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      if (!trim(line).empty()) lines.push_back(line);
    }
  }
  auto fail = [&](std::size_t line, const std::string& what) {
    throw Error(ErrorCode::kParse, origin + ":" + std::to_string(line) + ": " + what);
  };
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      cells.emplace_back(trim(std::string_view(line).substr(pos, comma - pos)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    return cells;
  };
  if (lines.empty()) fail(1, "empty matrix file");
  const auto header = split(lines[0]);
  if (header.empty() || header[0] != "layer") fail(1, "header must start with 'layer'");
  const std::size_t cols = header.size() - 1;
  if (cols == 0) fail(1, "no columns");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i]);
    if (cells.size() != cols + 1) fail(i + 1, "expected " + std::to_string(cols + 1) + " cells");
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      const auto& s = cells[c];
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        fail(i + 1, "bad number '" + s + "'");
      }
      row.push_back(v);
    }
    m.entries.push_back(std::move(row));
  }
  if (m.entries.empty()) fail(2, "no data rows");
  return m;
}

inline AlignmentMatrix import_heatmap_data(const std::filesystem::path& path) {
  return parse_heatmap_csv(io::read_file(path), path.string());
}

}  // namespace steer
