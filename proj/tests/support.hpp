#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "steer/steer.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("steer-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline steer::ModelSpec small_spec(std::size_t layers = 2, std::size_t hidden = 16,
                                   std::size_t heads = 2, const std::string& id = "toy") {
  steer::ModelSpec s;
  s.model_id = id;
  s.num_layers = layers;
  s.hidden_dim = hidden;
  s.num_heads = heads;
  s.head_dim = hidden / heads;
  s.vocab_size = steer::ByteTokenizer::kVocabSize;
  s.max_context = 48;
  s.ffn_dim = 2 * hidden;
  return s;
}

// Whole-sequence forward written from the textbook definition: full causal
// attention matrices, RoPE by explicit rotation angle per pair, everything
// in double. Returns per-layer residual states at every position.
struct NaiveForward {
  std::vector<std::vector<std::vector<double>>> states;  // [layer][pos][dim]
  std::vector<double> last_logits;
};

inline NaiveForward naive_forward(const steer::Model& model, const std::vector<steer::TokenId>& tokens) {
  const auto& s = model.spec();
  const auto& w = model.weights();
  const std::size_t d = s.hidden_dim, n = tokens.size(), hd = s.head_dim;
  using Vec = std::vector<double>;
  auto rms = [&](const Vec& x, const std::vector<float>& g) {
    double ms = 0.0;
    for (double v : x) ms += v * v;
    ms /= static_cast<double>(x.size());
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / std::sqrt(ms + s.norm_epsilon) * g[i];
    return out;
  };
  auto mat = [](const std::vector<float>& m, const Vec& x, std::size_t rows) {
    Vec out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < x.size(); ++c) out[r] += m[r * x.size() + c] * x[c];
    return out;
  };
  auto rope = [&](Vec& v, std::size_t pos) {
    for (std::size_t h = 0; h < s.num_heads; ++h) {
      for (std::size_t k = 0; 2 * k + 1 < hd; ++k) {
        const double theta = static_cast<double>(pos) / std::pow(10000.0, 2.0 * k / hd);
        const double a = v[h * hd + 2 * k], b = v[h * hd + 2 * k + 1];
        v[h * hd + 2 * k] = a * std::cos(theta) - b * std::sin(theta);
        v[h * hd + 2 * k + 1] = a * std::sin(theta) + b * std::cos(theta);
      }
    }
  };

  std::vector<Vec> x(n, Vec(d));
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < d; ++i) x[p][i] = w.token_embedding[tokens[p] * d + i];

  NaiveForward out;
  for (std::size_t l = 0; l < s.num_layers; ++l) {
    const auto& L = w.layers[l];
    std::vector<Vec> q(n), k(n), v(n);
    for (std::size_t p = 0; p < n; ++p) {
      const auto h = rms(x[p], L.attn_norm);
      q[p] = mat(L.wq, h, d);
      k[p] = mat(L.wk, h, d);
      v[p] = mat(L.wv, h, d);
      rope(q[p], p);
      rope(k[p], p);
    }
    std::vector<Vec> attn(n, Vec(d, 0.0));
    for (std::size_t head = 0; head < s.num_heads; ++head) {
      for (std::size_t p = 0; p < n; ++p) {
        Vec score(p + 1);
        for (std::size_t j = 0; j <= p; ++j) {
          double dot = 0.0;
          for (std::size_t i = 0; i < hd; ++i) dot += q[p][head * hd + i] * k[j][head * hd + i];
          score[j] = dot / std::sqrt(static_cast<double>(hd));
        }
        double mx = score[0];
        for (double sc : score) mx = std::max(mx, sc);
        double z = 0.0;
        for (double& sc : score) z += (sc = std::exp(sc - mx));
        for (std::size_t j = 0; j <= p; ++j)
          for (std::size_t i = 0; i < hd; ++i) attn[p][head * hd + i] += score[j] / z * v[j][head * hd + i];
      }
    }
    for (std::size_t p = 0; p < n; ++p) {
      const auto o = mat(L.wo, attn[p], d);
      for (std::size_t i = 0; i < d; ++i) x[p][i] += o[i];
      auto up = mat(L.w_up, rms(x[p], L.ffn_norm), s.ffn_dim);
      for (double& u : up) u = u / (1.0 + std::exp(-u));
      const auto down = mat(L.w_down, up, d);
      for (std::size_t i = 0; i < d; ++i) x[p][i] += down[i];
    }
    out.states.push_back(x);
  }
  out.last_logits = mat(w.lm_head, rms(x.back(), w.final_norm), s.vocab_size);
  return out;
}

inline std::vector<double> random_vector(std::mt19937_64& gen, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

inline std::vector<float> unit_float(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return out;
}

// A steering set with the given unit directions; explained variance 0.5.
inline steer::SteeringVectorSet make_set(const std::string& model_id,
                                         std::vector<std::vector<float>> directions) {
  steer::SteeringVectorSet set;
  set.source_model_id = model_id;
  set.dataset_id = "synthetic";
  set.num_layers = directions.size();
  set.hidden_dim = directions.front().size();
  set.directions = std::move(directions);
  set.explained_variance.assign(set.num_layers, 0.5f);
  set.pairs_used.assign(set.num_layers, 2);
  set.degenerate_pairs.assign(set.num_layers, 0);
  return set;
}

inline steer::SteeringVectorSet random_set(const std::string& model_id, std::size_t layers,
                                           std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<std::vector<float>> dirs;
  for (std::size_t l = 0; l < layers; ++l) dirs.push_back(unit_float(random_vector(gen, dim)));
  auto set = make_set(model_id, std::move(dirs));
  std::uniform_real_distribution<float> ev(0.05f, 0.95f);
  for (auto& e : set.explained_variance) e = ev(gen);
  return set;
}

}  // namespace testing_support
