#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "steer/error.hpp"

namespace steer {

struct PcaOptions {
  enum class Method { kAuto, kJacobi, kPowerIteration };
  Method method = Method::kAuto;
  // kAuto uses Jacobi up to this width and power iteration above it.
  std::size_t jacobi_max_dim = 256;
  double power_tolerance = 1e-10;
  std::size_t power_max_iterations = 10000;
};

struct PrincipalComponent {
  std::vector<double> direction;  // unit norm
  double eigenvalue = 0.0;
  double explained_variance = 0.0;  // eigenvalue / trace, in [0, 1]
};

namespace detail {

// Dense symmetric n x n matrix, row-major.
struct SymMatrix {
  std::size_t n = 0;
  std::vector<double> a;

  double& at(std::size_t r, std::size_t c) { return a[r * n + c]; }
  double at(std::size_t r, std::size_t c) const { return a[r * n + c]; }

  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) t += at(i, i);
    return t;
  }
};

struct Eigenpair {
  double value = 0.0;
  std::vector<double> vector;
};

// Cyclic Jacobi rotations until the off-diagonal mass is negligible; returns
// the pair with the largest eigenvalue (lowest index on exact ties).
inline Eigenpair jacobi_top_eigenpair(SymMatrix m) {
  const std::size_t n = m.n;
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  double frob = 0.0;
  for (double x : m.a) frob += x * x;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += m.at(p, q) * m.at(p, q);
    }
    if (off <= 1e-30 * frob) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m.at(p, q);
        if (apq == 0.0) continue;
        const double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = m.at(k, p);
          const double akq = m.at(k, q);
          m.at(k, p) = c * akp - s * akq;
          m.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = m.at(p, k);
          const double aqk = m.at(q, k);
          m.at(p, k) = c * apk - s * aqk;
          m.at(q, k) = s * apk + c * aqk;
        }
        m.at(p, q) = 0.0;
        m.at(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p];
          const double vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (m.at(i, i) > m.at(best, best)) best = i;
  }
  Eigenpair out;
  out.value = m.at(best, best);
  out.vector.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.vector[k] = v[k * n + best];
  return out;
}

inline Eigenpair power_top_eigenpair(const SymMatrix& m, double tolerance,
                                     std::size_t max_iterations) {
  const std::size_t n = m.n;
  // Start from the heaviest row of the matrix (deterministic, and a column
  // of M already lies in its range).
  std::size_t start = 0;
  double best_norm = -1.0;
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += m.at(r, c) * m.at(r, c);
    if (s > best_norm) {
      best_norm = s;
      start = r;
    }
  }
  std::vector<double> v(m.a.begin() + static_cast<std::ptrdiff_t>(start * n),
                        m.a.begin() + static_cast<std::ptrdiff_t>((start + 1) * n));
  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    s = std::sqrt(s);
    if (s > 0.0) {
      for (double& e : x) e /= s;
    }
    return s;
  };
  normalize(v);
  std::vector<double> w(n);
  double value = 0.0;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    for (std::size_t r = 0; r < n; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) acc += m.at(r, c) * v[c];
      w[r] = acc;
    }
    value = normalize(w);
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) delta = std::max(delta, std::abs(w[i] - v[i]));
    v.swap(w);
    if (delta < tolerance) break;
  }
  return {value, std::move(v)};
}

}  // namespace detail

// Leading principal direction of `rows`. Centered: eigenvector of the
// covariance (mean removed). Uncentered: eigenvector of the second-moment
// matrix, which is invariant to flipping the sign of individual rows.
// The sign is fixed so the mean projection of the raw rows is >= 0; when that
// mean is zero, the largest-magnitude component is made positive.
inline PrincipalComponent first_principal_component(std::span<const std::vector<double>> rows,
                                                    bool centered,
                                                    const PcaOptions& options = {}) {
  if (rows.size() < 2) {
    throw Error(ErrorCode::kInsufficientData,
                "principal component needs at least 2 vectors, got " +
                    std::to_string(rows.size()));
  }
  const std::size_t d = rows.front().size();
  if (d == 0) throw Error(ErrorCode::kInvalidArgument, "principal component of empty vectors");
  for (const auto& r : rows) {
    if (r.size() != d) {
      throw Error(ErrorCode::kDimensionMismatch, "principal component inputs differ in width");
    }
  }
  const double n = static_cast<double>(rows.size());

  std::vector<double> mean(d, 0.0);
  if (centered) {
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < d; ++i) mean[i] += r[i];
    }
    for (double& m : mean) m /= n;
  }

  detail::SymMatrix cov{d, std::vector<double>(d * d, 0.0)};
  std::vector<double> x(d);
  double raw_energy = 0.0;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = r[i] - mean[i];
      raw_energy += r[i] * r[i];
    }
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) cov.at(i, j) += x[i] * x[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      cov.at(i, j) /= n;
      cov.at(j, i) = cov.at(i, j);
    }
  }
  raw_energy /= n;

  const double total = cov.trace();
  if (!(total > 1e-15 * std::max(raw_energy, 1e-300))) {
    throw Error(ErrorCode::kDegenerate,
                "no principal direction: inputs have zero variance" +
                    std::string(centered ? " after centering" : ""));
  }

  const bool use_jacobi =
      options.method == PcaOptions::Method::kJacobi ||
      (options.method == PcaOptions::Method::kAuto && d <= options.jacobi_max_dim);
  detail::Eigenpair top =
      use_jacobi ? detail::jacobi_top_eigenpair(cov)
                 : detail::power_top_eigenpair(cov, options.power_tolerance,
                                               options.power_max_iterations);

  double norm = 0.0;
  for (double e : top.vector) norm += e * e;
  norm = std::sqrt(norm);
  for (double& e : top.vector) e /= norm;

  double mean_projection = 0.0;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < d; ++i) mean_projection += r[i] * top.vector[i];
  }
  mean_projection /= n;
  bool flip = false;
  if (std::abs(mean_projection) <= 1e-12 * std::sqrt(raw_energy)) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < d; ++i) {
      if (std::abs(top.vector[i]) > std::abs(top.vector[arg])) arg = i;
    }
    flip = top.vector[arg] < 0.0;
  } else {
    flip = mean_projection < 0.0;
  }
  if (flip) {
    for (double& e : top.vector) e = -e;
  }

  PrincipalComponent pc;
  pc.direction = std::move(top.vector);
  pc.eigenvalue = top.value;
  pc.explained_variance = std::clamp(top.value / total, 0.0, 1.0);
  return pc;
}

}  // namespace steer
