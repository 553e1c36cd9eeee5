#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "steer/analysis.hpp"
#include "steer/error.hpp"
#include "steer/tuner.hpp"

namespace steer::plot {

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string header(int w, int h, std::string_view title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
         "<text x=\"" + std::to_string(w / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" +
         escape(title) + "</text>\n";
}

inline std::string text(double x, double y, std::string_view s, std::string_view anchor = "middle") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + std::string(anchor) +
         "\">" + escape(s) + "</text>\n";
}

inline std::string line(double x1, double y1, double x2, double y2, std::string_view extra = "") {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
         num(y2) + "\" stroke=\"black\" " + std::string(extra) + "/>\n";
}

// Blue (-1) to white (0) to red (+1).
inline std::string diverging(double v) {
  v = std::clamp(v, -1.0, 1.0);
  const auto ch = [](double t) { return static_cast<int>(std::lround(255.0 * t)); };
  int r = 255, g = 255, b = 255;
  if (v >= 0) {
    g = b = ch(1.0 - v);
  } else {
    r = g = ch(1.0 + v);
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace detail

// Accuracy against lambda on a log-spaced x axis, with the baseline dashed.
inline std::string lambda_curve_svg(const SweepSummary& s, std::string_view title = "accuracy vs lambda") {
  if (s.rows.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep summary has no rows");
  const int W = 560, H = 360, L = 60, R = 20, T = 36, B = 48;
  const double pw = W - L - R, ph = H - T - B;
  double lo = s.rows.front().lambda, hi = s.rows.back().lambda;
  const bool logx = lo > 0 && hi / lo > 20;
  auto fx = [&](double lambda) {
    if (hi == lo) return L + pw / 2;
    const double t = logx ? std::log(lambda / lo) / std::log(hi / lo) : (lambda - lo) / (hi - lo);
    return L + t * pw;
  };
  auto fy = [&](double acc) { return T + (1.0 - acc) * ph; };

  std::string out = detail::header(W, H, title);
  out += detail::line(L, T + ph, L + pw, T + ph) + detail::line(L, T, L, T + ph);
  for (int k = 0; k <= 4; ++k) {
    const double a = k / 4.0;
    out += detail::line(L - 4, fy(a), L, fy(a)) + detail::text(L - 8, fy(a) + 4, detail::num(a), "end");
  }
  for (const auto& r : s.rows) {
    out += detail::line(fx(r.lambda), T + ph, fx(r.lambda), T + ph + 4);
  }
  out += detail::text(fx(lo), T + ph + 16, format_real(lo));
  if (hi != lo) out += detail::text(fx(hi), T + ph + 16, format_real(hi));
  out += detail::text(L + pw / 2, H - 10, logx ? "lambda (log scale)" : "lambda");
  if (s.baseline_accuracy) {
    out += detail::line(L, fy(*s.baseline_accuracy), L + pw, fy(*s.baseline_accuracy),
                        "stroke-dasharray=\"5,4\" stroke-opacity=\"0.6\"");
    out += detail::text(L + pw - 4, fy(*s.baseline_accuracy) - 4, "baseline", "end");
  }
  std::string pts;
  for (const auto& r : s.rows) pts += detail::num(fx(r.lambda)) + "," + detail::num(fy(r.accuracy)) + " ";
  out += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  for (const auto& r : s.rows) {
    const bool best = r.lambda == s.lambda_best;
    out += "<circle cx=\"" + detail::num(fx(r.lambda)) + "\" cy=\"" + detail::num(fy(r.accuracy)) +
           "\" r=\"" + (best ? "5" : "3") + "\" fill=\"" + (best ? "#d62728" : "#1f77b4") + "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

// One bar per (label, value); values in [0, 1].
inline std::string bar_chart_svg(const std::vector<std::pair<std::string, double>>& bars,
                                 std::string_view title = "accuracy") {
  if (bars.empty()) throw Error(ErrorCode::kInvalidArgument, "no bars to plot");
  const int W = std::max(320, 90 * static_cast<int>(bars.size()) + 80), H = 320, L = 60, T = 36, B = 48;
  const double pw = W - L - 20, ph = H - T - B;
  const double slot = pw / static_cast<double>(bars.size());
  std::string out = detail::header(W, H, title);
  out += detail::line(L, T + ph, L + pw, T + ph) + detail::line(L, T, L, T + ph);
  for (int k = 0; k <= 4; ++k) {
    const double y = T + (1.0 - k / 4.0) * ph;
    out += detail::line(L - 4, y, L, y) + detail::text(L - 8, y + 4, detail::num(k / 4.0), "end");
  }
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::clamp(bars[i].second, 0.0, 1.0);
    const double x = L + slot * static_cast<double>(i) + slot * 0.15;
    const double h = v * ph;
    out += "<rect x=\"" + detail::num(x) + "\" y=\"" + detail::num(T + ph - h) + "\" width=\"" +
           detail::num(slot * 0.7) + "\" height=\"" + detail::num(h) + "\" fill=\"#2ca02c\"/>\n";
    out += detail::text(x + slot * 0.35, T + ph - h - 4, detail::num(bars[i].second));
    out += detail::text(x + slot * 0.35, T + ph + 16, bars[i].first);
  }
  out += "</svg>\n";
  return out;
}

inline std::string heatmap_svg(const AlignmentMatrix& m, std::string_view title = "alignment") {
  if (m.rows() == 0 || m.cols() == 0) throw Error(ErrorCode::kInvalidArgument, "empty matrix");
  const int cell = std::clamp(360 / static_cast<int>(std::max(m.rows(), m.cols())), 12, 48);
  const int L = 50, T = 40;
  const int W = L + cell * static_cast<int>(m.cols()) + 30;
  const int H = T + cell * static_cast<int>(m.rows()) + 40;
  std::string out = detail::header(W, H, title);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += detail::text(L - 6, T + cell * (i + 0.5) + 4, std::to_string(i), "end");
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const double v = m.entries[i][j];
      out += "<rect x=\"" + std::to_string(L + cell * j) + "\" y=\"" + std::to_string(T + cell * i) +
             "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(cell) +
             "\" fill=\"" + detail::diverging(v) + "\"><title>" + std::to_string(i) + "," +
             std::to_string(j) + ": " + detail::num(v) + "</title></rect>\n";
    }
  }
  for (std::size_t j = 0; j < m.cols(); ++j) {
    out += detail::text(L + cell * (j + 0.5), T + cell * m.rows() + 14, std::to_string(j));
  }
  out += "</svg>\n";
  return out;
}

}  // namespace steer::plot
