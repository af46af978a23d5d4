#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "ponbranch/eval.hpp"

// Minimal SVG rendering. Output depends only on the inputs; all numbers go
// through fixed-precision formatting.

namespace ponbranch::report {

namespace detail {

inline std::string f(double v) { return format_fixed(v, 2); }

inline std::string text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 12) {
  return "<text x=\"" + f(x) + "\" y=\"" + f(y) + "\" font-size=\"" + std::to_string(size) +
         "\" text-anchor=\"" + anchor + "\" font-family=\"sans-serif\">" + s + "</text>\n";
}

inline std::string rect(double x, double y, double w, double h, const std::string& fill,
                        const std::string& extra = "") {
  return "<rect x=\"" + f(x) + "\" y=\"" + f(y) + "\" width=\"" + f(w) + "\" height=\"" + f(h) + "\" fill=\"" + fill +
         "\"" + extra + "/>\n";
}

inline std::string line(double x1, double y1, double x2, double y2, const std::string& stroke = "#000") {
  return "<line x1=\"" + f(x1) + "\" y1=\"" + f(y1) + "\" x2=\"" + f(x2) + "\" y2=\"" + f(y2) + "\" stroke=\"" +
         stroke + "\"/>\n";
}

inline std::string open(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) + "\">\n" +
         rect(0, 0, w, h, "#fff");
}

/// White to dark blue.
inline std::string shade(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto ch = [&](int from, int to) { return static_cast<int>(std::lround(from + (to - from) * t)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", ch(255, 8), ch(255, 48), ch(255, 107));
  return buf;
}

}  // namespace detail

inline std::string confusion_svg(const eval::Confusion& c, const std::string& title = "Confusion matrix") {
  using namespace detail;
  const double cell = 90, x0 = 110, y0 = 70;
  std::string s = open(420, 420);
  s += text(210, 30, title, "middle", 16);
  s += text(x0 + 1.5 * cell, y0 - 12, "Predicted");
  s += "<text x=\"30\" y=\"" + f(y0 + 1.5 * cell) + "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\" transform=\"rotate(-90 30 " +
       f(y0 + 1.5 * cell) + ")\">True</text>\n";
  for (int t = 0; t < 3; ++t) {
    const auto row = c.row_sum(t);
    s += text(x0 - 14, y0 + (t + 0.5) * cell + 4, "C" + std::to_string(t), "end");
    s += text(x0 + (t + 0.5) * cell, y0 + 3 * cell + 20, "C" + std::to_string(t));
    for (int p = 0; p < 3; ++p) {
      const auto n = c.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
      const double frac = row ? static_cast<double>(n) / static_cast<double>(row) : 0.0;
      s += rect(x0 + p * cell, y0 + t * cell, cell, cell, shade(frac), " stroke=\"#888\"");
      const std::string colour = frac > 0.5 ? "#fff" : "#000";
      s += "<text x=\"" + f(x0 + (p + 0.5) * cell) + "\" y=\"" + f(y0 + (t + 0.5) * cell) +
           "\" font-size=\"14\" text-anchor=\"middle\" font-family=\"sans-serif\" fill=\"" + colour + "\">" +
           std::to_string(n) + "</text>\n";
      s += "<text x=\"" + f(x0 + (p + 0.5) * cell) + "\" y=\"" + f(y0 + (t + 0.5) * cell + 18) +
           "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\" fill=\"" + colour + "\">" +
           format_fixed(100 * frac, 1) + "%</text>\n";
    }
  }
  s += text(210, 405, "accuracy " + format_fixed(100 * c.accuracy, 2) + "%");
  return s + "</svg>\n";
}

inline std::string histogram_svg(const eval::Localization& L, const std::string& title = "Position error") {
  using namespace detail;
  const double x0 = 60, y0 = 50, w = 480, h = 260;
  std::size_t peak = 1;
  for (auto n : L.histogram) peak = std::max(peak, n);
  std::string s = open(580, 370);
  s += text(290, 28, title, "middle", 16);
  s += line(x0, y0 + h, x0 + w, y0 + h);
  s += line(x0, y0, x0, y0 + h);
  const double bw = w / static_cast<double>(eval::kHistogramBins);
  for (std::size_t b = 0; b < eval::kHistogramBins; ++b) {
    const double bh = h * static_cast<double>(L.histogram[b]) / static_cast<double>(peak);
    s += rect(x0 + static_cast<double>(b) * bw + 1, y0 + h - bh, bw - 2, bh, "#3060a0");
  }
  for (int k = 0; k <= 6; ++k) {
    const double x = x0 + w * k / 6.0;
    s += line(x, y0 + h, x, y0 + h + 5);
    s += text(x, y0 + h + 18, format_fixed(eval::kHistogramLow + k, 0));
  }
  s += text(x0 + w / 2, y0 + h + 38, "error (m)");
  s += text(x0 - 8, y0 + 4, std::to_string(peak), "end");
  s += text(x0 - 8, y0 + h + 4, "0", "end");
  s += text(x0 + w, y0 - 8,
            "mean " + format_fixed(L.mean_m, 3) + " m, std " + format_fixed(L.std_m, 3) + " m, rmse " +
                format_fixed(L.rmse_m, 3) + " m, n=" + std::to_string(L.slots) + ", outside " +
                std::to_string(L.underflow + L.overflow),
            "end", 11);
  return s + "</svg>\n";
}

inline std::string sweep_svg(std::span<const eval::SweepPoint> pts, const std::string& title = "Accuracy vs VOA") {
  using namespace detail;
  const double x0 = 70, y0 = 50, w = 460, h = 250;
  std::string s = open(580, 360);
  s += text(290, 28, title, "middle", 16);
  s += line(x0, y0 + h, x0 + w, y0 + h);
  s += line(x0, y0, x0, y0 + h);
  double vmax = 12;
  double amin = 1.0;
  for (const auto& p : pts) {
    vmax = std::max(vmax, p.voa_db);
    amin = std::min(amin, p.accuracy);
  }
  const double lo = std::max(0.0, std::floor(amin * 10 - 1e-9) / 10);
  auto px = [&](double v) { return x0 + w * v / vmax; };
  auto py = [&](double a) { return y0 + h - h * (a - lo) / (1.0 - lo); };
  for (int k = 0; k <= 4; ++k) {
    const double a = lo + (1.0 - lo) * k / 4.0;
    s += line(x0 - 5, py(a), x0, py(a));
    s += text(x0 - 8, py(a) + 4, format_fixed(100 * a, 1), "end");
  }
  for (int k = 0; k <= 6; ++k) {
    const double v = vmax * k / 6.0;
    s += line(px(v), y0 + h, px(v), y0 + h + 5);
    s += text(px(v), y0 + h + 18, format_fixed(v, 0));
  }
  s += text(x0 + w / 2, y0 + h + 38, "VOA attenuation (dB)");
  if (!pts.empty()) {
    std::string path = "<polyline fill=\"none\" stroke=\"#c03020\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) path += (i ? " " : "") + f(px(pts[i].voa_db)) + "," + f(py(pts[i].accuracy));
    s += path + "\"/>\n";
    for (const auto& p : pts)
      s += "<circle cx=\"" + f(px(p.voa_db)) + "\" cy=\"" + f(py(p.accuracy)) + "\" r=\"3\" fill=\"#c03020\"/>\n";
  }
  s += "<text x=\"16\" y=\"" + f(y0 + h / 2) + "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\" transform=\"rotate(-90 16 " +
       f(y0 + h / 2) + ")\">accuracy (%)</text>\n";
  return s + "</svg>\n";
}

/// Plain-text comparison table; rows are printed in the given order.
inline std::string methods_table(std::span<const eval::MethodRow> rows) {
  std::size_t wn = 6;
  for (const auto& r : rows) wn = std::max(wn, r.name.size());
  auto pad = [](std::string s, std::size_t n, bool right) {
    if (s.size() >= n) return s;
    return right ? std::string(n - s.size(), ' ') + s : s + std::string(n - s.size(), ' ');
  };
  std::string out = pad("Method", wn, false) + "  " + pad("Accuracy (%)", 12, true) + "  " + pad("RMSE (m)", 8, true) + "\n";
  out += std::string(wn, '-') + "  " + std::string(12, '-') + "  " + std::string(8, '-') + "\n";
  for (const auto& r : rows)
    out += pad(r.name, wn, false) + "  " + pad(format_fixed(100 * r.accuracy, 2), 12, true) + "  " +
           pad(std::isfinite(r.rmse_m) ? format_fixed(r.rmse_m, 3) : "-", 8, true) + "\n";
  return out;
}

}  // namespace ponbranch::report
