#pragma once

// Minimal static line plots written as self-contained SVG.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "stablerelu/errors.hpp"

namespace stablerelu::io {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool markers = false;
  bool line = true;
  bool dashed = false;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  double width = 640;
  double height = 420;
};

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return colors[i % 8];
}

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::vector<double> nice_ticks(double lo, double hi, int target) {
  const double span = hi - lo;
  if (!(span > 0.0)) return {lo};
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) {
    out.push_back(std::fabs(t) < 1e-12 * span ? 0.0 : t);
  }
  return out;
}

}  // namespace detail

inline std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series) {
  const double ml = 70, mr = 20, mt = 36, mb = 50;
  const double pw = spec.width - ml - mr, ph = spec.height - mt - mb;
  auto tx = [&](double v) { return spec.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return spec.log_y ? std::log10(v) : v; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      const double a = tx(s.x[i]), b = ty(s.y[i]);
      if (!std::isfinite(a) || !std::isfinite(b)) continue;
      x0 = std::min(x0, a);
      x1 = std::max(x1, a);
      y0 = std::min(y0, b);
      y1 = std::max(y1, b);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x0 -= 0.5, x1 += 0.5;
  if (y1 <= y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double a) { return ml + (a - x0) / (x1 - x0) * pw; };
  auto py = [&](double b) { return mt + (1.0 - (b - y0) / (y1 - y0)) * ph; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(spec.width) +
         "\" height=\"" + detail::num(spec.height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + detail::num(spec.width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" +
         detail::escape(spec.title) + "</text>\n";
  out += "<rect x=\"" + detail::num(ml) + "\" y=\"" + detail::num(mt) + "\" width=\"" + detail::num(pw) +
         "\" height=\"" + detail::num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : detail::nice_ticks(x0, x1, 6)) {
    const double p = px(t);
    out += "<line x1=\"" + detail::num(p) + "\" y1=\"" + detail::num(mt + ph) + "\" x2=\"" + detail::num(p) +
           "\" y2=\"" + detail::num(mt + ph + 4) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + detail::num(p) + "\" y=\"" + detail::num(mt + ph + 16) +
           "\" text-anchor=\"middle\">" + detail::tick_label(spec.log_x ? std::pow(10.0, t) : t) + "</text>\n";
  }
  for (double t : detail::nice_ticks(y0, y1, 5)) {
    const double p = py(t);
    out += "<line x1=\"" + detail::num(ml - 4) + "\" y1=\"" + detail::num(p) + "\" x2=\"" + detail::num(ml) +
           "\" y2=\"" + detail::num(p) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + detail::num(ml - 6) + "\" y=\"" + detail::num(p + 4) + "\" text-anchor=\"end\">" +
           detail::tick_label(spec.log_y ? std::pow(10.0, t) : t) + "</text>\n";
  }
  out += "<text x=\"" + detail::num(ml + pw / 2) + "\" y=\"" + detail::num(spec.height - 12) +
         "\" text-anchor=\"middle\">" + detail::escape(spec.x_label) + "</text>\n";
  out += "<text transform=\"translate(16," + detail::num(mt + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + detail::escape(spec.y_label) + "</text>\n";

  double legend_y = mt + 14;
  for (const auto& s : series) {
    std::string pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      const double a = tx(s.x[i]), b = ty(s.y[i]);
      if (!std::isfinite(a) || !std::isfinite(b)) continue;
      pts += detail::num(px(a)) + "," + detail::num(py(b)) + " ";
      if (s.markers) {
        out += "<circle cx=\"" + detail::num(px(a)) + "\" cy=\"" + detail::num(py(b)) +
               "\" r=\"2.5\" fill=\"" + s.color + "\"/>\n";
      }
    }
    if (s.line && !pts.empty()) {
      out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.4\"" +
             (s.dashed ? " stroke-dasharray=\"5,3\"" : "") + " points=\"" + pts + "\"/>\n";
    }
    if (!s.label.empty()) {
      out += "<line x1=\"" + detail::num(ml + pw - 130) + "\" y1=\"" + detail::num(legend_y - 4) + "\" x2=\"" +
             detail::num(ml + pw - 110) + "\" y2=\"" + detail::num(legend_y - 4) + "\" stroke=\"" + s.color +
             "\" stroke-width=\"2\"/>\n";
      out += "<text x=\"" + detail::num(ml + pw - 105) + "\" y=\"" + detail::num(legend_y) + "\">" +
             detail::escape(s.label) + "</text>\n";
      legend_y += 14;
    }
  }
  out += "</svg>\n";
  return out;
}

inline void save_svg(const std::string& path, const PlotSpec& spec,
                     const std::vector<Series>& series) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kMissingFile, "cannot write " + path);
  f << render_svg(spec, series);
}

}  // namespace stablerelu::io
