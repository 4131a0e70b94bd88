// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal static SVG line charts for curve tables.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>

#include "shiftdet/eval/curves.hpp"

namespace shiftdet {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string svg_line_plot(const CurveTable& t, const std::string& title, const std::string& y_label) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (std::size_t i = 0; i < t.iteration.size(); ++i) {
    for (const auto& [name, col] : t.series) {
      if (!col[i] || !std::isfinite(*col[i])) continue;
      x0 = std::min(x0, double(t.iteration[i])), x1 = std::max(x1, double(t.iteration[i]));
      y0 = std::min(y0, *col[i]), y1 = std::max(y1, *col[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  char buf[128];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << svg_escape(title)
     << "</text>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#444\"/>\n",
                kLeft, kTop, pw, ph);
  os << buf;
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0, xv = x0 + (x1 - x0) * k / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.3g</text>\n", kLeft - 6,
                  py(yv) + 4, yv);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.0f</text>\n", px(xv),
                  kTop + ph + 18, xv);
    os << buf;
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10 << "\" text-anchor=\"middle\">iteration</text>\n";
  os << "<text transform=\"translate(16," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << svg_escape(y_label) << "</text>\n";

  int idx = 0;
  for (const auto& [name, col] : t.series) {
    const char* color = kColors[idx % 7];
    std::string path;
    bool pen_down = false;
    for (std::size_t i = 0; i < t.iteration.size(); ++i) {
      if (!col[i] || !std::isfinite(*col[i])) {
        pen_down = false;
        continue;
      }
      std::snprintf(buf, sizeof buf, "%c%.1f,%.1f ", pen_down ? 'L' : 'M', px(t.iteration[i]), py(*col[i]));
      path += buf;
      pen_down = true;
    }
    os << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    const double ly = kTop + 14 + 18 * idx;
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                  kW - kRight + 12, ly, kW - kRight + 32, ly, color);
    os << buf;
    os << "<text x=\"" << kW - kRight + 38 << "\" y=\"" << ly + 4 << "\">" << svg_escape(name) << "</text>\n";
    ++idx;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace shiftdet
