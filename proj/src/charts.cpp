#include "fedccea/charts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace fedccea::charts {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 56.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
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

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double margin = 0.05 * (hi - lo);
  lo -= margin;
  hi += margin;
}

void axes(std::ostringstream& out, const Frame& f, const std::string& title, const std::string& xl,
          const std::string& yl, bool x_ticks) {
  out << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(title) << "</text>\n";
  out << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kHeight - kBottom) << "\" x2=\""
      << num(kWidth - kRight) << "\" y2=\"" << num(kHeight - kBottom) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft)
      << "\" y2=\"" << num(kHeight - kBottom) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = f.y0 + (f.y1 - f.y0) * k / 4.0;
    out << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(f.py(y) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << tick(y) << "</text>\n";
    if (x_ticks) {
      const double x = f.x0 + (f.x1 - f.x0) * k / 4.0;
      out << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(kHeight - kBottom + 16)
          << "\" text-anchor=\"middle\" font-size=\"11\">" << tick(x) << "</text>\n";
    }
  }
  out << "<text x=\"" << num((kLeft + kWidth - kRight) / 2) << "\" y=\"" << num(kHeight - 12)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(xl) << "</text>\n";
  out << "<text x=\"16\" y=\"" << num((kTop + kHeight - kBottom) / 2)
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << num((kTop + kHeight - kBottom) / 2) << ")\">" << escape(yl) << "</text>\n";
}

void legend(std::ostringstream& out, std::size_t k, const std::string& label, bool dashed) {
  const double y = kTop + 16.0 * static_cast<double>(k);
  const double x = kWidth - kRight + 12;
  out << "<line x1=\"" << num(x) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x + 20) << "\" y2=\""
      << num(y) << "\" stroke=\"" << kPalette[k % 8] << "\" stroke-width=\"2\""
      << (dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>\n";
  out << "<text x=\"" << num(x + 26) << "\" y=\"" << num(y + 4) << "\" font-size=\"11\">"
      << escape(label) << "</text>\n";
}

std::string header() {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return out.str();
}

}  // namespace

std::string render_svg(const LineChart& chart) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : chart.series) {
    for (const auto& [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  pad_range(x0, x1);
  pad_range(y0, y1);
  const Frame f{x0, x1, y0, y1};

  std::ostringstream out;
  out << header();
  axes(out, f, chart.title, chart.x_label, chart.y_label, true);
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    out << "<polyline fill=\"none\" stroke=\"" << kPalette[k % 8] << "\" stroke-width=\"2\""
        << (s.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      out << (i ? " " : "") << num(f.px(s.points[i].first)) << ',' << num(f.py(s.points[i].second));
    }
    out << "\"/>\n";
    legend(out, k, s.label, s.dashed);
  }
  out << "</svg>\n";
  return out.str();
}

std::string render_svg(const BarChart& chart) {
  double y0 = 0.0, y1 = 0.0;
  for (const auto& [label, values] : chart.series) {
    for (double v : values) {
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  }
  if (chart.reference) y1 = std::max(y1, *chart.reference);
  if (!(y1 > y0)) y1 = y0 + 1.0;
  y1 += 0.05 * (y1 - y0);
  const double groups = std::max<double>(1.0, static_cast<double>(chart.categories.size()));
  const Frame f{0.0, groups, y0, y1};

  std::ostringstream out;
  out << header();
  axes(out, f, chart.title, chart.x_label, chart.y_label, false);
  const double slot = f.px(1.0) - f.px(0.0);
  const double bars = std::max<double>(1.0, static_cast<double>(chart.series.size()));
  const double bar_width = 0.8 * slot / bars;
  for (std::size_t g = 0; g < chart.categories.size(); ++g) {
    out << "<text x=\"" << num(f.px(static_cast<double>(g) + 0.5)) << "\" y=\""
        << num(kHeight - kBottom + 16) << "\" text-anchor=\"middle\" font-size=\"11\">"
        << escape(chart.categories[g]) << "</text>\n";
  }
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& values = chart.series[k].second;
    for (std::size_t g = 0; g < values.size() && g < chart.categories.size(); ++g) {
      const double left = f.px(static_cast<double>(g)) + 0.1 * slot + bar_width * static_cast<double>(k);
      const double top = f.py(std::max(values[g], 0.0));
      const double bottom = f.py(std::min(values[g], 0.0));
      out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(bar_width)
          << "\" height=\"" << num(bottom - top) << "\" fill=\"" << kPalette[k % 8] << "\"/>\n";
    }
    legend(out, k, chart.series[k].first, false);
  }
  if (chart.reference) {
    out << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(f.py(*chart.reference)) << "\" x2=\""
        << num(kWidth - kRight) << "\" y2=\"" << num(f.py(*chart.reference))
        << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace fedccea::charts
