#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedccea::charts {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
  bool dashed = false;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

// Grouped bars: one group per category, one bar per series in each group.
struct BarChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> categories;
  std::vector<std::pair<std::string, std::vector<double>>> series;
  // Optional horizontal reference line (e.g. the equal-share level).
  std::optional<double> reference;
};

std::string render_svg(const LineChart& chart);
std::string render_svg(const BarChart& chart);

}  // namespace fedccea::charts
