#pragma once

// Minimal SVG line charts for metric sweeps: axes, ticks, one polyline per
// series and a legend. No external dependencies.

#include "stadv/metrics.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stadv {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

std::string render_svg(const Chart& chart);

// One sweep point: a parsed report CSV and its x coordinate.
struct SweepPoint {
  double x = 0.0;
  std::vector<ComparisonRow> rows;
};

// Number at the end of a file stem ("eps_0.3" -> 0.3), if any.
std::optional<double> trailing_number(const std::string& stem);

// One chart per metric (g_mae, l_mae, g_rmse, l_rmse); each method in the
// reports becomes a series ordered by x.
std::vector<std::pair<std::string, Chart>> sweep_charts(std::vector<SweepPoint> points, const std::string& x_label);

}  // namespace stadv
