#include "stadv/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace stadv {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 55;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

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

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Round step from the 1-2-5 family giving about `target` intervals.
double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10 * mag;
}

struct Range {
  double lo, hi;
};

Range padded(double lo, double hi) {
  if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
    const double pad = std::max(1e-3, std::abs(hi) * 0.1);
    return {lo - pad, hi + pad};
  }
  return {lo, hi};
}

}  // namespace

std::string render_svg(const Chart& chart) {
  if (chart.series.empty()) throw std::invalid_argument("plot: no series");
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size() || s.x.empty()) throw std::invalid_argument("plot: series '" + s.name + "' is empty or ragged");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) throw std::invalid_argument("plot: non-finite point in '" + s.name + "'");
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  const Range xr = padded(x0, x1);
  Range yr = padded(std::min(0.0, y0), y1);
  const double ystep = nice_step(yr.hi - yr.lo, 5);
  yr.hi = std::ceil(yr.hi / ystep) * ystep;
  yr.lo = std::floor(yr.lo / ystep) * ystep;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return kTop + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(chart.title)
    << "</text>\n";
  // Grid and ticks.
  for (double y = yr.lo; y <= yr.hi + ystep * 1e-9; y += ystep) {
    o << "<line x1=\"" << kLeft << "\" y1=\"" << py(y) << "\" x2=\"" << kLeft + pw << "\" y2=\"" << py(y)
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << fmt(y) << "</text>\n";
  }
  const double xstep = nice_step(xr.hi - xr.lo, 6);
  for (double x = std::ceil(xr.lo / xstep) * xstep; x <= xr.hi + xstep * 1e-9; x += xstep) {
    o << "<line x1=\"" << px(x) << "\" y1=\"" << kTop + ph << "\" x2=\"" << px(x) << "\" y2=\"" << kTop + ph + 5
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << px(x) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << fmt(x) << "</text>\n";
  }
  o << "<polyline points=\"" << kLeft << ',' << kTop << ' ' << kLeft << ',' << kTop + ph << ' ' << kLeft + pw << ','
    << kTop + ph << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
    << escape(chart.x_label) << "</text>\n";
  o << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(chart.y_label) << "</text>\n";
  // Series and legend.
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const Series& s = chart.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << px(s.x[i]) << ',' << py(s.y[i]);
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 10 + 18 * static_cast<double>(k);
    o << "<line x1=\"" << kLeft + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 32 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << kLeft + pw + 38 << "\" y=\"" << ly + 4 << "\">" << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::optional<double> trailing_number(const std::string& stem) {
  static const std::regex re(R"(([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)$)");
  std::smatch m;
  if (!std::regex_search(stem, m, re)) return std::nullopt;
  return std::stod(m[1].str());
}

std::vector<std::pair<std::string, Chart>> sweep_charts(std::vector<SweepPoint> points, const std::string& x_label) {
  if (points.empty()) throw std::invalid_argument("plot: no reports");
  std::stable_sort(points.begin(), points.end(), [](const SweepPoint& a, const SweepPoint& b) { return a.x < b.x; });
  struct Metric {
    const char* key;
    const char* label;
    double MetricsReport::*field;
  };
  const Metric metrics[] = {{"g_mae", "G-MAE", &MetricsReport::g_mae},
                            {"l_mae", "L-MAE", &MetricsReport::l_mae},
                            {"g_rmse", "G-RMSE", &MetricsReport::g_rmse},
                            {"l_rmse", "L-RMSE", &MetricsReport::l_rmse}};
  std::vector<std::pair<std::string, Chart>> out;
  for (const Metric& m : metrics) {
    Chart c;
    c.title = std::string(m.label) + " vs " + x_label;
    c.x_label = x_label;
    c.y_label = m.label;
    std::map<std::string, std::size_t> index;
    for (const SweepPoint& p : points) {
      for (const ComparisonRow& row : p.rows) {
        auto [it, fresh] = index.emplace(row.method, c.series.size());
        if (fresh) c.series.push_back({row.method, {}, {}});
        Series& s = c.series[it->second];
        s.x.push_back(p.x);
        s.y.push_back(row.report.*m.field);
      }
    }
    if (c.series.empty()) throw std::invalid_argument("plot: reports contain no rows");
    out.emplace_back(m.key, std::move(c));
  }
  return out;
}

}  // namespace stadv
