#include "stadv/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace stadv {

double degradation_pct(double clean, double attacked) {
  if (!(attacked > 0)) throw std::domain_error("degradation_pct: attacked metric must be positive");
  return 100.0 * (1.0 - clean / attacked);
}

MetricsReport evaluate_attack(const RowMatrixXd& clean, const RowMatrixXd& attacked, const RowMatrixXd& truth,
                              Index horizon) {
  if (horizon < 1 || truth.rows() % horizon != 0) {
    throw std::invalid_argument("evaluate_attack: rows are not a multiple of the horizon");
  }
  MetricsReport r;
  r.g_mae = g_mae(attacked, truth);
  r.g_rmse = g_rmse(attacked, truth);
  r.l_mae = l_mae(attacked, clean);
  r.l_rmse = l_rmse(attacked, clean);
  r.clean_g_mae = g_mae(clean, truth);
  r.samples = truth.rows() / horizon;
  r.nodes = truth.cols();
  if (r.g_mae > 0) r.degradation_pct = degradation_pct(r.clean_g_mae, r.g_mae);
  return r;
}

std::vector<ComparisonRow> compare(const std::map<std::string, MetricsReport>& reports) {
  std::vector<ComparisonRow> rows;
  rows.reserve(reports.size());
  for (const auto& [name, rep] : reports) rows.push_back({name, rep});
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ComparisonRow& a, const ComparisonRow& b) { return a.report.g_mae > b.report.g_mae; });
  return rows;
}

std::string render_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "method,g_mae,l_mae,g_rmse,l_rmse,degradation_pct\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.method << ',' << r.report.g_mae << ',' << r.report.l_mae << ',' << r.report.g_rmse << ','
        << r.report.l_rmse << ',';
    if (r.report.degradation_pct) out << *r.report.degradation_pct;
    out << '\n';
  }
  return out.str();
}

std::string render_table(const std::vector<ComparisonRow>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "method" << std::right;
  for (const char* h : {"G-MAE", "L-MAE", "G-RMSE", "L-RMSE", "degr%"}) out << std::setw(10) << h;
  out << '\n' << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(width)) << r.method << std::right << std::setw(10)
        << r.report.g_mae << std::setw(10) << r.report.l_mae << std::setw(10) << r.report.g_rmse
        << std::setw(10) << r.report.l_rmse;
    if (r.report.degradation_pct) {
      out << std::setw(10) << std::setprecision(2) << *r.report.degradation_pct << std::setprecision(4);
    } else {
      out << std::setw(10) << "-";
    }
    out << '\n';
  }
  return out.str();
}

std::vector<ComparisonRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("method,g_mae", 0) != 0) {
    throw std::runtime_error("report CSV: missing header");
  }
  std::vector<ComparisonRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() == 5) f.emplace_back();
    if (f.size() != 6) throw std::runtime_error("report CSV line " + std::to_string(lineno) + ": expected 6 fields");
    ComparisonRow r;
    r.method = f[0];
    try {
      r.report.g_mae = std::stod(f[1]);
      r.report.l_mae = std::stod(f[2]);
      r.report.g_rmse = std::stod(f[3]);
      r.report.l_rmse = std::stod(f[4]);
      if (!f[5].empty()) r.report.degradation_pct = std::stod(f[5]);
    } catch (const std::exception&) {
      throw std::runtime_error("report CSV line " + std::to_string(lineno) + ": malformed number");
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw std::runtime_error("report CSV: no rows");
  return rows;
}

}  // namespace stadv
