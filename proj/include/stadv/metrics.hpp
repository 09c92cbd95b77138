#pragma once

// Attack-effect metrics over stacked forecasts. Inputs are (m*tau) x n
// matrices in raw speed units; every metric averages over all m*tau*n
// entries.

#include "stadv/tensor.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stadv {

namespace detail {
template <typename A, typename B>
void check_same_shape(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
  if (a.size() == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}
}  // namespace detail

template <typename A, typename B>
double mean_absolute_error(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  detail::check_same_shape(a, b, "mae");
  return (a - b).cwiseAbs().mean();
}

template <typename A, typename B>
double root_mean_squared_error(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  detail::check_same_shape(a, b, "rmse");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

// Attacked predictions against ground truth.
template <typename A, typename B>
double g_mae(const Eigen::MatrixBase<A>& attacked, const Eigen::MatrixBase<B>& truth) {
  return mean_absolute_error(attacked, truth);
}
template <typename A, typename B>
double g_rmse(const Eigen::MatrixBase<A>& attacked, const Eigen::MatrixBase<B>& truth) {
  return root_mean_squared_error(attacked, truth);
}
// Attacked predictions against clean predictions.
template <typename A, typename B>
double l_mae(const Eigen::MatrixBase<A>& attacked, const Eigen::MatrixBase<B>& clean) {
  return mean_absolute_error(attacked, clean);
}
template <typename A, typename B>
double l_rmse(const Eigen::MatrixBase<A>& attacked, const Eigen::MatrixBase<B>& clean) {
  return root_mean_squared_error(attacked, clean);
}

// 100 * (1 - clean / attacked).
double degradation_pct(double clean, double attacked);

struct MetricsReport {
  double g_mae = 0.0;
  double l_mae = 0.0;
  double g_rmse = 0.0;
  double l_rmse = 0.0;
  double clean_g_mae = 0.0;
  Index samples = 0;
  Index nodes = 0;
  std::optional<double> degradation_pct;  // of G-MAE relative to clean
};

// All four metrics plus G-MAE degradation; inputs are stacked (m*tau) x n.
MetricsReport evaluate_attack(const RowMatrixXd& clean, const RowMatrixXd& attacked, const RowMatrixXd& truth,
                              Index horizon);

struct ComparisonRow {
  std::string method;
  MetricsReport report;
};

// Ordered by G-MAE descending, then method name.
std::vector<ComparisonRow> compare(const std::map<std::string, MetricsReport>& reports);

// method,g_mae,l_mae,g_rmse,l_rmse,degradation_pct
std::string render_csv(const std::vector<ComparisonRow>& rows);
std::string render_table(const std::vector<ComparisonRow>& rows);

// Parses the CSV produced by render_csv.
std::vector<ComparisonRow> parse_report_csv(const std::string& text);

}  // namespace stadv
