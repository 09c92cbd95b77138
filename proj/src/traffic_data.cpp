#include "stadv/traffic_data.hpp"

#include "stadv/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace stadv {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<double> parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
  if (lower == "nan" || lower == "na" || lower == "null") return std::nullopt;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error("not a number: '" + s + "'");
  }
  if (used != s.size()) throw std::runtime_error("not a number: '" + s + "'");
  return v;
}

}  // namespace

TrafficNetwork::TrafficNetwork(Index n, const std::vector<Edge>& edges) : n_(n) {
  if (n < 0) throw std::invalid_argument("TrafficNetwork: negative node count");
  std::map<std::pair<Index, Index>, double> pairs;
  for (const Edge& e : edges) {
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n) {
      throw std::invalid_argument("TrafficNetwork: node id out of range in edge (" +
                                  std::to_string(e.from) + "," + std::to_string(e.to) + ")");
    }
    if (!(e.weight >= 0.0 && e.weight <= 1.0)) {
      throw std::invalid_argument("TrafficNetwork: weight outside [0,1]");
    }
    if (e.from == e.to) continue;
    pairs[{std::min(e.from, e.to), std::max(e.from, e.to)}] = e.weight;
  }
  adj_.assign(static_cast<std::size_t>(n), {});
  degrees_.assign(static_cast<std::size_t>(n), 0);
  for (const auto& [key, w] : pairs) {
    const auto [a, b] = key;
    edges_.push_back({a, b, w});
    edges_.push_back({b, a, w});
    adj_[a].emplace_back(b, w);
    adj_[b].emplace_back(a, w);
    ++degrees_[a];
    ++degrees_[b];
  }
  for (auto& row : adj_) std::sort(row.begin(), row.end());
  max_degree_ = degrees_.empty() ? 0 : *std::max_element(degrees_.begin(), degrees_.end());
}

Eigen::MatrixXd TrafficNetwork::adjacency() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_, n_);
  for (const Edge& e : edges_) a(e.from, e.to) = e.weight;
  return a;
}

Eigen::MatrixXd TrafficNetwork::aggregation() const {
  Eigen::MatrixXd a = adjacency() + Eigen::MatrixXd::Identity(n_, n_);
  const Eigen::VectorXd rows = a.rowwise().sum();
  return rows.cwiseInverse().asDiagonal() * a;
}

DatasetSplit::DatasetSplit(std::vector<StateWindow> windows, Normalizer normalizer,
                           std::size_t train_count, std::size_t validation_count)
    : windows_(std::move(windows)),
      normalizer_(normalizer),
      train_(train_count),
      val_(validation_count) {
  if (train_ + val_ > windows_.size()) throw std::invalid_argument("DatasetSplit: counts exceed size");
}

const StateWindow* DatasetSplit::previous(std::size_t index, Index lag) const {
  if (index >= windows_.size() || lag < 0 || static_cast<std::size_t>(lag) > index) return nullptr;
  const StateWindow& w = windows_[index - static_cast<std::size_t>(lag)];
  if (w.anchor != windows_[index].anchor - lag) return nullptr;
  return &w;
}

SpeedSeries load_speed_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open speed file: " + path);
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw std::runtime_error("speed file is empty: " + path);
  }
  SpeedSeries s;
  for (auto& id : split_csv_line(line)) s.node_ids.push_back(trim(id));
  s.n = static_cast<Index>(s.node_ids.size());

  std::vector<std::vector<std::optional<double>>> rows;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<Index>(cells.size()) != s.n) {
      throw std::runtime_error("ragged row " + std::to_string(row_no) + ": expected " +
                               std::to_string(s.n) + " cells, got " + std::to_string(cells.size()));
    }
    std::vector<std::optional<double>> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      auto v = parse_number(c);
      if (v && *v < 0.0) {
        throw std::runtime_error("negative speed on row " + std::to_string(row_no));
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("speed file has no data rows: " + path);

  s.steps = static_cast<Index>(rows.size());
  s.values.resize(s.steps, s.n);
  for (Index j = 0; j < s.n; ++j) {
    // Leading gaps take the first observation; later gaps carry the last one forward.
    std::optional<double> last;
    for (Index t = 0; t < s.steps && !last; ++t) last = rows[t][j];
    if (!last) throw std::runtime_error("column " + s.node_ids[j] + " has no observations");
    for (Index t = 0; t < s.steps; ++t) {
      if (rows[t][j]) last = rows[t][j];
      s.values(t, j) = *last;
    }
  }
  return s;
}

TrafficNetwork load_graph_csv(const std::string& path, Index n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file: " + path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) {
      throw std::runtime_error("graph row " + std::to_string(row_no) + ": expected from,to,weight");
    }
    double from = 0, to = 0, w = 0;
    try {
      from = parse_number(cells[0]).value();
      to = parse_number(cells[1]).value();
      w = parse_number(cells[2]).value();
    } catch (const std::exception&) {
      if (row_no == 1) continue;  // header
      throw std::runtime_error("graph row " + std::to_string(row_no) + ": malformed");
    }
    if (from < 0 || to < 0 || from >= static_cast<double>(n) || to >= static_cast<double>(n) ||
        from != std::floor(from) || to != std::floor(to)) {
      throw std::runtime_error("graph row " + std::to_string(row_no) + ": node id out of range");
    }
    if (!(w >= 0.0 && w <= 1.0)) {
      throw std::runtime_error("graph row " + std::to_string(row_no) + ": weight outside [0,1]");
    }
    edges.push_back({static_cast<Index>(from), static_cast<Index>(to), w});
  }
  return TrafficNetwork(n, edges);
}

void write_speed_csv(const std::string& path, const SpeedSeries& series) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (Index j = 0; j < series.n; ++j) {
    if (j) out << ',';
    out << (j < static_cast<Index>(series.node_ids.size()) ? series.node_ids[j] : std::to_string(j));
  }
  out << '\n' << std::setprecision(17);
  for (Index t = 0; t < series.steps; ++t) {
    for (Index j = 0; j < series.n; ++j) {
      if (j) out << ',';
      out << series.values(t, j);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_graph_csv(const std::string& path, const TrafficNetwork& graph) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17);
  for (const Edge& e : graph.edges()) {
    if (e.from < e.to) out << e.from << ',' << e.to << ',' << e.weight << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

SyntheticData generate_synthetic(Index n, Index steps, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("generate_synthetic: n must be at least 2");
  if (steps < 24) throw std::invalid_argument("generate_synthetic: steps must be at least 24");
  constexpr double kBase = 60.0;
  constexpr double kAmplitude = 15.0;
  constexpr double kNoise = 2.0;
  constexpr double kStepsPerDay = 288.0;  // 5-minute sampling

  Rng graph_rng = make_rng(seed, "data.graph");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd pos(n, 2);
  for (Index i = 0; i < n; ++i) {
    pos(i, 0) = unit(graph_rng);
    pos(i, 1) = unit(graph_rng);
  }
  const double radius = 1.5 / std::sqrt(static_cast<double>(n));
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d = (pos.row(i) - pos.row(j)).norm();
      if (d < radius) edges.push_back({i, j, std::exp(-(d / radius) * (d / radius))});
    }
  }
  SyntheticData out;
  out.graph = TrafficNetwork(n, edges);
  out.positions = pos;

  // Phase varies smoothly over space so nearby sensors peak together.
  Eigen::VectorXd phase(n);
  for (Index i = 0; i < n; ++i) phase(i) = std::numbers::pi * (pos(i, 0) + pos(i, 1));

  const Eigen::MatrixXd agg = out.graph.aggregation();
  Rng noise_rng = make_rng(seed, "data.noise");
  std::normal_distribution<double> noise(0.0, kNoise);
  SpeedSeries& s = out.series;
  s.steps = steps;
  s.n = n;
  s.values.resize(steps, n);
  for (Index i = 0; i < n; ++i) s.node_ids.push_back("s" + std::to_string(i));
  Eigen::VectorXd diurnal(n);
  for (Index t = 0; t < steps; ++t) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / kStepsPerDay;
    for (Index i = 0; i < n; ++i) diurnal(i) = kBase + kAmplitude * std::sin(angle + phase(i));
    const Eigen::VectorXd smoothed = agg * diurnal;
    for (Index i = 0; i < n; ++i) s.values(t, i) = std::max(0.0, smoothed(i) + noise(noise_rng));
  }
  return out;
}

std::pair<RowMatrixXd, Normalizer> normalize(const SpeedSeries& series, double train_fraction) {
  if (series.steps == 0 || series.n == 0) throw std::invalid_argument("normalize: empty series");
  const Index fit_rows =
      std::max<Index>(1, static_cast<Index>(std::floor(train_fraction * static_cast<double>(series.steps))));
  const auto fit = series.values.topRows(std::min(fit_rows, series.steps));
  Normalizer norm{fit.minCoeff(), fit.maxCoeff()};
  if (!(norm.max > norm.min)) throw std::invalid_argument("normalize: constant series (min == max)");
  RowMatrixXd scaled = norm.normalize(series.values).cwiseMax(0.0).cwiseMin(1.0);
  return {std::move(scaled), norm};
}

std::vector<StateWindow> make_windows(const SpeedSeries& series, const Normalizer& normalizer,
                                      Index history, Index horizon) {
  if (history < 1 || horizon < 1) throw std::invalid_argument("make_windows: T and tau must be >= 1");
  if (series.steps < history + horizon) {
    throw std::invalid_argument("make_windows: series has " + std::to_string(series.steps) +
                                " steps, need at least T + tau = " +
                                std::to_string(history + horizon));
  }
  const RowMatrixXd scaled = normalizer.normalize(series.values).cwiseMax(0.0).cwiseMin(1.0);
  const Index count = series.steps - history - horizon + 1;
  std::vector<StateWindow> windows;
  windows.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) {
    StateWindow w;
    w.inputs = scaled.middleRows(k, history);
    w.labels = series.values.middleRows(k + history, horizon);
    w.anchor = k + history - 1;
    windows.push_back(std::move(w));
  }
  return windows;
}

DatasetSplit chronological_split(std::vector<StateWindow> windows, const Normalizer& normalizer) {
  const std::size_t m = windows.size();
  if (m < 10) throw std::invalid_argument("chronological_split: need at least 10 windows");
  const std::size_t train = (m * 7) / 10;
  const std::size_t val = m / 10;
  return DatasetSplit(std::move(windows), normalizer, train, val);
}

std::vector<WindowSpan> batch(WindowSpan windows, std::size_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch: size must be >= 1");
  std::vector<WindowSpan> out;
  for (std::size_t at = 0; at < windows.size(); at += batch_size) {
    out.push_back(windows.subspan(at, std::min(batch_size, windows.size() - at)));
  }
  return out;
}

DatasetSplit prepare_dataset(const SpeedSeries& series, Index history, Index horizon) {
  auto [scaled, norm] = normalize(series);
  (void)scaled;
  return chronological_split(make_windows(series, norm, history, horizon), norm);
}

}  // namespace stadv
