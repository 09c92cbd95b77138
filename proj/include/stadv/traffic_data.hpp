#pragma once

#include "stadv/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stadv {

struct Edge {
  Index from = 0;
  Index to = 0;
  double weight = 1.0;
};

// Undirected sensor graph with weights in [0,1]. Topology is fixed for the
// lifetime of the object.
class TrafficNetwork {
 public:
  TrafficNetwork() = default;
  // Each edge is stored in both directions; self-loops are dropped and
  // duplicate pairs keep the last weight seen.
  TrafficNetwork(Index n, const std::vector<Edge>& edges);

  Index node_count() const { return n_; }
  // Directed edge list (both directions of every undirected edge).
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Index>& degrees() const { return degrees_; }
  Index max_degree() const { return max_degree_; }
  const std::vector<std::vector<std::pair<Index, double>>>& neighbors() const { return adj_; }

  Eigen::MatrixXd adjacency() const;
  // Row-normalized (A + I): every row sums to 1 and every entry lies in [0,1].
  Eigen::MatrixXd aggregation() const;

 private:
  Index n_ = 0;
  std::vector<Edge> edges_;
  std::vector<Index> degrees_;
  std::vector<std::vector<std::pair<Index, double>>> adj_;
  Index max_degree_ = 0;
};

struct SpeedSeries {
  Index steps = 0;
  Index n = 0;
  RowMatrixXd values;  // steps x n, raw units
  double sampling_minutes = 5.0;
  std::vector<std::string> node_ids;
};

// Min-max scaler onto [0,1].
struct Normalizer {
  double min = 0.0;
  double max = 1.0;

  double range() const { return max - min; }

  template <typename Derived>
  auto normalize(const Eigen::MatrixBase<Derived>& x) const {
    return ((x.array() - min) / range()).matrix();
  }
  template <typename Derived>
  auto denormalize(const Eigen::MatrixBase<Derived>& x) const {
    return (x.array() * range() + min).matrix();
  }
  double normalize(double x) const { return (x - min) / range(); }
  double denormalize(double x) const { return x * range() + min; }
};

struct StateWindow {
  RowMatrixXd inputs;  // T x (n*c), normalized; node i owns columns [i*c, (i+1)*c)
  RowMatrixXd labels;  // tau x n, raw units
  Index anchor = 0;    // absolute index of the last input step
  Index features = 1;

  Index history() const { return inputs.rows(); }
  Index horizon() const { return labels.rows(); }
  Index nodes() const { return inputs.cols() / features; }
};

using WindowSpan = std::span<const StateWindow>;

// Chronological 70/10/20 partition of a window sequence. Windows are stored
// once; the three splits are views into the same storage.
class DatasetSplit {
 public:
  DatasetSplit() = default;
  DatasetSplit(std::vector<StateWindow> windows, Normalizer normalizer, std::size_t train_count,
               std::size_t validation_count);

  WindowSpan all() const { return windows_; }
  WindowSpan train() const { return all().subspan(0, train_); }
  WindowSpan validation() const { return all().subspan(train_, val_); }
  WindowSpan test() const { return all().subspan(train_ + val_); }
  std::size_t test_offset() const { return train_ + val_; }
  const Normalizer& normalizer() const { return normalizer_; }

  // Window whose inputs end `lag` steps before window `index`, if stored.
  const StateWindow* previous(std::size_t index, Index lag) const;

 private:
  std::vector<StateWindow> windows_;
  Normalizer normalizer_;
  std::size_t train_ = 0;
  std::size_t val_ = 0;
};

SpeedSeries load_speed_csv(const std::string& path);
TrafficNetwork load_graph_csv(const std::string& path, Index n);
void write_speed_csv(const std::string& path, const SpeedSeries& series);
void write_graph_csv(const std::string& path, const TrafficNetwork& graph);

struct SyntheticData {
  TrafficNetwork graph;
  SpeedSeries series;
  Eigen::MatrixXd positions;  // n x 2 node coordinates in the unit square
};

// Random geometric graph plus diurnal speeds; a pure function of its arguments.
SyntheticData generate_synthetic(Index n, Index steps, std::uint64_t seed);

// Fits min/max on the first floor(train_fraction * steps) rows and scales the
// whole series, clamping to [0,1].
std::pair<RowMatrixXd, Normalizer> normalize(const SpeedSeries& series, double train_fraction = 0.7);

std::vector<StateWindow> make_windows(const SpeedSeries& series, const Normalizer& normalizer,
                                      Index history, Index horizon);

DatasetSplit chronological_split(std::vector<StateWindow> windows, const Normalizer& normalizer);

std::vector<WindowSpan> batch(WindowSpan windows, std::size_t batch_size);

// Convenience: normalize, window and split in one call.
DatasetSplit prepare_dataset(const SpeedSeries& series, Index history, Index horizon);

}  // namespace stadv
