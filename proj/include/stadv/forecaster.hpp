#pragma once

// Differentiable spatiotemporal forecaster: per-node linear causal temporal
// convolutions, a readout collapsing the T steps into a hidden vector,
// L graph-convolution layers
//   Z_i^(k+1) = act( sum_{j in N(i) + i} e_ij Z_j^(k) W^(k) )
// over the row-normalized adjacency with self-loops, and a linear head that
// sees the final graph embedding together with the readout (skip path) plus
// learned per-step multiples of the last observation and of its
// neighbourhood average (level path). A gated clip bounds how far a node's
// last value may stray from its neighbours before it enters the level path.

#include "stadv/autodiff.hpp"
#include "stadv/traffic_data.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace stadv {

enum class Activation { kRelu, kTanh, kSigmoid };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

struct ModelConfig {
  Index nodes = 0;
  Index history = 12;  // T
  Index horizon = 12;  // tau
  Index features = 1;  // c
  Index temporal_layers = 2;
  Index temporal_channels = 4;
  Index kernel = 3;
  Index hidden = 16;
  Index graph_layers = 2;  // L
  Activation activation = Activation::kRelu;
  bool skip = true;
  bool relative_inputs = true;  // encoder sees offsets from the last observation
  bool level_skip = true;       // head adds learned multiples of the last observation
  double level_clip = 0.15;     // gated clip of last - neighbours' average; 0 disables
};

struct Parameter {
  std::string name;
  RowMatrixXd value;
};

struct STModel {
  ModelConfig config;
  Eigen::MatrixXd aggregation;  // e_ij, nodes x nodes
  std::vector<Parameter> params;
  std::string defense = "none";

  RowMatrixXd& param(const std::string& name);
  const RowMatrixXd& param(const std::string& name) const;
  // Lipschitz constant of the activation (1 for all supported choices).
  double activation_lipschitz() const { return 1.0; }
};

// Glorot-uniform weights, zero biases; deterministic per seed.
STModel make_model(const ModelConfig& config, const TrafficNetwork& graph, std::uint64_t seed);
// All weights and biases zero.
STModel make_zero_model(const ModelConfig& config, const TrafficNetwork& graph);

// Records the forward pass for `batch` windows on one tape. `input` is
// (T*batch*n) x c with rows ordered (time, sample, node); `params` mirrors
// model.params. Returns (batch*n) x tau with rows ordered (sample, node).
ad::Var record_forward(ad::Tape<double>& tape, const STModel& model, ad::Var input, Index batch,
                       const std::vector<ad::Var>& params);

// tau x n normalized forecast.
RowMatrixXd predict(const STModel& model, const RowMatrixXd& inputs);
std::vector<RowMatrixXd> predict_batch(const STModel& model, std::span<const RowMatrixXd> inputs);

struct LossGrad {
  double loss = 0.0;
  RowMatrixXd forecast;              // tau x n
  RowMatrixXd input_grad;            // T x (n*c), empty unless requested
  std::vector<RowMatrixXd> param_grads;  // empty unless requested
};

// MAE between the forecast and `target` (tau x n, normalized units).
LossGrad mae_loss_grad(const STModel& model, const RowMatrixXd& inputs, const RowMatrixXd& target,
                       bool want_input_grad, bool want_param_grads);
double mae_loss(const STModel& model, const RowMatrixXd& inputs, const RowMatrixXd& target);

struct BatchLossGrad {
  std::vector<double> losses;
  std::vector<RowMatrixXd> forecasts;
  std::vector<RowMatrixXd> input_grads;  // gradient of each sample's own loss
  std::vector<RowMatrixXd> param_grads;  // gradient of the summed per-sample losses
};

BatchLossGrad mae_loss_grad_batch(const STModel& model, std::span<const RowMatrixXd> inputs,
                                  std::span<const RowMatrixXd> targets, bool want_input_grad,
                                  bool want_param_grads);

// Per-sample attack objective: loss values and gradients with respect to the
// inputs for a batch of (inputs, normalized labels) pairs.
struct InputGradients {
  std::vector<double> losses;
  std::vector<RowMatrixXd> grads;
};
using InputGradientFn =
    std::function<InputGradients(std::span<const RowMatrixXd>, std::span<const RowMatrixXd>)>;

// MAE objective of `model`, which must outlive the returned function.
InputGradientFn mae_input_gradient(const STModel& model);

struct TrainConfig {
  int epochs = 40;
  double learning_rate = 0.3;
  std::size_t batch_size = 64;  // gamma
  std::uint64_t seed = 0;
  std::size_t max_batches_per_epoch = 0;  // 0 = all
};

struct TrainResult {
  STModel model;
  std::vector<double> loss_history;      // mean train MAE per epoch (normalized)
  std::vector<double> smoothed_history;  // running minimum of loss_history
  std::vector<double> validation_history;
};

// Replaces a training batch before the gradient step; used by the defenses.
// Receives the current weights, the clean batch and a per-batch seed.
using BatchTransform =
    std::function<std::vector<StateWindow>(const STModel&, WindowSpan, std::uint64_t)>;

// Minibatch gradient descent with a fixed step on mean MAE.
TrainResult train(STModel model, const DatasetSplit& split, const TrainConfig& cfg,
                  const BatchTransform& transform = nullptr);

// Estimates the window ending T steps after `previous` by forecasting from it
// (rolling the forecast forward when tau < T). Values are clamped to [0,1].
StateWindow estimate_current_state(const STModel& estimator, const StateWindow& previous,
                                   bool rolling = true);

// Model forecast plus i.i.d. U(-noise_fraction*eps, noise_fraction*eps) noise.
RowMatrixXd surrogate_label(const STModel& label_model, const RowMatrixXd& inputs, double epsilon,
                            std::uint64_t seed, double noise_fraction = 0.1);

// Forecasts for every window, stacked (m*tau) x n, denormalized.
RowMatrixXd predict_all(const STModel& model, WindowSpan windows, const Normalizer& norm);
RowMatrixXd stack_labels(WindowSpan windows);

// Last observed value repeated over the horizon, stacked and denormalized.
RowMatrixXd persistence_forecast(WindowSpan windows, const Normalizer& norm);

void save_checkpoint(const std::string& path, const STModel& model);
STModel load_checkpoint(const std::string& path);

}  // namespace stadv
