#include "stadv/forecaster.hpp"

#include "stadv/parallel.hpp"
#include "stadv/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace stadv {

namespace {

constexpr double kGateScale = 4.0;

struct Slot {
  std::string name;
  Index rows;
  Index cols;
  bool bias;
};

std::vector<Slot> param_layout(const ModelConfig& c) {
  std::vector<Slot> slots;
  Index in = c.features;
  for (Index l = 0; l < c.temporal_layers; ++l) {
    for (Index k = 0; k < c.kernel; ++k) {
      slots.push_back({"conv" + std::to_string(l) + ".w" + std::to_string(k), in, c.temporal_channels,
                       false});
    }
    slots.push_back({"conv" + std::to_string(l) + ".b", 1, c.temporal_channels, true});
    in = c.temporal_channels;
  }
  slots.push_back({"readout.w", c.history * in, c.hidden, false});
  slots.push_back({"readout.b", 1, c.hidden, true});
  for (Index k = 0; k < c.graph_layers; ++k) {
    slots.push_back({"gconv" + std::to_string(k) + ".w", c.hidden, c.hidden, false});
  }
  slots.push_back({"head.w", c.skip ? 2 * c.hidden : c.hidden, c.horizon, false});
  slots.push_back({"head.b", 1, c.horizon, true});
  // Row 0 weighs the node's own last value, row 1 its neighbourhood average.
  if (c.level_skip) slots.push_back({"head.level", 2, c.horizon, true});
  if (c.level_skip && c.level_clip > 0) slots.push_back({"head.gate", 1, 1, true});
  return slots;
}

void validate(const ModelConfig& c) {
  if (c.nodes < 1 || c.history < 1 || c.horizon < 1 || c.features < 1 || c.kernel < 1 ||
      c.hidden < 1 || c.graph_layers < 0 || !(c.level_clip >= 0) || c.temporal_layers < 0 ||
      (c.temporal_layers > 0 && c.temporal_channels < 1)) {
    throw std::invalid_argument("ModelConfig: non-positive dimension");
  }
}

ad::Var activate(ad::Tape<double>& tape, ad::Var x, Activation a) {
  switch (a) {
    case Activation::kRelu: return tape.relu(x);
    case Activation::kTanh: return tape.tanh(x);
    case Activation::kSigmoid: return tape.sigmoid(x);
  }
  return x;
}

void check_window(const STModel& model, const RowMatrixXd& inputs) {
  const ModelConfig& c = model.config;
  if (inputs.rows() != c.history || inputs.cols() != c.nodes * c.features) {
    throw std::invalid_argument("window is " + std::to_string(inputs.rows()) + "x" +
                                std::to_string(inputs.cols()) + ", model expects " +
                                std::to_string(c.history) + "x" +
                                std::to_string(c.nodes * c.features));
  }
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation '" + s + "' (relu, tanh, sigmoid)");
}

RowMatrixXd& STModel::param(const std::string& name) {
  for (auto& p : params) {
    if (p.name == name) return p.value;
  }
  throw std::out_of_range("no parameter named " + name);
}

const RowMatrixXd& STModel::param(const std::string& name) const {
  return const_cast<STModel*>(this)->param(name);
}

STModel make_zero_model(const ModelConfig& config, const TrafficNetwork& graph) {
  validate(config);
  if (graph.node_count() != config.nodes) {
    throw std::invalid_argument("make_model: graph has " + std::to_string(graph.node_count()) +
                                " nodes, config expects " + std::to_string(config.nodes));
  }
  STModel m;
  m.config = config;
  m.aggregation = graph.aggregation();
  for (const Slot& s : param_layout(config)) m.params.push_back({s.name, RowMatrixXd::Zero(s.rows, s.cols)});
  return m;
}

STModel make_model(const ModelConfig& config, const TrafficNetwork& graph, std::uint64_t seed) {
  STModel m = make_zero_model(config, graph);
  Rng rng = make_rng(seed, "init");
  const auto layout = param_layout(config);
  // The level path starts as persistence.
  if (config.level_skip) m.param("head.level").row(0).setOnes();
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].bias) continue;
    const double a = std::sqrt(6.0 / static_cast<double>(layout[i].rows + layout[i].cols));
    std::uniform_real_distribution<double> u(-a, a);
    RowMatrixXd& w = m.params[i].value;
    for (Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
  }
  return m;
}

namespace {

// Row-normalized adjacency without self-loops; isolated nodes average
// themselves.
Eigen::MatrixXd neighbour_average(const Eigen::MatrixXd& aggregation) {
  Eigen::MatrixXd nb = aggregation;
  for (Index i = 0; i < nb.rows(); ++i) {
    const double self = nb(i, i);
    nb(i, i) = 0.0;
    if (self < 1.0) {
      nb.row(i) /= 1.0 - self;
    } else {
      nb(i, i) = 1.0;
    }
  }
  return nb;
}

}  // namespace

ad::Var record_forward(ad::Tape<double>& tape, const STModel& model, ad::Var input, Index batch,
                       const std::vector<ad::Var>& params) {
  const ModelConfig& c = model.config;
  const Index T = c.history;
  const Index rows_per_step = batch * c.nodes;
  std::size_t p = 0;

  // Linear causal convolutions over time; rows are (time, sample, node), so
  // shifting by k steps is a row shift by k*batch*n with zero fill.
  ad::Var last = tape.slice_rows(input, (T - 1) * rows_per_step, T * rows_per_step);
  ad::Var h = input;
  if (c.relative_inputs && T > 1) {
    // Offsets from the last observation. Raw levels are nearly collinear
    // across time, which leaves plain gradient descent crawling.
    h = tape.sub(input, tape.concat_rows(std::vector<ad::Var>(static_cast<std::size_t>(T), last)));
  } else if (c.relative_inputs) {
    h = tape.sub(input, last);
  }
  Index channels = c.features;
  for (Index l = 0; l < c.temporal_layers; ++l) {
    ad::Var acc{};
    for (Index k = 0; k < c.kernel; ++k) {
      ad::Var shifted = h;
      if (k > 0) {
        const Index pad = std::min(k, T) * rows_per_step;
        std::vector<ad::Var> parts{tape.constant(RowMatrixXd::Zero(pad, channels))};
        if (k < T) parts.push_back(tape.slice_rows(h, 0, (T - k) * rows_per_step));
        shifted = tape.concat_rows(parts);
      }
      ad::Var term = tape.matmul(shifted, params[p++]);
      acc = k == 0 ? term : tape.add(acc, term);
    }
    acc = tape.add(acc, params[p++]);
    h = acc;
    channels = c.temporal_channels;
  }

  // Readout: per node, flatten (time, channel) and map to the hidden width.
  std::vector<ad::Var> steps;
  steps.reserve(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) steps.push_back(tape.slice_rows(h, t * rows_per_step, (t + 1) * rows_per_step));
  ad::Var flat = T == 1 ? steps.front() : tape.concat_cols(steps);
  ad::Var readout = tape.add(tape.matmul(flat, params[p]), params[p + 1]);
  p += 2;

  ad::Var agg = tape.constant(model.aggregation);
  ad::Var z = readout;
  for (Index k = 0; k < c.graph_layers; ++k) {
    z = activate(tape, tape.matmul(tape.block_matmul(agg, z), params[p++]), c.activation);
  }
  ad::Var head_in = c.skip ? tape.concat_cols({z, readout}) : z;
  ad::Var out = tape.add(tape.matmul(head_in, params[p]), params[p + 1]);
  if (c.level_skip) {
    // Learned per-step weights on the last observed value of feature 0 and
    // on its aggregate over the neighbourhood.
    ad::Var level = c.features > 1 ? tape.slice_cols(last, 0, 1) : last;
    ad::Var around = tape.block_matmul(agg, level);
    if (c.level_clip > 0) {
      // Gated clip of the gap to the neighbours' average: with the gate at 1
      // a node can sit at most level_clip above or below its neighbours.
      // Gaps inside the clip are untouched, so clean data gives the gate
      // almost no gradient and only training on outliers moves it.
      ad::Var ref = tape.block_matmul(tape.constant(neighbour_average(model.aggregation)), level);
      ad::Var dev = tape.sub(level, ref);
      ad::Var clip = tape.constant(RowMatrixXd::Constant(rows_per_step, 1, c.level_clip));
      ad::Var excess = tape.sub(tape.relu(tape.sub(tape.scale(dev, -1.0), clip)), tape.relu(tape.sub(dev, clip)));
      // The gate is a single scalar fed by rare outliers, so it is scaled
      // up to move at a useful pace under a fixed step.
      level = tape.add(level, tape.matmul(tape.scale(excess, kGateScale), params[p + 3]));
    }
    out = tape.add(out, tape.matmul(tape.concat_cols({level, around}), params[p + 2]));
  }
  return out;
}

namespace {

// Stacks windows into the (T*B*n) x c layout used by record_forward.
RowMatrixXd stack_inputs(const STModel& model, std::span<const RowMatrixXd> inputs) {
  const ModelConfig& c = model.config;
  const Index b = static_cast<Index>(inputs.size());
  RowMatrixXd x(c.history * b * c.nodes, c.features);
  for (Index k = 0; k < b; ++k) {
    const RowMatrixXd& w = inputs[static_cast<std::size_t>(k)];
    check_window(model, w);
    for (Index t = 0; t < c.history; ++t) {
      x.middleRows((t * b + k) * c.nodes, c.nodes) =
          Eigen::Map<const RowMatrixXd>(w.row(t).data(), c.nodes, c.features);
    }
  }
  return x;
}

RowMatrixXd unstack_window(const STModel& model, const RowMatrixXd& x, Index b, Index k) {
  const ModelConfig& c = model.config;
  RowMatrixXd w(c.history, c.nodes * c.features);
  for (Index t = 0; t < c.history; ++t) {
    Eigen::Map<RowMatrixXd>(w.row(t).data(), c.nodes, c.features) =
        x.middleRows((t * b + k) * c.nodes, c.nodes);
  }
  return w;
}

// Samples per tape. Fixed so results do not depend on the thread count.
constexpr std::size_t kChunk = 8;

BatchLossGrad loss_grad_chunk(const STModel& model, std::span<const RowMatrixXd> inputs,
                              std::span<const RowMatrixXd> targets, bool want_input_grad,
                              bool want_param_grads) {
  const ModelConfig& c = model.config;
  const Index b = static_cast<Index>(inputs.size());
  RowMatrixXd stacked_target(b * c.nodes, c.horizon);
  for (Index k = 0; k < b; ++k) {
    const RowMatrixXd& y = targets[static_cast<std::size_t>(k)];
    if (y.rows() != c.horizon || y.cols() != c.nodes) throw std::invalid_argument("target must be tau x n");
    stacked_target.middleRows(k * c.nodes, c.nodes) = y.transpose();
  }
  ad::Tape<double> tape;
  ad::Var x = tape.leaf(stack_inputs(model, inputs), want_input_grad);
  std::vector<ad::Var> params;
  params.reserve(model.params.size());
  for (const auto& prm : model.params) params.push_back(tape.leaf(prm.value, want_param_grads));
  ad::Var out = record_forward(tape, model, x, b, params);
  // Sum over samples of each sample's mean absolute error.
  ad::Var loss = tape.scale(tape.sum(tape.abs(tape.sub(out, tape.constant(stacked_target)))),
                            1.0 / static_cast<double>(c.horizon * c.nodes));

  BatchLossGrad r;
  const RowMatrixXd& o = tape.value(out).matrix();
  for (Index k = 0; k < b; ++k) {
    r.forecasts.push_back(o.middleRows(k * c.nodes, c.nodes).transpose());
    r.losses.push_back((r.forecasts.back() - targets[static_cast<std::size_t>(k)]).cwiseAbs().mean());
  }
  if (!want_input_grad && !want_param_grads) return r;
  const auto grads = tape.backward(loss);
  if (want_input_grad) {
    const RowMatrixXd g = grads[x].matrix();
    for (Index k = 0; k < b; ++k) r.input_grads.push_back(unstack_window(model, g, b, k));
  }
  if (want_param_grads) {
    for (ad::Var v : params) r.param_grads.push_back(grads[v].matrix());
  }
  return r;
}

}  // namespace

BatchLossGrad mae_loss_grad_batch(const STModel& model, std::span<const RowMatrixXd> inputs,
                                  std::span<const RowMatrixXd> targets, bool want_input_grad,
                                  bool want_param_grads) {
  if (inputs.size() != targets.size()) throw std::invalid_argument("inputs and targets differ in count");
  const std::size_t chunks = (inputs.size() + kChunk - 1) / kChunk;
  std::vector<BatchLossGrad> parts(chunks);
  parallel_for(chunks, [&](std::size_t i) {
    const std::size_t at = i * kChunk;
    const std::size_t len = std::min(kChunk, inputs.size() - at);
    parts[i] = loss_grad_chunk(model, inputs.subspan(at, len), targets.subspan(at, len), want_input_grad,
                               want_param_grads);
  });
  BatchLossGrad r;
  for (auto& part : parts) {
    r.losses.insert(r.losses.end(), part.losses.begin(), part.losses.end());
    std::move(part.forecasts.begin(), part.forecasts.end(), std::back_inserter(r.forecasts));
    std::move(part.input_grads.begin(), part.input_grads.end(), std::back_inserter(r.input_grads));
    if (want_param_grads) {
      if (r.param_grads.empty()) {
        r.param_grads = std::move(part.param_grads);
      } else {
        for (std::size_t k = 0; k < r.param_grads.size(); ++k) r.param_grads[k] += part.param_grads[k];
      }
    }
  }
  return r;
}

std::vector<RowMatrixXd> predict_batch(const STModel& model, std::span<const RowMatrixXd> inputs) {
  const std::size_t chunks = (inputs.size() + kChunk - 1) / kChunk;
  std::vector<std::vector<RowMatrixXd>> parts(chunks);
  parallel_for(chunks, [&](std::size_t i) {
    const std::size_t at = i * kChunk;
    const auto chunk = inputs.subspan(at, std::min(kChunk, inputs.size() - at));
    const Index b = static_cast<Index>(chunk.size());
    ad::Tape<double> tape;
    ad::Var x = tape.constant(stack_inputs(model, chunk));
    std::vector<ad::Var> params;
    params.reserve(model.params.size());
    for (const auto& prm : model.params) params.push_back(tape.constant(prm.value));
    const RowMatrixXd& o = tape.value(record_forward(tape, model, x, b, params)).matrix();
    for (Index k = 0; k < b; ++k) parts[i].push_back(o.middleRows(k * model.config.nodes, model.config.nodes).transpose());
  });
  std::vector<RowMatrixXd> out;
  out.reserve(inputs.size());
  for (auto& part : parts) std::move(part.begin(), part.end(), std::back_inserter(out));
  return out;
}

RowMatrixXd predict(const STModel& model, const RowMatrixXd& inputs) {
  return std::move(predict_batch(model, std::span<const RowMatrixXd>(&inputs, 1)).front());
}

LossGrad mae_loss_grad(const STModel& model, const RowMatrixXd& inputs, const RowMatrixXd& target,
                       bool want_input_grad, bool want_param_grads) {
  BatchLossGrad b = loss_grad_chunk(model, std::span<const RowMatrixXd>(&inputs, 1),
                                    std::span<const RowMatrixXd>(&target, 1), want_input_grad, want_param_grads);
  LossGrad out;
  out.loss = b.losses.front();
  out.forecast = std::move(b.forecasts.front());
  if (want_input_grad) out.input_grad = std::move(b.input_grads.front());
  out.param_grads = std::move(b.param_grads);
  return out;
}

double mae_loss(const STModel& model, const RowMatrixXd& inputs, const RowMatrixXd& target) {
  return (predict(model, inputs) - target).cwiseAbs().mean();
}

InputGradientFn mae_input_gradient(const STModel& model) {
  return [&model](std::span<const RowMatrixXd> inputs, std::span<const RowMatrixXd> labels) {
    BatchLossGrad r = mae_loss_grad_batch(model, inputs, labels, true, false);
    return InputGradients{std::move(r.losses), std::move(r.input_grads)};
  };
}

TrainResult train(STModel model, const DatasetSplit& split, const TrainConfig& cfg,
                  const BatchTransform& transform) {
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (!(cfg.learning_rate > 0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  const WindowSpan train_set = split.train();
  if (train_set.empty()) throw std::invalid_argument("train: empty training split");
  const Normalizer& norm = split.normalizer();

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = make_rng(cfg.seed, "train.shuffle");

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      if (cfg.max_batches_per_epoch && batches >= cfg.max_batches_per_epoch) break;
      const std::size_t b = std::min(cfg.batch_size, order.size() - at);
      std::vector<StateWindow> clean;
      clean.reserve(b);
      for (std::size_t i = 0; i < b; ++i) clean.push_back(train_set[order[at + i]]);
      std::vector<StateWindow> adversarial;
      WindowSpan used = clean;
      std::vector<RowMatrixXd> xs, ys;
      BatchLossGrad r;
      try {
        if (transform) {
          adversarial = transform(model, clean,
                                  derive_seed(cfg.seed, "train.batch",
                                              static_cast<std::uint64_t>(epoch) * 1000003ULL + batches));
          used = adversarial;
        }
        xs.reserve(used.size());
        ys.reserve(used.size());
        for (const auto& w : used) {
          xs.push_back(w.inputs);
          ys.push_back(norm.normalize(w.labels));
        }
        r = mae_loss_grad_batch(model, xs, ys, false, true);
      } catch (const std::domain_error& e) {
        // Non-finite activations only arise from runaway weights.
        throw std::runtime_error("train: diverged at epoch " + std::to_string(epoch + 1) + " (" + e.what() + ")");
      }
      const double inv = 1.0 / static_cast<double>(used.size());
      for (std::size_t k = 0; k < model.params.size(); ++k) {
        model.params[k].value -= cfg.learning_rate * inv * r.param_grads[k];
      }
      for (double l : r.losses) epoch_loss += l;
      seen += r.losses.size();
      ++batches;
    }
    const double mean_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(seen, 1));
    if (!std::isfinite(mean_loss)) {
      throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch + 1));
    }
    for (const auto& p : model.params) {
      if (!p.value.allFinite()) {
        throw std::runtime_error("train: weights diverged at epoch " + std::to_string(epoch + 1));
      }
    }
    result.loss_history.push_back(mean_loss);
    result.smoothed_history.push_back(
        result.smoothed_history.empty() ? mean_loss : std::min(result.smoothed_history.back(), mean_loss));
    const WindowSpan val = split.validation();
    if (!val.empty()) {
      std::vector<RowMatrixXd> xs;
      xs.reserve(val.size());
      for (const auto& w : val) xs.push_back(w.inputs);
      const auto f = predict_batch(model, xs);
      double v = 0.0;
      for (std::size_t i = 0; i < val.size(); ++i) v += (f[i] - norm.normalize(val[i].labels)).cwiseAbs().mean();
      result.validation_history.push_back(v / static_cast<double>(val.size()));
    }
  }
  result.model = std::move(model);
  return result;
}

StateWindow estimate_current_state(const STModel& estimator, const StateWindow& previous, bool rolling) {
  const ModelConfig& c = estimator.config;
  if (c.features != 1) throw std::invalid_argument("estimate_current_state: requires c = 1");
  if (c.horizon < c.history && !rolling) {
    throw std::invalid_argument("estimate_current_state: horizon shorter than T and rolling disabled");
  }
  RowMatrixXd history = previous.inputs;
  RowMatrixXd produced(0, c.nodes);
  while (produced.rows() < c.history) {
    const RowMatrixXd f = predict(estimator, history);
    const Index take = std::min<Index>(f.rows(), c.history - produced.rows());
    RowMatrixXd grown(produced.rows() + take, c.nodes);
    grown << produced, f.topRows(take);
    produced = std::move(grown);
    // Slide the history forward over the freshly predicted steps.
    RowMatrixXd next(c.history, c.nodes);
    const Index keep = c.history - take;
    next << history.bottomRows(keep), f.topRows(take);
    history = std::move(next);
  }
  StateWindow est;
  est.inputs = produced.cwiseMax(0.0).cwiseMin(1.0);
  est.labels = RowMatrixXd(0, c.nodes);
  est.anchor = previous.anchor + c.history;
  est.features = 1;
  return est;
}

RowMatrixXd surrogate_label(const STModel& label_model, const RowMatrixXd& inputs, double epsilon,
                            std::uint64_t seed, double noise_fraction) {
  if (epsilon < 0) throw std::invalid_argument("surrogate_label: epsilon must be >= 0");
  RowMatrixXd y = predict(label_model, inputs);
  const double half = noise_fraction * epsilon;
  if (half > 0) {
    Rng rng = make_rng(seed, "delta");
    std::uniform_real_distribution<double> u(-half, half);
    for (Index i = 0; i < y.size(); ++i) y.data()[i] += u(rng);
  }
  return y;
}

RowMatrixXd predict_all(const STModel& model, WindowSpan windows, const Normalizer& norm) {
  const Index tau = model.config.horizon;
  std::vector<RowMatrixXd> xs;
  xs.reserve(windows.size());
  for (const auto& w : windows) xs.push_back(w.inputs);
  const auto f = predict_batch(model, xs);
  RowMatrixXd out(static_cast<Index>(windows.size()) * tau, model.config.nodes);
  for (std::size_t i = 0; i < f.size(); ++i) out.middleRows(static_cast<Index>(i) * tau, tau) = norm.denormalize(f[i]);
  return out;
}

RowMatrixXd stack_labels(WindowSpan windows) {
  if (windows.empty()) return {};
  const Index tau = windows.front().labels.rows();
  RowMatrixXd out(static_cast<Index>(windows.size()) * tau, windows.front().labels.cols());
  for (std::size_t i = 0; i < windows.size(); ++i) out.middleRows(static_cast<Index>(i) * tau, tau) = windows[i].labels;
  return out;
}

RowMatrixXd persistence_forecast(WindowSpan windows, const Normalizer& norm) {
  if (windows.empty()) return {};
  const Index tau = windows.front().labels.rows();
  const Index c = windows.front().features;
  const Index n = windows.front().nodes();
  RowMatrixXd out(static_cast<Index>(windows.size()) * tau, n);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& x = windows[i].inputs;
    for (Index j = 0; j < n; ++j) {
      out.block(static_cast<Index>(i) * tau, j, tau, 1).setConstant(norm.denormalize(x(x.rows() - 1, j * c)));
    }
  }
  return out;
}

void save_checkpoint(const std::string& path, const STModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  const ModelConfig& c = model.config;
  out << "STADV1\n" << std::setprecision(17);
  out << "config nodes=" << c.nodes << " history=" << c.history << " horizon=" << c.horizon
      << " features=" << c.features << " temporal_layers=" << c.temporal_layers
      << " temporal_channels=" << c.temporal_channels << " kernel=" << c.kernel
      << " hidden=" << c.hidden << " graph_layers=" << c.graph_layers
      << " activation=" << to_string(c.activation) << " skip=" << (c.skip ? 1 : 0)
      << " relative_inputs=" << (c.relative_inputs ? 1 : 0) << " level_skip=" << (c.level_skip ? 1 : 0)
      << " level_clip=" << c.level_clip
      << '\n';
  out << "defense " << model.defense << '\n';
  auto write = [&](const std::string& name, const auto& m) {
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index k = 0; k < m.cols(); ++k) out << (k ? " " : "") << m(r, k);
      out << '\n';
    }
  };
  write("aggregation", model.aggregation);
  for (const auto& p : model.params) write(p.name, p.value);
  out << "end\n";
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

STModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != "STADV1") throw std::runtime_error("not an STADV1 checkpoint: " + path);
  std::string line;
  std::getline(in, line);
  std::istringstream cfg_line(line);
  std::string word;
  cfg_line >> word;
  if (word != "config") throw std::runtime_error("checkpoint: missing config header");
  std::map<std::string, std::string> kv;
  while (cfg_line >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed config entry " + word);
    kv[word.substr(0, eq)] = word.substr(eq + 1);
  }
  auto num = [&](const char* key) {
    if (!kv.count(key)) throw std::runtime_error(std::string("checkpoint: missing ") + key);
    return static_cast<Index>(std::stoll(kv[key]));
  };
  STModel m;
  ModelConfig& c = m.config;
  c.nodes = num("nodes");
  c.history = num("history");
  c.horizon = num("horizon");
  c.features = num("features");
  c.temporal_layers = num("temporal_layers");
  c.temporal_channels = num("temporal_channels");
  c.kernel = num("kernel");
  c.hidden = num("hidden");
  c.graph_layers = num("graph_layers");
  c.activation = parse_activation(kv["activation"]);
  c.skip = num("skip") != 0;
  c.relative_inputs = num("relative_inputs") != 0;
  c.level_skip = num("level_skip") != 0;
  if (!kv.count("level_clip")) throw std::runtime_error("checkpoint: missing level_clip");
  c.level_clip = std::stod(kv["level_clip"]);
  validate(c);
  in >> word;
  if (word != "defense") throw std::runtime_error("checkpoint: missing defense tag");
  in >> m.defense;

  auto read = [&](const std::string& expect) {
    std::string tag, name;
    Index rows = 0, cols = 0;
    in >> tag >> name >> rows >> cols;
    if (tag != "tensor" || name != expect) {
      throw std::runtime_error("checkpoint: expected tensor " + expect + ", found " + name);
    }
    RowMatrixXd v(rows, cols);
    for (Index i = 0; i < v.size(); ++i) {
      if (!(in >> v.data()[i])) throw std::runtime_error("checkpoint: truncated tensor " + name);
    }
    return v;
  };
  m.aggregation = read("aggregation");
  if (m.aggregation.rows() != c.nodes || m.aggregation.cols() != c.nodes) {
    throw std::runtime_error("checkpoint: aggregation shape mismatch");
  }
  for (const Slot& s : param_layout(c)) {
    RowMatrixXd v = read(s.name);
    if (v.rows() != s.rows || v.cols() != s.cols) {
      throw std::runtime_error("checkpoint: shape mismatch for " + s.name);
    }
    m.params.push_back({s.name, std::move(v)});
  }
  in >> word;
  if (word != "end") throw std::runtime_error("checkpoint: missing end marker");
  return m;
}

}  // namespace stadv
