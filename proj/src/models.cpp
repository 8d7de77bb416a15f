#include "chaoslab/models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

#include "chaoslab/error.hpp"
#include "chaoslab/nn/optim.hpp"
#include "chaoslab/random.hpp"

namespace chaoslab::models {

using nn::Tape;
using nn::Tensor;
using nn::Var;

std::string_view display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Ar: return "AR";
    case ModelKind::LinSgd: return "LINSGD";
    case ModelKind::Ffnn: return "FFNN";
    case ModelKind::Vrnn: return "VRNN";
    case ModelKind::Lstm: return "LSTM";
    case ModelKind::Gru: return "GRU";
    case ModelKind::Birnn: return "BIRNN";
    case ModelKind::Strnn: return "STRNN";
  }
  return "?";
}

std::string_view cli_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Ar: return "ar";
    case ModelKind::LinSgd: return "linsgd";
    case ModelKind::Ffnn: return "ffnn";
    case ModelKind::Vrnn: return "vrnn";
    case ModelKind::Lstm: return "lstm";
    case ModelKind::Gru: return "gru";
    case ModelKind::Birnn: return "birnn";
    case ModelKind::Strnn: return "strnn";
  }
  return "?";
}

ModelKind parse_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (ModelKind k : kAllKinds)
    if (lower == cli_name(k)) return k;
  if (lower == "sgd") return ModelKind::LinSgd;
  throw DomainError("unknown model kind '" + std::string(name) + "' (expected ar, linsgd, ffnn, vrnn, lstm, gru, birnn or strnn)");
}

bool is_recurrent(ModelKind kind) {
  return kind == ModelKind::Vrnn || kind == ModelKind::Lstm || kind == ModelKind::Gru || kind == ModelKind::Birnn ||
         kind == ModelKind::Strnn;
}

std::string_view to_string(Protocol p) { return p == Protocol::Sliding ? "sliding" : "timestep"; }

Protocol parse_protocol(std::string_view name) {
  if (name == "sliding" || name == "window") return Protocol::Sliding;
  if (name == "timestep") return Protocol::TimeStep;
  throw DomainError("unknown protocol '" + std::string(name) + "' (expected sliding or timestep)");
}

void ModelConfig::validate() const {
  if (kind == ModelKind::Ar) {
    if (ar_order < 1) throw DomainError("AR order must be at least 1");
    return;
  }
  if (hidden == 0) throw DomainError("hidden size must be positive");
  if (layers == 0) throw DomainError("layer count must be positive");
  if (epochs == 0) throw DomainError("epoch count must be positive");
  if (!(lr > 0.0) || !(lr_floor > 0.0)) throw DomainError("learning rates must be positive");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw DomainError("learning-rate factor must be in (0, 1)");
  if (!(clip_norm >= 0.0)) throw DomainError("clip norm must be non-negative");
  if (trajectories_per_batch == 0 || chunk == 0 || batch == 0) throw DomainError("batch sizes must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"kind", cli_name(kind)},
          {"hidden", hidden},
          {"layers", layers},
          {"epochs", epochs},
          {"lr", lr},
          {"lr_factor", lr_factor},
          {"lr_patience", lr_patience},
          {"lr_floor", lr_floor},
          {"clip_norm", clip_norm},
          {"seed", seed},
          {"ar_order", ar_order},
          {"trajectories_per_batch", trajectories_per_batch},
          {"chunk", chunk},
          {"batch", batch}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.kind = parse_kind(j.at("kind").get<std::string>());
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.lr_factor = j.value("lr_factor", c.lr_factor);
    c.lr_patience = j.value("lr_patience", c.lr_patience);
    c.lr_floor = j.value("lr_floor", c.lr_floor);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.seed = j.value("seed", c.seed);
    c.ar_order = j.value("ar_order", c.ar_order);
    c.trajectories_per_batch = j.value("trajectories_per_batch", c.trajectories_per_batch);
    c.chunk = j.value("chunk", c.chunk);
    c.batch = j.value("batch", c.batch);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

// Autoregression

std::vector<double> ArCoefficients::predict(std::span<const double> history) const {
  if (history.size() < order * dims) throw DomainError("AR prediction needs at least p rows of history");
  const std::size_t rows = history.size() / dims;
  std::vector<double> out(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    double s = intercept(d);
    for (std::size_t k = 1; k <= order; ++k) s += lag(d, k) * history[(rows - k) * dims + d];
    out[d] = s;
  }
  return out;
}

ArCoefficients fit_ar(const std::vector<std::vector<double>>& series, std::size_t dims, std::size_t order) {
  if (order == 0) throw DomainError("AR order must be at least 1");
  if (dims == 0) throw DomainError("AR fit needs at least one column");
  std::size_t equations = 0;
  for (const auto& s : series) {
    if (s.size() % dims != 0) throw DomainError("AR fit: ragged series");
    const std::size_t len = s.size() / dims;
    if (len <= order) {
      throw DegenerateInputError("AR order " + std::to_string(order) + " needs a series longer than " +
                                 std::to_string(len) + " rows");
    }
    equations += len - order;
  }
  if (equations < order + 1) {
    throw DegenerateInputError("AR fit: " + std::to_string(equations) + " equations for " +
                               std::to_string(order + 1) + " unknowns");
  }

  ArCoefficients ar;
  ar.order = order;
  ar.dims = dims;
  ar.values.assign(dims * (order + 1), 0.0);
  for (std::size_t d = 0; d < dims; ++d) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(equations), static_cast<Eigen::Index>(order));
    Eigen::VectorXd y(static_cast<Eigen::Index>(equations));
    Eigen::Index row = 0;
    for (const auto& s : series) {
      const std::size_t len = s.size() / dims;
      for (std::size_t t = order; t < len; ++t, ++row) {
        y(row) = s[t * dims + d];
        for (std::size_t k = 1; k <= order; ++k) x(row, static_cast<Eigen::Index>(k - 1)) = s[(t - k) * dims + d];
      }
    }
    // Centre so the intercept is unpenalised and collinear lags get the minimum-norm split.
    const Eigen::RowVectorXd xm = x.colwise().mean();
    const double ym = y.mean();
    x.rowwise() -= xm;
    y.array() -= ym;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-12);
    const Eigen::VectorXd beta = svd.solve(y);
    if (!beta.allFinite()) throw NumericalError("AR least squares produced non-finite coefficients");
    for (std::size_t k = 0; k < order; ++k) ar.values[d * (order + 1) + k] = beta(static_cast<Eigen::Index>(k));
    ar.values[d * (order + 1) + order] = ym - xm.dot(beta);
  }
  return ar;
}

ArCoefficients fit_ar(std::span<const double> series, std::size_t dims, std::size_t order) {
  return fit_ar(std::vector<std::vector<double>>{std::vector<double>(series.begin(), series.end())}, dims, order);
}

// Model internals

struct Model::Impl {
  ModelConfig config;
  Protocol protocol = Protocol::TimeStep;
  std::size_t inputs = 0;   // features per step (recurrent) or per row (pointwise)
  std::size_t outputs = 0;  // angle dimensions
  std::size_t window = 0;   // sliding protocol
  double max_time = 0.0;    // time-step protocol: last trained time

  dataset::MinMaxNormalizer window_norm;
  std::optional<dataset::TimeStepScaling> scaling;

  ArCoefficients ar;
  nn::Dense linear;                // LINSGD
  nn::Dense hidden_layer, output;  // FFNN
  nn::RecurrentStack rnn;          // recurrent kinds
  nn::Dense head;
  TrainReport report;

  void build(std::uint64_t seed) {
    Rng rng(seed);
    const ModelKind k = config.kind;
    if (k == ModelKind::LinSgd) {
      linear = nn::Dense("linear", inputs, outputs, rng);
    } else if (k == ModelKind::Ffnn) {
      hidden_layer = nn::Dense("hidden", inputs, config.hidden, rng);
      output = nn::Dense("output", config.hidden, outputs, rng);
    } else if (is_recurrent(k)) {
      const nn::CellKind cell = k == ModelKind::Lstm  ? nn::CellKind::Lstm
                                : k == ModelKind::Gru ? nn::CellKind::Gru
                                                      : nn::CellKind::Vanilla;
      rnn = nn::RecurrentStack("rnn", cell, inputs, config.hidden, config.effective_layers(),
                               k == ModelKind::Birnn, rng);
      head = nn::Dense("head", rnn.output_size(), outputs, rng);
    }
  }

  std::vector<nn::Parameter*> params() {
    std::vector<nn::Parameter*> ps;
    auto add = [&](std::vector<nn::Parameter*> v) { ps.insert(ps.end(), v.begin(), v.end()); };
    switch (config.kind) {
      case ModelKind::Ar: break;
      case ModelKind::LinSgd: add(linear.parameters()); break;
      case ModelKind::Ffnn:
        add(hidden_layer.parameters());
        add(output.parameters());
        break;
      default:
        add(rnn.parameters());
        add(head.parameters());
    }
    return ps;
  }

  // Pointwise forward: x is batch x inputs.
  Var pointwise(Tape& tape, Var x) {
    if (config.kind == ModelKind::LinSgd) return linear.forward(tape, x);
    return output.forward(tape, tape.tanh(hidden_layer.forward(tape, x)));
  }

  // Many-to-one over a batch of windows; xs[t] is batch x dims.
  Var window_forward(Tape& tape, const std::vector<Var>& xs) {
    const auto out = rnn.run(tape, xs);
    return head.forward(tape, rnn.final_state(tape, out));
  }

  // Many-to-many over one chunk; returns the per-step predictions stacked time-major.
  Var chunk_forward(Tape& tape, const std::vector<Var>& xs, const nn::SequenceState* carry,
                    nn::SequenceState* carry_out) {
    const auto out = rnn.run(tape, xs, carry, carry_out);
    std::vector<Var> preds;
    preds.reserve(xs.size());
    for (Var h : rnn.per_step(tape, out)) preds.push_back(head.forward(tape, h));
    return tape.stack_rows(preds);
  }

  // Scaled sequence predictions for one trajectory: features is rows x inputs, scaled.
  std::vector<double> sequence_predict(const std::vector<double>& features, std::size_t rows) {
    std::vector<double> out;
    out.reserve(rows * outputs);
    nn::SequenceState carry;
    for (std::size_t s = 0; s < rows; s += config.chunk) {
      const std::size_t len = std::min(config.chunk, rows - s);
      Tape tape;
      std::vector<Var> xs(len);
      for (std::size_t t = 0; t < len; ++t) {
        xs[t] = tape.constant(Tensor(1, inputs, std::vector<double>(features.begin() + (s + t) * inputs,
                                                                    features.begin() + (s + t + 1) * inputs)));
      }
      nn::SequenceState next;
      const Var pred = chunk_forward(tape, xs, carry.empty() ? nullptr : &carry, &next);
      const auto v = tape.value(pred).values();
      out.insert(out.end(), v.begin(), v.end());
      carry = std::move(next);
    }
    return out;
  }

  std::vector<double> pointwise_predict(const std::vector<double>& features, std::size_t rows) {
    std::vector<double> out;
    out.reserve(rows * outputs);
    const std::size_t block = 4096;
    for (std::size_t s = 0; s < rows; s += block) {
      const std::size_t n = std::min(block, rows - s);
      Tape tape;
      const Var x = tape.constant(Tensor(n, inputs, std::vector<double>(features.begin() + s * inputs,
                                                                        features.begin() + (s + n) * inputs)));
      const auto v = tape.value(pointwise(tape, x)).values();
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }
};

Model::Model() : impl_(std::make_unique<Impl>()) {}
Model::Model(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Model::~Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;

const ModelConfig& Model::config() const noexcept { return impl_->config; }
Protocol Model::protocol() const noexcept { return impl_->protocol; }
const TrainReport& Model::report() const noexcept { return impl_->report; }

std::size_t Model::parameter_count() const {
  if (impl_->config.kind == ModelKind::Ar) return impl_->ar.values.size();
  std::size_t n = 0;
  for (const nn::Parameter* p : impl_->params()) n += p->size();
  return n;
}

const dataset::MinMaxNormalizer& Model::window_normalizer() const {
  if (impl_->protocol != Protocol::Sliding) throw DomainError("model was not trained with the sliding protocol");
  return impl_->window_norm;
}

const dataset::TimeStepScaling& Model::timestep_scaling() const {
  if (!impl_->scaling) throw DomainError("model was not trained with the time-step protocol");
  return *impl_->scaling;
}

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

void check_loss(double loss, std::size_t epoch) {
  if (!std::isfinite(loss)) throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
}

// Shared loop: `run_epoch(opt)` performs one epoch of updates and returns the mean loss.
template <typename EpochFn>
TrainReport optimise(std::vector<nn::Parameter*> params, const ModelConfig& config, EpochFn run_epoch) {
  nn::Adam opt(std::move(params), nn::AdamConfig{config.lr, 0.9, 0.999, 1e-8, config.clip_norm});
  nn::PlateauSchedule schedule(config.lr, config.lr_factor, config.lr_patience, config.lr_floor);
  TrainReport report;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = run_epoch(opt);
    check_loss(loss, epoch);
    report.epoch_loss.push_back(loss);
    opt.set_lr(schedule.observe(loss));
  }
  report.final_lr = opt.lr();
  report.updates = opt.steps();
  return report;
}

double update(nn::Adam& opt, Tape& tape, Var loss, std::size_t epoch) {
  const double value = tape.value(loss)[0];
  check_loss(value, epoch);
  tape.backward(loss);
  opt.step();
  return value;
}

// Minibatch Adam on rows (x: n x in, y: n x out, both row-major).
TrainReport train_rows(Model::Impl& m, const std::vector<double>& x, const std::vector<double>& y, std::size_t n) {
  Rng rng(m.config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order = iota(n);
  std::size_t epoch = 0;
  return optimise(m.params(), m.config, [&](nn::Adam& opt) {
    shuffle(order, rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < n; s += m.config.batch) {
      const std::size_t b = std::min(m.config.batch, n - s);
      Tensor xb(b, m.inputs), yb(b, m.outputs);
      for (std::size_t r = 0; r < b; ++r) {
        std::copy_n(x.begin() + order[s + r] * m.inputs, m.inputs, xb.data() + r * m.inputs);
        std::copy_n(y.begin() + order[s + r] * m.outputs, m.outputs, yb.data() + r * m.outputs);
      }
      Tape tape;
      const Var loss = tape.mse(m.pointwise(tape, tape.constant(std::move(xb))), tape.constant(std::move(yb)));
      total += update(opt, tape, loss, epoch);
      ++batches;
    }
    ++epoch;
    return total / static_cast<double>(batches);
  });
}

}  // namespace

LinearFit fit_linear_sgd(const Tensor& x, const Tensor& y, const ModelConfig& config) {
  if (x.rows() == 0 || x.rows() != y.rows()) throw DomainError("linear fit needs matching, non-empty rows");
  ModelConfig c = config;
  c.kind = ModelKind::LinSgd;
  c.validate();
  Model::Impl m;
  m.config = c;
  m.inputs = x.cols();
  m.outputs = y.cols();
  if (m.inputs == 0) {
    // No features: the MSE-optimal map is the target mean.
    LinearFit fit{Tensor(0, y.cols()), Tensor(1, y.cols()), {}};
    for (std::size_t r = 0; r < y.rows(); ++r)
      for (std::size_t j = 0; j < y.cols(); ++j) fit.bias[j] += y(r, j) / static_cast<double>(y.rows());
    return fit;
  }
  m.build(c.seed);
  const std::vector<double> xv(x.values().begin(), x.values().end()), yv(y.values().begin(), y.values().end());
  m.report = train_rows(m, xv, yv, x.rows());
  return LinearFit{m.linear.weight.value, m.linear.bias.value, m.report.epoch_loss};
}

double model_gradient_check(ModelKind kind, Protocol protocol, std::size_t hidden, std::size_t steps,
                            std::uint64_t seed) {
  constexpr std::size_t kOut = 2, kBatch = 2;
  Rng data_rng(seed ^ 0x5bd1e995ULL);
  auto random = [&](std::size_t r, std::size_t c) {
    Tensor t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = data_rng.uniform(-1.0, 1.0);
    return t;
  };

  Model::Impl m;
  m.config.kind = kind;
  m.config.hidden = hidden;
  m.protocol = protocol;
  m.outputs = kOut;
  const bool sequence = is_recurrent(kind);
  const bool flat_window = protocol == Protocol::Sliding && !sequence;
  // Time-step features are [t, initial angles]; windows carry kOut angles per step.
  const std::size_t step_inputs = protocol == Protocol::TimeStep ? 1 + kOut : kOut;
  m.inputs = flat_window || kind == ModelKind::Ar ? steps * kOut : step_inputs;
  if (kind == ModelKind::Ar) m.config.kind = ModelKind::LinSgd;  // same affine map, fitted in closed form
  m.build(seed);
  std::vector<nn::Parameter*> ps = m.params();
  for (nn::Parameter* p : ps)
    for (std::size_t i = 0; i < p->size(); ++i) p->value[i] += 0.1 * data_rng.uniform(-1.0, 1.0);

  std::vector<Tensor> xs;
  for (std::size_t t = 0; t < steps; ++t) xs.push_back(random(kBatch, step_inputs));
  const Tensor flat = random(kBatch, m.inputs);
  const Tensor rows = random(kBatch * steps, m.inputs);
  const Tensor target_last = random(kBatch, kOut);
  const Tensor target_seq = random(kBatch * steps, kOut);

  nn::SequenceState carry;
  if (sequence && protocol == Protocol::TimeStep && kind != ModelKind::Birnn) {
    for (std::size_t l = 0; l < m.config.effective_layers(); ++l) {
      carry.h.push_back(random(kBatch, hidden));
      carry.c.push_back(random(kBatch, hidden));
    }
  }

  return nn::gradient_check(ps, [&](Tape& tape) {
    if (!sequence) {
      const bool windowed = protocol == Protocol::Sliding || kind == ModelKind::Ar;
      const Var pred = m.pointwise(tape, tape.constant(windowed ? flat : rows));
      return tape.mse(pred, tape.constant(windowed ? target_last : target_seq));
    }
    std::vector<Var> in;
    for (const auto& x : xs) in.push_back(tape.constant(x));
    if (protocol == Protocol::Sliding) return tape.mse(m.window_forward(tape, in), tape.constant(target_last));
    return tape.mse(m.chunk_forward(tape, in, carry.empty() ? nullptr : &carry, nullptr), tape.constant(target_seq));
  });
}

Model train_sliding(const ModelConfig& config, const dataset::WindowedDataset& train) {
  config.validate();
  if (train.size() == 0) throw DomainError("train_sliding: empty dataset");
  auto impl = std::make_unique<Model::Impl>();
  Model::Impl& m = *impl;
  m.config = config;
  m.protocol = Protocol::Sliding;
  m.window = train.window;
  m.outputs = train.dims;
  m.window_norm = train.normalizer;
  const std::size_t W = train.window, d = train.dims, n = train.size();

  if (config.kind == ModelKind::Ar) {
    if (config.ar_order > W) throw DomainError("AR order exceeds the window length");
    // The training pairs cover rows first_pair .. first_pair + n + W - 1 of the scaled series.
    const auto begin = train.scaled.begin() + static_cast<std::ptrdiff_t>(train.first_pair * d);
    std::vector<double> series(begin, begin + static_cast<std::ptrdiff_t>((n + W) * d));
    m.ar = fit_ar(series, d, config.ar_order);
    m.inputs = d;
    return Model(std::move(impl));
  }

  if (!is_recurrent(config.kind)) {
    m.inputs = W * d;
    m.build(config.seed);
    std::vector<double> x, y;
    x.reserve(n * W * d);
    y.reserve(n * d);
    for (std::size_t k = 0; k < n; ++k) {
      const auto in = train.input(k);
      const auto t = train.target(k);
      x.insert(x.end(), in.begin(), in.end());
      y.insert(y.end(), t.begin(), t.end());
    }
    m.report = train_rows(m, x, y, n);
    return Model(std::move(impl));
  }

  m.inputs = d;
  m.build(config.seed);
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order = iota(n);
  std::size_t epoch = 0;
  m.report = optimise(m.params(), config, [&](nn::Adam& opt) {
    shuffle(order, rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < n; s += config.batch) {
      const std::size_t b = std::min(config.batch, n - s);
      Tape tape;
      std::vector<Var> xs(W);
      for (std::size_t t = 0; t < W; ++t) {
        Tensor xt(b, d);
        for (std::size_t r = 0; r < b; ++r) std::copy_n(train.input(order[s + r]).data() + t * d, d, xt.data() + r * d);
        xs[t] = tape.constant(std::move(xt));
      }
      Tensor yb(b, d);
      for (std::size_t r = 0; r < b; ++r) std::copy_n(train.target(order[s + r]).data(), d, yb.data() + r * d);
      const Var loss = tape.mse(m.window_forward(tape, xs), tape.constant(std::move(yb)));
      total += update(opt, tape, loss, epoch);
      ++batches;
    }
    ++epoch;
    return total / static_cast<double>(batches);
  });
  return Model(std::move(impl));
}

Model train_timestep(const ModelConfig& config, const dataset::TimeStepDataset& train) {
  config.validate();
  if (train.groups.empty()) throw DomainError("train_timestep: empty dataset");
  if (!train.scaling) throw DomainError("train_timestep: dataset carries no scaling (use split_holdout or fit_scaling)");
  auto impl = std::make_unique<Model::Impl>();
  Model::Impl& m = *impl;
  m.config = config;
  m.protocol = Protocol::TimeStep;
  m.scaling = train.scaling;
  m.outputs = static_cast<std::size_t>(train.joints);
  m.inputs = 1 + m.outputs;
  m.max_time = train.max_time();
  const auto& sc = *train.scaling;

  if (config.kind == ModelKind::Ar) {
    std::vector<std::vector<double>> series;
    for (const auto& g : train.groups) series.push_back(g.angles);
    m.ar = fit_ar(series, m.outputs, config.ar_order);
    return Model(std::move(impl));
  }

  // Scaled features and targets per group.
  std::vector<std::vector<double>> feats, targets;
  for (const auto& g : train.groups) {
    feats.push_back(sc.features.transform(g.features()));
    targets.push_back(sc.targets.transform(g.angles));
  }
  m.build(config.seed);

  if (!is_recurrent(config.kind)) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      x.insert(x.end(), feats[i].begin(), feats[i].end());
      y.insert(y.end(), targets[i].begin(), targets[i].end());
    }
    m.report = train_rows(m, x, y, x.size() / m.inputs);
    return Model(std::move(impl));
  }

  const std::size_t rows = train.groups.front().rows();
  for (const auto& g : train.groups) {
    if (g.rows() != rows) throw DomainError("train_timestep: trajectories differ in length");
  }
  const std::size_t F = m.inputs, D = m.outputs, C = config.chunk;
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order = iota(train.groups.size());
  std::size_t epoch = 0;
  m.report = optimise(m.params(), config, [&](nn::Adam& opt) {
    shuffle(order, rng);
    double total = 0.0;
    std::size_t chunks = 0;
    for (std::size_t s = 0; s < order.size(); s += config.trajectories_per_batch) {
      const std::size_t b = std::min(config.trajectories_per_batch, order.size() - s);
      nn::SequenceState carry;
      for (std::size_t c0 = 0; c0 < rows; c0 += C) {
        const std::size_t len = std::min(C, rows - c0);
        Tape tape;
        std::vector<Var> xs(len);
        Tensor yb(len * b, D);
        for (std::size_t t = 0; t < len; ++t) {
          Tensor xt(b, F);
          for (std::size_t r = 0; r < b; ++r) {
            const std::size_t g = order[s + r];
            std::copy_n(feats[g].data() + (c0 + t) * F, F, xt.data() + r * F);
            std::copy_n(targets[g].data() + (c0 + t) * D, D, yb.data() + (t * b + r) * D);
          }
          xs[t] = tape.constant(std::move(xt));
        }
        nn::SequenceState next;
        const Var pred = m.chunk_forward(tape, xs, carry.empty() ? nullptr : &carry, &next);
        const Var loss = tape.mse(pred, tape.constant(std::move(yb)));
        total += update(opt, tape, loss, epoch);
        ++chunks;
        carry = std::move(next);
      }
    }
    ++epoch;
    return total / static_cast<double>(chunks);
  });
  return Model(std::move(impl));
}

std::vector<double> Model::predict_windows(const dataset::WindowedDataset& ds) const {
  Model::Impl& m = *impl_;
  if (m.protocol != Protocol::Sliding) throw DomainError("predict_windows: model was trained with the time-step protocol");
  if (ds.dims != m.outputs || ds.window != m.window) throw DomainError("predict_windows: dataset shape differs from training");
  const std::size_t n = ds.size(), W = ds.window, d = ds.dims;
  std::vector<double> out;
  out.reserve(n * d);
  if (m.config.kind == ModelKind::Ar) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto p = m.ar.predict(ds.input(k));
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }
  const std::size_t block = 256;
  for (std::size_t s = 0; s < n; s += block) {
    const std::size_t b = std::min(block, n - s);
    Tape tape;
    Var pred;
    if (!is_recurrent(m.config.kind)) {
      Tensor x(b, W * d);
      for (std::size_t r = 0; r < b; ++r) std::copy_n(ds.input(s + r).data(), W * d, x.data() + r * W * d);
      pred = m.pointwise(tape, tape.constant(std::move(x)));
    } else {
      std::vector<Var> xs(W);
      for (std::size_t t = 0; t < W; ++t) {
        Tensor xt(b, d);
        for (std::size_t r = 0; r < b; ++r) std::copy_n(ds.input(s + r).data() + t * d, d, xt.data() + r * d);
        xs[t] = tape.constant(std::move(xt));
      }
      pred = m.window_forward(tape, xs);
    }
    const auto v = tape.value(pred).values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::vector<double> Model::rollout_windows(const dataset::WindowedDataset& ds, std::size_t steps) const {
  Model::Impl& m = *impl_;
  if (m.protocol != Protocol::Sliding) throw DomainError("rollout_windows: model was trained with the time-step protocol");
  if (ds.size() == 0) throw DomainError("rollout_windows: empty dataset");
  const std::size_t W = ds.window, d = ds.dims;
  const auto first = ds.input(0);
  std::vector<double> history(first.begin(), first.end());
  std::vector<double> out;
  out.reserve(steps * d);
  for (std::size_t k = 0; k < steps; ++k) {
    dataset::WindowedDataset one;
    one.window = W;
    one.dims = d;
    one.scaled.assign(history.end() - static_cast<std::ptrdiff_t>(W * d), history.end());
    one.scaled.resize((W + 1) * d, 0.0);
    one.raw = one.scaled;
    one.pair_count = 1;
    const auto p = predict_windows(one);
    history.insert(history.end(), p.begin(), p.end());
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<double> Model::predict_group(const dataset::TimeStepGroup& group) const {
  Model::Impl& m = *impl_;
  if (m.protocol != Protocol::TimeStep) throw DomainError("predict_group: model was trained with the sliding protocol");
  if (group.initial_deg.size() != m.outputs) throw DomainError("predict_group: joint count differs from training");
  const std::size_t rows = group.rows(), D = m.outputs;
  if (m.config.kind == ModelKind::Ar) {
    const std::size_t p = m.ar.order;
    if (group.angles.size() < p * D) throw DomainError("predict_group: AR needs at least p true rows to seed");
    std::vector<double> out(group.angles.begin(), group.angles.begin() + static_cast<std::ptrdiff_t>(std::min(rows, p) * D));
    while (out.size() < rows * D) {
      const auto next = m.ar.predict(std::span<const double>(out).subspan(out.size() - p * D));
      out.insert(out.end(), next.begin(), next.end());
    }
    return out;
  }
  const auto features = m.scaling->features.transform(group.features());
  auto scaled = is_recurrent(m.config.kind) ? m.sequence_predict(features, rows) : m.pointwise_predict(features, rows);
  m.scaling->targets.inverse_transform_inplace(scaled);
  return scaled;
}

PredictedTrajectory Model::predict_trajectory(std::span<const double> initial_deg, double horizon, double dt,
                                              std::span<const double> seed_angles) const {
  Model::Impl& m = *impl_;
  if (m.protocol != Protocol::TimeStep) throw DomainError("predict_trajectory: model was trained with the sliding protocol");
  if (!(horizon > 0.0) || !(dt > 0.0)) throw DomainError("predict_trajectory: horizon and dt must be positive");
  const auto count = static_cast<std::size_t>(std::llround(horizon / dt));
  if (count == 0) throw DomainError("predict_trajectory: horizon shorter than one sample");
  dataset::TimeStepGroup g;
  g.initial_deg.assign(initial_deg.begin(), initial_deg.end());
  for (std::size_t k = 0; k < count; ++k) g.times.push_back(static_cast<double>(k) * dt);
  if (m.config.kind == ModelKind::Ar) g.angles.assign(seed_angles.begin(), seed_angles.end());
  PredictedTrajectory out;
  out.joints = m.outputs;
  out.angles = predict_group(g);
  out.times = std::move(g.times);
  out.extrapolated = out.times.back() > m.max_time + 1e-9;
  return out;
}

namespace {

nlohmann::json tensor_json(const Tensor& t) {
  return {{"shape", {t.rows(), t.cols()}}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

Tensor tensor_from_json(const nlohmann::json& j, const std::string& name) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw FormatError("checkpoint weight '" + name + "' must have a 2-D shape");
  return Tensor(shape[0], shape[1], j.at("values").get<std::vector<double>>());
}

}  // namespace

nlohmann::json Model::to_json() const {
  const Model::Impl& m = *impl_;
  nlohmann::json weights = nlohmann::json::object();
  if (m.config.kind == ModelKind::Ar) {
    weights["ar.coefficients"] = tensor_json(Tensor(m.ar.dims, m.ar.order + 1, m.ar.values));
  } else {
    for (const nn::Parameter* p : const_cast<Model::Impl&>(m).params()) weights[p->name] = tensor_json(p->value);
  }
  nlohmann::json normalizer;
  if (m.protocol == Protocol::Sliding) {
    normalizer = m.window_norm.to_json();
  } else {
    normalizer = m.scaling->to_json();
  }
  return {{"kind", display_name(m.config.kind)},
          {"protocol", to_string(m.protocol)},
          {"hyperparameters", m.config.to_json()},
          {"seed", m.config.seed},
          {"normalizer", normalizer},
          {"weights", weights},
          {"meta",
           {{"inputs", m.inputs}, {"outputs", m.outputs}, {"window", m.window}, {"max_time", m.max_time}}},
          {"training", {{"epoch_loss", m.report.epoch_loss}, {"final_lr", m.report.final_lr}, {"updates", m.report.updates}}}};
}

Model Model::from_json(const nlohmann::json& j) {
  auto impl = std::make_unique<Model::Impl>();
  Model::Impl& m = *impl;
  try {
    m.config = ModelConfig::from_json(j.at("hyperparameters"));
    if (parse_kind(j.at("kind").get<std::string>()) != m.config.kind) {
      throw FormatError("checkpoint kind disagrees with its hyperparameters");
    }
    m.protocol = parse_protocol(j.at("protocol").get<std::string>());
    const auto& meta = j.at("meta");
    m.inputs = meta.at("inputs").get<std::size_t>();
    m.outputs = meta.at("outputs").get<std::size_t>();
    m.window = meta.at("window").get<std::size_t>();
    m.max_time = meta.at("max_time").get<double>();
    if (m.protocol == Protocol::Sliding) {
      m.window_norm = dataset::MinMaxNormalizer::from_json(j.at("normalizer"));
    } else {
      m.scaling = dataset::TimeStepScaling::from_json(j.at("normalizer"));
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      m.report.epoch_loss = t.value("epoch_loss", std::vector<double>{});
      m.report.final_lr = t.value("final_lr", 0.0);
      m.report.updates = t.value("updates", std::size_t{0});
    }
    const auto& weights = j.at("weights");
    if (m.config.kind == ModelKind::Ar) {
      const Tensor t = tensor_from_json(weights.at("ar.coefficients"), "ar.coefficients");
      m.ar.dims = t.rows();
      m.ar.order = t.cols() - 1;
      m.ar.values.assign(t.values().begin(), t.values().end());
      if (m.ar.order != m.config.ar_order) throw FormatError("checkpoint AR order disagrees with its hyperparameters");
    } else {
      m.build(0);
      const auto params = m.params();
      if (weights.size() != params.size()) {
        throw FormatError("checkpoint has " + std::to_string(weights.size()) + " weights, model expects " +
                          std::to_string(params.size()));
      }
      for (nn::Parameter* p : params) {
        if (!weights.contains(p->name)) throw FormatError("checkpoint is missing weight '" + p->name + "'");
        Tensor t = tensor_from_json(weights.at(p->name), p->name);
        if (!t.same_shape(p->value)) {
          throw FormatError("checkpoint weight '" + p->name + "' has shape " + t.shape_string() + ", expected " +
                            p->value.shape_string());
        }
        p->value = std::move(t);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint JSON: ") + e.what());
  } catch (const DomainError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return Model(std::move(impl));
}

void Model::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << to_json().dump(1) << '\n';
}

Model Model::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace chaoslab::models
