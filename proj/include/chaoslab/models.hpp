#pragma once

// The model zoo behind one regressor type, with adapters for the sliding-window and time-step
// protocols, plus the autoregressive and linear baselines.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chaoslab/dataset.hpp"
#include "chaoslab/nn/layers.hpp"
#include "json.hpp"

namespace chaoslab::models {

enum class ModelKind { Ar, LinSgd, Ffnn, Vrnn, Lstm, Gru, Birnn, Strnn };

/// Declared order; heatmaps and reports list models in this order.
inline constexpr std::array<ModelKind, 8> kAllKinds = {ModelKind::Ar,   ModelKind::LinSgd, ModelKind::Ffnn,
                                                       ModelKind::Vrnn, ModelKind::Lstm,   ModelKind::Gru,
                                                       ModelKind::Birnn, ModelKind::Strnn};

/// Upper-case display name ("LSTM") and lower-case CLI name ("lstm").
std::string_view display_name(ModelKind kind);
std::string_view cli_name(ModelKind kind);
/// Accepts either spelling, case-insensitive. Throws DomainError otherwise.
ModelKind parse_kind(std::string_view name);
bool is_recurrent(ModelKind kind);

enum class Protocol { Sliding, TimeStep };
std::string_view to_string(Protocol p);
Protocol parse_protocol(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::Lstm;
  std::size_t hidden = 32;
  /// Recurrent layers; STRNN always uses 2.
  std::size_t layers = 1;
  std::size_t epochs = 200;
  double lr = 1e-3;
  double lr_factor = 0.5;
  std::size_t lr_patience = 10;
  double lr_floor = 1e-4;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::size_t ar_order = dataset::kDefaultWindow;
  /// Time-step protocol: whole trajectories per update, and the truncated-BPTT chunk length.
  std::size_t trajectories_per_batch = 1;
  std::size_t chunk = 100;
  /// Sliding protocol and pointwise models: rows (windows) per update.
  std::size_t batch = 64;

  /// Throws DomainError on inconsistent fields (e.g. AR order 0).
  void validate() const;
  std::size_t effective_layers() const noexcept { return kind == ModelKind::Strnn ? 2 : layers; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Per-dimension autoregression x_t = c_1 x_{t-1} + ... + c_p x_{t-p} + c_0.
struct ArCoefficients {
  std::size_t order = 0;
  std::size_t dims = 0;
  /// dims x (order + 1): lags 1..p, then the intercept.
  std::vector<double> values;

  double lag(std::size_t dim, std::size_t k) const { return values[dim * (order + 1) + (k - 1)]; }
  double intercept(std::size_t dim) const { return values[dim * (order + 1) + order]; }
  /// One-step prediction from `history` (at least `order` rows, row-major with `dims` columns,
  /// most recent last).
  std::vector<double> predict(std::span<const double> history) const;
};

/// Least-squares AR fit on row-major `series` with `dims` columns, independently per column.
/// Minimum-norm solution when lags are collinear (a constant series fits exactly through the
/// intercept). Throws DegenerateInputError when p >= series length or there are fewer
/// equations than unknowns.
ArCoefficients fit_ar(std::span<const double> series, std::size_t dims, std::size_t order);

/// Same, pooling the equations of several independent series.
ArCoefficients fit_ar(const std::vector<std::vector<double>>& series, std::size_t dims, std::size_t order);

/// Linear map y = x W + b, used by the LINSGD model.
struct LinearFit {
  nn::Tensor weight;  // inputs x outputs
  nn::Tensor bias;    // 1 x outputs
  std::vector<double> epoch_loss;
};

/// Fits a linear map to rows by minibatch Adam on MSE, with the plateau schedule.
/// Uses config.epochs, lr settings, batch and seed. Throws TrainingError on a non-finite loss.
LinearFit fit_linear_sgd(const nn::Tensor& x, const nn::Tensor& y, const ModelConfig& config);

struct TrainReport {
  std::vector<double> epoch_loss;
  double final_lr = 0.0;
  std::size_t updates = 0;
};

/// Angles predicted over a horizon, in radians.
struct PredictedTrajectory {
  std::vector<double> times;
  std::vector<double> angles;  // rows x joints
  std::size_t joints = 0;
  /// Set when the horizon goes past the last trained time.
  bool extrapolated = false;
};

class Model {
 public:
  Model();
  ~Model();
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const noexcept;
  Protocol protocol() const noexcept;
  std::size_t parameter_count() const;
  const TrainReport& report() const noexcept;

  /// Sliding protocol: scaled one-step predictions for pairs 0..size()-1 of `ds`, teacher-forced
  /// (true windows in). Row-major size() x dims.
  std::vector<double> predict_windows(const dataset::WindowedDataset& ds) const;
  /// Closed-loop variant: seeds with window 0 and feeds predictions back for `steps` steps.
  std::vector<double> rollout_windows(const dataset::WindowedDataset& ds, std::size_t steps) const;

  /// Time-step protocol: predictions (radians) at every time of `group`. AR seeds its rollout
  /// with the first p true rows of the group, which are returned unchanged.
  std::vector<double> predict_group(const dataset::TimeStepGroup& group) const;
  /// Samples t = 0, dt, ... while t < horizon (within 1e-9). AR needs `seed_angles`
  /// (at least p rows, radians).
  PredictedTrajectory predict_trajectory(std::span<const double> initial_deg, double horizon, double dt,
                                         std::span<const double> seed_angles = {}) const;

  const dataset::MinMaxNormalizer& window_normalizer() const;
  const dataset::TimeStepScaling& timestep_scaling() const;

  /// `{kind, protocol, hyperparameters, seed, normalizer, weights: {name: {shape, values}}, meta}`
  nlohmann::json to_json() const;
  static Model from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Model load(const std::string& path);

  friend Model train_sliding(const ModelConfig&, const dataset::WindowedDataset&);
  friend Model train_timestep(const ModelConfig&, const dataset::TimeStepDataset&);

  struct Impl;

 private:
  explicit Model(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Worst relative error between analytic and central-difference gradients of the MSE loss
/// through the kind's own forward graph, on random data with `steps` time steps and two
/// outputs. AR is checked as its linear predictor over the flattened lag window.
double model_gradient_check(ModelKind kind, Protocol protocol, std::size_t hidden, std::size_t steps,
                            std::uint64_t seed);

/// Trains on the pairs of `train` (a subset from dataset::split, or a whole dataset).
Model train_sliding(const ModelConfig& config, const dataset::WindowedDataset& train);

/// Trains on every group of `train`, which must carry its scaling (dataset::split_holdout).
Model train_timestep(const ModelConfig& config, const dataset::TimeStepDataset& train);

}  // namespace chaoslab::models
