#pragma once

// The two supervised regimes built from simulated trajectories: sliding windows over one
// trajectory, and time-conditioned rows [t, initial angles] -> angles(t) over many trajectories.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chaoslab/integrator.hpp"
#include "json.hpp"

namespace chaoslab::dataset {

inline constexpr std::size_t kDefaultWindow = 50;
inline constexpr double kDefaultTrainFraction = 0.8;
inline constexpr std::size_t kDefaultSamplesPerTrajectory = 2000;

/// Per-feature affine map of the fit range onto [0, 1]. Constant features map to 0.
class MinMaxNormalizer {
 public:
  MinMaxNormalizer() = default;

  /// Fits on row-major data with `features` columns. Throws DomainError if there are no rows.
  static MinMaxNormalizer fit(std::span<const double> rows, std::size_t features);
  MinMaxNormalizer(std::vector<double> mins, std::vector<double> maxs);

  bool fitted() const noexcept { return !mins_.empty(); }
  std::size_t features() const noexcept { return mins_.size(); }
  const std::vector<double>& mins() const noexcept { return mins_; }
  const std::vector<double>& maxs() const noexcept { return maxs_; }

  /// Row-major data, length a multiple of features(). Throws DomainError before fit.
  std::vector<double> transform(std::span<const double> rows) const;
  std::vector<double> inverse_transform(std::span<const double> rows) const;
  void transform_inplace(std::span<double> rows) const;
  void inverse_transform_inplace(std::span<double> rows) const;

  double transform_value(double x, std::size_t feature) const;
  double inverse_value(double x, std::size_t feature) const;

  /// `{"mins": [...], "maxs": [...]}`
  nlohmann::json to_json() const;
  static MinMaxNormalizer from_json(const nlohmann::json& j);

  friend bool operator==(const MinMaxNormalizer&, const MinMaxNormalizer&) = default;

 private:
  void require_fitted(std::size_t length) const;

  std::vector<double> mins_;
  std::vector<double> maxs_;
};

/// Windows over a scaled angle series. Pair k has input rows k..k+W-1 and target row k+W.
/// Windows are views into `scaled`, so no window data is duplicated.
struct WindowedDataset {
  std::size_t window = kDefaultWindow;
  std::size_t dims = 0;
  std::vector<double> raw;     // rows x dims, radians
  std::vector<double> scaled;  // rows x dims, normalized
  MinMaxNormalizer normalizer;
  double train_fraction = kDefaultTrainFraction;  // portion the normalizer was fit on
  std::size_t first_pair = 0;                     // subset produced by split()
  std::size_t pair_count = 0;

  std::size_t rows() const noexcept { return dims == 0 ? 0 : raw.size() / dims; }
  std::size_t size() const noexcept { return pair_count; }
  /// Window k (relative to this subset): W*dims scaled values.
  std::span<const double> input(std::size_t k) const;
  std::span<const double> target(std::size_t k) const;
  std::span<const double> raw_target(std::size_t k) const;
  /// Pairs used to fit the normalizer: floor(train_fraction * total pairs).
  std::size_t total_pairs() const noexcept { return rows() - window; }
  std::size_t train_pairs() const noexcept;
};

/// Angles of `traj` (velocities dropped) cut into windows of `window` rows.
WindowedDataset make_windows(const integrator::Trajectory& traj, std::size_t window = kDefaultWindow,
                             double train_fraction = kDefaultTrainFraction);
/// Same, from an explicit row-major series with `dims` columns.
WindowedDataset make_windows(std::span<const double> series, std::size_t dims, std::size_t window = kDefaultWindow,
                             double train_fraction = kDefaultTrainFraction);

/// Chronological split. `fraction` must match the fraction the normalizer was fit with.
std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& ds, double fraction);

/// One trajectory's rows in the time-conditioned regime.
struct TimeStepGroup {
  std::vector<double> initial_deg;  // generating condition
  std::vector<double> times;        // seconds, uniform spacing
  std::vector<double> angles;       // rows x joints, radians

  std::size_t rows() const noexcept { return times.size(); }
  /// Row-major [t, initial angles...] with 1 + joints columns.
  std::vector<double> features() const;
};

/// Feature/target scalers, fit on training rows only.
struct TimeStepScaling {
  MinMaxNormalizer features;  // [t, theta_i0 deg...]
  MinMaxNormalizer targets;   // [theta_i rad...]

  nlohmann::json to_json() const;
  static TimeStepScaling from_json(const nlohmann::json& j);
  friend bool operator==(const TimeStepScaling&, const TimeStepScaling&) = default;
};

struct TimeStepDataset {
  int joints = 2;
  std::vector<TimeStepGroup> groups;
  std::optional<TimeStepScaling> scaling;

  std::size_t rows() const;
  double sample_interval() const;  // spacing of t within groups
  double max_time() const;
  const TimeStepGroup* find(std::span<const double> initial_deg) const;
};

/// Every trajectory contributes `samples_per_traj` rows at stride floor(steps / samples).
TimeStepDataset make_timestep_dataset(std::span<const integrator::Trajectory> trajs,
                                      std::size_t samples_per_traj = kDefaultSamplesPerTrajectory);

/// Inclusive grid of initial conditions. Double pendulum varies theta2; triple varies theta3
/// with theta2 = 0. Values are rounded to 1e-9 degrees.
std::vector<std::vector<double>> training_angle_grid(double theta1_deg, double varied_start, double varied_end,
                                                     double increment, int joints = 2);

/// Fits feature and target scalers on every row of `train`.
TimeStepScaling fit_scaling(const TimeStepDataset& train);

/// Whole-trajectory hold-out split. `train_grid` selects training groups; `holdout` must not be
/// in the grid (leakage guard) and must be present in `ds`. Both halves carry the training scaling.
std::pair<TimeStepDataset, TimeStepDataset> split_holdout(const TimeStepDataset& ds,
                                                          std::span<const std::vector<double>> train_grid,
                                                          std::span<const double> holdout);

bool same_condition(std::span<const double> a, std::span<const double> b, double tol = 1e-9);

/// Header `t,theta1_0_deg[,theta2_0_deg,theta3_0_deg],theta1[,theta2,theta3]`, raw units.
void write_timestep_csv(const std::string& path, const TimeStepDataset& ds);
/// Groups consecutive rows sharing an initial condition; validates uniform increasing time.
TimeStepDataset read_timestep_csv(const std::string& path);

/// Window-mode persistence: trajectory CSV plus `<path>.manifest` holding `window=W`.
void write_window_manifest(const std::string& csv_path, std::size_t window, double train_fraction);
std::pair<std::size_t, double> read_window_manifest(const std::string& csv_path);

}  // namespace chaoslab::dataset
