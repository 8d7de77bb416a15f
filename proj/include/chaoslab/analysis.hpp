#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chaoslab/dynamics.hpp"
#include "chaoslab/matrix.hpp"

namespace chaoslab::analysis {

/// Errors below this floor are dropped from the log-error regression.
inline constexpr double kErrorFloor = 1e-30;

struct LyapunovOptions {
  /// Measure separation as the Euclidean norm of the full state difference instead of |dtheta1|.
  bool full_state_norm = false;
  /// Steps at the start of the run excluded from the regression.
  std::size_t skip_steps = 0;
};

struct LyapunovResult {
  std::vector<double> initial_angles_deg;
  double exponent_per_second = 0.0;
  double exponent_per_step = 0.0;
  std::size_t steps_used = 0;
  double perturbation_deg = 0.0;
};

/// Ordinary least-squares slope. Throws DegenerateInputError for < 2 points or identical x.
double regression_slope(std::span<const std::pair<double, double>> points);
double regression_slope(std::span<const double> x, std::span<const double> y);

/// Integrates the reference run and a copy with theta1 raised by `perturb_deg`, then fits the
/// slope of ln(error) against the step index. Throws DegenerateInputError when the runs never
/// separate above the floor.
LyapunovResult lyapunov_exponent(const dynamics::PendulumParams& params,
                                 std::span<const double> initial_deg, double perturb_deg,
                                 std::size_t steps, double dt, const LyapunovOptions& options = {});

/// Inclusive degree range lo:hi:step.
struct AngleRange {
  double lo = 0.0;
  double hi = 180.0;
  double step = 15.0;

  std::vector<double> values() const;
};

struct LyapunovCell {
  double theta1_deg = 0.0;
  double theta2_deg = 0.0;
  std::optional<double> exponent_per_second;  // absent when the cell was degenerate
};

struct LyapunovGrid {
  std::vector<double> theta1_deg;  // rows
  std::vector<double> theta2_deg;  // columns
  std::vector<LyapunovCell> cells;  // row-major

  const LyapunovCell& at(std::size_t row, std::size_t col) const { return cells[row * theta2_deg.size() + col]; }
};

/// Exponents over a double-pendulum initial-condition grid. `threads` > 1 splits rows across
/// worker threads; results are identical to the sequential run.
LyapunovGrid lyapunov_grid(const dynamics::PendulumParams& params, const AngleRange& theta1,
                           const AngleRange& theta2, double perturb_deg, std::size_t steps, double dt,
                           const LyapunovOptions& options = {}, unsigned threads = 1);

/// Header `theta1_deg,theta2_deg,lyapunov_per_s,flag`; degenerate cells have an empty value and flag
/// `degenerate`, valid ones flag `ok`.
void write_heatmap_csv(std::ostream& out, const LyapunovGrid& grid);

/// All eigenvalues of a square real matrix (dimension <= 8) by Householder reduction to
/// Hessenberg form followed by Francis double-shift QR. Order is unspecified.
std::vector<std::complex<double>> eigenvalues(const Matrix& m);

/// Sorts by (real, imag) ascending.
void sort_eigenvalues(std::vector<std::complex<double>>& eigs);

enum class Classification { Center, Saddle, StableNodeFocus, UnstableNodeFocus, Mixed };

std::string to_string(Classification c);

/// Threshold below which a real part counts as zero.
inline constexpr double kImaginaryTolerance = 1e-6;

Classification classify_equilibrium(std::span<const std::complex<double>> eigs);

struct StabilityReport {
  dynamics::PendulumState equilibrium;
  std::vector<std::complex<double>> eigenvalues;  // sorted by (real, imag)
  Classification classification = Classification::Mixed;
};

StabilityReport stability(const dynamics::PendulumState& point, const dynamics::PendulumParams& params);

/// `re,im` rows, then `classification,<name>`.
void write_stability_csv(std::ostream& out, const StabilityReport& report);

}  // namespace chaoslab::analysis
