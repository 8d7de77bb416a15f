#pragma once

// Metrics, experiment-matrix aggregation and SVG figures.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chaoslab::eval {

/// sqrt of the mean squared error over every element. Throws DomainError on a size mismatch or
/// empty input.
double rmse(std::span<const double> pred, std::span<const double> target);
double mse(std::span<const double> pred, std::span<const double> target);

/// 1 - SS_res/SS_tot per column of row-major data with `dims` columns, averaged uniformly.
/// Throws DegenerateInputError when a target column has zero variance.
double r2(std::span<const double> pred, std::span<const double> target, std::size_t dims = 1);

struct Scenario {
  std::string system = "double";  // double | triple
  bool friction = true;
  std::string protocol = "timestep";
  std::string test_condition;     // e.g. "120;2.05" or "test-split"; no commas

  /// "double/friction/timestep/120;2.05"
  std::string label() const;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct MetricsRecord {
  std::string model;  // display name, e.g. "LSTM"
  Scenario scenario;
  std::uint64_t seed = 0;
  double rmse = 0.0;
  double r2 = 0.0;
};

/// Header `model,system,friction,protocol,test_condition,seed,rmse,r2`; friction is 0 or 1.
/// Throws DomainError when a text field contains a comma.
void write_metrics_csv(const std::string& path, std::span<const MetricsRecord> records);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

/// Actual vs predicted angles over time, radians.
struct PredictionDump {
  std::vector<double> times;
  std::size_t dims = 0;
  std::vector<double> actual;     // rows x dims
  std::vector<double> predicted;  // rows x dims

  std::size_t rows() const noexcept { return times.size(); }
  /// Throws DomainError when the arrays disagree in length.
  void validate() const;
};

/// Header `t,actual_theta1,pred_theta1,...`.
void write_prediction_csv(const std::string& path, const PredictionDump& dump);
PredictionDump read_prediction_csv(const std::string& path);

/// Metrics recomputed from a persisted prediction CSV.
MetricsRecord metrics_from_predictions(const std::string& path, std::string model, Scenario scenario,
                                       std::uint64_t seed);

/// Model x scenario matrix of median-over-seeds RMSE. Rows follow the declared model order,
/// columns the order in which scenarios first appear. Missing cells are empty.
struct Heatmap {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::optional<double>> cells;  // rows x columns

  std::optional<double> at(std::size_t r, std::size_t c) const { return cells[r * columns.size() + c]; }
};

/// Throws DomainError on a duplicate (model, scenario, seed).
Heatmap rmse_heatmap(std::span<const MetricsRecord> records);

/// Header `model,<scenario labels...>`; missing cells are written as `NA`.
void write_heatmap_csv(const std::string& path, const Heatmap& map);

/// Darker cell = lower value (log scale when all values are positive). Each cell is a rect
/// with its value as text.
std::string heatmap_svg(const Heatmap& map, const std::string& title);

struct PlotLabels {
  std::string title;
  std::string x = "t (s)";
  std::string y = "theta (rad)";
};

/// One panel per angle dimension with the actual series in red and the prediction in blue.
/// Uses only svg, rect, path and text elements.
std::string trajectory_svg(const PredictionDump& dump, const PlotLabels& labels);

/// Writes `text` to `path`, throwing FormatError if the file cannot be opened.
void write_text(const std::string& path, const std::string& text);

}  // namespace chaoslab::eval
