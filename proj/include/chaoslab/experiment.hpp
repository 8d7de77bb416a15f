#pragma once

// The time-step experiment matrix: suites (system x friction), their datasets, and one
// train-and-evaluate cell per (model, seed).

#include <string>
#include <string_view>
#include <vector>

#include "chaoslab/dataset.hpp"
#include "chaoslab/eval.hpp"
#include "chaoslab/models.hpp"

namespace chaoslab::experiment {

struct SuiteSpec {
  std::string name;
  int joints = 2;
  double damping = 0.0;  // per joint
  double theta1_deg = 120.0;
  double vary_start = 0.0;
  double vary_end = 3.0;
  double vary_step = 0.1;
  double holdout_deg = 2.05;  // value of the varied angle
  double duration = 10.0;
  double dt = 1e-3;
  std::size_t samples = dataset::kDefaultSamplesPerTrajectory;

  bool friction() const noexcept { return damping > 0.0; }
  std::vector<double> holdout() const;
  std::vector<std::vector<double>> grid() const;
};

/// double-friction, double-frictionless, triple-friction, triple-frictionless.
std::vector<std::string> suite_names();
/// Throws DomainError for an unknown name.
SuiteSpec suite(std::string_view name);

struct SuiteData {
  SuiteSpec spec;
  dataset::TimeStepDataset train;  // grid trajectories, carrying the scaling
  dataset::TimeStepDataset test;   // the hold-out trajectory
};

/// Integrates the grid and the hold-out and splits them.
SuiteData build_suite_data(const SuiteSpec& spec);

eval::Scenario scenario(const SuiteSpec& spec);
/// "120;0;2.05" style condition label.
std::string condition_label(std::span<const double> angles_deg);

/// Training settings used by `reproduce` and the acceptance run.
models::ModelConfig default_config(models::ModelKind kind, models::Protocol protocol);

struct CellResult {
  models::Model model;
  eval::PredictionDump dump;
  eval::MetricsRecord metrics;
};

/// Trains `config` on the suite's grid and evaluates on its hold-out.
CellResult run_cell(const SuiteData& data, const models::ModelConfig& config);

}  // namespace chaoslab::experiment
