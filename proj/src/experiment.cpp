#include "chaoslab/experiment.hpp"

#include <cstdio>

#include "chaoslab/error.hpp"
#include "chaoslab/integrator.hpp"

namespace chaoslab::experiment {

std::vector<double> SuiteSpec::holdout() const {
  if (joints == 2) return {theta1_deg, holdout_deg};
  return {theta1_deg, 0.0, holdout_deg};
}

std::vector<std::vector<double>> SuiteSpec::grid() const {
  return dataset::training_angle_grid(theta1_deg, vary_start, vary_end, vary_step, joints);
}

std::vector<std::string> suite_names() {
  return {"double-friction", "double-frictionless", "triple-friction", "triple-frictionless"};
}

SuiteSpec suite(std::string_view name) {
  SuiteSpec s;
  s.name = std::string(name);
  if (name == "double-friction") {
    s.joints = 2;
    s.damping = dynamics::kDefaultDamping;
  } else if (name == "double-frictionless") {
    s.joints = 2;
  } else if (name == "triple-friction") {
    s.joints = 3;
    s.damping = dynamics::kDefaultDamping;
  } else if (name == "triple-frictionless") {
    s.joints = 3;
  } else {
    throw DomainError("unknown suite '" + std::string(name) +
                      "' (expected double-friction, double-frictionless, triple-friction or triple-frictionless)");
  }
  return s;
}

SuiteData build_suite_data(const SuiteSpec& spec) {
  const auto params = dynamics::PendulumParams::unit(spec.joints).with_damping(spec.damping);
  const auto grid = spec.grid();
  const auto holdout = spec.holdout();
  std::vector<integrator::Trajectory> trajs;
  trajs.reserve(grid.size() + 1);
  for (const auto& g : grid) trajs.push_back(integrator::integrate_from_degrees(params, g, spec.duration, spec.dt));
  trajs.push_back(integrator::integrate_from_degrees(params, holdout, spec.duration, spec.dt));
  const auto all = dataset::make_timestep_dataset(trajs, spec.samples);
  auto [train, test] = dataset::split_holdout(all, grid, holdout);
  return SuiteData{spec, std::move(train), std::move(test)};
}

eval::Scenario scenario(const SuiteSpec& spec) {
  eval::Scenario s;
  s.system = spec.joints == 2 ? "double" : "triple";
  s.friction = spec.friction();
  s.protocol = "timestep";
  s.test_condition = condition_label(spec.holdout());
  return s;
}

std::string condition_label(std::span<const double> angles_deg) {
  std::string out;
  for (std::size_t i = 0; i < angles_deg.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", angles_deg[i]);
    if (i) out += ';';
    out += buf;
  }
  return out;
}

models::ModelConfig default_config(models::ModelKind kind, models::Protocol protocol) {
  using models::ModelKind;
  models::ModelConfig c;
  c.kind = kind;
  c.hidden = 32;
  if (kind == ModelKind::Ar) return c;
  if (protocol == models::Protocol::Sliding) {
    c.epochs = models::is_recurrent(kind) ? 60 : 200;
    c.batch = 64;
    c.lr = 3e-3;
    c.lr_patience = 5;
    return c;
  }
  if (!models::is_recurrent(kind)) {
    c.epochs = 200;
    c.batch = 256;
    c.lr = 1e-2;
    c.lr_patience = 10;
    return c;
  }
  c.epochs = 600;
  c.lr = 3e-3;
  c.lr_patience = 30;
  c.trajectories_per_batch = 1;
  c.chunk = 50;
  return c;
}

CellResult run_cell(const SuiteData& data, const models::ModelConfig& config) {
  models::Model model = models::train_timestep(config, data.train);
  eval::PredictionDump dump;
  dump.dims = static_cast<std::size_t>(data.train.joints);
  for (const auto& g : data.test.groups) {
    const auto pred = model.predict_group(g);
    dump.times.insert(dump.times.end(), g.times.begin(), g.times.end());
    dump.actual.insert(dump.actual.end(), g.angles.begin(), g.angles.end());
    dump.predicted.insert(dump.predicted.end(), pred.begin(), pred.end());
  }
  eval::MetricsRecord m;
  m.model = std::string(models::display_name(config.kind));
  m.scenario = scenario(data.spec);
  m.seed = config.seed;
  m.rmse = eval::rmse(dump.predicted, dump.actual);
  m.r2 = eval::r2(dump.predicted, dump.actual, dump.dims);
  return CellResult{std::move(model), std::move(dump), std::move(m)};
}

}  // namespace chaoslab::experiment
