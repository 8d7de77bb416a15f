// chaoslab command-line front end. Angles on the command line are degrees; CSV bodies are radians.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "chaoslab/analysis.hpp"
#include "chaoslab/csv.hpp"
#include "chaoslab/dataset.hpp"
#include "chaoslab/dynamics.hpp"
#include "chaoslab/error.hpp"
#include "chaoslab/eval.hpp"
#include "chaoslab/experiment.hpp"
#include "chaoslab/integrator.hpp"
#include "chaoslab/models.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace chaoslab;
using nlohmann::json;

namespace {

// Bad flag values: reported with usage text and exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path output_root() {
  const char* env = std::getenv("CHAOSLAB_OUT");
  return env && *env ? fs::path(env) : fs::current_path();
}

fs::path resolve_out(const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = output_root() / path;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return path;
}

fs::path resolve_in(const std::string& p) {
  fs::path path(p);
  if (fs::exists(path) || path.is_absolute()) return path;
  const fs::path under_root = output_root() / path;
  return fs::exists(under_root) ? under_root : path;
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  for (const auto& field : csv::split_line(text, ',')) {
    try {
      out.push_back(csv::parse_double(field, flag));
    } catch (const FormatError&) {
      throw UsageError(flag + ": '" + text + "' is not a comma-separated list of numbers");
    }
    if (!std::isfinite(out.back())) throw UsageError(flag + ": values must be finite");
  }
  return out;
}

analysis::AngleRange parse_range(const std::string& text, const std::string& flag) {
  const auto parts = csv::split_line(text, ':');
  if (parts.size() != 3) throw UsageError(flag + ": expected lo:hi:step, got '" + text + "'");
  analysis::AngleRange r;
  try {
    r.lo = csv::parse_double(parts[0], flag);
    r.hi = csv::parse_double(parts[1], flag);
    r.step = csv::parse_double(parts[2], flag);
  } catch (const FormatError&) {
    throw UsageError(flag + ": expected lo:hi:step, got '" + text + "'");
  }
  if (!(r.step > 0.0) || r.hi < r.lo) throw UsageError(flag + ": need step > 0 and hi >= lo");
  return r;
}

int joints_of(const std::string& system) {
  if (system == "double") return 2;
  if (system == "triple") return 3;
  throw UsageError("--system must be double or triple");
}

// One value per joint; a single value is broadcast.
std::vector<double> per_joint(const std::string& text, int joints, const std::string& flag) {
  auto v = parse_list(text, flag);
  if (v.size() == 1) v.assign(static_cast<std::size_t>(joints), v[0]);
  if (v.size() != static_cast<std::size_t>(joints)) {
    throw UsageError(flag + ": expected " + std::to_string(joints) + " values, got " + std::to_string(v.size()));
  }
  return v;
}

dynamics::PendulumParams make_params(int joints, const std::string& damping) {
  auto p = dynamics::PendulumParams::unit(joints);
  const auto c = per_joint(damping, joints, "--damping");
  for (int i = 0; i < joints; ++i) {
    if (c[i] < 0.0) throw UsageError("--damping values must be non-negative");
    p.damping[i] = c[i];
  }
  p.validate();
  return p;
}

std::size_t step_count(double t_end, double dt) {
  if (!(dt > 0.0) || !(t_end > 0.0)) throw UsageError("--t-end and --dt must be positive");
  return static_cast<std::size_t>(std::llround(t_end / dt));
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

// Manifest: the subcommand path, a canonical argv that replays the run, and resolved extras.
struct Manifest {
  std::vector<std::string> command;
  json options = json::object();
  std::vector<std::string> argv;
  json resolved = json::object();
};

Manifest collect(const std::vector<CLI::App*>& chain) {
  Manifest m;
  for (CLI::App* app : chain) {
    m.command.push_back(app->get_name());
    m.argv.push_back(app->get_name());
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help" || name == "help-all" || name == "from-manifest") continue;
      if (opt->get_expected_max() == 0) {
        const bool on = opt->count() > 0;
        m.options[name] = on;
        if (on) m.argv.push_back("--" + name);
        continue;
      }
      const std::string value = opt->count() ? join(opt->results(), ",") : opt->get_default_str();
      if (value.empty()) continue;
      m.options[name] = value;
      m.argv.push_back("--" + name);
      m.argv.push_back(value);
    }
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  const json j{{"tool", "chaoslab"},
               {"command", m.command},
               {"options", m.options},
               {"argv", m.argv},
               {"resolved", m.resolved}};
  eval::write_text(path.string(), j.dump(2) + "\n");
}

fs::path manifest_for(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

// simulate

struct SimulateOpts {
  std::string system = "double";
  std::string theta;
  std::string omega = "0";
  std::string damping = "0";
  double t_end = 10.0;
  double dt = integrator::kDefaultDt;
  std::string out;
  bool emit_energy = false;
};

void add_simulate(CLI::App& app, SimulateOpts& o) {
  auto* s = app.add_subcommand("simulate", "Integrate a pendulum with RK4 and write its trajectory CSV");
  s->add_option("--system", o.system, "double or triple")->check(CLI::IsMember({"double", "triple"}));
  s->add_option("--theta", o.theta, "Initial angles in degrees, comma-separated (e.g. 120,0)")->required();
  s->add_option("--omega", o.omega, "Initial angular velocities in degrees/s (one value is broadcast)");
  s->add_option("--damping", o.damping, "Per-joint damping constants (one value is broadcast)");
  s->add_option("--t-end", o.t_end, "Duration in seconds");
  s->add_option("--dt", o.dt, "Step size in seconds");
  s->add_option("--out", o.out, "Trajectory CSV path (relative paths go under $CHAOSLAB_OUT)")->required();
  s->add_flag("--emit-energy", o.emit_energy, "Append a total-energy column");
}

int run_simulate(const SimulateOpts& o, Manifest m) {
  const int joints = joints_of(o.system);
  const auto params = make_params(joints, o.damping);
  const auto theta = per_joint(o.theta, joints, "--theta");
  if (parse_list(o.theta, "--theta").size() != static_cast<std::size_t>(joints)) {
    throw UsageError("--theta: expected " + std::to_string(joints) + " angles");
  }
  const auto omega = per_joint(o.omega, joints, "--omega");
  auto state = dynamics::PendulumState::from_degrees(theta);
  for (int i = 0; i < joints; ++i) state.omega(i) = omega[i] * std::acos(-1.0) / 180.0;
  step_count(o.t_end, o.dt);
  auto traj = integrator::integrate(params, state, o.t_end, o.dt);
  traj.initial_angles_deg = theta;
  const fs::path out = resolve_out(o.out);
  integrator::write_trajectory_csv(out.string(), traj, o.emit_energy);
  m.resolved = {{"out", out.string()}, {"steps", traj.steps()}};
  write_manifest(manifest_for(out), m);
  std::cout << "wrote " << traj.states.size() << " rows to " << out.string() << '\n';
  return 0;
}

// lyapunov

struct LyapunovOpts {
  std::string grid = "0:180:15";
  std::string grid2;
  double perturb = 0.1;
  double duration = 10.0;
  double dt = integrator::kDefaultDt;
  std::string damping = "0";
  unsigned threads = 1;
  bool full_state = false;
  std::string out;
  std::string svg;
};

void add_lyapunov(CLI::App& app, LyapunovOpts& o) {
  auto* s = app.add_subcommand("lyapunov", "Lyapunov exponents over a double-pendulum initial-angle grid");
  s->add_option("--grid", o.grid, "theta1 range lo:hi:step in degrees (also theta2 unless --grid2)");
  s->add_option("--grid2", o.grid2, "theta2 range lo:hi:step in degrees");
  s->add_option("--perturb", o.perturb, "Perturbation of theta1 in degrees");
  s->add_option("--duration", o.duration, "Seconds per run");
  s->add_option("--dt", o.dt, "Step size in seconds");
  s->add_option("--damping", o.damping, "Per-joint damping constants");
  s->add_option("--threads", o.threads, "Worker threads (results do not depend on this)")->check(CLI::PositiveNumber);
  s->add_flag("--full-state", o.full_state, "Measure separation on the full state instead of theta1");
  s->add_option("--out", o.out, "Heatmap CSV path")->required();
  s->add_option("--svg", o.svg, "Optional heatmap SVG path");
}

int run_lyapunov(const LyapunovOpts& o, Manifest m) {
  const auto params = make_params(2, o.damping);
  const auto r1 = parse_range(o.grid, "--grid");
  const auto r2 = o.grid2.empty() ? r1 : parse_range(o.grid2, "--grid2");
  if (!(o.perturb > 0.0)) throw UsageError("--perturb must be positive");
  analysis::LyapunovOptions lo;
  lo.full_state_norm = o.full_state;
  const auto grid = analysis::lyapunov_grid(params, r1, r2, o.perturb, step_count(o.duration, o.dt), o.dt, lo, o.threads);
  const fs::path out = resolve_out(o.out);
  std::ostringstream csv_text;
  analysis::write_heatmap_csv(csv_text, grid);
  eval::write_text(out.string(), csv_text.str());
  m.resolved = {{"out", out.string()}, {"cells", grid.cells.size()}};
  if (!o.svg.empty()) {
    eval::Heatmap map;
    for (double t : grid.theta1_deg) map.rows.push_back(experiment::condition_label(std::vector<double>{t}));
    for (double t : grid.theta2_deg) map.columns.push_back(experiment::condition_label(std::vector<double>{t}));
    for (const auto& c : grid.cells) map.cells.push_back(c.exponent_per_second);
    const fs::path svg = resolve_out(o.svg);
    eval::write_text(svg.string(), eval::heatmap_svg(map, "Lyapunov exponent (1/s), rows theta1, columns theta2"));
    m.resolved["svg"] = svg.string();
  }
  write_manifest(manifest_for(out), m);
  std::cout << "wrote " << grid.cells.size() << " cells to " << out.string() << '\n';
  return 0;
}

// stability

struct StabilityOpts {
  std::string system = "double";
  std::string point = "0,0";
  std::string damping = "0";
  std::string out = "stability.csv";
};

void add_stability(CLI::App& app, StabilityOpts& o) {
  auto* s = app.add_subcommand("stability", "Jacobian eigenvalues and classification at an equilibrium");
  s->add_option("--system", o.system, "double or triple")->check(CLI::IsMember({"double", "triple"}));
  s->add_option("--point", o.point, "Equilibrium angles in degrees (velocities zero)");
  s->add_option("--damping", o.damping, "Per-joint damping constants");
  s->add_option("--out", o.out, "Eigenvalue CSV path");
}

int run_stability(const StabilityOpts& o, Manifest m) {
  const int joints = joints_of(o.system);
  const auto params = make_params(joints, o.damping);
  const auto point = parse_list(o.point, "--point");
  if (point.size() != static_cast<std::size_t>(joints)) {
    throw UsageError("--point: expected " + std::to_string(joints) + " angles");
  }
  const auto report = analysis::stability(dynamics::PendulumState::from_degrees(point), params);
  for (const auto& e : report.eigenvalues) {
    std::printf("%+.7f %+.7fi\n", e.real(), e.imag());
  }
  double trace = 0.0;
  for (const auto& e : report.eigenvalues) trace += e.real();
  std::printf("trace (sum of eigenvalues): %+.7f\n", trace);
  std::cout << "classification: " << analysis::to_string(report.classification) << '\n';
  const fs::path out = resolve_out(o.out);
  std::ostringstream text;
  analysis::write_stability_csv(text, report);
  eval::write_text(out.string(), text.str());
  m.resolved = {{"out", out.string()}, {"classification", analysis::to_string(report.classification)}};
  write_manifest(manifest_for(out), m);
  return 0;
}

// dataset

struct TimestepOpts {
  std::string system = "double";
  double theta1 = 120.0;
  std::string vary = "0:3:0.1";
  double holdout = 2.05;
  std::size_t samples = dataset::kDefaultSamplesPerTrajectory;
  std::string damping = csv::format_double(dynamics::kDefaultDamping);
  double t_end = 10.0;
  double dt = integrator::kDefaultDt;
  std::string out = "train.csv";
  std::string holdout_out = "holdout.csv";
};

struct WindowOpts {
  std::string system = "double";
  std::string theta = "90,90";
  std::string damping = "0";
  double t_end = 10.0;
  double dt = integrator::kDefaultDt;
  std::size_t window = dataset::kDefaultWindow;
  double train_fraction = dataset::kDefaultTrainFraction;
  std::string out = "window.csv";
};

void add_dataset(CLI::App& app, TimestepOpts& t, WindowOpts& w) {
  auto* d = app.add_subcommand("dataset", "Build a time-step or sliding-window dataset");
  d->require_subcommand(1);
  auto* ts = d->add_subcommand("timestep", "Grid of initial angles plus a hold-out, sampled per trajectory");
  ts->add_option("--system", t.system, "double (varies theta2) or triple (varies theta3)")
      ->check(CLI::IsMember({"double", "triple"}));
  ts->add_option("--theta1", t.theta1, "Fixed first angle in degrees");
  ts->add_option("--vary", t.vary, "Varied angle range lo:hi:step in degrees (inclusive)");
  ts->add_option("--holdout", t.holdout, "Varied angle of the hold-out trajectory in degrees");
  ts->add_option("--samples", t.samples, "Rows per trajectory")->check(CLI::PositiveNumber);
  ts->add_option("--damping", t.damping, "Per-joint damping constants (0 for frictionless)");
  ts->add_option("--t-end", t.t_end, "Trajectory duration in seconds");
  ts->add_option("--dt", t.dt, "Integration step in seconds");
  ts->add_option("--out", t.out, "Training CSV path");
  ts->add_option("--holdout-out", t.holdout_out, "Hold-out CSV path");

  auto* ws = d->add_subcommand("window", "One trajectory for the sliding-window protocol");
  ws->add_option("--system", w.system, "double or triple")->check(CLI::IsMember({"double", "triple"}));
  ws->add_option("--theta", w.theta, "Initial angles in degrees");
  ws->add_option("--damping", w.damping, "Per-joint damping constants");
  ws->add_option("--t-end", w.t_end, "Duration in seconds");
  ws->add_option("--dt", w.dt, "Step size in seconds");
  ws->add_option("--window", w.window, "Window length W")->check(CLI::PositiveNumber);
  ws->add_option("--train-fraction", w.train_fraction, "Chronological training fraction in (0,1)");
  ws->add_option("--out", w.out, "Trajectory CSV path (a .manifest sidecar records W)");
}

int run_dataset_timestep(const TimestepOpts& o, Manifest m) {
  const int joints = joints_of(o.system);
  const auto params = make_params(joints, o.damping);
  const auto range = parse_range(o.vary, "--vary");
  step_count(o.t_end, o.dt);
  const auto grid = dataset::training_angle_grid(o.theta1, range.lo, range.hi, range.step, joints);
  const std::vector<double> hold = joints == 2 ? std::vector<double>{o.theta1, o.holdout}
                                               : std::vector<double>{o.theta1, 0.0, o.holdout};
  std::vector<integrator::Trajectory> trajs;
  for (const auto& g : grid) trajs.push_back(integrator::integrate_from_degrees(params, g, o.t_end, o.dt));
  trajs.push_back(integrator::integrate_from_degrees(params, hold, o.t_end, o.dt));
  const auto all = dataset::make_timestep_dataset(trajs, o.samples);
  const auto [train, test] = dataset::split_holdout(all, grid, hold);
  const fs::path out = resolve_out(o.out), hout = resolve_out(o.holdout_out);
  dataset::write_timestep_csv(out.string(), train);
  dataset::write_timestep_csv(hout.string(), test);
  m.resolved = {{"out", out.string()},
                {"holdout_out", hout.string()},
                {"train_rows", train.rows()},
                {"holdout_rows", test.rows()},
                {"trajectories", grid.size()}};
  write_manifest(manifest_for(out), m);
  write_manifest(manifest_for(hout), m);
  std::cout << "wrote " << train.rows() << " training rows (" << grid.size() << " trajectories) to " << out.string()
            << " and " << test.rows() << " hold-out rows to " << hout.string() << '\n';
  return 0;
}

int run_dataset_window(const WindowOpts& o, Manifest m) {
  const int joints = joints_of(o.system);
  const auto params = make_params(joints, o.damping);
  const auto theta = parse_list(o.theta, "--theta");
  if (theta.size() != static_cast<std::size_t>(joints)) throw UsageError("--theta: expected " + std::to_string(joints) + " angles");
  if (!(o.train_fraction > 0.0 && o.train_fraction < 1.0)) throw UsageError("--train-fraction must be in (0,1)");
  step_count(o.t_end, o.dt);
  const auto traj = integrator::integrate_from_degrees(params, theta, o.t_end, o.dt);
  if (traj.states.size() <= o.window) throw UsageError("--window must be shorter than the trajectory");
  const fs::path out = resolve_out(o.out);
  integrator::write_trajectory_csv(out.string(), traj);
  dataset::write_window_manifest(out.string(), o.window, o.train_fraction);
  m.resolved = {{"out", out.string()}, {"rows", traj.states.size()}, {"pairs", traj.states.size() - o.window}};
  write_manifest(manifest_for(out), m);
  std::cout << "wrote " << traj.states.size() << " rows (" << traj.states.size() - o.window << " window pairs) to "
            << out.string() << '\n';
  return 0;
}

// Trajectory CSVs start `t,theta1,u1`; time-step CSVs start `t,theta1_0_deg`.
bool is_timestep_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::string header;
  std::getline(in, header);
  return header.rfind("t,theta1_0_deg", 0) == 0;
}

int joints_in_trajectory_csv(const fs::path& path) {
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  return header.find("theta3") != std::string::npos ? 3 : 2;
}

// Sliding-window data rebuilt from a trajectory CSV and its window manifest.
dataset::WindowedDataset load_windows(const fs::path& path) {
  const auto [window, fraction] = dataset::read_window_manifest(path.string());
  const auto traj = integrator::read_trajectory_csv(path.string(), dynamics::PendulumParams::unit(joints_in_trajectory_csv(path)));
  return dataset::make_windows(traj, window, fraction);
}

// train

struct TrainOpts {
  std::string model;
  std::string data;
  std::uint64_t seed = 0;
  std::string out;
  std::optional<std::size_t> epochs, hidden, layers, chunk, batch, trajectories_per_batch, ar_order, lr_patience;
  std::optional<double> lr, lr_floor, clip_norm;
};

void add_train(CLI::App& app, TrainOpts& o) {
  auto* s = app.add_subcommand("train", "Train one model on a time-step CSV or a sliding-window trajectory CSV");
  s->add_option("--model", o.model, "ar, linsgd, ffnn, vrnn, lstm, gru, birnn or strnn")->required();
  s->add_option("--data", o.data, "Training CSV (time-step dataset, or trajectory with a window manifest)")->required();
  s->add_option("--seed", o.seed, "Initialisation and shuffling seed");
  s->add_option("--out", o.out, "Checkpoint JSON path")->required();
  s->add_option("--epochs", o.epochs, "Training epochs (default depends on model and protocol)");
  s->add_option("--hidden", o.hidden, "Hidden units");
  s->add_option("--layers", o.layers, "Recurrent layers (STRNN always uses 2)");
  s->add_option("--lr", o.lr, "Initial Adam learning rate");
  s->add_option("--lr-floor", o.lr_floor, "Minimum learning rate of the plateau schedule");
  s->add_option("--lr-patience", o.lr_patience, "Epochs without improvement before the rate is halved");
  s->add_option("--clip-norm", o.clip_norm, "Global gradient-norm clip (0 disables)");
  s->add_option("--chunk", o.chunk, "Truncated-BPTT chunk length (time-step protocol)");
  s->add_option("--batch", o.batch, "Rows or windows per update");
  s->add_option("--trajectories-per-batch", o.trajectories_per_batch, "Whole trajectories per update (time-step protocol)");
  s->add_option("--ar-order", o.ar_order, "AR order p");
}

models::ModelConfig resolve_config(const TrainOpts& o, models::Protocol protocol) {
  models::ModelKind kind;
  try {
    kind = models::parse_kind(o.model);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  auto c = experiment::default_config(kind, protocol);
  c.seed = o.seed;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.hidden) c.hidden = *o.hidden;
  if (o.layers) c.layers = *o.layers;
  if (o.lr) c.lr = *o.lr;
  if (o.lr_floor) c.lr_floor = *o.lr_floor;
  if (o.lr_patience) c.lr_patience = *o.lr_patience;
  if (o.clip_norm) c.clip_norm = *o.clip_norm;
  if (o.chunk) c.chunk = *o.chunk;
  if (o.batch) c.batch = *o.batch;
  if (o.trajectories_per_batch) c.trajectories_per_batch = *o.trajectories_per_batch;
  if (o.ar_order) c.ar_order = *o.ar_order;
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  return c;
}

int run_train(const TrainOpts& o, Manifest m) {
  resolve_config(o, models::Protocol::TimeStep);  // flag errors before touching the data
  const fs::path data = resolve_in(o.data);
  const bool timestep = is_timestep_csv(data);
  const auto protocol = timestep ? models::Protocol::TimeStep : models::Protocol::Sliding;
  const auto config = resolve_config(o, protocol);
  models::Model model;
  if (timestep) {
    auto ds = dataset::read_timestep_csv(data.string());
    ds.scaling = dataset::fit_scaling(ds);
    model = models::train_timestep(config, ds);
  } else {
    const auto ds = load_windows(data);
    const auto [train, test] = dataset::split(ds, ds.train_fraction);
    model = models::train_sliding(config, train);
  }
  const fs::path out = resolve_out(o.out);
  model.save(out.string());
  m.resolved = {{"out", out.string()}, {"data", data.string()}, {"protocol", models::to_string(protocol)},
                {"config", config.to_json()}};
  write_manifest(manifest_for(out), m);
  const auto& loss = model.report().epoch_loss;
  std::cout << "trained " << models::display_name(config.kind) << " (" << model.parameter_count() << " parameters, "
            << models::to_string(protocol) << " protocol)";
  if (!loss.empty()) std::cout << ", final loss " << loss.back();
  std::cout << "; checkpoint " << out.string() << '\n';
  return 0;
}

// eval

struct EvalOpts {
  std::string ckpt;
  std::string test;
  std::string plot;
  std::string metrics;
  std::string predictions;
  int friction = 1;
  std::string condition;
};

void add_eval(CLI::App& app, EvalOpts& o) {
  auto* s = app.add_subcommand("eval", "Evaluate a checkpoint on a test CSV");
  s->add_option("--ckpt", o.ckpt, "Checkpoint JSON")->required();
  s->add_option("--test", o.test, "Hold-out time-step CSV, or the sliding-window trajectory CSV")->required();
  s->add_option("--plot", o.plot, "Trajectory comparison SVG path");
  s->add_option("--metrics", o.metrics, "Metrics CSV path");
  s->add_option("--predictions", o.predictions, "Prediction dump CSV path");
  s->add_option("--friction", o.friction, "Friction flag for the metrics row (1 or 0)")->check(CLI::IsMember({0, 1}));
  s->add_option("--condition", o.condition, "Test-condition label (default: the initial angles or test-split)");
}

int run_eval(const EvalOpts& o, Manifest m) {
  const fs::path ckpt = resolve_in(o.ckpt), test = resolve_in(o.test);
  const auto model = models::Model::load(ckpt.string());
  eval::PredictionDump dump;
  eval::Scenario scenario;
  scenario.friction = o.friction == 1;
  scenario.protocol = std::string(models::to_string(model.protocol()));
  std::optional<double> scaled_rmse;
  if (model.protocol() == models::Protocol::TimeStep) {
    if (!is_timestep_csv(test)) throw FormatError(test.string() + ": checkpoint is time-step but the test CSV is not");
    const auto ds = dataset::read_timestep_csv(test.string());
    dump.dims = static_cast<std::size_t>(ds.joints);
    for (const auto& g : ds.groups) {
      const auto pred = model.predict_group(g);
      dump.times.insert(dump.times.end(), g.times.begin(), g.times.end());
      dump.actual.insert(dump.actual.end(), g.angles.begin(), g.angles.end());
      dump.predicted.insert(dump.predicted.end(), pred.begin(), pred.end());
    }
    scenario.system = ds.joints == 2 ? "double" : "triple";
    scenario.test_condition = ds.groups.size() == 1 ? experiment::condition_label(ds.groups[0].initial_deg) : "multiple";
  } else {
    if (is_timestep_csv(test)) throw FormatError(test.string() + ": checkpoint is sliding-window but the test CSV is time-step");
    auto ds = load_windows(test);
    ds.normalizer = model.window_normalizer();
    ds.scaled = ds.normalizer.transform(ds.raw);
    const auto [train, part] = dataset::split(ds, ds.train_fraction);
    auto pred = model.predict_windows(part);
    std::vector<double> target;
    for (std::size_t k = 0; k < part.size(); ++k) {
      const auto t = part.target(k);
      target.insert(target.end(), t.begin(), t.end());
    }
    scaled_rmse = eval::rmse(pred, target);
    dump.dims = part.dims;
    dump.predicted = pred;
    ds.normalizer.inverse_transform_inplace(dump.predicted);
    const auto traj_dt = [&] {
      std::ifstream in(test);
      std::string line;
      std::getline(in, line);
      std::getline(in, line);
      const double t0 = csv::parse_double(csv::split_line(line)[0], test.string());
      std::getline(in, line);
      return csv::parse_double(csv::split_line(line)[0], test.string()) - t0;
    }();
    for (std::size_t k = 0; k < part.size(); ++k) {
      const std::size_t row = part.first_pair + k + part.window;
      dump.times.push_back(static_cast<double>(row) * traj_dt);
      const auto raw = std::span<const double>(part.raw).subspan(row * part.dims, part.dims);
      dump.actual.insert(dump.actual.end(), raw.begin(), raw.end());
    }
    scenario.system = part.dims == 2 ? "double" : "triple";
    scenario.test_condition = "test-split";
  }
  if (!o.condition.empty()) scenario.test_condition = o.condition;

  eval::MetricsRecord rec;
  rec.model = std::string(models::display_name(model.config().kind));
  rec.scenario = scenario;
  rec.seed = model.config().seed;
  rec.rmse = eval::rmse(dump.predicted, dump.actual);
  rec.r2 = eval::r2(dump.predicted, dump.actual, dump.dims);
  std::printf("%s %s: rmse %.6g rad, r2 %.6f", rec.model.c_str(), scenario.label().c_str(), rec.rmse, rec.r2);
  if (scaled_rmse) std::printf(", scaled rmse %.6g", *scaled_rmse);
  std::printf("\n");

  m.resolved = {{"ckpt", ckpt.string()}, {"test", test.string()}, {"rmse", rec.rmse}, {"r2", rec.r2}};
  if (scaled_rmse) m.resolved["scaled_rmse"] = *scaled_rmse;
  std::optional<fs::path> manifest_anchor;
  if (!o.metrics.empty()) {
    const fs::path p = resolve_out(o.metrics);
    eval::write_metrics_csv(p.string(), std::vector<eval::MetricsRecord>{rec});
    m.resolved["metrics"] = p.string();
    manifest_anchor = p;
  }
  if (!o.predictions.empty()) {
    const fs::path p = resolve_out(o.predictions);
    eval::write_prediction_csv(p.string(), dump);
    m.resolved["predictions"] = p.string();
    if (!manifest_anchor) manifest_anchor = p;
  }
  if (!o.plot.empty()) {
    const fs::path p = resolve_out(o.plot);
    eval::write_text(p.string(), eval::trajectory_svg(dump, {rec.model + " " + scenario.label() + " seed " + std::to_string(rec.seed)}));
    m.resolved["plot"] = p.string();
    if (!manifest_anchor) manifest_anchor = p;
  }
  write_manifest(manifest_for(manifest_anchor ? *manifest_anchor : resolve_out(fs::path(ckpt).filename().string() + ".eval")), m);
  return 0;
}

// reproduce

struct ReproduceOpts {
  std::string suite = "double-friction";
  std::size_t seeds = 1;
  std::string models = "all";
  unsigned jobs = 1;
  std::string out = "reproduce";
  std::optional<std::size_t> epochs, samples;
  std::optional<double> t_end, vary_step;
};

void add_reproduce(CLI::App& app, ReproduceOpts& o) {
  auto* s = app.add_subcommand("reproduce", "Run the time-step model matrix for a suite and emit the RMSE heatmap");
  s->add_option("--suite", o.suite,
                "double-friction, double-frictionless, triple-friction, triple-frictionless or all");
  s->add_option("--seeds", o.seeds, "Seeds per model (0..n-1); cells report the median")->check(CLI::PositiveNumber);
  s->add_option("--models", o.models, "Comma-separated model kinds, or all");
  s->add_option("--jobs", o.jobs, "Matrix cells trained concurrently")->check(CLI::PositiveNumber);
  s->add_option("--out", o.out, "Output directory (per-cell subdirectories)");
  s->add_option("--epochs", o.epochs, "Override epochs for every neural model");
  s->add_option("--samples", o.samples, "Override rows per trajectory");
  s->add_option("--t-end", o.t_end, "Override trajectory duration in seconds");
  s->add_option("--vary-step", o.vary_step, "Override the grid increment in degrees");
}

struct Cell {
  std::size_t suite;
  models::ModelKind kind;
  std::uint64_t seed;
  fs::path dir;
};

int run_reproduce(const ReproduceOpts& o, Manifest m) {
  std::vector<std::string> suites;
  if (o.suite == "all") {
    suites = experiment::suite_names();
  } else {
    try {
      (void)experiment::suite(o.suite);
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
    suites = {o.suite};
  }
  std::vector<models::ModelKind> kinds;
  if (o.models == "all") {
    kinds.assign(models::kAllKinds.begin(), models::kAllKinds.end());
  } else {
    for (const auto& name : csv::split_line(o.models, ',')) {
      try {
        kinds.push_back(models::parse_kind(name));
      } catch (const DomainError& e) {
        throw UsageError(e.what());
      }
    }
  }
  fs::path root(o.out);
  if (root.is_relative()) root = output_root() / root;
  root = root.lexically_normal();
  fs::create_directories(root);

  std::vector<experiment::SuiteData> data;
  for (const auto& name : suites) {
    auto spec = experiment::suite(name);
    if (o.samples) spec.samples = *o.samples;
    if (o.t_end) spec.duration = *o.t_end;
    if (o.vary_step) spec.vary_step = *o.vary_step;
    data.push_back(experiment::build_suite_data(spec));
    const fs::path dir = root / name;
    fs::create_directories(dir);
    dataset::write_timestep_csv((dir / "train.csv").string(), data.back().train);
    dataset::write_timestep_csv((dir / "holdout.csv").string(), data.back().test);
  }

  std::vector<Cell> cells;
  for (std::size_t s = 0; s < suites.size(); ++s)
    for (models::ModelKind k : kinds)
      for (std::uint64_t seed = 0; seed < o.seeds; ++seed)
        cells.push_back({s, k, seed, root / suites[s] / (std::string(models::cli_name(k)) + "-seed" + std::to_string(seed))});

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::vector<std::string> errors(cells.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      try {
        auto config = experiment::default_config(c.kind, models::Protocol::TimeStep);
        config.seed = c.seed;
        if (o.epochs && c.kind != models::ModelKind::Ar) config.epochs = *o.epochs;
        auto result = experiment::run_cell(data[c.suite], config);
        fs::create_directories(c.dir);
        result.model.save((c.dir / "checkpoint.json").string());
        eval::write_prediction_csv((c.dir / "predictions.csv").string(), result.dump);
        eval::write_metrics_csv((c.dir / "metrics.csv").string(), std::vector<eval::MetricsRecord>{result.metrics});
        eval::write_text((c.dir / "trajectory.svg").string(),
                         eval::trajectory_svg(result.dump, {result.metrics.model + " " + result.metrics.scenario.label() +
                                                            " seed " + std::to_string(c.seed)}));
        json cm{{"model", models::display_name(c.kind)},
                {"suite", suites[c.suite]},
                {"seed", c.seed},
                {"config", config.to_json()}};
        eval::write_text((c.dir / "manifest.json").string(), cm.dump(2) + "\n");
        std::lock_guard lock(log_mutex);
        std::printf("%-6s %-20s seed %llu: rmse %.5g r2 %.5f\n", result.metrics.model.c_str(), suites[c.suite].c_str(),
                    static_cast<unsigned long long>(c.seed), result.metrics.rmse, result.metrics.r2);
        std::fflush(stdout);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < std::min<std::size_t>(o.jobs, cells.size()); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i].empty()) throw Error(cells[i].dir.string() + ": " + errors[i]);
  }

  // Aggregation reads back the persisted predictions, sequentially.
  std::vector<eval::MetricsRecord> all;
  json matrix = json::array();
  for (std::size_t s = 0; s < suites.size(); ++s) {
    std::vector<eval::MetricsRecord> recs;
    for (const Cell& c : cells) {
      if (c.suite != s) continue;
      const auto pred = c.dir / "predictions.csv";
      recs.push_back(eval::metrics_from_predictions(pred.string(), std::string(models::display_name(c.kind)),
                                                    experiment::scenario(data[s].spec), c.seed));
      matrix.push_back({{"model", models::display_name(c.kind)},
                        {"scenario", recs.back().scenario.label()},
                        {"seed", c.seed},
                        {"dataset", (root / suites[s] / "train.csv").string()},
                        {"test", (root / suites[s] / "holdout.csv").string()},
                        {"predictions", pred.string()},
                        {"metrics", (c.dir / "metrics.csv").string()}});
    }
    const fs::path dir = root / suites[s];
    eval::write_metrics_csv((dir / "metrics.csv").string(), recs);
    const auto map = eval::rmse_heatmap(recs);
    eval::write_heatmap_csv((dir / "heatmap.csv").string(), map);
    eval::write_text((dir / "heatmap.svg").string(), eval::heatmap_svg(map, "Hold-out RMSE (rad), " + suites[s]));
    all.insert(all.end(), recs.begin(), recs.end());
  }
  if (suites.size() > 1) {
    eval::write_metrics_csv((root / "metrics.csv").string(), all);
    const auto map = eval::rmse_heatmap(all);
    eval::write_heatmap_csv((root / "heatmap.csv").string(), map);
    eval::write_text((root / "heatmap.svg").string(), eval::heatmap_svg(map, "Hold-out RMSE (rad), all suites"));
  }
  m.resolved = {{"out", root.string()}, {"cells", matrix}};
  write_manifest(root / (o.suite == "all" ? "manifest.json" : o.suite + "/manifest.json"), m);
  std::cout << "wrote " << all.size() << " metrics rows and heatmap under " << root.string() << '\n';
  return 0;
}

std::vector<std::string> load_manifest_argv(const std::string& path) {
  std::ifstream in(resolve_in(path));
  if (!in) throw FormatError("cannot read manifest '" + path + "'");
  json j;
  try {
    in >> j;
    return j.at("argv").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

int run(int argc, char** argv) {
  CLI::App app{"chaoslab: multi-pendulum simulation, chaos analysis and forecasting workbench"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.footer("Angles on the command line are degrees; CSV files hold radians.\n"
             "Relative output paths are placed under $CHAOSLAB_OUT (default: current directory).\n"
             "Exit codes: 0 success, 2 usage error, 1 runtime error.");
  std::string from_manifest;
  app.add_option("--from-manifest", from_manifest, "Replay the run recorded in a manifest JSON");

  SimulateOpts sim;
  LyapunovOpts lyap;
  StabilityOpts stab;
  TimestepOpts ts;
  WindowOpts win;
  TrainOpts train;
  EvalOpts ev;
  ReproduceOpts rep;
  add_simulate(app, sim);
  add_lyapunov(app, lyap);
  add_stability(app, stab);
  add_dataset(app, ts, win);
  add_train(app, train);
  add_eval(app, ev);
  add_reproduce(app, rep);

  // A manifest replaces the whole command line.
  std::vector<std::string> args(argv + 1, argv + argc);
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--from-manifest") {
      args = load_manifest_argv(args[i + 1]);
      break;
    }
  }
  if (args.size() == 1 && args[0].rfind("--from-manifest=", 0) == 0) args = load_manifest_argv(args[0].substr(16));
  std::vector<std::string> reversed(args.rbegin(), args.rend());

  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  std::vector<CLI::App*> chain{sub};
  if (!sub->get_subcommands().empty()) chain.push_back(sub->get_subcommands().front());
  const Manifest m = collect(chain);
  try {
    const std::string name = sub->get_name();
    if (name == "simulate") return run_simulate(sim, m);
    if (name == "lyapunov") return run_lyapunov(lyap, m);
    if (name == "stability") return run_stability(stab, m);
    if (name == "dataset") {
      return chain[1]->get_name() == "timestep" ? run_dataset_timestep(ts, m) : run_dataset_window(win, m);
    }
    if (name == "train") return run_train(train, m);
    if (name == "eval") return run_eval(ev, m);
    if (name == "reproduce") return run_reproduce(rep, m);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << chain.back()->help();
    return 2;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
