#include "chaoslab/integrator.hpp"

#include <fstream>
#include <numbers>
#include <ostream>

#include "chaoslab/csv.hpp"

namespace chaoslab::integrator {

using dynamics::PendulumParams;
using dynamics::PendulumState;

Trajectory integrate(const PendulumParams& params, const PendulumState& initial, double t_end,
                     double dt, const IntegrateOptions& options) {
  params.validate();
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw DomainError("integrate: t_end must be positive");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("integrate: dt must be positive");
  if (initial.joints() != params.n) throw DomainError("integrate: state/params joint count mismatch");
  if (!initial.finite()) throw DomainError("integrate: initial state is not finite");

  const double ratio = t_end / dt;
  if (ratio > static_cast<double>(options.step_cap)) {
    throw DomainError("integrate: " + std::to_string(ratio) + " steps exceeds the cap of " +
                      std::to_string(options.step_cap));
  }
  const auto steps = static_cast<std::size_t>(std::llround(ratio));
  if (steps == 0) throw DomainError("integrate: t_end/dt rounds to zero steps");

  Trajectory traj;
  traj.t0 = options.t0;
  traj.dt = dt;
  traj.params = params;
  traj.initial_angles_deg.resize(static_cast<std::size_t>(params.n));
  for (int i = 0; i < params.n; ++i) traj.initial_angles_deg[i] = initial.theta(i) * 180.0 / std::numbers::pi;
  traj.states.reserve(steps + 1);
  traj.states.push_back(initial);

  auto field = [&params](double, std::span<const double> y, std::span<double> dy) {
    dynamics::derivative(params, y, dy);
  };
  Rk4Workspace ws(initial.size());
  PendulumState y = initial;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = traj.time(k);
    try {
      rk4_step(field, y.flat(), t, dt, ws);
    } catch (const IntegrationError& e) {
      throw IntegrationError("integrate: non-finite state", k + 1, e.time());
    }
    traj.states.push_back(y);
  }
  return traj;
}

Trajectory integrate_from_degrees(const PendulumParams& params, std::span<const double> angles_deg,
                                  double t_end, double dt, const IntegrateOptions& options) {
  if (static_cast<int>(angles_deg.size()) != params.n) {
    throw DomainError("integrate: expected " + std::to_string(params.n) + " initial angles, got " +
                      std::to_string(angles_deg.size()));
  }
  auto traj = integrate(params, PendulumState::from_degrees(angles_deg), t_end, dt, options);
  traj.initial_angles_deg.assign(angles_deg.begin(), angles_deg.end());
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, bool emit_energy) {
  std::string line = "t";
  for (int i = 1; i <= traj.joints(); ++i) {
    line += ",theta" + std::to_string(i) + ",u" + std::to_string(i);
  }
  if (emit_energy) line += ",energy";
  out << line << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    line.clear();
    csv::append_double(line, traj.time(k));
    for (double v : traj.states[k].flat()) {
      line += ',';
      csv::append_double(line, v);
    }
    if (emit_energy) {
      line += ',';
      csv::append_double(line, dynamics::total_energy(traj.states[k], traj.params));
    }
    line += '\n';
    out << line;
  }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj, bool emit_energy) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  write_trajectory_csv(out, traj, emit_energy);
}

Trajectory read_trajectory_csv(const std::string& path, const PendulumParams& params) {
  const auto table = csv::read_table(path);
  std::vector<std::size_t> cols;
  const std::size_t tcol = table.column("t");
  for (int i = 1; i <= params.n; ++i) {
    cols.push_back(table.column("theta" + std::to_string(i)));
    cols.push_back(table.column("u" + std::to_string(i)));
  }
  if (table.rows.size() < 2) throw FormatError(path + ": trajectory needs at least two rows");
  Trajectory traj;
  traj.params = params;
  traj.states.reserve(table.rows.size());
  std::vector<double> flat(cols.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string where = path + ":" + std::to_string(r + 2);
    for (std::size_t c = 0; c < cols.size(); ++c) flat[c] = csv::parse_double(table.rows[r][cols[c]], where);
    traj.states.emplace_back(params.n, flat);
  }
  traj.t0 = csv::parse_double(table.rows[0][tcol], path + ":2");
  traj.dt = csv::parse_double(table.rows[1][tcol], path + ":3") - traj.t0;
  if (!(traj.dt > 0.0)) throw FormatError(path + ": time column is not increasing");
  for (int i = 0; i < params.n; ++i) {
    traj.initial_angles_deg.push_back(traj.states[0].theta(i) * 180.0 / std::numbers::pi);
  }
  return traj;
}

}  // namespace chaoslab::integrator
