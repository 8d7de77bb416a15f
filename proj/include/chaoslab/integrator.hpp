#pragma once

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "chaoslab/dynamics.hpp"
#include "chaoslab/error.hpp"

namespace chaoslab::integrator {

inline constexpr double kDefaultDt = 1e-3;
inline constexpr std::size_t kDefaultStepCap = 100'000'000;

/// Scratch storage for rk4_step so the inner loop does not allocate.
struct Rk4Workspace {
  explicit Rk4Workspace(std::size_t dim) : k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim) {}
  std::vector<double> k1, k2, k3, k4, tmp;
};

/// One classical Runge-Kutta step, in place. `field(t, y, dy)` writes dy/dt.
/// Throws IntegrationError (step index 0) if any stage value is non-finite.
template <class Field>
void rk4_step(Field&& field, std::span<double> y, double t, double h, Rk4Workspace& ws) {
  const std::size_t n = y.size();
  auto check = [&](const std::vector<double>& k, double at) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(k[i])) throw IntegrationError("non-finite RK4 stage value", 0, at);
    }
  };
  field(t, std::span<const double>(y.data(), n), std::span<double>(ws.k1.data(), n));
  check(ws.k1, t);
  for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = y[i] + 0.5 * h * ws.k1[i];
  field(t + 0.5 * h, std::span<const double>(ws.tmp.data(), n), std::span<double>(ws.k2.data(), n));
  check(ws.k2, t + 0.5 * h);
  for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = y[i] + 0.5 * h * ws.k2[i];
  field(t + 0.5 * h, std::span<const double>(ws.tmp.data(), n), std::span<double>(ws.k3.data(), n));
  check(ws.k3, t + 0.5 * h);
  for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = y[i] + h * ws.k3[i];
  field(t + h, std::span<const double>(ws.tmp.data(), n), std::span<double>(ws.k4.data(), n));
  check(ws.k4, t + h);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] += (h / 6.0) * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
  }
}

/// Value-returning convenience overload.
template <class Field>
std::vector<double> rk4_step(Field&& field, std::span<const double> y, double t, double h) {
  if (!(h > 0.0)) throw DomainError("rk4_step: step size must be positive");
  std::vector<double> out(y.begin(), y.end());
  Rk4Workspace ws(y.size());
  rk4_step(field, std::span<double>(out), t, h, ws);
  return out;
}

/// Uniformly sampled integration run. Times are t0 + k*dt.
struct Trajectory {
  double t0 = 0.0;
  double dt = kDefaultDt;
  std::vector<dynamics::PendulumState> states;
  dynamics::PendulumParams params;
  std::vector<double> initial_angles_deg;

  std::size_t steps() const noexcept { return states.empty() ? 0 : states.size() - 1; }
  double time(std::size_t k) const noexcept { return t0 + static_cast<double>(k) * dt; }
  int joints() const noexcept { return params.n; }
};

struct IntegrateOptions {
  double t0 = 0.0;
  std::size_t step_cap = kDefaultStepCap;
};

/// N = round(t_end/dt) RK4 steps of the pendulum field from `initial`.
Trajectory integrate(const dynamics::PendulumParams& params, const dynamics::PendulumState& initial,
                     double t_end, double dt, const IntegrateOptions& options = {});

/// Convenience: initial angles in degrees with zero velocity.
Trajectory integrate_from_degrees(const dynamics::PendulumParams& params,
                                  std::span<const double> angles_deg, double t_end, double dt,
                                  const IntegrateOptions& options = {});

/// Header `t,theta1,u1,theta2,u2[,theta3,u3]`, 17 significant digits. Optional trailing `energy` column.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj, bool emit_energy = false);
void write_trajectory_csv(const std::string& path, const Trajectory& traj, bool emit_energy = false);

/// Reads a trajectory CSV written by write_trajectory_csv. The params snapshot is not stored in
/// the CSV, so the caller supplies it (only `n` is checked against the column count).
Trajectory read_trajectory_csv(const std::string& path, const dynamics::PendulumParams& params);

}  // namespace chaoslab::integrator
