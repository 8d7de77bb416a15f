#pragma once

// Equations of motion for planar double and triple pendulums made of point
// masses on massless rigid rods, with optional linear joint damping.

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>

#include "chaoslab/matrix.hpp"

namespace chaoslab::dynamics {

inline constexpr int kMaxJoints = 3;
inline constexpr double kStandardGravity = 9.81;
/// Damping constant used by the "friction" scenarios, in 1/s.
inline constexpr double kDefaultDamping = 0.1;

struct PendulumParams {
  int n = 2;
  double g = kStandardGravity;
  std::array<double, kMaxJoints> length{1.0, 1.0, 1.0};
  std::array<double, kMaxJoints> mass{1.0, 1.0, 1.0};
  std::array<double, kMaxJoints> damping{0.0, 0.0, 0.0};

  /// g = 9.81, unit lengths and masses, no damping.
  static PendulumParams unit(int joints);

  /// Same system with every joint damped by `c`.
  PendulumParams with_damping(double c) const;

  bool frictionless() const;

  /// Throws DomainError unless n in {2,3} and all constants are positive (damping >= 0).
  void validate() const;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(2 * n); }

  friend bool operator==(const PendulumParams&, const PendulumParams&) = default;
};

/// Flat configuration vector [theta1, u1, theta2, u2(, theta3, u3)], radians and rad/s.
class PendulumState {
 public:
  PendulumState() = default;
  explicit PendulumState(int joints);
  PendulumState(int joints, std::span<const double> flat);

  /// Angles in degrees, zero velocities.
  static PendulumState from_degrees(std::initializer_list<double> angles_deg);
  static PendulumState from_degrees(std::span<const double> angles_deg);

  int joints() const noexcept { return n_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(2 * n_); }

  double theta(int i) const { return v_[2 * i]; }
  double omega(int i) const { return v_[2 * i + 1]; }
  double& theta(int i) { return v_[2 * i]; }
  double& omega(int i) { return v_[2 * i + 1]; }

  std::span<double> flat() noexcept { return {v_.data(), size()}; }
  std::span<const double> flat() const noexcept { return {v_.data(), size()}; }
  double operator[](std::size_t k) const { return v_[k]; }
  double& operator[](std::size_t k) { return v_[k]; }

  bool finite() const;

  friend bool operator==(const PendulumState&, const PendulumState&) = default;

 private:
  std::array<double, 2 * kMaxJoints> v_{};
  int n_ = 0;
};

/// Angular accelerations of the double pendulum (no damping). Throws DomainError on non-finite input.
std::array<double, 2> double_accel(const PendulumState& state, const PendulumParams& params);

/// Angular accelerations of the triple pendulum (no damping), closed-form 3x3 solve of the
/// Lagrangian mass-matrix system. Throws DomainError on non-finite input.
std::array<double, 3> triple_accel(const PendulumState& state, const PendulumParams& params);

/// State derivative [u1, a1 - c1 u1, u2, a2 - c2 u2, ...]. `y` and `dy` have length 2n.
/// Unchecked hot path used by the integrator; non-finite input yields non-finite output.
void derivative(const PendulumParams& params, std::span<const double> y, std::span<double> dy);

PendulumState derivative(const PendulumState& state, const PendulumParams& params);

/// Kinetic plus potential energy, potential measured from the pivot height.
double total_energy(const PendulumState& state, const PendulumParams& params);
double kinetic_energy(const PendulumState& state, const PendulumParams& params);

/// Depth of the potential well, g * sum_i m_i * (l_1 + ... + l_i). Used to normalize energy drift.
double energy_scale(const PendulumParams& params);

/// |E(b) - E(a)| / max(|E(a)|, energy_scale); well defined when E(a) is zero.
double relative_energy_drift(const PendulumState& a, const PendulumState& b, const PendulumParams& params);

/// Central-difference Jacobian of `derivative` with respect to the flat state.
Matrix jacobian(const PendulumState& state, const PendulumParams& params, double step = 1e-6);

}  // namespace chaoslab::dynamics
