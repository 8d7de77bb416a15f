#include "chaoslab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "chaoslab/error.hpp"

namespace chaoslab::dynamics {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void require_finite(const PendulumState& state, const char* who) {
  if (!state.finite()) throw DomainError(std::string(who) + ": state contains non-finite values");
}

void require_joints(const PendulumState& state, const PendulumParams& params, int expected,
                    const char* who) {
  if (params.n != expected || state.joints() != expected) {
    throw DomainError(std::string(who) + ": expected a " + std::to_string(expected) +
                      "-joint system, got params.n=" + std::to_string(params.n) +
                      " state joints=" + std::to_string(state.joints()));
  }
}

// Unchecked kernels shared by the public entry points and the integrator hot path.

inline void double_accel_raw(const PendulumParams& p, const double* y, double* out) {
  const double th1 = y[0], u1 = y[1], th2 = y[2], u2 = y[3];
  const double m1 = p.mass[0], m2 = p.mass[1];
  const double l1 = p.length[0], l2 = p.length[1];
  const double g = p.g;
  const double c = std::cos(th1 - th2);
  const double s = std::sin(th1 - th2);
  const double den = m1 + m2 * s * s;
  out[0] = (m2 * g * std::sin(th2) * c - m2 * s * (l1 * u1 * u1 * c + l2 * u2 * u2) -
            (m1 + m2) * g * std::sin(th1)) /
           (l1 * den);
  out[1] = ((m1 + m2) * (l1 * u1 * u1 * s - g * std::sin(th2) + g * std::sin(th1) * c) +
            m2 * l2 * u2 * u2 * s * c) /
           (l2 * den);
}

// Rows of the mass-matrix system divided by l_i:
//   sum_j mu_ij l_j cos(th_i - th_j) a_j = -sum_j mu_ij l_j u_j^2 sin(th_i - th_j) - g mu_ii sin(th_i)
// with mu_ij the total mass at or below joint max(i, j). Solved by Cramer's rule.
inline void triple_accel_raw(const PendulumParams& p, const double* y, double* out) {
  const double th1 = y[0], u1 = y[1], th2 = y[2], u2 = y[3], th3 = y[4], u3 = y[5];
  const double l1 = p.length[0], l2 = p.length[1], l3 = p.length[2];
  const double m3 = p.mass[2];
  const double m23 = p.mass[1] + m3;
  const double m123 = p.mass[0] + m23;
  const double g = p.g;

  const double c12 = std::cos(th1 - th2), s12 = std::sin(th1 - th2);
  const double c13 = std::cos(th1 - th3), s13 = std::sin(th1 - th3);
  const double c23 = std::cos(th2 - th3), s23 = std::sin(th2 - th3);
  const double w1 = u1 * u1, w2 = u2 * u2, w3 = u3 * u3;

  const double a11 = m123 * l1, a12 = m23 * l2 * c12, a13 = m3 * l3 * c13;
  const double a21 = m23 * l1 * c12, a22 = m23 * l2, a23 = m3 * l3 * c23;
  const double a31 = m3 * l1 * c13, a32 = m3 * l2 * c23, a33 = m3 * l3;

  const double b1 = -m23 * l2 * w2 * s12 - m3 * l3 * w3 * s13 - g * m123 * std::sin(th1);
  const double b2 = m23 * l1 * w1 * s12 - m3 * l3 * w3 * s23 - g * m23 * std::sin(th2);
  const double b3 = m3 * l1 * w1 * s13 + m3 * l2 * w2 * s23 - g * m3 * std::sin(th3);

  const double det = a11 * (a22 * a33 - a23 * a32) - a12 * (a21 * a33 - a23 * a31) +
                     a13 * (a21 * a32 - a22 * a31);
  out[0] = (b1 * (a22 * a33 - a23 * a32) - a12 * (b2 * a33 - a23 * b3) +
            a13 * (b2 * a32 - a22 * b3)) /
           det;
  out[1] = (a11 * (b2 * a33 - a23 * b3) - b1 * (a21 * a33 - a23 * a31) +
            a13 * (a21 * b3 - b2 * a31)) /
           det;
  out[2] = (a11 * (a22 * b3 - b2 * a32) - a12 * (a21 * b3 - b2 * a31) +
            b1 * (a21 * a32 - a22 * a31)) /
           det;
}

}  // namespace

PendulumParams PendulumParams::unit(int joints) {
  PendulumParams p;
  p.n = joints;
  p.validate();
  return p;
}

PendulumParams PendulumParams::with_damping(double c) const {
  PendulumParams p = *this;
  p.damping = {0.0, 0.0, 0.0};
  for (int i = 0; i < n; ++i) p.damping[i] = c;
  p.validate();
  return p;
}

bool PendulumParams::frictionless() const {
  return std::all_of(damping.begin(), damping.begin() + n, [](double c) { return c == 0.0; });
}

void PendulumParams::validate() const {
  if (n != 2 && n != 3) throw DomainError("pendulum joint count must be 2 or 3, got " + std::to_string(n));
  if (!(g > 0.0) || !std::isfinite(g)) throw DomainError("gravity must be positive and finite");
  for (int i = 0; i < n; ++i) {
    if (!(length[i] > 0.0) || !std::isfinite(length[i]))
      throw DomainError("length " + std::to_string(i + 1) + " must be positive");
    if (!(mass[i] > 0.0) || !std::isfinite(mass[i]))
      throw DomainError("mass " + std::to_string(i + 1) + " must be positive");
    if (!(damping[i] >= 0.0) || !std::isfinite(damping[i]))
      throw DomainError("damping " + std::to_string(i + 1) + " must be non-negative");
  }
}

PendulumState::PendulumState(int joints) : n_(joints) {
  if (joints != 2 && joints != 3) throw DomainError("pendulum joint count must be 2 or 3");
}

PendulumState::PendulumState(int joints, std::span<const double> flat) : PendulumState(joints) {
  if (flat.size() != size()) {
    throw DomainError("state vector must have length " + std::to_string(size()) + ", got " +
                      std::to_string(flat.size()));
  }
  std::copy(flat.begin(), flat.end(), v_.begin());
}

PendulumState PendulumState::from_degrees(std::initializer_list<double> angles_deg) {
  return from_degrees(std::span<const double>(angles_deg.begin(), angles_deg.size()));
}

PendulumState PendulumState::from_degrees(std::span<const double> angles_deg) {
  PendulumState s(static_cast<int>(angles_deg.size()));
  for (std::size_t i = 0; i < angles_deg.size(); ++i) s.theta(static_cast<int>(i)) = angles_deg[i] * kDegToRad;
  return s;
}

bool PendulumState::finite() const {
  return std::all_of(v_.begin(), v_.begin() + size(), [](double x) { return std::isfinite(x); });
}

std::array<double, 2> double_accel(const PendulumState& state, const PendulumParams& params) {
  require_joints(state, params, 2, "double_accel");
  require_finite(state, "double_accel");
  std::array<double, 2> a{};
  double_accel_raw(params, state.flat().data(), a.data());
  return a;
}

std::array<double, 3> triple_accel(const PendulumState& state, const PendulumParams& params) {
  require_joints(state, params, 3, "triple_accel");
  require_finite(state, "triple_accel");
  std::array<double, 3> a{};
  triple_accel_raw(params, state.flat().data(), a.data());
  return a;
}

void derivative(const PendulumParams& params, std::span<const double> y, std::span<double> dy) {
  double a[kMaxJoints];
  if (params.n == 2) {
    double_accel_raw(params, y.data(), a);
  } else {
    triple_accel_raw(params, y.data(), a);
  }
  for (int i = 0; i < params.n; ++i) {
    const double u = y[2 * i + 1];
    dy[2 * i] = u;
    dy[2 * i + 1] = a[i] - params.damping[i] * u;
  }
}

PendulumState derivative(const PendulumState& state, const PendulumParams& params) {
  if (state.joints() != params.n) throw DomainError("derivative: state/params joint count mismatch");
  require_finite(state, "derivative");
  PendulumState out(params.n);
  derivative(params, state.flat(), out.flat());
  return out;
}

double kinetic_energy(const PendulumState& state, const PendulumParams& params) {
  double vx = 0.0, vy = 0.0, t = 0.0;
  for (int i = 0; i < params.n; ++i) {
    vx += params.length[i] * state.omega(i) * std::cos(state.theta(i));
    vy += params.length[i] * state.omega(i) * std::sin(state.theta(i));
    t += 0.5 * params.mass[i] * (vx * vx + vy * vy);
  }
  return t;
}

double total_energy(const PendulumState& state, const PendulumParams& params) {
  if (state.joints() != params.n) throw DomainError("total_energy: state/params joint count mismatch");
  double y = 0.0, v = 0.0;
  for (int i = 0; i < params.n; ++i) {
    y -= params.length[i] * std::cos(state.theta(i));
    v += params.mass[i] * params.g * y;
  }
  return kinetic_energy(state, params) + v;
}

double energy_scale(const PendulumParams& params) {
  double depth = 0.0, scale = 0.0;
  for (int i = 0; i < params.n; ++i) {
    depth += params.length[i];
    scale += params.mass[i] * params.g * depth;
  }
  return scale;
}

double relative_energy_drift(const PendulumState& a, const PendulumState& b, const PendulumParams& params) {
  const double ea = total_energy(a, params);
  const double eb = total_energy(b, params);
  return std::abs(eb - ea) / std::max(std::abs(ea), energy_scale(params));
}

Matrix jacobian(const PendulumState& state, const PendulumParams& params, double step) {
  if (state.joints() != params.n) throw DomainError("jacobian: state/params joint count mismatch");
  require_finite(state, "jacobian");
  const std::size_t dim = state.size();
  Matrix jac(dim, dim);
  PendulumState plus = state, minus = state, fp(params.n), fm(params.n);
  for (std::size_t col = 0; col < dim; ++col) {
    plus[col] = state[col] + step;
    minus[col] = state[col] - step;
    derivative(params, plus.flat(), fp.flat());
    derivative(params, minus.flat(), fm.flat());
    for (std::size_t row = 0; row < dim; ++row) jac(row, col) = (fp[row] - fm[row]) / (2.0 * step);
    plus[col] = state[col];
    minus[col] = state[col];
  }
  return jac;
}

}  // namespace chaoslab::dynamics
