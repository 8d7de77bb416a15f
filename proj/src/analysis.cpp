#include "chaoslab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <thread>

#include "chaoslab/csv.hpp"
#include "chaoslab/error.hpp"
#include "chaoslab/integrator.hpp"

namespace chaoslab::analysis {

using dynamics::PendulumParams;
using dynamics::PendulumState;

double regression_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("regression_slope: x and y lengths differ");
  if (x.size() < 2) throw DegenerateInputError("regression_slope: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    sxy += dx * (y[i] - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw DegenerateInputError("regression_slope: all x values are identical");
  return sxy / sxx;
}

double regression_slope(std::span<const std::pair<double, double>> points) {
  std::vector<double> x, y;
  x.reserve(points.size());
  y.reserve(points.size());
  for (const auto& [px, py] : points) {
    x.push_back(px);
    y.push_back(py);
  }
  return regression_slope(x, y);
}

LyapunovResult lyapunov_exponent(const PendulumParams& params, std::span<const double> initial_deg,
                                 double perturb_deg, std::size_t steps, double dt,
                                 const LyapunovOptions& options) {
  params.validate();
  if (!(perturb_deg > 0.0)) {
    throw DegenerateInputError("lyapunov_exponent: perturbation must be positive (zero separation never grows)");
  }
  if (steps < 100) throw DomainError("lyapunov_exponent: need at least 100 steps");
  if (!(dt > 0.0)) throw DomainError("lyapunov_exponent: dt must be positive");
  if (static_cast<int>(initial_deg.size()) != params.n) {
    throw DomainError("lyapunov_exponent: expected " + std::to_string(params.n) + " initial angles");
  }

  PendulumState reference = PendulumState::from_degrees(initial_deg);
  PendulumState perturbed = reference;
  perturbed.theta(0) += perturb_deg * std::numbers::pi / 180.0;

  auto field = [&params](double, std::span<const double> y, std::span<double> dy) {
    dynamics::derivative(params, y, dy);
  };
  integrator::Rk4Workspace ws(reference.size());

  auto separation = [&]() {
    if (!options.full_state_norm) return std::abs(perturbed.theta(0) - reference.theta(0));
    double sq = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      const double d = perturbed[i] - reference[i];
      sq += d * d;
    }
    return std::sqrt(sq);
  };

  std::vector<double> ks, logs;
  ks.reserve(steps + 1);
  logs.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    if (k > 0) {
      const double t = static_cast<double>(k - 1) * dt;
      rk4_step(field, reference.flat(), t, dt, ws);
      rk4_step(field, perturbed.flat(), t, dt, ws);
    }
    if (k < options.skip_steps) continue;
    const double err = separation();
    if (err > kErrorFloor) {
      ks.push_back(static_cast<double>(k));
      logs.push_back(std::log(err));
    }
  }
  if (ks.size() < 2) {
    throw DegenerateInputError("lyapunov_exponent: separation never exceeds the error floor");
  }

  LyapunovResult result;
  result.initial_angles_deg.assign(initial_deg.begin(), initial_deg.end());
  result.exponent_per_step = regression_slope(ks, logs);
  result.exponent_per_second = result.exponent_per_step / dt;
  result.steps_used = ks.size();
  result.perturbation_deg = perturb_deg;
  return result;
}

std::vector<double> AngleRange::values() const {
  if (!(step > 0.0)) throw DomainError("angle range step must be positive");
  if (hi < lo) throw DomainError("angle range is empty");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = lo + static_cast<double>(i) * step;
  return out;
}

LyapunovGrid lyapunov_grid(const PendulumParams& params, const AngleRange& theta1,
                           const AngleRange& theta2, double perturb_deg, std::size_t steps, double dt,
                           const LyapunovOptions& options, unsigned threads) {
  if (params.n != 2) throw DomainError("lyapunov_grid: grid is defined for the double pendulum");
  LyapunovGrid grid;
  grid.theta1_deg = theta1.values();
  grid.theta2_deg = theta2.values();
  const std::size_t rows = grid.theta1_deg.size();
  const std::size_t cols = grid.theta2_deg.size();
  grid.cells.resize(rows * cols);

  auto run_row = [&](std::size_t r) {
    for (std::size_t c = 0; c < cols; ++c) {
      LyapunovCell& cell = grid.cells[r * cols + c];
      cell.theta1_deg = grid.theta1_deg[r];
      cell.theta2_deg = grid.theta2_deg[c];
      const double init[2] = {cell.theta1_deg, cell.theta2_deg};
      try {
        cell.exponent_per_second = lyapunov_exponent(params, init, perturb_deg, steps, dt, options).exponent_per_second;
      } catch (const DegenerateInputError&) {
        cell.exponent_per_second.reset();
      }
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(rows)));
  if (threads == 1) {
    for (std::size_t r = 0; r < rows; ++r) run_row(r);
  } else {
    std::vector<std::jthread> workers;
    for (unsigned w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t r = w; r < rows; r += threads) run_row(r);
      });
    }
  }
  return grid;
}

void write_heatmap_csv(std::ostream& out, const LyapunovGrid& grid) {
  out << "theta1_deg,theta2_deg,lyapunov_per_s,flag\n";
  for (const auto& cell : grid.cells) {
    std::string line;
    csv::append_double(line, cell.theta1_deg);
    line += ',';
    csv::append_double(line, cell.theta2_deg);
    line += ',';
    if (cell.exponent_per_second) {
      csv::append_double(line, *cell.exponent_per_second);
      line += ",ok\n";
    } else {
      line += ",degenerate\n";
    }
    out << line;
  }
}

namespace {

void to_hessenberg(Matrix& a) {
  const std::size_t n = a.rows();
  std::vector<double> v(n);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double norm = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = a(k + 1, k) > 0.0 ? -norm : norm;
    for (std::size_t i = k + 1; i < n; ++i) v[i] = a(i, k);
    v[k + 1] -= alpha;
    double vnorm = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) vnorm += v[i] * v[i];
    if (vnorm == 0.0) continue;
    // A <- H A H with H = I - 2 v v^T / (v^T v).
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) s += v[i] * a(i, j);
      s *= 2.0 / vnorm;
      for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= s * v[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) s += a(i, j) * v[j];
      s *= 2.0 / vnorm;
      for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= s * v[j];
    }
    for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
  }
}

double sign_of(double magnitude, double sign) { return sign >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude); }

// Francis double-shift QR on an upper Hessenberg matrix, deflating from the bottom.
// Indices below are 1-based to mirror the classical formulation; A(i, j) maps onto h(i-1, j-1).
std::vector<std::complex<double>> hessenberg_qr(Matrix& h) {
  const int n = static_cast<int>(h.rows());
  auto A = [&h](int i, int j) -> double& { return h(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1)); };
  std::vector<double> wr(n + 1), wi(n + 1);

  double anorm = 0.0;
  for (int i = 1; i <= n; ++i)
    for (int j = std::max(i - 1, 1); j <= n; ++j) anorm += std::abs(A(i, j));

  int nn = n;
  double t = 0.0;
  while (nn >= 1) {
    int its = 0;
    int l = 1;
    do {
      for (l = nn; l >= 2; --l) {
        double s = std::abs(A(l - 1, l - 1)) + std::abs(A(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(A(l, l - 1)) + s == s) {
          A(l, l - 1) = 0.0;
          break;
        }
      }
      double x = A(nn, nn);
      if (l == nn) {
        wr[nn] = x + t;
        wi[nn] = 0.0;
        --nn;
      } else {
        double y = A(nn - 1, nn - 1);
        double w = A(nn, nn - 1) * A(nn - 1, nn);
        if (l == nn - 1) {
          const double p = 0.5 * (y - x);
          const double q = p * p + w;
          double z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            wr[nn - 1] = wr[nn] = x + z;
            if (z != 0.0) wr[nn] = x - w / z;
            wi[nn - 1] = wi[nn] = 0.0;
          } else {
            wr[nn - 1] = wr[nn] = x + p;
            wi[nn - 1] = -z;
            wi[nn] = z;
          }
          nn -= 2;
        } else {
          if (its == 60) throw NumericalError("eigenvalues: QR iteration did not converge");
          if (its == 10 || its == 20 || its == 40) {
            // Exceptional shift.
            t += x;
            for (int i = 1; i <= nn; ++i) A(i, i) -= x;
            const double s = std::abs(A(nn, nn - 1)) + std::abs(A(nn - 1, nn - 2));
            y = x = 0.75 * s;
            w = -0.4375 * s * s;
          }
          ++its;
          int m = nn - 2;
          double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
          for (; m >= l; --m) {
            z = A(m, m);
            r = x - z;
            double s = y - z;
            p = (r * s - w) / A(m + 1, m) + A(m, m + 1);
            q = A(m + 1, m + 1) - z - r - s;
            r = A(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(A(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(A(m - 1, m - 1)) + std::abs(z) + std::abs(A(m + 1, m + 1)));
            if (u + v == v) break;
          }
          for (int i = m + 2; i <= nn; ++i) {
            A(i, i - 2) = 0.0;
            if (i != m + 2) A(i, i - 3) = 0.0;
          }
          for (int k = m; k <= nn - 1; ++k) {
            if (k != m) {
              p = A(k, k - 1);
              q = A(k + 1, k - 1);
              r = 0.0;
              if (k != nn - 1) r = A(k + 2, k - 1);
              x = std::abs(p) + std::abs(q) + std::abs(r);
              if (x != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            const double s = sign_of(std::sqrt(p * p + q * q + r * r), p);
            if (s != 0.0) {
              if (k == m) {
                if (l != m) A(k, k - 1) = -A(k, k - 1);
              } else {
                A(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = A(k, j) + q * A(k + 1, j);
                if (k != nn - 1) {
                  p += r * A(k + 2, j);
                  A(k + 2, j) -= p * z;
                }
                A(k + 1, j) -= p * y;
                A(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * A(i, k) + y * A(i, k + 1);
                if (k != nn - 1) {
                  p += z * A(i, k + 2);
                  A(i, k + 2) -= p * r;
                }
                A(i, k + 1) -= p * q;
                A(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l < nn - 1);
  }

  std::vector<std::complex<double>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) out.emplace_back(wr[i], wi[i]);
  return out;
}

}  // namespace

std::vector<std::complex<double>> eigenvalues(const Matrix& m) {
  if (!m.square()) throw DomainError("eigenvalues: matrix must be square");
  if (m.rows() == 0 || m.rows() > 8) throw DomainError("eigenvalues: dimension must be in 1..8");
  for (double v : m.data()) {
    if (!std::isfinite(v)) throw DomainError("eigenvalues: matrix has non-finite entries");
  }
  Matrix h = m;
  to_hessenberg(h);
  return hessenberg_qr(h);
}

void sort_eigenvalues(std::vector<std::complex<double>>& eigs) {
  std::sort(eigs.begin(), eigs.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
}

std::string to_string(Classification c) {
  switch (c) {
    case Classification::Center: return "center/undamped-oscillator";
    case Classification::Saddle: return "saddle";
    case Classification::StableNodeFocus: return "stable-node/focus";
    case Classification::UnstableNodeFocus: return "unstable-node/focus";
    case Classification::Mixed: return "mixed";
  }
  return "mixed";
}

Classification classify_equilibrium(std::span<const std::complex<double>> eigs) {
  if (eigs.empty()) return Classification::Mixed;
  const bool all_imaginary = std::all_of(eigs.begin(), eigs.end(),
                                         [](const auto& e) { return std::abs(e.real()) < kImaginaryTolerance; });
  if (all_imaginary) return Classification::Center;
  const bool any_pos = std::any_of(eigs.begin(), eigs.end(), [](const auto& e) { return e.real() >= kImaginaryTolerance; });
  const bool any_neg = std::any_of(eigs.begin(), eigs.end(), [](const auto& e) { return e.real() <= -kImaginaryTolerance; });
  if (any_pos && any_neg) return Classification::Saddle;
  if (std::all_of(eigs.begin(), eigs.end(), [](const auto& e) { return e.real() < 0.0; }))
    return Classification::StableNodeFocus;
  if (std::all_of(eigs.begin(), eigs.end(), [](const auto& e) { return e.real() > 0.0; }))
    return Classification::UnstableNodeFocus;
  return Classification::Mixed;
}

StabilityReport stability(const PendulumState& point, const PendulumParams& params) {
  StabilityReport report;
  report.equilibrium = point;
  report.eigenvalues = eigenvalues(dynamics::jacobian(point, params));
  sort_eigenvalues(report.eigenvalues);
  report.classification = classify_equilibrium(report.eigenvalues);
  return report;
}

void write_stability_csv(std::ostream& out, const StabilityReport& report) {
  out << "re,im\n";
  for (const auto& e : report.eigenvalues) {
    std::string line;
    csv::append_double(line, e.real());
    line += ',';
    csv::append_double(line, e.imag());
    out << line << '\n';
  }
  out << "classification," << to_string(report.classification) << '\n';
}

}  // namespace chaoslab::analysis
