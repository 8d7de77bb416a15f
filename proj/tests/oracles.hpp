#pragma once

// Independent reference implementations used only by tests.

#include <cmath>
#include <complex>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

namespace oracle {

/// Gaussian elimination with partial pivoting; solves a x = b for a dense n x n system.
inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return x;
}

/// Angular accelerations of an n-link chain of point masses from the Lagrangian mass-matrix
/// system M(th) a = b(th, u), assembled generically for any n.
inline std::vector<double> chain_accel(const std::vector<double>& th, const std::vector<double>& u,
                                       const std::vector<double>& m, const std::vector<double>& l,
                                       double g) {
  const std::size_t n = th.size();
  auto mass_below = [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t k = i; k < n; ++k) s += m[k];
    return s;
  };
  std::vector<std::vector<double>> mm(n, std::vector<double>(n));
  std::vector<double> rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    rhs[i] = -mass_below(i) * g * l[i] * std::sin(th[i]);
    for (std::size_t j = 0; j < n; ++j) {
      const double mu = mass_below(std::max(i, j));
      mm[i][j] = mu * l[i] * l[j] * std::cos(th[i] - th[j]);
      rhs[i] -= mu * l[i] * l[j] * std::sin(th[i] - th[j]) * u[j] * u[j];
    }
  }
  return solve(mm, rhs);
}

/// Simple deterministic generator for test inputs (splitmix64).
struct Rng {
  unsigned long long s;
  explicit Rng(unsigned long long seed) : s(seed) {}
  unsigned long long next() {
    unsigned long long z = (s += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

/// Determinant by Gaussian elimination (independent of the eigen solver).
inline double determinant(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (a[piv][col] == 0.0) return 0.0;
    if (piv != col) {
      std::swap(a[piv], a[col]);
      det = -det;
    }
    det *= a[col][col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
    }
  }
  return det;
}

/// Minimal XML well-formedness check: balanced tags, quoted attributes, element names limited to
/// `allowed`. Returns an empty string when the document passes, otherwise a description.
inline std::string check_xml(const std::string& doc, const std::set<std::string>& allowed) {
  std::vector<std::string> stack;
  std::size_t i = 0, roots = 0;
  while ((i = doc.find('<', i)) != std::string::npos) {
    const std::size_t end = doc.find('>', i);
    if (end == std::string::npos) return "unterminated tag";
    std::string tag = doc.substr(i + 1, end - i - 1);
    i = end + 1;
    if (!tag.empty() && tag[0] == '/') {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return "mismatched </" + name + ">";
      stack.pop_back();
      continue;
    }
    const bool self_closing = !tag.empty() && tag.back() == '/';
    if (self_closing) tag.pop_back();
    const std::size_t sp = tag.find(' ');
    const std::string name = tag.substr(0, sp);
    if (!allowed.count(name)) return "element <" + name + "> not allowed";
    std::size_t quotes = 0;
    for (char c : tag) quotes += c == '"';
    if (quotes % 2 != 0) return "unbalanced quotes in <" + name + ">";
    if (stack.empty()) ++roots;
    if (!self_closing) stack.push_back(name);
  }
  if (!stack.empty()) return "unclosed <" + stack.back() + ">";
  if (roots != 1) return "expected one root element";
  return {};
}

}  // namespace oracle
