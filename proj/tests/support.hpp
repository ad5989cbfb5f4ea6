#pragma once

// Test-side oracles, independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "regime/chain.hpp"
#include "regime/linalg.hpp"
#include "regime/rng.hpp"

namespace testsupport {

/// Asymptotic Kolmogorov-Smirnov p-value for one-sample D with sample size n
/// (Stephens' small-sample correction, then the Kolmogorov series).
inline double ks_p_value(double d, std::size_t n) {
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term =
        2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

/// One-sample KS statistic against a CDF.
inline double ks_statistic(std::vector<double> sample,
                           const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

/// Characteristic polynomial coefficients by Faddeev-LeVerrier:
/// p(x) = x^n + c[1] x^{n-1} + ... + c[n].
inline std::vector<double> characteristic_polynomial(const regime::Matrix& a) {
  const std::size_t n = a.rows();
  std::vector<double> c(n + 1, 0.0);
  c[0] = 1.0;
  regime::Matrix m = regime::Matrix::identity(n);
  for (std::size_t k = 1; k <= n; ++k) {
    // m <- a * m
    regime::Matrix am(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t l = 0; l < n; ++l) s += a(i, l) * m(l, j);
        am(i, j) = s;
      }
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += am(i, i);
    c[k] = -trace / static_cast<double>(k);
    m = am;
    for (std::size_t i = 0; i < n; ++i) m(i, i) += c[k];
  }
  return c;
}

/// All roots of a monic polynomial by Durand-Kerner iteration.
inline std::vector<std::complex<double>> polynomial_roots(
    const std::vector<double>& coeffs) {
  const std::size_t degree = coeffs.size() - 1;
  std::vector<std::complex<double>> roots(degree);
  const std::complex<double> seed(0.4, 0.9);
  std::complex<double> power(1.0, 0.0);
  for (std::size_t i = 0; i < degree; ++i) {
    power *= seed;
    roots[i] = power;
  }
  auto eval = [&](std::complex<double> x) {
    std::complex<double> v(coeffs[0], 0.0);
    for (std::size_t k = 1; k < coeffs.size(); ++k) v = v * x + coeffs[k];
    return v;
  };
  for (int iter = 0; iter < 500; ++iter) {
    double moved = 0.0;
    for (std::size_t i = 0; i < degree; ++i) {
      std::complex<double> denom(1.0, 0.0);
      for (std::size_t j = 0; j < degree; ++j)
        if (j != i) denom *= roots[i] - roots[j];
      const std::complex<double> delta = eval(roots[i]) / denom;
      roots[i] -= delta;
      moved = std::max(moved, std::abs(delta));
    }
    if (moved < 1e-13) break;
  }
  return roots;
}

/// Minimum real part of the eigenvalues of a small real matrix. Independent
/// of the minor-based M-matrix test: characteristic polynomial + root finder.
inline double min_eigenvalue_real_part(const regime::Matrix& a) {
  const auto roots = polynomial_roots(characteristic_polynomial(a));
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& r : roots) lo = std::min(lo, r.real());
  return lo;
}

/// Fixed-step classical RK4 for dm/dt = diag(c_i(t)) m + Q^T m. Shares no
/// code with the adaptive solver under test.
inline std::vector<double> fixed_step_moment_solve(
    const std::function<double(std::size_t, double)>& rate,
    const regime::TransitionRateMatrix& q, std::vector<double> m, double t_end,
    double h) {
  const std::size_t n = m.size();
  auto deriv = [&](double t, const std::vector<double>& y) {
    std::vector<double> d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = rate(i, t) * y[i];
      for (std::size_t j = 0; j < n; ++j) d[i] += q.rate(j, i) * y[j];
    }
    return d;
  };
  double t = 0.0;
  while (t < t_end - 1e-12) {
    const double step = std::min(h, t_end - t);
    const auto k1 = deriv(t, m);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = m[i] + 0.5 * step * k1[i];
    const auto k2 = deriv(t + 0.5 * step, y);
    for (std::size_t i = 0; i < n; ++i) y[i] = m[i] + 0.5 * step * k2[i];
    const auto k3 = deriv(t + 0.5 * step, y);
    for (std::size_t i = 0; i < n; ++i) y[i] = m[i] + step * k3[i];
    const auto k4 = deriv(t + step, y);
    for (std::size_t i = 0; i < n; ++i)
      m[i] += (step / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    t += step;
  }
  return m;
}

/// Two-state generator with exit rates q1, q2.
inline regime::TransitionRateMatrix two_state_chain(double q1, double q2) {
  regime::Matrix q(2, 2);
  q(0, 0) = -q1;
  q(0, 1) = q1;
  q(1, 0) = q2;
  q(1, 1) = -q2;
  return regime::validate_rate_matrix(q);
}

/// Random Z-matrix (nonpositive off-diagonals) with diagonals spread so that
/// roughly half the draws are nonsingular M-matrices.
inline regime::Matrix random_z_matrix(std::size_t n, regime::RandomStream& rng) {
  regime::Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) a(i, j) = -rng.next_unit();
    a(i, i) = 3.5 * rng.next_unit();
  }
  return a;
}

/// Random irreducible generator: a directed ring plus random extra rates.
inline regime::TransitionRateMatrix random_irreducible_chain(
    std::size_t n, regime::RandomStream& rng) {
  regime::Matrix q(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    q(i, (i + 1) % n) = 0.1 + rng.next_unit();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && j != (i + 1) % n && rng.next_unit() < 0.5)
        q(i, j) = rng.next_unit();
  }
  for (std::size_t i = 0; i < n; ++i) {
    double exit = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) exit += q(i, j);
    q(i, i) = -exit;
  }
  return regime::validate_rate_matrix(q);
}

}  // namespace testsupport
