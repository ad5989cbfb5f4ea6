#include "regime/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "regime/errors.hpp"
#include "regime/format.hpp"

namespace regime {

double PsiSpec::operator()(double t) const { return c / std::pow(1.0 + t, r); }

std::vector<HypothesisFlag> validate_psi(const PsiSpec& psi) {
  if (!(psi.c > 0.0) || psi.r < 0.0)
    throw Error(ErrorCode::ConfigError, "psi requires c > 0 and r >= 0");
  return {
      {"psi decreasing to zero", psi.r > 0.0},
      {"integral of psi diverges", psi.r <= 1.0},
  };
}

std::string_view to_string(CertificateKind kind) {
  switch (kind) {
    case CertificateKind::two_state_eta: return "two-state-eta";
    case CertificateKind::multi_state_eta: return "multi-state-eta";
    case CertificateKind::m_matrix_gamma: return "m-matrix-gamma";
    case CertificateKind::single_state_exponential:
      return "single-state-exponential";
    case CertificateKind::liu_chen: return "liu-chen";
    case CertificateKind::lyapunov_clock: return "lyapunov-clock";
  }
  return "?";
}

double Certificate::rate_against(const DecayClock& target) const {
  return rate * clock.proportionality(target);
}

std::string to_flat_record(const Certificate& cert) {
  std::string out;
  auto put = [&](const std::string& key, const std::string& value) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  };
  put("kind", std::string(to_string(cert.kind)));
  put("affirmative", cert.affirmative ? "true" : "false");
  put("rate", format_number(cert.rate));
  put("clock", cert.clock.describe());
  if (!cert.failure.empty()) put("failure", cert.failure);
  if (!cert.orientation.empty()) put("orientation", cert.orientation);
  if (cert.kappa != 0.0) put("kappa", format_number(cert.kappa));
  if (cert.theta != 0.0) put("theta", format_number(cert.theta));
  for (const auto& flag : cert.hypothesis_flags)
    put("hypothesis." + flag.hypothesis,
        flag.satisfied ? "satisfied" : "violated");
  auto put_vector = [&](const std::string& key, const std::vector<double>& v) {
    if (v.empty()) return;
    std::string joined;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) joined += ' ';
      joined += format_number(v[i]);
    }
    put(key, joined);
  };
  put_vector("xi", cert.xi);
  put_vector("beta", cert.beta);
  if (cert.partition) {
    auto states = [](const std::vector<std::size_t>& set) {
      std::string joined;
      for (std::size_t i = 0; i < set.size(); ++i) {
        if (i) joined += ' ';
        joined += std::to_string(set[i] + 1);  // 1-based for reporting
      }
      return joined;
    };
    put("partition.weak_set", states(cert.partition->weak_set));
    put("partition.strong_set", states(cert.partition->strong_set));
    put("partition.weak_rate", format_number(cert.partition->weak_rate));
    put("partition.strong_rate", format_number(cert.partition->strong_rate));
  }
  for (const auto& [key, value] : cert.diagnostics)
    put("diagnostic." + key, format_number(value));
  return out;
}

double eta_value(double theta, double kappa) {
  return (1.0 + kappa * theta) / (1.0 + kappa);
}

namespace {

bool flags_all_satisfied(const std::vector<HypothesisFlag>& flags) {
  return std::all_of(flags.begin(), flags.end(),
                     [](const HypothesisFlag& f) { return f.satisfied; });
}

}  // namespace

Certificate eta_two_state(double theta, double q12, double q21,
                          const PsiSpec& psi) {
  if (theta < 0.0 || theta >= 1.0)
    throw Error(ErrorCode::ThetaOutOfRange,
                "theta must lie in [0, 1), got " + std::to_string(theta));
  if (!(q12 > 0.0) || !(q21 > 0.0))
    throw Error(ErrorCode::ConfigError, "switching rates must be positive");

  Certificate cert;
  cert.kind = CertificateKind::two_state_eta;
  cert.clock = psi.clock();
  cert.kappa = q21 / q12;
  cert.theta = theta;
  cert.hypothesis_flags = validate_psi(psi);

  const double eta = eta_value(theta, cert.kappa);
  cert.diagnostics["eta_formula_value"] = eta;
  if (flags_all_satisfied(cert.hypothesis_flags)) {
    cert.affirmative = true;
    cert.rate = eta;
  } else {
    cert.failure = "HypothesisViolated";
  }
  return cert;
}

Certificate eta_two_state_from_rates(std::span<const double> decay_coefficients,
                                     const TransitionRateMatrix& q,
                                     const PsiSpec& psi) {
  if (decay_coefficients.size() != 2 || q.size() != 2)
    throw Error(ErrorCode::ConfigError, "two-state criterion needs two regimes");
  for (double c : decay_coefficients)
    if (!(c > 0.0))
      throw Error(ErrorCode::NonPositiveRate,
                  "decay coefficients must be positive");

  // Canonical layout: strong regime plays "state 2". kappa is the exit rate
  // of the strong state over the exit rate of the weak one.
  const std::size_t strong = decay_coefficients[1] >= decay_coefficients[0] ? 1 : 0;
  const std::size_t weak = 1 - strong;
  const double theta = decay_coefficients[weak] / decay_coefficients[strong];
  const PsiSpec normalized{psi.c * decay_coefficients[strong], psi.r};

  Certificate cert = eta_two_state(
      theta == 1.0 ? std::nextafter(1.0, 0.0) : theta,
      q.rate(weak, strong), q.rate(strong, weak), normalized);
  cert.orientation = "strong regime = state " + std::to_string(strong + 1);
  return cert;
}

Certificate eta_multi_state(std::span<const double> decay_coefficients,
                            const TransitionRateMatrix& q, const PsiSpec& psi) {
  const std::size_t n = q.size();
  if (decay_coefficients.size() != n)
    throw Error(ErrorCode::ConfigError, "rate vector / chain size mismatch");
  for (double c : decay_coefficients)
    if (!(c > 0.0))
      throw Error(ErrorCode::NonPositiveRate,
                  "decay coefficients must be positive");

  Certificate cert;
  cert.kind = CertificateKind::multi_state_eta;
  cert.clock = psi.clock();
  cert.hypothesis_flags = validate_psi(psi);

  MultiStatePartition part;
  part.rate_coefficients.assign(decay_coefficients.begin(),
                                decay_coefficients.end());
  const double c_min =
      *std::min_element(decay_coefficients.begin(), decay_coefficients.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (decay_coefficients[i] == c_min)
      part.weak_set.push_back(i);
    else
      part.strong_set.push_back(i);
  }

  if (part.strong_set.empty()) {
    // All rates equal: V = rho certifies the common rate directly.
    part.weak_rate = c_min;
    part.strong_rate = c_min;
    cert.partition = part;
    cert.diagnostics["eta_formula_value"] = c_min;
    if (flags_all_satisfied(cert.hypothesis_flags)) {
      cert.affirmative = true;
      cert.rate = c_min;
    } else {
      cert.failure = "HypothesisViolated";
    }
    return cert;
  }

  part.weak_rate = c_min;
  part.strong_rate = decay_coefficients[part.strong_set.front()];
  for (std::size_t i : part.strong_set)
    part.strong_rate = std::min(part.strong_rate, decay_coefficients[i]);

  double min_escape = 0.0;
  bool first = true;
  for (std::size_t j : part.weak_set) {
    double q_escape = 0.0;
    for (std::size_t i : part.strong_set) q_escape += q.rate(j, i);
    if (first || q_escape < min_escape) min_escape = q_escape;
    first = false;
  }
  double max_return = 0.0;
  for (std::size_t i : part.strong_set) {
    double q_back = 0.0;
    for (std::size_t j : part.weak_set) q_back += q.rate(i, j);
    max_return = std::max(max_return, q_back);
  }

  cert.hypothesis_flags.push_back(
      {"every weak state switches directly into the strong set",
       min_escape > 0.0});

  if (!(min_escape > 0.0)) {
    cert.partition = part;
    cert.failure = "BlockedEscape";
    return cert;
  }

  part.kappa = max_return / min_escape;
  cert.kappa = part.kappa;
  cert.partition = part;
  const double eta =
      (part.strong_rate + part.kappa * part.weak_rate) / (1.0 + part.kappa);
  cert.diagnostics["eta_formula_value"] = eta;
  if (flags_all_satisfied(cert.hypothesis_flags)) {
    cert.affirmative = true;
    cert.rate = eta;
  } else {
    cert.failure = "HypothesisViolated";
  }
  return cert;
}

MMatrixCheck is_nonsingular_m_matrix(const Matrix& a, double tol) {
  MMatrixCheck check;
  if (a.rows() != a.cols() || a.rows() == 0) {
    check.detail = "not a square matrix";
    return check;
  }
  const std::size_t n = a.rows();
  const double scale = std::max(a.max_abs(), 1e-300);

  check.z_matrix = true;
  for (std::size_t i = 0; i < n && check.z_matrix; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && a(i, j) > tol * scale) {
        check.z_matrix = false;
        check.detail = "positive off-diagonal at (" + std::to_string(i + 1) +
                       "," + std::to_string(j + 1) + ")";
        break;
      }
  if (!check.z_matrix) return check;

  check.minors = leading_principal_minors(a);
  double threshold = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    threshold *= scale;
    if (!(check.minors[k] > tol * threshold)) {
      check.first_failed_minor = static_cast<int>(k + 1);
      check.detail = "leading minor " + std::to_string(k + 1) + " = " +
                     format_number(check.minors[k]) + " not positive";
      return check;
    }
  }
  check.is_nonsingular_m_matrix = true;
  return check;
}

Certificate exponential_rate_bound(std::span<const double> growth_rates,
                                   const TransitionRateMatrix& q) {
  const std::size_t n = q.size();
  if (growth_rates.size() != n)
    throw Error(ErrorCode::ConfigError, "rate vector / chain size mismatch");

  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      a(i, j) = -q.rate(i, j);
      if (i == j) a(i, j) -= growth_rates[i];
    }

  Certificate cert;
  cert.kind = CertificateKind::m_matrix_gamma;
  cert.clock = DecayClock::exponential();

  const MMatrixCheck check = is_nonsingular_m_matrix(a);
  cert.hypothesis_flags.push_back(
      {"-(diag(rates) + Q) is a nonsingular M-matrix",
       check.is_nonsingular_m_matrix});
  if (!check.is_nonsingular_m_matrix) {
    cert.failure = "NotMMatrix";
    if (check.first_failed_minor > 0)
      cert.diagnostics["first_failed_minor"] = check.first_failed_minor;
    return cert;
  }

  // Canonical witness: (diag(rates) + Q) xi = -1, i.e. a xi = 1.
  cert.xi = solve_linear(a, std::vector<double>(n, 1.0));
  double xi_max = 0.0;
  for (double v : cert.xi) xi_max = std::max(xi_max, std::abs(v));
  for (double v : cert.xi)
    if (!(v > 1e-10 * xi_max))
      throw Error(ErrorCode::WitnessNotPositive,
                  "witness component " + format_number(v) +
                      " is not strictly positive");
  cert.beta.assign(n, -1.0);

  double xi_min = cert.xi[0];
  for (double v : cert.xi) xi_min = std::min(xi_min, v);
  cert.affirmative = true;
  cert.rate = 1.0 / xi_max;
  cert.diagnostics["gamma_over_min_xi"] = 1.0 / xi_min;
  return cert;
}

Certificate single_state_exponential_certificate(std::size_t i0, double c_i0,
                                                 const TransitionRateMatrix& q) {
  if (i0 >= q.size())
    throw Error(ErrorCode::ConfigError, "state index out of range");
  if (!(c_i0 > 0.0))
    throw Error(ErrorCode::NonPositiveRate,
                "the stable regime needs a strictly positive rate");

  std::vector<double> growth(q.size(), 0.0);
  growth[i0] = -c_i0;
  Certificate cert = exponential_rate_bound(growth, q);
  cert.kind = CertificateKind::single_state_exponential;
  cert.orientation = "exponentially stable regime = state " +
                     std::to_string(i0 + 1);
  cert.hypothesis_flags.insert(
      cert.hypothesis_flags.begin(),
      {"remaining regimes declared nonexpanding", true});
  return cert;
}

Certificate liu_chen_gamma(double nu, double theta, const DecayClock& clock,
                           bool improved_integrability_declared) {
  if (nu < 0.0 || theta < 0.0)
    throw Error(ErrorCode::ConfigError, "nu and theta must be nonnegative");

  Certificate cert;
  cert.kind = CertificateKind::liu_chen;
  cert.clock = clock;
  cert.theta = theta;
  const double gamma = 1.0 - theta - nu;
  cert.diagnostics["gamma"] = gamma;
  cert.hypothesis_flags.push_back(
      {"integrability of exp(-int phi2) phi1 declared",
       improved_integrability_declared});
  if (improved_integrability_declared) {
    // Sharper order 1 - theta, independent of nu.
    cert.diagnostics["improved_rate"] = 1.0 - theta;
    cert.rate = 1.0 - theta;
  } else {
    cert.rate = gamma;
  }
  if (cert.rate > 0.0) {
    cert.affirmative = true;
  } else {
    cert.rate = 0.0;
    cert.failure = "NonPositiveOrder";
  }
  return cert;
}

namespace {

struct DerivativeEvaluators {
  const LyapunovSpec& spec;
  std::size_t dim;

  double rho(double t, std::span<const double> x) const {
    const double v = spec.rho(t, x);
    if (!std::isfinite(v))
      throw Error(ErrorCode::EvaluationFailure, "rho evaluated non-finite");
    return v;
  }

  double dt(double t, std::span<const double> x) const {
    if (spec.rho_dt) return spec.rho_dt(t, x);
    const double h = 1e-5 * (1.0 + std::abs(t));
    const double hi = spec.rho(t + h, x);
    const double lo = spec.rho(std::max(0.0, t - h), x);
    const double span = t - std::max(0.0, t - h) + h;
    return (hi - lo) / span;
  }

  void grad(double t, std::span<const double> x, std::vector<double>& out,
            std::vector<double>& xbuf) const {
    if (spec.rho_grad) {
      spec.rho_grad(t, x, out);
      return;
    }
    xbuf.assign(x.begin(), x.end());
    for (std::size_t k = 0; k < dim; ++k) {
      const double h = 1e-5 * (1.0 + std::abs(x[k]));
      xbuf[k] = x[k] + h;
      const double hi = spec.rho(t, xbuf);
      xbuf[k] = x[k] - h;
      const double lo = spec.rho(t, xbuf);
      xbuf[k] = x[k];
      out[k] = (hi - lo) / (2.0 * h);
    }
  }

  void hess(double t, std::span<const double> x, std::vector<double>& out,
            std::vector<double>& xbuf) const {
    if (spec.rho_hess) {
      spec.rho_hess(t, x, out);
      return;
    }
    xbuf.assign(x.begin(), x.end());
    const double center = spec.rho(t, xbuf);
    for (std::size_t k = 0; k < dim; ++k) {
      const double hk = 1e-5 * (1.0 + std::abs(x[k]));
      xbuf[k] = x[k] + hk;
      const double up = spec.rho(t, xbuf);
      xbuf[k] = x[k] - hk;
      const double down = spec.rho(t, xbuf);
      xbuf[k] = x[k];
      out[k * dim + k] = (up - 2.0 * center + down) / (hk * hk);
      for (std::size_t l = k + 1; l < dim; ++l) {
        const double hl = 1e-5 * (1.0 + std::abs(x[l]));
        double corners = 0.0;
        xbuf[k] = x[k] + hk;
        xbuf[l] = x[l] + hl;
        corners += spec.rho(t, xbuf);
        xbuf[l] = x[l] - hl;
        corners -= spec.rho(t, xbuf);
        xbuf[k] = x[k] - hk;
        corners += spec.rho(t, xbuf);
        xbuf[l] = x[l] + hl;
        corners -= spec.rho(t, xbuf);
        xbuf[k] = x[k];
        xbuf[l] = x[l];
        const double mixed = corners / (4.0 * hk * hl);
        out[k * dim + l] = mixed;
        out[l * dim + k] = mixed;
      }
    }
  }
};

}  // namespace

LyapunovCheckReport check_lyapunov_condition(const LyapunovSpec& spec,
                                             const GeneralRegimeModel& model,
                                             const TransitionRateMatrix& q,
                                             std::span<const GridPoint> grid) {
  if (!spec.rho)
    throw Error(ErrorCode::ConfigError, "no Lyapunov candidate supplied");
  if (grid.empty())
    throw Error(ErrorCode::ConfigError, "empty sample grid");
  if (model.regime_count != q.size())
    throw Error(ErrorCode::ConfigError, "model/chain regime count mismatch");
  const bool has_constant = spec.growth_rates.has_value();
  const bool has_two_state = spec.two_state.has_value();
  const bool has_common = spec.common_psi.has_value();
  if (static_cast<int>(has_constant) + static_cast<int>(has_two_state) +
          static_cast<int>(has_common) !=
      1)
    throw Error(ErrorCode::ConfigError,
                "declare exactly one of growth_rates / two_state / common_psi");
  if (has_constant && spec.growth_rates->size() != model.regime_count)
    throw Error(ErrorCode::ConfigError, "growth rate vector size mismatch");
  if (has_two_state && model.regime_count != 2)
    throw Error(ErrorCode::ConfigError, "two_state bound needs two regimes");

  const std::size_t d = model.dimension;
  const std::size_t n = model.regime_count;
  DerivativeEvaluators eval{spec, d};

  LyapunovCheckReport report;
  report.worst_margin.assign(n, -std::numeric_limits<double>::infinity());
  report.regime_ok.assign(n, true);
  report.worst_rho_gap = std::numeric_limits<double>::infinity();

  std::vector<double> grad(d), hess(d * d), drift(d), diffusion(d * d), xbuf(d);

  for (const GridPoint& point : grid) {
    if (point.x.size() != d)
      throw Error(ErrorCode::ConfigError, "grid point dimension mismatch");
    const double rho = eval.rho(point.t, point.x);
    if (!(rho > 0.0))
      throw Error(ErrorCode::ConfigError,
                  "rho must be positive on the grid (t = " +
                      std::to_string(point.t) + ")");

    double xp = 0.0;
    for (double v : point.x) xp += v * v;
    xp = std::pow(xp, 0.5 * spec.p);
    report.worst_rho_gap = std::min(report.worst_rho_gap, rho - xp);

    const double rho_dt = eval.dt(point.t, point.x);
    eval.grad(point.t, point.x, grad, xbuf);
    eval.hess(point.t, point.x, hess, xbuf);

    for (std::size_t i = 0; i < n; ++i) {
      model.drift(point.t, point.x, i, drift);
      model.diffusion(point.t, point.x, i, diffusion);

      double generator = rho_dt;
      for (std::size_t k = 0; k < d; ++k) generator += drift[k] * grad[k];
      // (1/2) tr(sigma sigma^T H): a_kl = sum_m sigma_km sigma_lm.
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = 0; l < d; ++l) {
          double a_kl = 0.0;
          for (std::size_t m = 0; m < d; ++m)
            a_kl += diffusion[k * d + m] * diffusion[l * d + m];
          generator += 0.5 * a_kl * hess[k * d + l];
        }
      if (!std::isfinite(generator))
        throw Error(ErrorCode::EvaluationFailure,
                    "generator evaluated non-finite at t = " +
                        std::to_string(point.t));

      double bound;  // declared upper bound for L rho, units of rho
      if (has_constant) {
        bound = (*spec.growth_rates)[i];
      } else if (has_two_state) {
        const auto& [psi, theta] = *spec.two_state;
        bound = (i == 1 ? -1.0 : -theta) * psi(point.t);
      } else {
        bound = -(*spec.common_psi)(point.t);
      }
      const double margin = generator / rho - bound;
      report.worst_margin[i] = std::max(report.worst_margin[i], margin);
    }
  }

  const double slack = 1e-8;
  for (std::size_t i = 0; i < n; ++i)
    report.regime_ok[i] = report.worst_margin[i] <= slack;
  report.rho_dominates = report.worst_rho_gap >= -1e-12;
  report.all_ok = report.rho_dominates &&
                  std::all_of(report.regime_ok.begin(), report.regime_ok.end(),
                              [](bool ok) { return ok; });
  return report;
}

}  // namespace regime
