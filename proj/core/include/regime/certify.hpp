#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "regime/chain.hpp"
#include "regime/dynamics.hpp"
#include "regime/linalg.hpp"
#include "regime/oracle.hpp"

namespace regime {

/// Parametric rate function psi(t) = c / (1+t)^r. Every bundled model fits
/// this family, hypothesis validation is decidable on it, and the induced
/// clock exp(int psi) has a closed form. General psi is out of scope.
struct PsiSpec {
  double c = 1.0;
  double r = 1.0;

  DecayClock clock() const { return DecayClock::psi(c, r); }
  double operator()(double t) const;
};

struct HypothesisFlag {
  std::string hypothesis;
  bool satisfied = false;
};

/// Checks the two standing assumptions on psi: it must decrease to zero
/// (requires r > 0) and its integral must diverge (requires r <= 1).
std::vector<HypothesisFlag> validate_psi(const PsiSpec& psi);

enum class CertificateKind {
  two_state_eta,
  multi_state_eta,
  m_matrix_gamma,
  single_state_exponential,
  liu_chen,
  lyapunov_clock,
};

std::string_view to_string(CertificateKind kind);

/// Argmin partition behind the multi-state decay order: S0 holds the states
/// with the smallest rate coefficient, S1 the rest.
struct MultiStatePartition {
  std::vector<double> rate_coefficients;
  std::vector<std::size_t> weak_set;    // S0
  std::vector<std::size_t> strong_set;  // S1
  double weak_rate = 0.0;               // min over S0
  double strong_rate = 0.0;             // min over S1
  double kappa = 0.0;
};

/// Output of every stability criterion. A violated hypothesis makes the
/// certificate inapplicable: no rate is asserted, but the formula value and
/// the flags stay available for reporting.
struct Certificate {
  CertificateKind kind;
  DecayClock clock = DecayClock::exponential();
  bool affirmative = false;
  double rate = 0.0;  // decay order against `clock` when affirmative
  std::string failure;  // short reason when not affirmative
  std::vector<HypothesisFlag> hypothesis_flags;

  // witness data, populated per kind
  std::vector<double> xi;
  std::vector<double> beta;
  double kappa = 0.0;
  double theta = 0.0;
  std::optional<MultiStatePartition> partition;
  std::string orientation;
  std::map<std::string, double> diagnostics;

  /// Rate converted to another clock; only proportional clocks convert
  /// (throws Error{ClockMismatch} otherwise).
  double rate_against(const DecayClock& target) const;
};

/// Flat key=value text record (one pair per line).
std::string to_flat_record(const Certificate& cert);

/// The two-state decay order (1 + kappa*theta) / (1 + kappa) as a plain
/// formula, defined for theta in [0,1] with the limits eta(1,.) = 1 and
/// eta(.,0) = 1. Certificate construction gates theta < 1 separately.
double eta_value(double theta, double kappa);

/// Two-state certificate in the canonical layout: state 2 is the strong
/// regime (rate psi), state 1 the weak one (rate theta*psi); kappa = q21/q12.
/// Asserts log E|X_t|^p / int_0^t psi <= -eta when the psi hypotheses hold.
/// Throws Error{ThetaOutOfRange} unless 0 <= theta < 1.
Certificate eta_two_state(double theta, double q12, double q21, const PsiSpec& psi);

/// Same criterion with caller-side rates: decay_coefficients[i] * psi bounds
/// regime i. Orients automatically (the stronger regime takes the canonical
/// "state 2" role, and kappa follows), normalizes psi by the strong rate,
/// and records the orientation in the certificate.
Certificate eta_two_state_from_rates(std::span<const double> decay_coefficients,
                                     const TransitionRateMatrix& q,
                                     const PsiSpec& psi);

/// Multi-state decay order (strong_rate + kappa*weak_rate) / (1 + kappa)
/// with the argmin partition witness; rates are coefficients of psi. All
/// rates equal returns the trivial certificate with rate = that coefficient.
/// A weak state with no direct rate into S1 makes the certificate
/// inapplicable (failure "BlockedEscape").
Certificate eta_multi_state(std::span<const double> decay_coefficients,
                            const TransitionRateMatrix& q, const PsiSpec& psi);

struct MMatrixCheck {
  bool is_nonsingular_m_matrix = false;
  bool z_matrix = false;
  std::vector<double> minors;
  int first_failed_minor = -1;  // 1-based order of the first failing minor
  std::string detail;
};

/// Z-matrix test plus Sylvester-style leading-minor test. The k-th minor
/// must exceed tol * (max |entry|)^k.
MMatrixCheck is_nonsingular_m_matrix(const Matrix& a, double tol = 1e-10);

/// Exponential decay certificate from per-regime growth bounds
/// (L_rho <= growth_rates[i] * rho, negative entries mean decay). Requires
/// -(diag(growth) + Q) to be a nonsingular M-matrix; the witness xi solves
/// (diag(growth) + Q) xi = -1 and the certified rate is 1 / max_i xi_i.
/// Dividing by max xi (not min xi) is what the chain
/// A V <= (max beta) rho, rho >= V / max xi actually supports; the min-xi
/// value is kept in the diagnostics for reference.
Certificate exponential_rate_bound(std::span<const double> growth_rates,
                                   const TransitionRateMatrix& q);

/// Exponential certificate when a single regime i0 is exponentially stable
/// with rate c_i0 > 0 and every other regime is at worst nonexpanding. For
/// irreducible Q this always succeeds (the matrix is irreducibly diagonally
/// dominant); the M-matrix check runs anyway as a self-test.
Certificate single_state_exponential_certificate(std::size_t i0, double c_i0,
                                                 const TransitionRateMatrix& q);

/// Decay order 1 - theta - nu against the caller's clock; affirmative iff
/// positive. With the stronger integrability hypothesis declared by the
/// caller the sharper order 1 - theta applies instead.
Certificate liu_chen_gamma(double nu, double theta,
                           const DecayClock& clock = DecayClock::exponential(),
                           bool improved_integrability_declared = false);

/// Lyapunov candidate rho(t, x) with optional exact derivative evaluators;
/// missing ones fall back to central differences with step 1e-5 * (1+|x|).
struct LyapunovSpec {
  std::function<double(double t, std::span<const double> x)> rho;
  std::function<double(double t, std::span<const double> x)> rho_dt;
  std::function<void(double t, std::span<const double> x, std::span<double> out)>
      rho_grad;
  std::function<void(double t, std::span<const double> x, std::span<double> out)>
      rho_hess;
  double p = 2.0;

  /// Declared bound, exactly one of:
  ///   growth_rates: L_rho <= growth_rates[i] * rho per regime
  ///   two_state:   (psi, theta), state 2 strong as in eta_two_state
  ///   common_psi:  L_rho <= -psi(t) rho in every regime
  std::optional<std::vector<double>> growth_rates;
  std::optional<std::pair<PsiSpec, double>> two_state;
  std::optional<PsiSpec> common_psi;
};

struct GridPoint {
  double t = 0.0;
  std::vector<double> x;
};

struct LyapunovCheckReport {
  std::vector<double> worst_margin;  // per regime, units of rho; <= 0 passes
  std::vector<bool> regime_ok;
  double worst_rho_gap = 0.0;  // min over grid of rho - |x|^p
  bool rho_dominates = false;
  bool all_ok = false;
};

/// Evaluates L_rho = d_t rho + b . grad rho + tr(sigma sigma^T hess rho)/2
/// per regime on the sample grid and checks the declared inequality, plus
/// rho >= |x|^p. Throws Error{EvaluationFailure} on non-finite derivatives.
LyapunovCheckReport check_lyapunov_condition(const LyapunovSpec& spec,
                                             const GeneralRegimeModel& model,
                                             const TransitionRateMatrix& q,
                                             std::span<const GridPoint> grid);

}  // namespace regime
