#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "regime/chain.hpp"
#include "regime/dynamics.hpp"
#include "regime/linalg.hpp"

namespace regime {

/// Comparison clock lambda(t) that decay rates are measured against. A rate
/// is meaningless without its clock, so certificates and fits carry one.
///
/// Kinds:
///   exponential   lambda(t) = e^t
///   polynomial    lambda(t) = (1+t)^m, m > 0
///   psi           lambda(t) = exp(int_0^t c/(1+s)^r ds), c > 0, r in [0,1]
///
/// psi with r = 1 coincides with polynomial of order c; psi with r = 0
/// is the exponential clock scaled by c.
class DecayClock {
 public:
  enum class Kind { exponential, polynomial, psi };

  static DecayClock exponential();
  static DecayClock polynomial(double order);
  static DecayClock psi(double c, double r);

  Kind kind() const { return kind_; }
  double order() const { return order_; }
  double psi_c() const { return c_; }
  double psi_r() const { return r_; }

  double log_value(double t) const;
  double value(double t) const;

  /// Inverse of log_value: the time with log lambda(t) = target.
  double time_at_log(double target) const;

  /// Evaluates psi(t) itself (psi kind only; exponential reads as c=1, r=0,
  /// polynomial of order m as c=m, r=1).
  double rate(double t) const;

  /// Constant f with log_this(t) = f * log_other(t) for all t, when the two
  /// clocks are proportional; throws Error{ClockMismatch} otherwise. Rates
  /// convert across clocks only through this factor, never silently.
  double proportionality(const DecayClock& other) const;

  std::string describe() const;

  bool operator==(const DecayClock& other) const = default;

 private:
  DecayClock(Kind kind, double order, double c, double r)
      : kind_(kind), order_(order), c_(c), r_(r) {}

  Kind kind_;
  double order_;  // polynomial order m
  double c_;      // psi scale
  double r_;      // psi exponent
};

/// Forward equations for m_i(t) = E[|X_t|^p  1{regime = i}] of a linear
/// scalar regime model:
///   dm_i/dt = c_i(t) m_i + sum_j q_ji m_j,
///   c_i(t)  = p a_i(t) + p(p-1)/2 g_i(t)^2.
/// This is the library's exact verification channel: deterministic, no
/// sampling error.
class MomentSystem {
 public:
  MomentSystem(std::function<double(std::size_t regime, double t)> rate,
               TransitionRateMatrix q, double moment_order,
               std::vector<double> initial_mass);

  std::size_t regime_count() const { return q_.size(); }
  double rate(std::size_t regime, double t) const { return rate_(regime, t); }
  const TransitionRateMatrix& q() const { return q_; }
  double moment_order() const { return moment_order_; }
  const std::vector<double>& initial_mass() const { return initial_mass_; }

 private:
  std::function<double(std::size_t, double)> rate_;
  TransitionRateMatrix q_;
  double moment_order_;
  std::vector<double> initial_mass_;
};

/// Per-regime moment rate functions c_i(t) for the given order.
std::function<double(std::size_t regime, double t)> moment_rate_coefficients(
    const LinearScalarRegimeModel& model, double p);

MomentSystem make_moment_system(const LinearScalarRegimeModel& model,
                                const TransitionRateMatrix& q, double p, double x0,
                                std::size_t start_regime);

struct StepControl {
  double rel_tol = 1e-8;          // local error per step, relative
  double min_step_fraction = 1e-12;  // underflow guard, fraction of horizon
};

struct MomentCurve {
  std::vector<double> times;
  Matrix per_regime;          // one row per time
  std::vector<double> total;  // row sums
};

/// Integrates the moment system with classical RK4 under step-doubling error
/// control, landing exactly on each requested output time. Step doubling
/// rather than an embedded pair keeps the integration bit-reproducible.
/// Throws Error{StiffnessFailure} on step underflow and Error{NegativeMass}
/// if any component drops below -1e-12 (smaller negatives are clamped).
MomentCurve solve_moment_system(const MomentSystem& system,
                                const std::vector<double>& output_times,
                                const StepControl& control = {});

/// Output grid log-spaced in lambda(t): equal leverage per decade of the
/// clock when fitting. Includes 0 and the horizon.
std::vector<double> log_spaced_times(const DecayClock& clock, double horizon,
                                     std::size_t count);

/// Exact second moments of the single-regime registry models:
///   geometric    x0^2 e^{-t}
///   polynomial1  x0^2 / (1+t)
///   polynomialM  x0^2 (1+t)^{-m}
double closed_form_single_regime(const std::string& name, double x0, double t,
                                 double m = 0.0);

struct FitWindow {
  double t_lo = 0.0;
  double t_hi = 0.0;
};

/// Least-squares fit of log(value) against log lambda(t) over a window.
struct DecayFit {
  double gamma_hat = 0.0;  // fitted decay order, -slope
  double slope = 0.0;
  double slope_std_error = 0.0;
  double residual = 0.0;  // max |fit deviation| in log space
  double intercept = 0.0;
  FitWindow window;
  std::size_t points = 0;
};

/// The asymptotic decay statement is a limsup, so early transients bias the
/// slope; the default window is the upper half of the log-clock range.
FitWindow default_fit_window(std::span<const double> times, const DecayClock& clock);

/// Throws Error{NonPositiveValue} for nonpositive values inside the window
/// and Error{WindowTooSmall} for windows with fewer than 10 points.
DecayFit fit_decay_order(std::span<const double> times,
                         std::span<const double> values, const DecayClock& clock,
                         const FitWindow& window);

}  // namespace regime
