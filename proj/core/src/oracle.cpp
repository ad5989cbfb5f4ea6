#include "regime/oracle.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>

#include "regime/errors.hpp"

namespace regime {

DecayClock DecayClock::exponential() {
  return DecayClock(Kind::exponential, 0.0, 1.0, 0.0);
}

DecayClock DecayClock::polynomial(double order) {
  if (!(order > 0.0))
    throw Error(ErrorCode::ConfigError, "polynomial clock needs order > 0");
  return DecayClock(Kind::polynomial, order, order, 1.0);
}

DecayClock DecayClock::psi(double c, double r) {
  if (!(c > 0.0) || r < 0.0 || r > 1.0)
    throw Error(ErrorCode::ConfigError,
                "psi clock needs c > 0 and r in [0, 1] so that lambda -> inf");
  return DecayClock(Kind::psi, 0.0, c, r);
}

double DecayClock::log_value(double t) const {
  switch (kind_) {
    case Kind::exponential:
      return t;
    case Kind::polynomial:
      return order_ * std::log1p(t);
    case Kind::psi:
      if (r_ == 1.0) return c_ * std::log1p(t);
      return c_ * (std::pow(1.0 + t, 1.0 - r_) - 1.0) / (1.0 - r_);
  }
  return 0.0;
}

double DecayClock::value(double t) const {
  if (kind_ == Kind::polynomial) return std::pow(1.0 + t, order_);
  return std::exp(log_value(t));
}

double DecayClock::time_at_log(double target) const {
  if (target < 0.0)
    throw Error(ErrorCode::ConfigError, "log lambda targets are nonnegative");
  switch (kind_) {
    case Kind::exponential:
      return target;
    case Kind::polynomial:
      return std::expm1(target / order_);
    case Kind::psi:
      if (r_ == 1.0) return std::expm1(target / c_);
      return std::pow(1.0 + target * (1.0 - r_) / c_, 1.0 / (1.0 - r_)) - 1.0;
  }
  return 0.0;
}

double DecayClock::rate(double t) const {
  return c_ / std::pow(1.0 + t, r_);
}

double DecayClock::proportionality(const DecayClock& other) const {
  // log lambda is c*t for {exponential, psi r=0}, (m or c)*log(1+t) for
  // {polynomial, psi r=1}, and c*((1+t)^(1-r)-1)/(1-r) for psi r in (0,1).
  auto family = [](const DecayClock& k) -> std::pair<int, double> {
    switch (k.kind_) {
      case Kind::exponential:
        return {0, 1.0};
      case Kind::polynomial:
        return {1, k.order_};
      case Kind::psi:
        if (k.r_ == 0.0) return {0, k.c_};
        if (k.r_ == 1.0) return {1, k.c_};
        return {2 + static_cast<int>(1e6 * k.r_), k.c_};
    }
    return {-1, 0.0};
  };
  const auto [fam_a, scale_a] = family(*this);
  const auto [fam_b, scale_b] = family(other);
  if (fam_a != fam_b)
    throw Error(ErrorCode::ClockMismatch,
                "rates against " + describe() + " and " + other.describe() +
                    " are not comparable");
  return scale_a / scale_b;
}

std::string DecayClock::describe() const {
  switch (kind_) {
    case Kind::exponential:
      return "exponential";
    case Kind::polynomial:
      return "polynomial(m=" + std::to_string(order_) + ")";
    case Kind::psi:
      return "psi(c=" + std::to_string(c_) + ",r=" + std::to_string(r_) + ")";
  }
  return "?";
}

MomentSystem::MomentSystem(std::function<double(std::size_t, double)> rate,
                           TransitionRateMatrix q, double moment_order,
                           std::vector<double> initial_mass)
    : rate_(std::move(rate)),
      q_(std::move(q)),
      moment_order_(moment_order),
      initial_mass_(std::move(initial_mass)) {
  if (initial_mass_.size() != q_.size())
    throw Error(ErrorCode::ConfigError, "initial mass dimension mismatch");
  if (!(moment_order_ > 0.0))
    throw Error(ErrorCode::ConfigError, "moment order must be > 0");
}

std::function<double(std::size_t, double)> moment_rate_coefficients(
    const LinearScalarRegimeModel& model, double p) {
  if (!(p > 0.0)) throw Error(ErrorCode::ConfigError, "moment order must be > 0");
  return [model, p](std::size_t regime, double t) {
    const double a = model.drift(regime, t);
    const double g = model.diffusion(regime, t);
    return p * a + 0.5 * p * (p - 1.0) * g * g;
  };
}

MomentSystem make_moment_system(const LinearScalarRegimeModel& model,
                                const TransitionRateMatrix& q, double p, double x0,
                                std::size_t start_regime) {
  if (model.regime_count() != q.size())
    throw Error(ErrorCode::ConfigError, "model/chain regime count mismatch");
  if (start_regime >= q.size())
    throw Error(ErrorCode::ConfigError, "start regime out of range");
  std::vector<double> mass(q.size(), 0.0);
  mass[start_regime] = std::pow(std::abs(x0), p);
  return MomentSystem(moment_rate_coefficients(model, p), q, p, std::move(mass));
}

namespace {

using Vec = std::vector<double>;

void derivative(const MomentSystem& sys, double t, const Vec& m, Vec& out) {
  const std::size_t n = sys.regime_count();
  for (std::size_t i = 0; i < n; ++i) {
    double v = sys.rate(i, t) * m[i];
    for (std::size_t j = 0; j < n; ++j) v += sys.q().rate(j, i) * m[j];
    out[i] = v;
  }
}

struct Rk4Scratch {
  Vec k1, k2, k3, k4, tmp;
  void resize(std::size_t n) {
    k1.resize(n);
    k2.resize(n);
    k3.resize(n);
    k4.resize(n);
    tmp.resize(n);
  }
};

void rk4_step(const MomentSystem& sys, double t, const Vec& y, double h, Vec& out,
              Rk4Scratch& s) {
  const std::size_t n = y.size();
  derivative(sys, t, y, s.k1);
  for (std::size_t i = 0; i < n; ++i) s.tmp[i] = y[i] + 0.5 * h * s.k1[i];
  derivative(sys, t + 0.5 * h, s.tmp, s.k2);
  for (std::size_t i = 0; i < n; ++i) s.tmp[i] = y[i] + 0.5 * h * s.k2[i];
  derivative(sys, t + 0.5 * h, s.tmp, s.k3);
  for (std::size_t i = 0; i < n; ++i) s.tmp[i] = y[i] + h * s.k3[i];
  derivative(sys, t + h, s.tmp, s.k4);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = y[i] + (h / 6.0) * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
}

double max_abs(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

MomentCurve solve_moment_system(const MomentSystem& system,
                                const std::vector<double>& output_times,
                                const StepControl& control) {
  if (output_times.empty())
    throw Error(ErrorCode::ConfigError, "no output times requested");
  for (std::size_t k = 0; k < output_times.size(); ++k) {
    if (output_times[k] < 0.0)
      throw Error(ErrorCode::ConfigError, "output times must be nonnegative");
    if (k > 0 && !(output_times[k - 1] < output_times[k]))
      throw Error(ErrorCode::ConfigError, "output times must be increasing");
  }

  const std::size_t n = system.regime_count();
  const double horizon = output_times.back();
  const double mass_floor =
      -1e-12 * std::max(1.0, max_abs(system.initial_mass()));

  MomentCurve curve;
  curve.times = output_times;
  curve.per_regime = Matrix(output_times.size(), n);
  curve.total.assign(output_times.size(), 0.0);

  Vec y = system.initial_mass();
  auto enforce_mass = [&](Vec& m, double t) {
    for (double& v : m) {
      if (v < mass_floor)
        throw Error(ErrorCode::NegativeMass,
                    "component dropped to " + std::to_string(v) + " at t = " +
                        std::to_string(t));
      if (v < 0.0) v = 0.0;
    }
  };
  enforce_mass(y, 0.0);

  auto record = [&](std::size_t k, const Vec& m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      curve.per_regime(k, i) = m[i];
      total += m[i];
    }
    curve.total[k] = total;
  };

  double t = 0.0;
  std::size_t oi = 0;
  if (output_times[0] == 0.0) record(oi++, y);

  if (horizon == 0.0) return curve;

  Rk4Scratch scratch;
  scratch.resize(n);
  Vec y_full(n), y_half(n), y_two(n);

  // Initial step guess from the stiffest visible scale.
  double rate_scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    rate_scale = std::max(rate_scale,
                          std::abs(system.rate(i, 0.0)) + system.q().exit_rate(i));
  double h = std::min(horizon / 16.0, 0.5 / (rate_scale + 1.0));
  const double h_min = control.min_step_fraction * horizon;

  while (oi < output_times.size()) {
    const double target = output_times[oi];
    bool hit_target = false;
    double h_try = h;
    if (t + h_try >= target) {
      h_try = target - t;
      hit_target = true;
    }

    rk4_step(system, t, y, h_try, y_full, scratch);
    rk4_step(system, t, y, 0.5 * h_try, y_half, scratch);
    rk4_step(system, t + 0.5 * h_try, y_half, 0.5 * h_try, y_two, scratch);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      err = std::max(err, std::abs(y_two[i] - y_full[i]));
    const double scale = std::max({max_abs(y), max_abs(y_two), DBL_MIN});
    const double ratio = err / (control.rel_tol * scale);

    if (ratio <= 1.0) {
      // Accept with local extrapolation (classical 1/15 correction).
      for (std::size_t i = 0; i < n; ++i)
        y[i] = y_two[i] + (y_two[i] - y_full[i]) / 15.0;
      t += h_try;
      enforce_mass(y, t);
      if (hit_target) {
        record(oi++, y);
        t = target;  // squash accumulated rounding at landings
      }
    }

    const double grow =
        ratio > 0.0 ? 0.9 * std::pow(ratio, -0.2) : 5.0;
    h = h_try * std::clamp(grow, 0.2, 5.0);
    if (h < h_min)
      throw Error(ErrorCode::StiffnessFailure,
                  "step size underflow near t = " + std::to_string(t));
  }
  return curve;
}

std::vector<double> log_spaced_times(const DecayClock& clock, double horizon,
                                     std::size_t count) {
  if (count < 2 || !(horizon > 0.0))
    throw Error(ErrorCode::ConfigError, "need horizon > 0 and >= 2 output times");
  const double log_max = clock.log_value(horizon);
  std::vector<double> times;
  times.reserve(count);
  times.push_back(0.0);
  for (std::size_t k = 1; k + 1 < count; ++k) {
    const double target = log_max * static_cast<double>(k) /
                          static_cast<double>(count - 1);
    times.push_back(std::min(clock.time_at_log(target), horizon));
  }
  times.push_back(horizon);
  // Rounding near the endpoints can produce ties; keep the grid increasing.
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

double closed_form_single_regime(const std::string& name, double x0, double t,
                                 double m) {
  if (t < 0.0) throw Error(ErrorCode::ConfigError, "t must be nonnegative");
  if (name == "geometric") return x0 * x0 * std::exp(-t);
  if (name == "polynomial1") return x0 * x0 / (1.0 + t);
  if (name == "polynomialM") {
    if (!(m > 1.0))
      throw Error(ErrorCode::InvalidParameter, "polynomialM requires m > 1");
    return x0 * x0 * std::pow(1.0 + t, -m);
  }
  throw Error(ErrorCode::UnknownModel, "no closed form for '" + name + "'");
}

FitWindow default_fit_window(std::span<const double> times,
                             const DecayClock& clock) {
  if (times.empty())
    throw Error(ErrorCode::WindowTooSmall, "no samples to fit");
  const double log_lo = clock.log_value(times.front());
  const double log_hi = clock.log_value(times.back());
  const double mid = 0.5 * (log_lo + log_hi);
  for (double t : times)
    if (clock.log_value(t) >= mid) return FitWindow{t, times.back()};
  return FitWindow{times.back(), times.back()};
}

DecayFit fit_decay_order(std::span<const double> times,
                         std::span<const double> values, const DecayClock& clock,
                         const FitWindow& window) {
  if (times.size() != values.size())
    throw Error(ErrorCode::ConfigError, "times/values length mismatch");
  if (!(window.t_lo < window.t_hi))
    throw Error(ErrorCode::WindowTooSmall, "empty fit window");

  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < window.t_lo || times[k] > window.t_hi) continue;
    if (!(values[k] > 0.0))
      throw Error(ErrorCode::NonPositiveValue,
                  "nonpositive value at t = " + std::to_string(times[k]));
    xs.push_back(clock.log_value(times[k]));
    ys.push_back(std::log(values[k]));
  }
  const std::size_t n = xs.size();
  if (n < 10)
    throw Error(ErrorCode::WindowTooSmall,
                "fit window holds " + std::to_string(n) + " points, need >= 10");

  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mean_x += xs[k];
    mean_y += ys[k];
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);

  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (xs[k] - mean_x) * (xs[k] - mean_x);
    sxy += (xs[k] - mean_x) * (ys[k] - mean_y);
  }
  if (!(sxx > 0.0))
    throw Error(ErrorCode::WindowTooSmall, "degenerate clock range in window");

  DecayFit fit;
  fit.slope = sxy / sxx;
  fit.gamma_hat = -fit.slope;
  fit.intercept = mean_y - fit.slope * mean_x;
  fit.window = window;
  fit.points = n;

  double ssr = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dev = ys[k] - (fit.intercept + fit.slope * xs[k]);
    ssr += dev * dev;
    fit.residual = std::max(fit.residual, std::abs(dev));
  }
  fit.slope_std_error =
      std::sqrt(ssr / (static_cast<double>(n) - 2.0) / sxx);
  return fit;
}

}  // namespace regime
