#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "regime/chain.hpp"
#include "regime/linalg.hpp"
#include "regime/rng.hpp"

namespace regime {

/// Hybrid SDE  dX = b(t, X, regime) dt + sigma(t, X, regime) dB  with
/// callback coefficients. Callbacks write into the provided span (drift:
/// d values, diffusion: d*d row-major) and must be safe to call concurrently.
struct GeneralRegimeModel {
  std::size_t dimension = 1;
  std::size_t regime_count = 1;
  std::function<void(double t, std::span<const double> x, std::size_t regime,
                     std::span<double> out)>
      drift;
  std::function<void(double t, std::span<const double> x, std::size_t regime,
                     std::span<double> out)>
      diffusion;
};

/// Per-regime coefficients of the scalar linear family
///   dX = a(t) X dt + g(t) X dB,
///   a(t) = a0 + a1/(1+t),  g(t) = g0 + g1/sqrt(1+t).
/// This family covers every model in the bundled registry and admits an
/// exact moment ODE (see oracle.hpp).
struct LinearScalarCoefficients {
  double a0 = 0.0;
  double a1 = 0.0;
  double g0 = 0.0;
  double g1 = 0.0;
};

class LinearScalarRegimeModel {
 public:
  explicit LinearScalarRegimeModel(std::vector<LinearScalarCoefficients> regimes);

  std::size_t regime_count() const { return regimes_.size(); }
  const LinearScalarCoefficients& coefficients(std::size_t regime) const {
    return regimes_[regime];
  }

  double drift(std::size_t regime, double t) const;
  double diffusion(std::size_t regime, double t) const;

  /// Integral of a over [t, t+h] in closed form.
  double drift_integral(std::size_t regime, double t, double h) const;
  /// Integral of g^2 over [t, t+h] in closed form.
  double diffusion_sq_integral(std::size_t regime, double t, double h) const;

  GeneralRegimeModel as_general() const;

 private:
  std::vector<LinearScalarCoefficients> regimes_;
};

/// Bundled model registry. Names:
///   geometric            dX = -X dt + X dB                     (1 regime)
///   polynomial1          dX = -X/(1+t) dt + X/sqrt(1+t) dB     (1 regime)
///   polynomialM          dX = -mX/(1+t) dt + sqrt(m)X/sqrt(1+t) dB, m > 1
///   example1             regime 1 geometric, regime 2 polynomial1
///   example2             regimes with drift -1/(1+t) and -2/(1+t)
///   controlled           regime 1 drift a, regime 2 drift a - k, both
///                        diffusion sigma0; params a, sigma0, k
/// Throws Error{UnknownModel} / Error{InvalidParameter}.
LinearScalarRegimeModel build_model(const std::string& name,
                                    const std::map<std::string, double>& params = {});

/// Time discretization: base step dt plus the exact output times. Regime
/// jump times are inserted as substep boundaries at simulation time.
struct SimulationGrid {
  double horizon = 0.0;
  double dt = 0.0;
  std::vector<double> output_times;
};

SimulationGrid make_grid(double horizon, double dt, std::vector<double> output_times);

/// dt heuristic keeping substeps fine against both diffusion and switching
/// scales: min(1e-3, 0.01 / max_i q_i).
double default_step(const TransitionRateMatrix& q);

enum class Scheme {
  /// Left-point Euler-Maruyama on the refined substep sequence.
  euler_maruyama,
  /// Distribution-exact one-step update for the linear scalar family:
  /// X <- X * exp(int(a - g^2/2) + Z * sqrt(int g^2)). No discretization
  /// bias, so coarse grids are fine; only jump/output boundaries matter.
  exact_linear,
};

struct SampledTrajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> values;  // one d-vector per output time
};

/// Simulates one hybrid path with Euler-Maruyama. The substep sequence is
/// the base grid refined by every regime jump time, so the regime is
/// constant within each substep; one Brownian driver is shared across
/// regimes, with increments drawn in time order from `stream`.
/// Throws Error{NonFiniteState} with the first bad time if the state leaves
/// the finite range.
SampledTrajectory simulate_hybrid_path(const GeneralRegimeModel& model,
                                       const RegimePath& regime,
                                       const SimulationGrid& grid,
                                       const std::vector<double>& x0,
                                       RandomStream& stream);

/// Scalar fast path; `scheme` selects Euler-Maruyama or the exact update.
std::vector<double> simulate_linear_scalar_path(const LinearScalarRegimeModel& model,
                                                const RegimePath& regime,
                                                const SimulationGrid& grid, double x0,
                                                Scheme scheme, RandomStream& stream);

/// Monte Carlo estimate of t -> E|X_t|^p at the grid's output times.
struct PathEnsembleSummary {
  double moment_order = 2.0;
  std::vector<double> times;
  std::vector<double> estimate;
  std::vector<double> std_error;
  std::size_t n_paths = 0;
  /// Per-regime decomposition E[|X_t|^p 1{regime = i}]; row per output time.
  /// The total estimate is the row sum of this matrix by construction.
  Matrix per_regime;
};

struct EnsembleOptions {
  std::size_t n_paths = 0;
  std::uint64_t master_seed = 0;
  Scheme scheme = Scheme::euler_maruyama;
  unsigned threads = 1;
};

/// Runs n_paths independent (regime, diffusion) pairs. Per-path randomness
/// is a pure function of (master seed, path index); the reduction runs over
/// fixed-size chunks in index order, so the result is bit-identical for any
/// thread count. A non-finite path aborts the estimate with diagnostics
/// rather than being dropped.
PathEnsembleSummary estimate_moment_curve(const LinearScalarRegimeModel& model,
                                          const TransitionRateMatrix& q,
                                          std::size_t start_regime, double x0,
                                          double p, const SimulationGrid& grid,
                                          const EnsembleOptions& options);

/// General-model variant (Euler-Maruyama only).
PathEnsembleSummary estimate_moment_curve(const GeneralRegimeModel& model,
                                          const TransitionRateMatrix& q,
                                          std::size_t start_regime,
                                          const std::vector<double>& x0, double p,
                                          const SimulationGrid& grid,
                                          const EnsembleOptions& options);

}  // namespace regime
