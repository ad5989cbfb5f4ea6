#include "regime/control.hpp"

#include <cmath>

#include "regime/errors.hpp"
#include "regime/format.hpp"

namespace regime {

TransitionRateMatrix ControlDesign::chain() const {
  Matrix q(2, 2);
  q(0, 0) = -q1;
  q(0, 1) = q1;
  q(1, 0) = q2;
  q(1, 1) = -q2;
  return validate_rate_matrix(q);
}

LinearScalarRegimeModel ControlDesign::closed_loop_model() const {
  return build_model("controlled", {{"a", a}, {"sigma0", sigma0}, {"k", gain}});
}

GainDesign design_control_gain(double a, double sigma0, double q1, double q2) {
  if (!(q1 > 0.0) || !(q2 > 0.0))
    throw Error(ErrorCode::ConfigError, "switching rates must be positive");

  const double c_u = 2.0 * a + sigma0 * sigma0;
  if (q1 <= c_u)
    throw Error(ErrorCode::Infeasible,
                "switching out of the uncontrolled regime is too slow: need "
                "q1 > " +
                    format_number(c_u) + ", got q1 = " + format_number(q1));

  // Positive leading minors of -(diag(c_u, c_u - 2k) + Q) reduce to
  // 2k - c_u > q2 c_u / (q1 - c_u); solve for k and clamp at zero for plants
  // that are stable without control.
  const double k_star = 0.5 * (c_u + q2 * c_u / (q1 - c_u));
  return GainDesign{std::max(0.0, k_star), c_u};
}

Certificate certify_gain(const ControlDesign& design) {
  const double rates[2] = {design.uncontrolled_rate(), design.controlled_rate()};
  return exponential_rate_bound(rates, design.chain());
}

ControlledRunResult simulate_controlled_system(const ControlDesign& design,
                                               const SimulationGrid& grid,
                                               double x0,
                                               const EnsembleOptions& options) {
  if (design.gain < 0.0)
    throw Error(ErrorCode::ConfigError, "gain must be nonnegative");
  const TransitionRateMatrix q = design.chain();
  const LinearScalarRegimeModel model = design.closed_loop_model();

  ControlledRunResult result;
  result.summary =
      estimate_moment_curve(model, q, /*start_regime=*/0, x0, 2.0, grid, options);

  // The regime substream is a pure function of (seed, path); replaying it
  // here reproduces exactly the paths the ensemble used, in index order.
  double observed_sum = 0.0;
  for (std::size_t path = 0; path < options.n_paths; ++path) {
    RandomStream regime_stream =
        RandomStream::substream(options.master_seed, path, 0);
    const RegimePath regime_path =
        sample_regime_path(q, 0, grid.horizon, regime_stream);
    const OccupancyStats stats = occupancy_stats(regime_path);
    if (stats.time_in_state.size() > 1) observed_sum += stats.time_in_state[1];
  }

  result.ledger.horizon = grid.horizon;
  result.ledger.n_paths = options.n_paths;
  result.ledger.observed_time =
      observed_sum / static_cast<double>(options.n_paths);
  result.ledger.observed_fraction =
      grid.horizon > 0.0 ? result.ledger.observed_time / grid.horizon : 0.0;
  return result;
}

ObservationSavingsReport observation_savings_report(const ObservationLedger& ledger,
                                                    double q1, double q2) {
  if (ledger.n_paths == 0)
    throw Error(ErrorCode::ConfigError, "empty observation ledger");
  if (!(q1 > 0.0) || !(q2 > 0.0))
    throw Error(ErrorCode::ConfigError, "switching rates must be positive");

  ObservationSavingsReport report;
  report.empirical_observed_fraction = ledger.observed_fraction;
  report.empirical_unobserved_fraction = 1.0 - ledger.observed_fraction;
  report.theoretical_observed_fraction = q1 / (q1 + q2);
  report.theoretical_unobserved_fraction = q2 / (q1 + q2);
  report.gap = std::abs(report.empirical_observed_fraction -
                        report.theoretical_observed_fraction);
  return report;
}

}  // namespace regime
