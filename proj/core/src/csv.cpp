#include "regime/csv.hpp"

#include "regime/format.hpp"

namespace regime {

void write_oracle_curve_csv(std::ostream& out, const MomentCurve& curve,
                            const DecayClock& clock) {
  out << "t,lambda_t,m_total";
  for (std::size_t i = 0; i < curve.per_regime.cols(); ++i)
    out << ",m_" << (i + 1);
  out << '\n';
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    out << format_number(curve.times[k]) << ','
        << format_number(clock.value(curve.times[k])) << ','
        << format_number(curve.total[k]);
    for (std::size_t i = 0; i < curve.per_regime.cols(); ++i)
      out << ',' << format_number(curve.per_regime(k, i));
    out << '\n';
  }
}

void write_ensemble_csv(std::ostream& out, const PathEnsembleSummary& summary) {
  out << "t,moment_p,estimate,stderr,n_paths\n";
  for (std::size_t k = 0; k < summary.times.size(); ++k) {
    out << format_number(summary.times[k]) << ','
        << format_number(summary.moment_order) << ','
        << format_number(summary.estimate[k]) << ','
        << format_number(summary.std_error[k]) << ',' << summary.n_paths
        << '\n';
  }
}

void write_fit_csv(std::ostream& out, const DecayFit& fit) {
  out << "slope,stderr,window_lo,window_hi,residual\n";
  out << format_number(fit.slope) << ',' << format_number(fit.slope_std_error)
      << ',' << format_number(fit.window.t_lo) << ','
      << format_number(fit.window.t_hi) << ',' << format_number(fit.residual)
      << '\n';
}

void write_control_sweep_csv(std::ostream& out,
                             std::span<const ControlSweepRow> rows) {
  out << "k,certified,oracle_rate,mc_rate,obs_fraction\n";
  for (const ControlSweepRow& row : rows) {
    out << format_number(row.gain) << ',' << (row.certified ? "true" : "false")
        << ',' << format_number(row.oracle_rate) << ','
        << format_number(row.mc_rate) << ','
        << format_number(row.observed_fraction) << '\n';
  }
}

void write_observation_csv(std::ostream& out, const ObservationLedger& ledger,
                           const ObservationSavingsReport& report) {
  out << "horizon,n_paths,observed_time,observed_fraction,"
         "unobserved_fraction,theoretical_observed,theoretical_unobserved,gap\n";
  out << format_number(ledger.horizon) << ',' << ledger.n_paths << ','
      << format_number(ledger.observed_time) << ','
      << format_number(report.empirical_observed_fraction) << ','
      << format_number(report.empirical_unobserved_fraction) << ','
      << format_number(report.theoretical_observed_fraction) << ','
      << format_number(report.theoretical_unobserved_fraction) << ','
      << format_number(report.gap) << '\n';
}

}  // namespace regime
