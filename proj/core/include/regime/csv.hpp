#pragma once

#include <ostream>
#include <span>
#include <string>

#include "regime/control.hpp"
#include "regime/dynamics.hpp"
#include "regime/oracle.hpp"

namespace regime {

/// CSV emission. All files are UTF-8 with a header row, rows in time order,
/// and doubles printed with 17 significant digits so a re-parse recovers the
/// exact values.

/// Header: t,lambda_t,m_total,m_1..m_n
void write_oracle_curve_csv(std::ostream& out, const MomentCurve& curve,
                            const DecayClock& clock);

/// Header: t,moment_p,estimate,stderr,n_paths
void write_ensemble_csv(std::ostream& out, const PathEnsembleSummary& summary);

/// Single row. Header: slope,stderr,window_lo,window_hi,residual
void write_fit_csv(std::ostream& out, const DecayFit& fit);

struct ControlSweepRow {
  double gain = 0.0;
  bool certified = false;
  double oracle_rate = 0.0;
  double mc_rate = 0.0;
  double observed_fraction = 0.0;
};

/// Header: k,certified,oracle_rate,mc_rate,obs_fraction
void write_control_sweep_csv(std::ostream& out,
                             std::span<const ControlSweepRow> rows);

/// Single row. Header: horizon,n_paths,observed_time,observed_fraction,
/// unobserved_fraction,theoretical_observed,theoretical_unobserved,gap
void write_observation_csv(std::ostream& out, const ObservationLedger& ledger,
                           const ObservationSavingsReport& report);

}  // namespace regime
