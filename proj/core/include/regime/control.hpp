#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "regime/certify.hpp"
#include "regime/chain.hpp"
#include "regime/dynamics.hpp"

namespace regime {

/// Feedback stabilization with randomly scheduled observation: the plant
/// dX = a X dt + sigma0 X dB runs uncontrolled while the environment chain
/// sits in state 1 and under the linear feedback u = -k x while it sits in
/// state 2. Observations of X are needed only in state 2, so the long-run
/// observation cost is the state-2 occupation fraction.
struct ControlDesign {
  double a = 0.0;
  double sigma0 = 0.0;
  double gain = 0.0;  // k >= 0
  double q1 = 1.0;    // exit rate of the uncontrolled state
  double q2 = 1.0;    // exit rate of the controlled state

  /// Second-moment growth rate of the uncontrolled plant, 2a + sigma0^2.
  double uncontrolled_rate() const { return 2.0 * a + sigma0 * sigma0; }
  /// Growth rate while controlled, 2(a - k) + sigma0^2.
  double controlled_rate() const {
    return 2.0 * (a - gain) + sigma0 * sigma0;
  }

  TransitionRateMatrix chain() const;
  LinearScalarRegimeModel closed_loop_model() const;
};

struct GainDesign {
  double minimal_gain = 0.0;  // k*, exclusive: any k > k* certifies
  double uncontrolled_rate = 0.0;
};

/// Smallest gain whose closed loop admits the exponential M-matrix
/// certificate. Feasible iff q1 > 2a + sigma0^2 (the chain must leave the
/// uncontrolled state faster than the moment grows there); throws
/// Error{Infeasible} with the required minimum q1 otherwise. A plant that
/// is already stable gets k* = 0.
GainDesign design_control_gain(double a, double sigma0, double q1, double q2);

/// Certificate for a concrete gain (exponential_rate_bound on the
/// closed-loop rate pair).
Certificate certify_gain(const ControlDesign& design);

/// Accumulated observation cost of a closed-loop ensemble.
struct ObservationLedger {
  double horizon = 0.0;
  double observed_time = 0.0;  // mean time per path with the chain in state 2
  double observed_fraction = 0.0;
  std::size_t n_paths = 0;
};

struct ControlledRunResult {
  PathEnsembleSummary summary;
  ObservationLedger ledger;
};

/// Closed-loop Monte Carlo (p = 2) plus the observation ledger. Same
/// determinism contract as estimate_moment_curve; the ledger accumulates in
/// path-index order.
ControlledRunResult simulate_controlled_system(const ControlDesign& design,
                                               const SimulationGrid& grid,
                                               double x0,
                                               const EnsembleOptions& options);

struct ObservationSavingsReport {
  double empirical_observed_fraction = 0.0;
  double theoretical_observed_fraction = 0.0;  // q1 / (q1 + q2)
  double empirical_unobserved_fraction = 0.0;
  double theoretical_unobserved_fraction = 0.0;  // q2 / (q1 + q2)
  double gap = 0.0;  // |empirical - theoretical| observed fraction
};

/// Compares the measured observation cost against the sojourn-time limit.
ObservationSavingsReport observation_savings_report(const ObservationLedger& ledger,
                                                    double q1, double q2);

}  // namespace regime
