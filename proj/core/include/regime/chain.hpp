#pragma once

#include <cstddef>
#include <vector>

#include "regime/linalg.hpp"
#include "regime/rng.hpp"

namespace regime {

/// Validated generator of the regime chain: off-diagonals nonnegative, rows
/// summing to zero, positive-rate graph strongly connected. States are
/// 0-based throughout the C++ API; the CLI layer converts from the 1-based
/// user-facing convention.
///
/// Immutable after construction; safe to share across workers.
class TransitionRateMatrix {
 public:
  std::size_t size() const { return n_; }

  /// q_ij for i != j; diagonal entries are -exit_rate(i).
  double rate(std::size_t i, std::size_t j) const { return rates_(i, j); }

  /// Total exit rate q_i = -q_ii.
  double exit_rate(std::size_t i) const { return -rates_(i, i); }

  const Matrix& matrix() const { return rates_; }

  /// The no-switching chain on a single state (Q = [0]). Single-regime
  /// models use this; validate_rate_matrix itself requires n >= 2.
  static TransitionRateMatrix single_state();

 private:
  friend TransitionRateMatrix validate_rate_matrix(const Matrix&, double);
  TransitionRateMatrix(std::size_t n, Matrix rates)
      : n_(n), rates_(std::move(rates)) {}

  std::size_t n_ = 0;
  Matrix rates_;
};

/// Checks a raw square matrix and returns the validated generator. Diagonals
/// are recomputed from the off-diagonals, so conservativity holds exactly
/// afterwards. Irreducibility uses strictly positive entries, not entries
/// above tol: a structurally zero rate is a modeling choice, not noise.
///
/// Throws Error with code NegativeOffDiagonal, NotConservative, or
/// NotIrreducible.
TransitionRateMatrix validate_rate_matrix(const Matrix& raw, double tol = 1e-9);

/// One sampled trajectory of the regime chain: right-continuous piecewise
/// constant, queryable at any t in [0, horizon].
class RegimePath {
 public:
  RegimePath(std::size_t initial_state, std::vector<double> jump_times,
             std::vector<std::size_t> post_jump_states, double horizon);

  std::size_t initial_state() const { return initial_state_; }
  const std::vector<double>& jump_times() const { return jump_times_; }
  const std::vector<std::size_t>& post_jump_states() const { return post_jump_states_; }
  double horizon() const { return horizon_; }

  std::size_t state_at(double t) const;

 private:
  std::size_t initial_state_;
  std::vector<double> jump_times_;
  std::vector<std::size_t> post_jump_states_;
  double horizon_;
};

/// Per-state occupation times over [0, t].
struct OccupancyStats {
  std::vector<double> time_in_state;
  double horizon = 0.0;
};

/// Jump-chain (Gillespie) sampling: holding time in state i is
/// Exponential(q_i), the next state is drawn from q_ij / q_i. Exact law, no
/// time grid. Deterministic given the stream state.
RegimePath sample_regime_path(const TransitionRateMatrix& q, std::size_t start,
                              double horizon, RandomStream& stream);

/// Unique pi with pi Q = 0, sum pi = 1; entries are strictly positive for
/// valid (irreducible) input. Throws Error{SingularSystem} if the solve is
/// rank-deficient beyond tolerance.
std::vector<double> stationary_distribution(const TransitionRateMatrix& q);

OccupancyStats occupancy_stats(const RegimePath& path);

/// Fraction of [0, horizon] the path spends in `state`.
double occupation_fraction(const RegimePath& path, std::size_t state);

}  // namespace regime
