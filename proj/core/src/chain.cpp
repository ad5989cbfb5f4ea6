#include "regime/chain.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "regime/errors.hpp"

namespace regime {

namespace {

// Reachability over edges with strictly positive rate.
std::vector<bool> reachable_from(const Matrix& rates, std::size_t start,
                                 bool transpose) {
  const std::size_t n = rates.rows();
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{start};
  seen[start] = true;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || seen[j]) continue;
      const double q = transpose ? rates(j, i) : rates(i, j);
      if (q > 0.0) {
        seen[j] = true;
        stack.push_back(j);
      }
    }
  }
  return seen;
}

}  // namespace

TransitionRateMatrix TransitionRateMatrix::single_state() {
  return TransitionRateMatrix(1, Matrix(1, 1, 0.0));
}

TransitionRateMatrix validate_rate_matrix(const Matrix& raw, double tol) {
  const std::size_t n = raw.rows();
  if (n < 2 || raw.cols() != n)
    throw Error(ErrorCode::ConfigError,
                "rate matrix must be square with at least 2 states");

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && raw(i, j) < -tol)
        throw Error(ErrorCode::NegativeOffDiagonal,
                    "q[" + std::to_string(i + 1) + "][" + std::to_string(j + 1) +
                        "] = " + std::to_string(raw(i, j)));

  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) row_sum += raw(i, j);
    if (std::abs(row_sum) > tol)
      throw Error(ErrorCode::NotConservative,
                  "row " + std::to_string(i + 1) + " sums to " +
                      std::to_string(row_sum));
  }

  // Clamp off-diagonal noise to zero, then recompute diagonals so the rows
  // sum to zero exactly.
  Matrix rates(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double exit = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      rates(i, j) = std::max(raw(i, j), 0.0);
      exit += rates(i, j);
    }
    rates(i, i) = -exit;
  }

  const std::vector<bool> fwd = reachable_from(rates, 0, false);
  const std::vector<bool> bwd = reachable_from(rates, 0, true);
  for (std::size_t i = 0; i < n; ++i)
    if (!fwd[i] || !bwd[i])
      throw Error(ErrorCode::NotIrreducible,
                  "state " + std::to_string(i + 1) +
                      " not mutually reachable through positive rates");

  return TransitionRateMatrix(n, std::move(rates));
}

RegimePath::RegimePath(std::size_t initial_state, std::vector<double> jump_times,
                       std::vector<std::size_t> post_jump_states, double horizon)
    : initial_state_(initial_state),
      jump_times_(std::move(jump_times)),
      post_jump_states_(std::move(post_jump_states)),
      horizon_(horizon) {
  if (jump_times_.size() != post_jump_states_.size())
    throw Error(ErrorCode::ConfigError, "jump/state sequence length mismatch");
  for (std::size_t k = 0; k + 1 < jump_times_.size(); ++k)
    if (!(jump_times_[k] < jump_times_[k + 1]))
      throw Error(ErrorCode::ConfigError, "jump times must be increasing");
}

std::size_t RegimePath::state_at(double t) const {
  // Right-continuous: at a jump time the post-jump state applies.
  const auto it = std::upper_bound(jump_times_.begin(), jump_times_.end(), t);
  if (it == jump_times_.begin()) return initial_state_;
  return post_jump_states_[static_cast<std::size_t>(it - jump_times_.begin()) - 1];
}

RegimePath sample_regime_path(const TransitionRateMatrix& q, std::size_t start,
                              double horizon, RandomStream& stream) {
  if (horizon < 0.0)
    throw Error(ErrorCode::ConfigError, "horizon must be nonnegative");

  std::vector<double> jump_times;
  std::vector<std::size_t> states;
  std::size_t current = start;
  double t = 0.0;
  const std::size_t n = q.size();

  while (true) {
    const double exit = q.exit_rate(current);
    if (exit <= 0.0) break;  // absorbing only for the single-state chain
    t += stream.next_exponential(exit);
    if (t > horizon) break;
    // Embedded chain step: pick j with probability q_ij / q_i.
    const double u = stream.next_unit() * exit;
    double acc = 0.0;
    std::size_t next = current;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == current) continue;
      acc += q.rate(current, j);
      if (u <= acc) {
        next = j;
        break;
      }
    }
    if (next == current) {
      // u landed past the accumulated sum by rounding; take the last
      // positive-rate target.
      for (std::size_t j = n; j-- > 0;)
        if (j != current && q.rate(current, j) > 0.0) {
          next = j;
          break;
        }
    }
    jump_times.push_back(t);
    states.push_back(next);
    current = next;
  }
  return RegimePath(start, std::move(jump_times), std::move(states), horizon);
}

std::vector<double> stationary_distribution(const TransitionRateMatrix& q) {
  const std::size_t n = q.size();
  if (n == 1) return {1.0};
  // pi Q = 0 with the normalization row appended in place of the last
  // (dependent) equation.
  Matrix a = q.matrix().transposed();
  for (std::size_t j = 0; j < n; ++j) a(n - 1, j) = 1.0;
  std::vector<double> b(n, 0.0);
  b[n - 1] = 1.0;
  std::vector<double> pi = solve_linear(a, b);
  for (double v : pi)
    if (!(v > 0.0))
      throw Error(ErrorCode::SingularSystem,
                  "stationary distribution has a nonpositive entry");
  return pi;
}

OccupancyStats occupancy_stats(const RegimePath& path) {
  OccupancyStats stats;
  stats.horizon = path.horizon();
  std::size_t n_states = path.initial_state() + 1;
  for (std::size_t s : path.post_jump_states()) n_states = std::max(n_states, s + 1);
  stats.time_in_state.assign(n_states, 0.0);

  double prev_t = 0.0;
  std::size_t state = path.initial_state();
  for (std::size_t k = 0; k < path.jump_times().size(); ++k) {
    const double t = std::min(path.jump_times()[k], path.horizon());
    stats.time_in_state[state] += t - prev_t;
    prev_t = t;
    state = path.post_jump_states()[k];
  }
  stats.time_in_state[state] += path.horizon() - prev_t;
  return stats;
}

double occupation_fraction(const RegimePath& path, std::size_t state) {
  if (!(path.horizon() > 0.0))
    throw Error(ErrorCode::ConfigError, "occupation fraction needs horizon > 0");
  const OccupancyStats stats = occupancy_stats(path);
  if (state >= stats.time_in_state.size()) return 0.0;
  return stats.time_in_state[state] / path.horizon();
}

}  // namespace regime
