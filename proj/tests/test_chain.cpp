#include <doctest.h>

#include <cmath>
#include <numeric>

#include "regime/chain.hpp"
#include "regime/errors.hpp"
#include "support.hpp"

using namespace regime;
using testsupport::two_state_chain;

namespace {

template <typename Fn>
ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::ConfigError;
}

}  // namespace

TEST_CASE("validate_rate_matrix accepts a conservative irreducible generator") {
  Matrix raw(2, 2);
  raw(0, 0) = -1.0;
  raw(0, 1) = 1.0;
  raw(1, 0) = 2.0;
  raw(1, 1) = -2.0;
  const TransitionRateMatrix q = validate_rate_matrix(raw);
  CHECK(q.size() == 2);
  CHECK(q.exit_rate(0) == doctest::Approx(1.0));
  CHECK(q.exit_rate(1) == doctest::Approx(2.0));
  // diagonals recomputed: rows sum to zero exactly
  CHECK(q.rate(0, 0) + q.rate(0, 1) == 0.0);
  CHECK(q.rate(1, 0) + q.rate(1, 1) == 0.0);
}

TEST_CASE("validation failures carry specific codes") {
  Matrix absorbing(2, 2);
  absorbing(0, 0) = -1.0;
  absorbing(0, 1) = 1.0;
  CHECK(error_code_of([&] { validate_rate_matrix(absorbing); }) ==
        ErrorCode::NotIrreducible);

  Matrix short_row(2, 2);
  short_row(0, 0) = -1.0;
  short_row(0, 1) = 0.5;
  short_row(1, 0) = 1.0;
  short_row(1, 1) = -1.0;
  CHECK(error_code_of([&] { validate_rate_matrix(short_row); }) ==
        ErrorCode::NotConservative);

  Matrix negative(2, 2);
  negative(0, 0) = 0.5;
  negative(0, 1) = -0.5;
  negative(1, 0) = 1.0;
  negative(1, 1) = -1.0;
  CHECK(error_code_of([&] { validate_rate_matrix(negative); }) ==
        ErrorCode::NegativeOffDiagonal);
}

TEST_CASE("zero horizon gives a jump-free path") {
  const TransitionRateMatrix q = two_state_chain(1.0, 1.0);
  RandomStream stream(7);
  const RegimePath path = sample_regime_path(q, 0, 0.0, stream);
  CHECK(path.jump_times().empty());
  CHECK(path.state_at(0.0) == 0);
}

TEST_CASE("state_at is right-continuous piecewise constant") {
  const RegimePath path(0, {1.0, 2.5}, {1, 0}, 4.0);
  CHECK(path.state_at(0.0) == 0);
  CHECK(path.state_at(0.999) == 0);
  CHECK(path.state_at(1.0) == 1);  // post-jump state applies at the jump
  CHECK(path.state_at(2.4) == 1);
  CHECK(path.state_at(2.5) == 0);
  CHECK(path.state_at(4.0) == 0);
}

TEST_CASE("holding times in state 1 follow Exponential(q_1)") {
  const double q1 = 2.0;
  const TransitionRateMatrix q = two_state_chain(q1, 1.0);
  const std::size_t n = 10000;

  std::vector<double> holdings;
  holdings.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream stream = RandomStream::substream(2024, i);
    const RegimePath path = sample_regime_path(q, 0, 20.0, stream);
    REQUIRE(!path.jump_times().empty());
    holdings.push_back(path.jump_times().front());
  }

  const double mean =
      std::accumulate(holdings.begin(), holdings.end(), 0.0) / n;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.04));  // 0.5 +- 0.02

  const double d = testsupport::ks_statistic(
      holdings, [&](double t) { return 1.0 - std::exp(-q1 * t); });
  CHECK(testsupport::ks_p_value(d, n) > 0.01);
}

TEST_CASE("stationary distribution closed forms and residual") {
  SUBCASE("symmetric two-state") {
    const auto pi = stationary_distribution(two_state_chain(1.0, 1.0));
    CHECK(pi[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pi[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("asymmetric two-state") {
    const auto pi = stationary_distribution(two_state_chain(1.0, 2.0));
    CHECK(pi[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(pi[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("pi Q = 0 residual stays below 1e-12") {
    RandomStream rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 2 + trial % 4;
      const TransitionRateMatrix q =
          testsupport::random_irreducible_chain(n, rng);
      const auto pi = stationary_distribution(q);
      double total = 0.0;
      for (double v : pi) {
        CHECK(v > 0.0);
        total += v;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      for (std::size_t j = 0; j < n; ++j) {
        double r = 0.0;
        for (std::size_t i = 0; i < n; ++i) r += pi[i] * q.rate(i, j);
        CHECK(std::abs(r) < 1e-12);
      }
    }
  }
  SUBCASE("two-state closed form (q2, q1)/(q1+q2)") {
    RandomStream rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const double q1 = 0.1 + 3.0 * rng.next_unit();
      const double q2 = 0.1 + 3.0 * rng.next_unit();
      const auto pi = stationary_distribution(two_state_chain(q1, q2));
      CHECK(pi[0] == doctest::Approx(q2 / (q1 + q2)).epsilon(1e-12));
      CHECK(pi[1] == doctest::Approx(q1 / (q1 + q2)).epsilon(1e-12));
    }
  }
}

TEST_CASE("occupation fraction of a jump-free path is one") {
  const TransitionRateMatrix q = two_state_chain(0.001, 0.001);
  RandomStream stream(3);
  RegimePath path = sample_regime_path(q, 0, 0.5, stream);
  while (!path.jump_times().empty()) {  // rare with these rates
    path = sample_regime_path(q, 0, 0.5, stream);
  }
  CHECK(occupation_fraction(path, 0) == doctest::Approx(1.0));
  CHECK(occupation_fraction(path, 1) == doctest::Approx(0.0));
}

TEST_CASE("mean occupation fraction follows the sojourn law") {
  struct Case {
    double q1, q2, horizon, expected, tol;
  };
  const Case cases[] = {
      {1.0, 1.0, 100.0, 0.5, 0.01},
      {3.0, 1.0, 200.0, 0.25, 0.01},
  };
  for (const Case& c : cases) {
    CAPTURE(c.q1);
    const TransitionRateMatrix q = two_state_chain(c.q1, c.q2);
    const std::size_t n = 10000;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      RandomStream stream = RandomStream::substream(555, i);
      const RegimePath path = sample_regime_path(q, 0, c.horizon, stream);
      const double f = occupation_fraction(path, 0);
      sum += f;
      sum_sq += f * f;
    }
    const double mean = sum / n;
    const double se =
        std::sqrt((sum_sq - n * mean * mean) / (n * (n - 1.0)));
    CHECK(std::abs(mean - c.expected) < c.tol);
    CHECK(std::abs(mean - c.expected) < 3.0 * se + 1e-4);
  }
}

TEST_CASE("occupancy stats partition the horizon") {
  const TransitionRateMatrix q = two_state_chain(2.0, 0.7);
  RandomStream stream(99);
  const RegimePath path = sample_regime_path(q, 1, 50.0, stream);
  const OccupancyStats stats = occupancy_stats(path);
  double total = 0.0;
  for (double v : stats.time_in_state) {
    CHECK(v >= 0.0);
    total += v;
  }
  CHECK(total == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("sampling is a pure function of the stream state") {
  const TransitionRateMatrix q = two_state_chain(1.3, 0.4);
  RandomStream a(42);
  RandomStream b(42);
  const RegimePath first = sample_regime_path(q, 0, 30.0, a);
  const RegimePath second = sample_regime_path(q, 0, 30.0, b);
  REQUIRE(first.jump_times().size() == second.jump_times().size());
  for (std::size_t k = 0; k < first.jump_times().size(); ++k) {
    CHECK(first.jump_times()[k] == second.jump_times()[k]);
    CHECK(first.post_jump_states()[k] == second.post_jump_states()[k]);
  }
}
