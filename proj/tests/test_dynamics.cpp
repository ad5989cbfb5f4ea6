#include <doctest.h>

#include <cmath>
#include <cstring>

#include "regime/dynamics.hpp"
#include "regime/errors.hpp"
#include "support.hpp"

using namespace regime;
using testsupport::two_state_chain;

namespace {

std::vector<double> linspace(double hi, std::size_t count) {
  std::vector<double> out;
  for (std::size_t k = 0; k < count; ++k)
    out.push_back(hi * static_cast<double>(k) / static_cast<double>(count - 1));
  return out;
}

}  // namespace

TEST_CASE("model registry matches the documented coefficients") {
  SUBCASE("example1") {
    const auto m = build_model("example1");
    REQUIRE(m.regime_count() == 2);
    CHECK(m.coefficients(0).a0 == -1.0);
    CHECK(m.coefficients(0).a1 == 0.0);
    CHECK(m.coefficients(0).g0 == 1.0);
    CHECK(m.coefficients(0).g1 == 0.0);
    CHECK(m.coefficients(1).a0 == 0.0);
    CHECK(m.coefficients(1).a1 == -1.0);
    CHECK(m.coefficients(1).g0 == 0.0);
    CHECK(m.coefficients(1).g1 == 1.0);
  }
  SUBCASE("example2") {
    const auto m = build_model("example2");
    REQUIRE(m.regime_count() == 2);
    CHECK(m.coefficients(0).a1 == -1.0);
    CHECK(m.coefficients(0).g1 == 1.0);
    CHECK(m.coefficients(1).a1 == -2.0);
    CHECK(m.coefficients(1).g1 == doctest::Approx(std::sqrt(2.0)));
  }
  SUBCASE("polynomialM wants m > 1") {
    CHECK_THROWS_AS(build_model("polynomialM", {{"m", 1.0}}), Error);
    const auto m = build_model("polynomialM", {{"m", 3.0}});
    CHECK(m.coefficients(0).a1 == -3.0);
    CHECK(m.coefficients(0).g1 == doctest::Approx(std::sqrt(3.0)));
  }
  SUBCASE("unknown names and parameters are rejected") {
    CHECK_THROWS_AS(build_model("nope"), Error);
    CHECK_THROWS_AS(build_model("geometric", {{"m", 2.0}}), Error);
    CHECK_THROWS_AS(build_model("controlled", {{"a", 1.0}}), Error);
  }
  SUBCASE("controlled regime drifts differ by the gain") {
    const auto m = build_model("controlled",
                               {{"a", 0.5}, {"sigma0", 1.0}, {"k", 2.5}});
    CHECK(m.coefficients(0).a0 == 0.5);
    CHECK(m.coefficients(1).a0 == -2.0);
    CHECK(m.coefficients(0).g0 == 1.0);
    CHECK(m.coefficients(1).g0 == 1.0);
  }
}

TEST_CASE("zero drift and diffusion keep the path at x0") {
  GeneralRegimeModel model;
  model.dimension = 2;
  model.regime_count = 2;
  model.drift = [](double, std::span<const double>, std::size_t,
                   std::span<double> out) { out[0] = out[1] = 0.0; };
  model.diffusion = [](double, std::span<const double>, std::size_t,
                       std::span<double> out) {
    for (auto& v : out) v = 0.0;
  };
  const TransitionRateMatrix q = two_state_chain(1.0, 1.0);
  RandomStream regime_stream(5);
  const RegimePath path = sample_regime_path(q, 0, 2.0, regime_stream);
  RandomStream bm(6);
  const auto traj = simulate_hybrid_path(model, path,
                                         make_grid(2.0, 0.01, {0.0, 1.0, 2.0}),
                                         {1.5, -2.0}, bm);
  for (const auto& x : traj.values) {
    CHECK(x[0] == 1.5);
    CHECK(x[1] == -2.0);
  }
}

TEST_CASE("exact scheme log-increments reconstruct from the same stream") {
  // Geometric model: each substep multiplies by exp(-1.5 h + sqrt(h) z).
  const auto model = build_model("geometric");
  const TransitionRateMatrix q = TransitionRateMatrix::single_state();
  RandomStream stream_a(31);
  const RegimePath path = sample_regime_path(q, 0, 2.0, stream_a);
  const SimulationGrid grid = make_grid(2.0, 2.0, {0.5, 1.0, 2.0});

  RandomStream sim_stream(77);
  const auto values = simulate_linear_scalar_path(model, path, grid, 1.0,
                                                  Scheme::exact_linear,
                                                  sim_stream);

  RandomStream replay(77);
  double log_x = 0.0;
  const double boundaries[] = {0.0, 0.5, 1.0, 2.0};
  for (int k = 0; k + 1 < 4; ++k) {
    const double h = boundaries[k + 1] - boundaries[k];
    log_x += -1.5 * h + std::sqrt(h) * replay.next_normal();
    CHECK(std::log(values[k]) == doctest::Approx(log_x).epsilon(1e-12));
  }
}

TEST_CASE("post-jump regime drives the step after a jump") {
  GeneralRegimeModel model;
  model.dimension = 1;
  model.regime_count = 2;
  model.drift = [](double, std::span<const double>, std::size_t regime,
                   std::span<double> out) {
    out[0] = regime == 0 ? 0.0 : 1.0;
  };
  model.diffusion = [](double, std::span<const double>, std::size_t,
                       std::span<double> out) { out[0] = 0.0; };
  const RegimePath path(0, {0.5}, {1}, 1.0);
  RandomStream bm(1);
  const auto traj = simulate_hybrid_path(model, path,
                                         make_grid(1.0, 10.0, {0.5, 0.75}),
                                         {1.0}, bm);
  CHECK(traj.values[0][0] == doctest::Approx(1.0));   // no drift before jump
  CHECK(traj.values[1][0] == doctest::Approx(1.25));  // unit drift after
}

TEST_CASE("ensemble hits known second moments at short times") {
  EnsembleOptions options;
  options.n_paths = 100000;
  options.master_seed = 81;
  options.scheme = Scheme::exact_linear;

  SUBCASE("geometric at t = 1") {
    const auto summary = estimate_moment_curve(
        build_model("geometric"), TransitionRateMatrix::single_state(), 0, 1.0,
        2.0, make_grid(1.0, 1.0, {0.0, 1.0}), options);
    const double target = std::exp(-1.0);
    CHECK(std::abs(summary.estimate[1] - target) <=
          3.0 * summary.std_error[1]);
  }
  SUBCASE("polynomial1 at t = 3") {
    const auto summary = estimate_moment_curve(
        build_model("polynomial1"), TransitionRateMatrix::single_state(), 0,
        1.0, 2.0, make_grid(3.0, 3.0, {0.0, 3.0}), options);
    CHECK(std::abs(summary.estimate[1] - 0.25) <= 3.0 * summary.std_error[1]);
  }
  SUBCASE("time zero is exact") {
    const auto summary = estimate_moment_curve(
        build_model("geometric"), TransitionRateMatrix::single_state(), 0, 1.7,
        2.0, make_grid(1.0, 1.0, {0.0, 1.0}), options);
    CHECK(summary.estimate[0] == 1.7 * 1.7);
    CHECK(summary.std_error[0] == 0.0);
  }
}

TEST_CASE("per-regime decomposition sums to the total exactly") {
  EnsembleOptions options;
  options.n_paths = 20000;
  options.master_seed = 4242;
  options.scheme = Scheme::exact_linear;
  const auto summary = estimate_moment_curve(
      build_model("example2"), two_state_chain(1.0, 1.0), 0, 1.0, 2.0,
      make_grid(5.0, 5.0, linspace(5.0, 6)), options);
  for (std::size_t k = 0; k < summary.times.size(); ++k) {
    const double total = summary.per_regime(k, 0) + summary.per_regime(k, 1);
    CHECK(total == summary.estimate[k]);
  }
}

TEST_CASE("summaries are bit-identical across thread counts and reruns") {
  const auto model = build_model("example1");
  const TransitionRateMatrix q = two_state_chain(1.0, 2.0);
  const SimulationGrid grid = make_grid(4.0, 4.0, linspace(4.0, 5));

  auto run = [&](unsigned threads) {
    EnsembleOptions options;
    options.n_paths = 10000;
    options.master_seed = 321;
    options.scheme = Scheme::exact_linear;
    options.threads = threads;
    return estimate_moment_curve(model, q, 0, 1.0, 2.0, grid, options);
  };

  const auto a = run(1);
  const auto b = run(3);
  const auto c = run(1);
  REQUIRE(a.estimate.size() == b.estimate.size());
  for (std::size_t k = 0; k < a.estimate.size(); ++k) {
    CHECK(a.estimate[k] == b.estimate[k]);
    CHECK(a.std_error[k] == b.std_error[k]);
    CHECK(a.estimate[k] == c.estimate[k]);
  }
}

TEST_CASE("drift-only linear model tracks the ODE solution to O(dt)") {
  // dX = -X/(1+t) dt has solution x0/(1+t).
  const LinearScalarRegimeModel model({{0.0, -1.0, 0.0, 0.0}});
  const TransitionRateMatrix q = TransitionRateMatrix::single_state();
  const double dt = 1e-3;
  RandomStream chain_stream(1);
  const RegimePath path = sample_regime_path(q, 0, 1.0, chain_stream);
  RandomStream bm(2);
  const auto values = simulate_linear_scalar_path(
      model, path, make_grid(1.0, dt, {1.0}), 1.0, Scheme::euler_maruyama, bm);
  CHECK(std::abs(values[0] - 0.5) / 0.5 < 5.0 * dt);
}

TEST_CASE("halving dt halves the Euler-Maruyama moment bias") {
  // Coupled comparison: the exact scheme on the same substeps and stream
  // consumes draws identically, so the difference of the two estimates is
  // the discretization bias with only O(1/sqrt(n)) residual noise.
  const auto model = build_model("geometric");
  const TransitionRateMatrix q = TransitionRateMatrix::single_state();

  auto gap_at = [&](double dt) {
    EnsembleOptions options;
    options.n_paths = 1000000;
    options.master_seed = 777;
    const SimulationGrid grid = make_grid(1.0, dt, {1.0});
    options.scheme = Scheme::euler_maruyama;
    const double em =
        estimate_moment_curve(model, q, 0, 1.0, 2.0, grid, options).estimate[0];
    options.scheme = Scheme::exact_linear;
    const double exact =
        estimate_moment_curve(model, q, 0, 1.0, 2.0, grid, options).estimate[0];
    return std::abs(em - exact);
  };

  const double coarse = gap_at(0.125);
  const double fine = gap_at(0.0625);
  const double ratio = coarse / fine;
  CHECK(ratio > 1.6);
  CHECK(ratio < 2.4);
}

TEST_CASE("non-finite paths abort the estimate with diagnostics") {
  // Growth rate far beyond double range: the exact update overflows.
  const LinearScalarRegimeModel model({{1e6, 0.0, 0.0, 0.0}});
  EnsembleOptions options;
  options.n_paths = 16;
  options.master_seed = 5;
  options.scheme = Scheme::exact_linear;
  try {
    estimate_moment_curve(model, TransitionRateMatrix::single_state(), 0, 1.0,
                          2.0, make_grid(2.0, 1.0, {1.0, 2.0}), options);
    FAIL("expected NonFiniteState");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteState);
    CHECK(std::string(e.what()).find("path") != std::string::npos);
  }
}

TEST_CASE("hybrid simulation rejects a regime path shorter than the grid") {
  const auto model = build_model("geometric");
  const RegimePath path(0, {}, {}, 1.0);
  RandomStream bm(3);
  CHECK_THROWS_AS(simulate_linear_scalar_path(model, path,
                                              make_grid(2.0, 0.1, {2.0}), 1.0,
                                              Scheme::euler_maruyama, bm),
                  Error);
}
