#include "regime/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <thread>

#include "regime/errors.hpp"

namespace regime {

LinearScalarRegimeModel::LinearScalarRegimeModel(
    std::vector<LinearScalarCoefficients> regimes)
    : regimes_(std::move(regimes)) {
  if (regimes_.empty())
    throw Error(ErrorCode::InvalidParameter, "model needs at least one regime");
}

double LinearScalarRegimeModel::drift(std::size_t regime, double t) const {
  const auto& c = regimes_[regime];
  return c.a0 + c.a1 / (1.0 + t);
}

double LinearScalarRegimeModel::diffusion(std::size_t regime, double t) const {
  const auto& c = regimes_[regime];
  return c.g0 + c.g1 / std::sqrt(1.0 + t);
}

double LinearScalarRegimeModel::drift_integral(std::size_t regime, double t,
                                               double h) const {
  const auto& c = regimes_[regime];
  return c.a0 * h + c.a1 * std::log1p(h / (1.0 + t));
}

double LinearScalarRegimeModel::diffusion_sq_integral(std::size_t regime, double t,
                                                      double h) const {
  const auto& c = regimes_[regime];
  return c.g0 * c.g0 * h +
         4.0 * c.g0 * c.g1 * (std::sqrt(1.0 + t + h) - std::sqrt(1.0 + t)) +
         c.g1 * c.g1 * std::log1p(h / (1.0 + t));
}

GeneralRegimeModel LinearScalarRegimeModel::as_general() const {
  GeneralRegimeModel g;
  g.dimension = 1;
  g.regime_count = regime_count();
  g.drift = [model = *this](double t, std::span<const double> x, std::size_t i,
                            std::span<double> out) {
    out[0] = model.drift(i, t) * x[0];
  };
  g.diffusion = [model = *this](double t, std::span<const double> x, std::size_t i,
                                std::span<double> out) {
    out[0] = model.diffusion(i, t) * x[0];
  };
  return g;
}

namespace {

double require_param(const std::map<std::string, double>& params,
                     const std::string& key, const std::string& model) {
  const auto it = params.find(key);
  if (it == params.end())
    throw Error(ErrorCode::InvalidParameter,
                model + " requires parameter '" + key + "'");
  return it->second;
}

void reject_unknown_params(const std::map<std::string, double>& params,
                           std::initializer_list<const char*> allowed,
                           const std::string& model) {
  for (const auto& [key, value] : params) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }))
      throw Error(ErrorCode::InvalidParameter,
                  model + ": unknown parameter '" + key + "'");
  }
}

}  // namespace

LinearScalarRegimeModel build_model(const std::string& name,
                                    const std::map<std::string, double>& params) {
  if (name == "geometric") {
    reject_unknown_params(params, {}, name);
    return LinearScalarRegimeModel({{-1.0, 0.0, 1.0, 0.0}});
  }
  if (name == "polynomial1") {
    reject_unknown_params(params, {}, name);
    return LinearScalarRegimeModel({{0.0, -1.0, 0.0, 1.0}});
  }
  if (name == "polynomialM") {
    reject_unknown_params(params, {"m"}, name);
    const double m = require_param(params, "m", name);
    if (!(m > 1.0))
      throw Error(ErrorCode::InvalidParameter,
                  "polynomialM requires m > 1, got " + std::to_string(m));
    return LinearScalarRegimeModel({{0.0, -m, 0.0, std::sqrt(m)}});
  }
  if (name == "example1") {
    reject_unknown_params(params, {}, name);
    return LinearScalarRegimeModel({{-1.0, 0.0, 1.0, 0.0},
                                    {0.0, -1.0, 0.0, 1.0}});
  }
  if (name == "example2") {
    reject_unknown_params(params, {}, name);
    return LinearScalarRegimeModel({{0.0, -1.0, 0.0, 1.0},
                                    {0.0, -2.0, 0.0, std::sqrt(2.0)}});
  }
  if (name == "controlled") {
    reject_unknown_params(params, {"a", "sigma0", "k"}, name);
    const double a = require_param(params, "a", name);
    const double sigma0 = require_param(params, "sigma0", name);
    const double k = require_param(params, "k", name);
    if (k < 0.0)
      throw Error(ErrorCode::InvalidParameter, "controlled requires k >= 0");
    return LinearScalarRegimeModel({{a, 0.0, sigma0, 0.0},
                                    {a - k, 0.0, sigma0, 0.0}});
  }
  throw Error(ErrorCode::UnknownModel, "no model named '" + name + "'");
}

SimulationGrid make_grid(double horizon, double dt,
                         std::vector<double> output_times) {
  if (!(horizon >= 0.0) || !(dt > 0.0))
    throw Error(ErrorCode::ConfigError, "grid needs horizon >= 0 and dt > 0");
  for (std::size_t k = 0; k < output_times.size(); ++k) {
    if (output_times[k] < 0.0 || output_times[k] > horizon)
      throw Error(ErrorCode::ConfigError, "output times must lie in [0, horizon]");
    if (k > 0 && !(output_times[k - 1] < output_times[k]))
      throw Error(ErrorCode::ConfigError, "output times must be increasing");
  }
  return SimulationGrid{horizon, dt, std::move(output_times)};
}

double default_step(const TransitionRateMatrix& q) {
  double max_rate = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    max_rate = std::max(max_rate, q.exit_rate(i));
  if (max_rate <= 0.0) return 1e-3;
  return std::min(1e-3, 0.01 / max_rate);
}

namespace {

struct WalkStatus {
  bool ok = true;
  double bad_time = 0.0;
};

// Substep boundaries: base-grid multiples of dt merged with jump times and
// output times, all within [0, t_end]. pts[0] == 0 always. Scratch buffers
// are reused across paths of a chunk.
struct StepScratch {
  std::vector<double> base;
  std::vector<double> merged;
  std::vector<double> pts;
};

void build_substeps(const SimulationGrid& grid, const RegimePath& regime,
                    StepScratch& s) {
  const double t_end =
      grid.output_times.empty() ? 0.0 : grid.output_times.back();
  s.base.clear();
  for (std::size_t k = 1; static_cast<double>(k) * grid.dt < t_end; ++k)
    s.base.push_back(static_cast<double>(k) * grid.dt);

  const auto& jumps = regime.jump_times();
  const auto jump_end =
      std::upper_bound(jumps.begin(), jumps.end(), t_end);

  s.merged.clear();
  s.merged.resize(s.base.size() +
                  static_cast<std::size_t>(jump_end - jumps.begin()));
  std::merge(s.base.begin(), s.base.end(), jumps.begin(), jump_end,
             s.merged.begin());

  s.pts.clear();
  s.pts.resize(s.merged.size() + grid.output_times.size() + 1);
  s.pts[0] = 0.0;
  std::merge(s.merged.begin(), s.merged.end(), grid.output_times.begin(),
             grid.output_times.end(), s.pts.begin() + 1);
  s.pts.erase(std::unique(s.pts.begin(), s.pts.end()), s.pts.end());
}

// Walks one scalar path over the substeps, invoking on_output(k, x) at each
// grid output time (exact double match; the points were inserted verbatim).
template <typename OnOutput>
WalkStatus walk_linear_scalar(const LinearScalarRegimeModel& model,
                              const RegimePath& regime,
                              const SimulationGrid& grid, double x0,
                              Scheme scheme, RandomStream& stream,
                              StepScratch& scratch, OnOutput&& on_output) {
  build_substeps(grid, regime, scratch);
  const auto& pts = scratch.pts;
  const auto& outputs = grid.output_times;

  double x = x0;
  std::size_t oi = 0;
  if (oi < outputs.size() && outputs[oi] == 0.0) on_output(oi++, x);

  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double t0 = pts[k];
    const double h = pts[k + 1] - pts[k];
    const std::size_t i = regime.state_at(t0);
    const double z = stream.next_normal();
    if (scheme == Scheme::euler_maruyama) {
      x += model.drift(i, t0) * x * h +
           model.diffusion(i, t0) * x * std::sqrt(h) * z;
    } else {
      const double a_int = model.drift_integral(i, t0, h);
      const double g2_int = model.diffusion_sq_integral(i, t0, h);
      x *= std::exp(a_int - 0.5 * g2_int + std::sqrt(g2_int) * z);
    }
    if (!std::isfinite(x)) return {false, pts[k + 1]};
    if (oi < outputs.size() && outputs[oi] == pts[k + 1]) on_output(oi++, x);
  }
  return {true, 0.0};
}

template <typename OnOutput>
WalkStatus walk_general(const GeneralRegimeModel& model, const RegimePath& regime,
                        const SimulationGrid& grid, const std::vector<double>& x0,
                        RandomStream& stream, StepScratch& scratch,
                        std::vector<double>& x, std::vector<double>& drift_buf,
                        std::vector<double>& diff_buf, std::vector<double>& dB,
                        OnOutput&& on_output) {
  build_substeps(grid, regime, scratch);
  const auto& pts = scratch.pts;
  const auto& outputs = grid.output_times;
  const std::size_t d = model.dimension;

  x = x0;
  drift_buf.assign(d, 0.0);
  diff_buf.assign(d * d, 0.0);
  dB.assign(d, 0.0);

  std::size_t oi = 0;
  if (oi < outputs.size() && outputs[oi] == 0.0) on_output(oi++, x);

  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double t0 = pts[k];
    const double h = pts[k + 1] - pts[k];
    const double sqrt_h = std::sqrt(h);
    const std::size_t i = regime.state_at(t0);
    for (std::size_t c = 0; c < d; ++c) dB[c] = sqrt_h * stream.next_normal();
    model.drift(t0, x, i, drift_buf);
    model.diffusion(t0, x, i, diff_buf);
    bool finite = true;
    for (std::size_t r = 0; r < d; ++r) {
      double dx = drift_buf[r] * h;
      for (std::size_t c = 0; c < d; ++c) dx += diff_buf[r * d + c] * dB[c];
      x[r] += dx;
      finite = finite && std::isfinite(x[r]);
    }
    if (!finite) return {false, pts[k + 1]};
    if (oi < outputs.size() && outputs[oi] == pts[k + 1]) on_output(oi++, x);
  }
  return {true, 0.0};
}

double norm_p(std::span<const double> x, double p) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return std::pow(sq, 0.5 * p);
}

struct PathFailure {
  std::size_t path_index;
  double time;
};

struct ChunkAccumulator {
  std::vector<double> regime_sums;  // n_outputs x n_regimes, row-major
  std::vector<double> sum_squares;  // n_outputs
  std::vector<PathFailure> failures;

  void init(std::size_t n_outputs, std::size_t n_regimes) {
    regime_sums.assign(n_outputs * n_regimes, 0.0);
    sum_squares.assign(n_outputs, 0.0);
    failures.clear();
  }
};

// Runs chunks of paths (in index order within each chunk) and merges the
// chunk accumulators in chunk order, making the reduction independent of
// the number of workers.
template <typename RunPath>
PathEnsembleSummary reduce_ensemble(std::size_t n_regimes, double v0,
                                    std::size_t start_regime, double p,
                                    const SimulationGrid& grid,
                                    const EnsembleOptions& options,
                                    RunPath&& run_path) {
  if (options.n_paths < 2)
    throw Error(ErrorCode::ConfigError, "ensemble needs at least 2 paths");

  const std::size_t n_outputs = grid.output_times.size();
  constexpr std::size_t kChunk = 2048;
  const std::size_t n_chunks = (options.n_paths + kChunk - 1) / kChunk;

  std::vector<ChunkAccumulator> chunks(n_chunks);
  std::atomic<std::size_t> next_chunk{0};

  auto worker = [&] {
    StepScratch scratch;
    while (true) {
      const std::size_t c = next_chunk.fetch_add(1);
      if (c >= n_chunks) break;
      ChunkAccumulator& acc = chunks[c];
      acc.init(n_outputs, n_regimes);
      const std::size_t begin = c * kChunk;
      const std::size_t end = std::min(begin + kChunk, options.n_paths);
      for (std::size_t path = begin; path < end; ++path)
        run_path(path, scratch, acc);
    }
  };

  const unsigned n_workers =
      std::max(1u, std::min<unsigned>(options.threads,
                                      static_cast<unsigned>(n_chunks)));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<PathFailure> failures;
  for (const auto& c : chunks)
    failures.insert(failures.end(), c.failures.begin(), c.failures.end());
  if (!failures.empty())
    throw Error(ErrorCode::NonFiniteState,
                std::to_string(failures.size()) +
                    " path(s) became non-finite; first: path " +
                    std::to_string(failures.front().path_index) + " at t = " +
                    std::to_string(failures.front().time));

  PathEnsembleSummary summary;
  summary.moment_order = p;
  summary.times = grid.output_times;
  summary.n_paths = options.n_paths;
  summary.estimate.assign(n_outputs, 0.0);
  summary.std_error.assign(n_outputs, 0.0);
  summary.per_regime = Matrix(n_outputs, n_regimes);

  const double n = static_cast<double>(options.n_paths);
  for (std::size_t k = 0; k < n_outputs; ++k) {
    double sum_sq = 0.0;
    for (const auto& c : chunks) sum_sq += c.sum_squares[k];
    // Total = sum of per-regime means, so the decomposition adds up exactly.
    double mean = 0.0;
    for (std::size_t r = 0; r < n_regimes; ++r) {
      double s = 0.0;
      for (const auto& c : chunks) s += c.regime_sums[k * n_regimes + r];
      summary.per_regime(k, r) = s / n;
      mean += summary.per_regime(k, r);
    }
    summary.estimate[k] = mean;
    const double se_sq = (sum_sq - n * mean * mean) / (n * (n - 1.0));
    summary.std_error[k] = std::sqrt(std::max(0.0, se_sq));
    if (grid.output_times[k] == 0.0) {
      // The time-zero law is a point mass; report it exactly.
      summary.estimate[k] = v0;
      summary.std_error[k] = 0.0;
      for (std::size_t r = 0; r < n_regimes; ++r)
        summary.per_regime(k, r) = (r == start_regime) ? v0 : 0.0;
    }
  }
  return summary;
}

}  // namespace

SampledTrajectory simulate_hybrid_path(const GeneralRegimeModel& model,
                                       const RegimePath& regime,
                                       const SimulationGrid& grid,
                                       const std::vector<double>& x0,
                                       RandomStream& stream) {
  if (regime.horizon() < grid.horizon)
    throw Error(ErrorCode::ConfigError,
                "regime path horizon shorter than simulation horizon");
  if (x0.size() != model.dimension)
    throw Error(ErrorCode::ConfigError, "x0 dimension mismatch");

  SampledTrajectory traj;
  traj.times = grid.output_times;
  traj.values.resize(grid.output_times.size());

  StepScratch scratch;
  std::vector<double> x, drift_buf, diff_buf, dB;
  const WalkStatus status = walk_general(
      model, regime, grid, x0, stream, scratch, x, drift_buf, diff_buf, dB,
      [&](std::size_t k, const std::vector<double>& value) {
        traj.values[k] = value;
      });
  if (!status.ok)
    throw Error(ErrorCode::NonFiniteState,
                "state became non-finite at t = " + std::to_string(status.bad_time));
  return traj;
}

std::vector<double> simulate_linear_scalar_path(const LinearScalarRegimeModel& model,
                                                const RegimePath& regime,
                                                const SimulationGrid& grid, double x0,
                                                Scheme scheme, RandomStream& stream) {
  if (regime.horizon() < grid.horizon)
    throw Error(ErrorCode::ConfigError,
                "regime path horizon shorter than simulation horizon");
  std::vector<double> values(grid.output_times.size(), 0.0);
  StepScratch scratch;
  const WalkStatus status =
      walk_linear_scalar(model, regime, grid, x0, scheme, stream, scratch,
                         [&](std::size_t k, double x) { values[k] = x; });
  if (!status.ok)
    throw Error(ErrorCode::NonFiniteState,
                "state became non-finite at t = " + std::to_string(status.bad_time));
  return values;
}

PathEnsembleSummary estimate_moment_curve(const LinearScalarRegimeModel& model,
                                          const TransitionRateMatrix& q,
                                          std::size_t start_regime, double x0,
                                          double p, const SimulationGrid& grid,
                                          const EnsembleOptions& options) {
  if (!(p > 0.0)) throw Error(ErrorCode::ConfigError, "moment order must be > 0");
  const std::size_t n_regimes = model.regime_count();
  const double v0 = std::pow(std::abs(x0), p);

  auto run_path = [&](std::size_t path, StepScratch& scratch,
                      ChunkAccumulator& acc) {
    RandomStream regime_stream =
        RandomStream::substream(options.master_seed, path, 0);
    RandomStream bm_stream = RandomStream::substream(options.master_seed, path, 1);
    const RegimePath regime_path =
        sample_regime_path(q, start_regime, grid.horizon, regime_stream);
    const WalkStatus status = walk_linear_scalar(
        model, regime_path, grid, x0, options.scheme, bm_stream, scratch,
        [&](std::size_t k, double x) {
          const double v = std::pow(std::abs(x), p);
          const std::size_t r = regime_path.state_at(grid.output_times[k]);
          acc.regime_sums[k * n_regimes + r] += v;
          acc.sum_squares[k] += v * v;
        });
    if (!status.ok) acc.failures.push_back({path, status.bad_time});
  };

  return reduce_ensemble(n_regimes, v0, start_regime, p, grid, options, run_path);
}

PathEnsembleSummary estimate_moment_curve(const GeneralRegimeModel& model,
                                          const TransitionRateMatrix& q,
                                          std::size_t start_regime,
                                          const std::vector<double>& x0, double p,
                                          const SimulationGrid& grid,
                                          const EnsembleOptions& options) {
  if (!(p > 0.0)) throw Error(ErrorCode::ConfigError, "moment order must be > 0");
  if (options.scheme != Scheme::euler_maruyama)
    throw Error(ErrorCode::ConfigError,
                "the exact update applies to linear scalar models only");
  const std::size_t n_regimes = model.regime_count;
  const double v0 = norm_p(x0, p);

  struct Buffers {
    std::vector<double> x, drift, diff, dB;
  };

  auto run_path = [&](std::size_t path, StepScratch& scratch,
                      ChunkAccumulator& acc) {
    thread_local Buffers buf;
    RandomStream regime_stream =
        RandomStream::substream(options.master_seed, path, 0);
    RandomStream bm_stream = RandomStream::substream(options.master_seed, path, 1);
    const RegimePath regime_path =
        sample_regime_path(q, start_regime, grid.horizon, regime_stream);
    const WalkStatus status = walk_general(
        model, regime_path, grid, x0, bm_stream, scratch, buf.x, buf.drift,
        buf.diff, buf.dB, [&](std::size_t k, const std::vector<double>& x) {
          const double v = norm_p(x, p);
          const std::size_t r = regime_path.state_at(grid.output_times[k]);
          acc.regime_sums[k * n_regimes + r] += v;
          acc.sum_squares[k] += v * v;
        });
    if (!status.ok) acc.failures.push_back({path, status.bad_time});
  };

  return reduce_ensemble(n_regimes, v0, start_regime, p, grid, options, run_path);
}

}  // namespace regime
