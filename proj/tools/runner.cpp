#include "runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "regime/chain.hpp"
#include "regime/control.hpp"
#include "regime/csv.hpp"
#include "regime/dynamics.hpp"
#include "regime/errors.hpp"
#include "regime/format.hpp"

namespace regime::runner {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// schema helpers

[[noreturn]] void config_fail(const std::string& message) {
  throw Error(ErrorCode::ConfigError, message);
}

void check_keys(const json& obj, const std::string& context,
                std::initializer_list<const char*> required,
                std::initializer_list<const char*> optional) {
  if (!obj.is_object()) config_fail(context + " must be an object");
  for (const char* key : required)
    if (!obj.contains(key))
      config_fail(context + " is missing required key '" + key + "'");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    const bool known =
        std::any_of(required.begin(), required.end(),
                    [&](const char* k) { return key == k; }) ||
        std::any_of(optional.begin(), optional.end(),
                    [&](const char* k) { return key == k; });
    if (!known) config_fail(context + " has unknown key '" + key + "'");
  }
}

double num_at(const json& obj, const std::string& key,
              const std::string& context) {
  if (!obj.contains(key) || !obj.at(key).is_number())
    config_fail(context + "." + key + " must be a number");
  return obj.at(key).get<double>();
}

double num_or(const json& obj, const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) config_fail(key + " must be a number");
  return obj.at(key).get<double>();
}

std::uint64_t uint_at(const json& obj, const std::string& key,
                      const std::string& context) {
  if (!obj.contains(key) || !obj.at(key).is_number_unsigned())
    config_fail(context + "." + key + " must be a nonnegative integer");
  return obj.at(key).get<std::uint64_t>();
}

std::vector<double> number_array(const json& arr, const std::string& context) {
  if (!arr.is_array() || arr.empty())
    config_fail(context + " must be a nonempty array of numbers");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) config_fail(context + " must contain only numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

// ---------------------------------------------------------------------------
// domain parsers (all operate on already key-checked objects)

Matrix parse_q_matrix(const json& arr) {
  if (!arr.is_array() || arr.empty()) config_fail("q_matrix must be an array of rows");
  const std::size_t n = arr.size();
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!arr[i].is_array() || arr[i].size() != n)
      config_fail("q_matrix row " + std::to_string(i + 1) + " must hold " +
                  std::to_string(n) + " numbers");
    for (std::size_t j = 0; j < n; ++j) {
      if (!arr[i][j].is_number()) config_fail("q_matrix entries must be numbers");
      m(i, j) = arr[i][j].get<double>();
    }
  }
  return m;
}

LinearScalarRegimeModel parse_model(const json& obj) {
  check_keys(obj, "model", {"name"}, {"params"});
  if (!obj.at("name").is_string()) config_fail("model.name must be a string");
  std::map<std::string, double> params;
  if (obj.contains("params")) {
    if (!obj.at("params").is_object()) config_fail("model.params must be an object");
    for (const auto& [key, value] : obj.at("params").items()) {
      if (!value.is_number()) config_fail("model.params values must be numbers");
      params[key] = value.get<double>();
    }
  }
  return build_model(obj.at("name").get<std::string>(), params);
}

DecayClock parse_clock(const json& obj) {
  check_keys(obj, "clock", {"kind"}, {"m", "c", "r"});
  const std::string kind = obj.at("kind").get<std::string>();
  if (kind == "exponential") {
    check_keys(obj, "clock", {"kind"}, {});
    return DecayClock::exponential();
  }
  if (kind == "polynomial") {
    check_keys(obj, "clock", {"kind", "m"}, {});
    return DecayClock::polynomial(num_at(obj, "m", "clock"));
  }
  if (kind == "psi") {
    check_keys(obj, "clock", {"kind", "c", "r"}, {});
    return DecayClock::psi(num_at(obj, "c", "clock"), num_at(obj, "r", "clock"));
  }
  config_fail("clock.kind must be exponential | polynomial | psi");
}

PsiSpec parse_psi(const json& obj) {
  check_keys(obj, "psi", {"c", "r"}, {});
  return PsiSpec{num_at(obj, "c", "psi"), num_at(obj, "r", "psi")};
}

std::vector<double> linear_times(double horizon, std::size_t count) {
  std::vector<double> times;
  times.reserve(count);
  for (std::size_t k = 0; k < count; ++k)
    times.push_back(horizon * static_cast<double>(k) /
                    static_cast<double>(count - 1));
  return times;
}

// ---------------------------------------------------------------------------
// output writing

struct OutputWriter {
  fs::path dir;
  std::map<std::string, std::uint64_t> checksums;
  std::chrono::steady_clock::time_point started =
      std::chrono::steady_clock::now();

  explicit OutputWriter(const std::string& out_dir) : dir(out_dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
      throw Error(ErrorCode::IoFailure,
                  "cannot create output directory " + dir.string());
  }

  void emit(const std::string& name, const std::string& content) {
    const fs::path path = dir / name;
    std::ofstream f(path, std::ios::binary);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f)
      throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    checksums[name] = fnv1a64(content);
  }

  // Manifest goes last, through a temp file + rename, so a manifest on disk
  // always describes a completed run.
  void finalize_manifest(const std::string& command, std::uint64_t config_hash,
                         std::uint64_t seed, unsigned threads) {
    json manifest;
    manifest["tool_version"] = std::string(kToolVersion);
    manifest["command"] = command;
    char hex[32];
    std::snprintf(hex, sizeof(hex), "0x%016llx",
                  static_cast<unsigned long long>(config_hash));
    manifest["config_hash"] = hex;
    manifest["seed"] = seed;
    manifest["threads"] = threads;
    manifest["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    json outputs = json::object();
    for (const auto& [name, sum] : checksums) {
      std::snprintf(hex, sizeof(hex), "0x%016llx",
                    static_cast<unsigned long long>(sum));
      outputs[name] = hex;
    }
    manifest["outputs"] = outputs;

    const fs::path tmp = dir / "manifest.json.tmp";
    const fs::path final_path = dir / "manifest.json";
    std::ofstream f(tmp, std::ios::binary);
    f << manifest.dump(2) << '\n';
    f.close();
    if (!f) throw Error(ErrorCode::IoFailure, "cannot write manifest");
    std::error_code ec;
    fs::rename(tmp, final_path, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot finalize manifest");
  }
};

template <typename WriteFn>
std::string render_csv(WriteFn&& write) {
  std::ostringstream s;
  write(s);
  return s.str();
}

// ---------------------------------------------------------------------------
// canonical configs per command

json canonical_grid(const json& raw, const std::string& context) {
  check_keys(raw, context, {"horizon"},
             {"dt", "output_times", "output_count"});
  const double horizon = num_at(raw, "horizon", context);
  if (!(horizon > 0.0)) config_fail(context + ".horizon must be positive");
  if (raw.contains("output_times") && raw.contains("output_count"))
    config_fail(context + ": give output_times or output_count, not both");

  json out;
  out["horizon"] = horizon;
  if (raw.contains("dt")) out["dt"] = num_at(raw, "dt", context);
  if (raw.contains("output_times")) {
    const auto times = number_array(raw.at("output_times"), context);
    out["output_times"] = times;
  } else {
    const auto count = raw.contains("output_count")
                           ? uint_at(raw, "output_count", context)
                           : 11;
    if (count < 2) config_fail(context + ".output_count must be >= 2");
    out["output_times"] = linear_times(horizon, count);
  }
  return out;
}

json canonical_common_model(const json& raw) {
  // model + optional q_matrix, checked for mutual consistency.
  if (!raw.contains("model")) config_fail("config is missing 'model'");
  const LinearScalarRegimeModel model = parse_model(raw.at("model"));
  json out = raw.at("model");
  if (!out.contains("params")) out["params"] = json::object();
  if (model.regime_count() > 1) {
    if (!raw.contains("q_matrix"))
      config_fail("multi-regime models need a q_matrix");
    validate_rate_matrix(parse_q_matrix(raw.at("q_matrix")));
  } else if (raw.contains("q_matrix")) {
    config_fail("single-regime models take no q_matrix");
  }
  return out;
}

json canonical_simulate(const json& raw) {
  check_keys(raw, "config",
             {"model", "x0", "p", "grid", "n_paths", "seed"},
             {"q_matrix", "initial_state", "scheme", "threads", "out_dir"});
  json out;
  out["model"] = canonical_common_model(raw);
  if (raw.contains("q_matrix")) out["q_matrix"] = raw.at("q_matrix");
  out["x0"] = num_at(raw, "x0", "config");
  out["p"] = num_at(raw, "p", "config");
  if (!(out["p"].get<double>() > 0.0)) config_fail("p must be positive");
  out["grid"] = canonical_grid(raw.at("grid"), "grid");
  out["n_paths"] = uint_at(raw, "n_paths", "config");
  out["seed"] = uint_at(raw, "seed", "config");
  out["initial_state"] =
      raw.contains("initial_state") ? uint_at(raw, "initial_state", "config") : 1;
  if (out["initial_state"].get<std::uint64_t>() < 1)
    config_fail("initial_state is 1-based");
  std::string scheme = raw.value("scheme", "euler");
  if (scheme != "euler" && scheme != "exact")
    config_fail("scheme must be 'euler' or 'exact'");
  out["scheme"] = scheme;
  out["threads"] = raw.contains("threads") ? uint_at(raw, "threads", "config") : 1;
  out["out_dir"] = raw.value("out_dir", "out");
  return out;
}

json canonical_oracle(const json& raw) {
  check_keys(raw, "config", {"model", "x0", "p", "clock"},
             {"q_matrix", "initial_state", "horizon", "horizon_log_lambda",
              "output_count", "fit_window", "out_dir"});
  json out;
  out["model"] = canonical_common_model(raw);
  if (raw.contains("q_matrix")) out["q_matrix"] = raw.at("q_matrix");
  out["x0"] = num_at(raw, "x0", "config");
  out["p"] = num_at(raw, "p", "config");
  const DecayClock clock = parse_clock(raw.at("clock"));
  out["clock"] = raw.at("clock");

  if (raw.contains("horizon") == raw.contains("horizon_log_lambda"))
    config_fail("give exactly one of horizon / horizon_log_lambda");
  const double horizon =
      raw.contains("horizon")
          ? num_at(raw, "horizon", "config")
          : clock.time_at_log(num_at(raw, "horizon_log_lambda", "config"));
  if (!(horizon > 0.0)) config_fail("horizon must be positive");
  out["horizon"] = horizon;
  out["output_count"] =
      raw.contains("output_count") ? uint_at(raw, "output_count", "config") : 200;

  if (raw.contains("fit_window")) {
    const json& w = raw.at("fit_window");
    check_keys(w, "fit_window", {}, {"t", "log_lambda"});
    if (w.contains("t") == w.contains("log_lambda"))
      config_fail("fit_window needs exactly one of t / log_lambda");
    std::vector<double> range;
    if (w.contains("t")) {
      range = number_array(w.at("t"), "fit_window.t");
    } else {
      range = number_array(w.at("log_lambda"), "fit_window.log_lambda");
      if (range.size() == 2) {
        range[0] = clock.time_at_log(range[0]);
        range[1] = clock.time_at_log(range[1]);
      }
    }
    if (range.size() != 2 || !(range[0] < range[1]))
      config_fail("fit_window must be a pair [lo, hi] with lo < hi");
    out["fit_window"] = {{"t", range}};
  }
  out["initial_state"] =
      raw.contains("initial_state") ? uint_at(raw, "initial_state", "config") : 1;
  out["out_dir"] = raw.value("out_dir", "out");
  return out;
}

json canonical_certificate(const json& raw) {
  if (!raw.is_object() || !raw.contains("kind"))
    config_fail("certificate needs a 'kind'");
  const std::string kind = raw.at("kind").get<std::string>();
  json out = raw;
  if (kind == "two-state-eta") {
    check_keys(raw, "certificate", {"kind", "q_matrix", "psi"},
               {"theta", "rates"});
    if (raw.contains("theta") == raw.contains("rates"))
      config_fail("two-state-eta needs exactly one of theta / rates");
    parse_psi(raw.at("psi"));
    validate_rate_matrix(parse_q_matrix(raw.at("q_matrix")));
  } else if (kind == "multi-state-eta") {
    check_keys(raw, "certificate", {"kind", "q_matrix", "psi", "rates"}, {});
    parse_psi(raw.at("psi"));
    validate_rate_matrix(parse_q_matrix(raw.at("q_matrix")));
  } else if (kind == "m-matrix-gamma") {
    check_keys(raw, "certificate", {"kind", "q_matrix", "growth_rates"}, {});
    validate_rate_matrix(parse_q_matrix(raw.at("q_matrix")));
  } else if (kind == "single-state-exponential") {
    check_keys(raw, "certificate", {"kind", "q_matrix", "state", "rate"}, {});
    validate_rate_matrix(parse_q_matrix(raw.at("q_matrix")));
    if (uint_at(raw, "state", "certificate") < 1)
      config_fail("certificate.state is 1-based");
  } else if (kind == "liu-chen") {
    check_keys(raw, "certificate", {"kind", "nu", "theta"},
               {"clock", "improved_integrability_declared"});
    if (raw.contains("clock")) parse_clock(raw.at("clock"));
    if (!out.contains("clock")) out["clock"] = {{"kind", "exponential"}};
    if (!out.contains("improved_integrability_declared"))
      out["improved_integrability_declared"] = false;
  } else if (kind == "lyapunov-clock") {
    check_keys(raw, "certificate",
               {"kind", "model", "psi", "t_points", "x_points"},
               {"q_matrix", "p"});
    parse_model(raw.at("model"));
    parse_psi(raw.at("psi"));
    number_array(raw.at("t_points"), "certificate.t_points");
    number_array(raw.at("x_points"), "certificate.x_points");
    if (!out.contains("p")) out["p"] = 2.0;
  } else {
    config_fail("unknown certificate kind '" + kind + "'");
  }
  return out;
}

json canonical_certify(const json& raw) {
  check_keys(raw, "config", {"certificate"}, {"out_dir"});
  json out;
  out["certificate"] = canonical_certificate(raw.at("certificate"));
  out["out_dir"] = raw.value("out_dir", "out");
  return out;
}

json canonical_control(const json& raw) {
  check_keys(raw, "config", {"control", "x0", "grid", "n_paths", "seed"},
             {"threads", "out_dir"});
  const json& c = raw.at("control");
  check_keys(c, "control", {"a", "sigma0", "q1", "q2", "gains"},
             {"oracle_horizon", "oracle_output_count"});
  json control;
  control["a"] = num_at(c, "a", "control");
  control["sigma0"] = num_at(c, "sigma0", "control");
  control["q1"] = num_at(c, "q1", "control");
  control["q2"] = num_at(c, "q2", "control");
  if (!(control["q1"].get<double>() > 0.0) ||
      !(control["q2"].get<double>() > 0.0))
    config_fail("control.q1 and control.q2 must be positive");
  const auto gains = number_array(c.at("gains"), "control.gains");
  for (double k : gains)
    if (k < 0.0) config_fail("gains must be nonnegative");
  control["gains"] = gains;
  control["oracle_horizon"] = num_or(c, "oracle_horizon", 40.0);
  control["oracle_output_count"] = c.contains("oracle_output_count")
                                       ? uint_at(c, "oracle_output_count", "control")
                                       : 121;

  json out;
  out["control"] = control;
  out["x0"] = num_at(raw, "x0", "config");
  out["grid"] = canonical_grid(raw.at("grid"), "grid");
  out["n_paths"] = uint_at(raw, "n_paths", "config");
  out["seed"] = uint_at(raw, "seed", "config");
  out["threads"] = raw.contains("threads") ? uint_at(raw, "threads", "config") : 1;
  out["out_dir"] = raw.value("out_dir", "out");
  return out;
}

// ---------------------------------------------------------------------------
// executors (configs are canonical here)

TransitionRateMatrix chain_for(const json& cfg,
                               const LinearScalarRegimeModel& model) {
  if (model.regime_count() == 1) return TransitionRateMatrix::single_state();
  return validate_rate_matrix(parse_q_matrix(cfg.at("q_matrix")));
}

std::size_t start_state(const json& cfg, const TransitionRateMatrix& q) {
  const auto one_based = cfg.at("initial_state").get<std::uint64_t>();
  if (one_based < 1 || one_based > q.size())
    config_fail("initial_state out of range");
  return static_cast<std::size_t>(one_based - 1);
}

SimulationGrid grid_from(const json& g, const TransitionRateMatrix& q) {
  const double horizon = g.at("horizon").get<double>();
  const double dt =
      g.contains("dt") ? g.at("dt").get<double>() : default_step(q);
  return make_grid(horizon, dt, g.at("output_times").get<std::vector<double>>());
}

void do_simulate(const json& cfg, std::ostream& out) {
  const LinearScalarRegimeModel model = parse_model(cfg.at("model"));
  const TransitionRateMatrix q = chain_for(cfg, model);
  const SimulationGrid grid = grid_from(cfg.at("grid"), q);

  EnsembleOptions options;
  options.n_paths = cfg.at("n_paths").get<std::uint64_t>();
  options.master_seed = cfg.at("seed").get<std::uint64_t>();
  options.scheme = cfg.at("scheme").get<std::string>() == "exact"
                       ? Scheme::exact_linear
                       : Scheme::euler_maruyama;
  options.threads =
      static_cast<unsigned>(cfg.at("threads").get<std::uint64_t>());

  const PathEnsembleSummary summary =
      estimate_moment_curve(model, q, start_state(cfg, q),
                            cfg.at("x0").get<double>(), cfg.at("p").get<double>(),
                            grid, options);

  OutputWriter writer(cfg.at("out_dir").get<std::string>());
  writer.emit("ensemble.csv", render_csv([&](std::ostream& s) {
                write_ensemble_csv(s, summary);
              }));
  writer.finalize_manifest("simulate", fnv1a64(cfg.dump()),
                           options.master_seed, options.threads);

  out << "simulate: " << options.n_paths << " paths, E|X|^p at t = "
      << short_number(summary.times.back()) << " is "
      << short_number(summary.estimate.back()) << " +- "
      << short_number(summary.std_error.back()) << "\n"
      << "wrote " << (writer.dir / "ensemble.csv").string() << "\n";
}

void do_oracle(const json& cfg, std::ostream& out) {
  const LinearScalarRegimeModel model = parse_model(cfg.at("model"));
  const TransitionRateMatrix q = chain_for(cfg, model);
  const DecayClock clock = parse_clock(cfg.at("clock"));
  const double horizon = cfg.at("horizon").get<double>();
  const auto count = cfg.at("output_count").get<std::uint64_t>();

  const MomentSystem system = make_moment_system(
      model, q, cfg.at("p").get<double>(), cfg.at("x0").get<double>(),
      start_state(cfg, q));
  const std::vector<double> times = log_spaced_times(clock, horizon, count);
  const MomentCurve curve = solve_moment_system(system, times);

  FitWindow window;
  if (cfg.contains("fit_window")) {
    const auto range = cfg.at("fit_window").at("t").get<std::vector<double>>();
    window = FitWindow{range[0], range[1]};
  } else {
    window = default_fit_window(curve.times, clock);
  }
  const DecayFit fit = fit_decay_order(curve.times, curve.total, clock, window);

  OutputWriter writer(cfg.at("out_dir").get<std::string>());
  writer.emit("oracle_curve.csv", render_csv([&](std::ostream& s) {
                write_oracle_curve_csv(s, curve, clock);
              }));
  writer.emit("fit.csv",
              render_csv([&](std::ostream& s) { write_fit_csv(s, fit); }));
  writer.finalize_manifest("oracle", fnv1a64(cfg.dump()), 0, 1);

  out << "oracle: decay order " << short_number(fit.gamma_hat) << " +- "
      << short_number(fit.slope_std_error) << " against " << clock.describe()
      << " over t in [" << short_number(window.t_lo) << ", "
      << short_number(window.t_hi) << "] (" << fit.points << " points)\n"
      << "wrote " << (writer.dir / "oracle_curve.csv").string() << ", "
      << (writer.dir / "fit.csv").string() << "\n";
}

Certificate build_certificate(const json& cert_cfg) {
  const std::string kind = cert_cfg.at("kind").get<std::string>();
  if (kind == "two-state-eta") {
    const TransitionRateMatrix q =
        validate_rate_matrix(parse_q_matrix(cert_cfg.at("q_matrix")));
    if (q.size() != 2) config_fail("two-state-eta needs a 2x2 q_matrix");
    const PsiSpec psi = parse_psi(cert_cfg.at("psi"));
    if (cert_cfg.contains("theta"))
      return eta_two_state(cert_cfg.at("theta").get<double>(), q.rate(0, 1),
                           q.rate(1, 0), psi);
    const auto rates = cert_cfg.at("rates").get<std::vector<double>>();
    return eta_two_state_from_rates(rates, q, psi);
  }
  if (kind == "multi-state-eta") {
    const TransitionRateMatrix q =
        validate_rate_matrix(parse_q_matrix(cert_cfg.at("q_matrix")));
    const auto rates = cert_cfg.at("rates").get<std::vector<double>>();
    return eta_multi_state(rates, q, parse_psi(cert_cfg.at("psi")));
  }
  if (kind == "m-matrix-gamma") {
    const TransitionRateMatrix q =
        validate_rate_matrix(parse_q_matrix(cert_cfg.at("q_matrix")));
    const auto rates = cert_cfg.at("growth_rates").get<std::vector<double>>();
    return exponential_rate_bound(rates, q);
  }
  if (kind == "single-state-exponential") {
    const TransitionRateMatrix q =
        validate_rate_matrix(parse_q_matrix(cert_cfg.at("q_matrix")));
    return single_state_exponential_certificate(
        cert_cfg.at("state").get<std::uint64_t>() - 1,
        cert_cfg.at("rate").get<double>(), q);
  }
  if (kind == "liu-chen") {
    return liu_chen_gamma(
        cert_cfg.at("nu").get<double>(), cert_cfg.at("theta").get<double>(),
        parse_clock(cert_cfg.at("clock")),
        cert_cfg.at("improved_integrability_declared").get<bool>());
  }
  // lyapunov-clock: rho = |x|^p against a common psi bound.
  const LinearScalarRegimeModel model = parse_model(cert_cfg.at("model"));
  const TransitionRateMatrix q =
      model.regime_count() == 1
          ? TransitionRateMatrix::single_state()
          : validate_rate_matrix(parse_q_matrix(cert_cfg.at("q_matrix")));
  const PsiSpec psi = parse_psi(cert_cfg.at("psi"));
  const double p = cert_cfg.at("p").get<double>();

  LyapunovSpec spec;
  spec.p = p;
  spec.rho = [p](double, std::span<const double> x) {
    return std::pow(std::abs(x[0]), p);
  };
  spec.rho_dt = [](double, std::span<const double>) { return 0.0; };
  spec.rho_grad = [p](double, std::span<const double> x, std::span<double> out) {
    const double ax = std::abs(x[0]);
    out[0] = x[0] == 0.0 ? 0.0
                         : p * std::pow(ax, p - 1.0) * (x[0] > 0.0 ? 1.0 : -1.0);
  };
  spec.rho_hess = [p](double, std::span<const double> x, std::span<double> out) {
    out[0] = p * (p - 1.0) * std::pow(std::abs(x[0]), p - 2.0);
  };
  spec.common_psi = psi;

  std::vector<GridPoint> grid;
  for (double t : cert_cfg.at("t_points").get<std::vector<double>>())
    for (double x : cert_cfg.at("x_points").get<std::vector<double>>())
      grid.push_back(GridPoint{t, {x}});

  const LyapunovCheckReport report =
      check_lyapunov_condition(spec, model.as_general(), q, grid);

  Certificate cert;
  cert.kind = CertificateKind::lyapunov_clock;
  cert.clock = psi.clock();
  cert.hypothesis_flags = validate_psi(psi);
  cert.hypothesis_flags.push_back(
      {"generator bound holds on the sample grid", report.all_ok});
  double worst = -std::numeric_limits<double>::infinity();
  for (double m : report.worst_margin) worst = std::max(worst, m);
  cert.diagnostics["worst_margin"] = worst;
  if (report.all_ok &&
      std::all_of(cert.hypothesis_flags.begin(), cert.hypothesis_flags.end(),
                  [](const HypothesisFlag& f) { return f.satisfied; })) {
    cert.affirmative = true;
    cert.rate = 1.0;
  } else {
    cert.failure = report.all_ok ? "HypothesisViolated" : "ConditionViolated";
  }
  return cert;
}

Certificate do_certify(const json& cfg, std::ostream& out) {
  const Certificate cert = build_certificate(cfg.at("certificate"));

  OutputWriter writer(cfg.at("out_dir").get<std::string>());
  writer.emit("certificate.txt", to_flat_record(cert));
  writer.finalize_manifest("certify", fnv1a64(cfg.dump()), 0, 1);

  out << "certificate " << to_string(cert.kind) << ": "
      << (cert.affirmative
              ? "affirmative, rate " + short_number(cert.rate) + " against " +
                    cert.clock.describe()
              : "inapplicable (" + cert.failure + ")")
      << "\n"
      << "wrote " << (writer.dir / "certificate.txt").string() << "\n";
  return cert;
}

void do_control(const json& cfg, std::ostream& out) {
  const json& c = cfg.at("control");
  const double a = c.at("a").get<double>();
  const double sigma0 = c.at("sigma0").get<double>();
  const double q1 = c.at("q1").get<double>();
  const double q2 = c.at("q2").get<double>();

  const GainDesign design = design_control_gain(a, sigma0, q1, q2);
  out << "gain design: k* = " << short_number(design.minimal_gain)
      << " (uncontrolled growth rate " << short_number(design.uncontrolled_rate)
      << "); any k > k* certifies\n";

  ControlDesign base{a, sigma0, 0.0, q1, q2};
  const TransitionRateMatrix q = base.chain();
  const SimulationGrid grid = grid_from(cfg.at("grid"), q);

  EnsembleOptions options;
  options.n_paths = cfg.at("n_paths").get<std::uint64_t>();
  options.master_seed = cfg.at("seed").get<std::uint64_t>();
  options.scheme = Scheme::exact_linear;
  options.threads =
      static_cast<unsigned>(cfg.at("threads").get<std::uint64_t>());

  const double oracle_horizon = c.at("oracle_horizon").get<double>();
  const auto oracle_count = c.at("oracle_output_count").get<std::uint64_t>();
  const DecayClock exp_clock = DecayClock::exponential();
  const std::vector<double> oracle_times =
      log_spaced_times(exp_clock, oracle_horizon, oracle_count);

  std::vector<ControlSweepRow> rows;
  ObservationLedger ledger;
  ObservationSavingsReport savings;
  const double x0 = cfg.at("x0").get<double>();

  for (double gain : c.at("gains").get<std::vector<double>>()) {
    ControlDesign design_k{a, sigma0, gain, q1, q2};
    const Certificate cert = certify_gain(design_k);

    const MomentSystem system =
        make_moment_system(design_k.closed_loop_model(), q, 2.0, x0, 0);
    const MomentCurve curve = solve_moment_system(system, oracle_times);
    const DecayFit oracle_fit =
        fit_decay_order(curve.times, curve.total, exp_clock,
                        default_fit_window(curve.times, exp_clock));

    const ControlledRunResult run =
        simulate_controlled_system(design_k, grid, x0, options);
    const DecayFit mc_fit =
        fit_decay_order(run.summary.times, run.summary.estimate, exp_clock,
                        default_fit_window(run.summary.times, exp_clock));

    ledger = run.ledger;
    savings = observation_savings_report(ledger, q1, q2);
    rows.push_back(ControlSweepRow{gain, cert.affirmative, oracle_fit.slope,
                                   mc_fit.slope, ledger.observed_fraction});

    out << "k = " << short_number(gain) << ": "
        << (cert.affirmative ? "certified (gamma " + short_number(cert.rate) + ")"
                             : std::string("uncertified (") + cert.failure + ")")
        << ", oracle rate " << short_number(oracle_fit.slope) << ", mc rate "
        << short_number(mc_fit.slope) << "\n";
  }

  out << "observation fraction (regime 2): "
      << short_number(savings.empirical_observed_fraction) << " empirical vs "
      << short_number(savings.theoretical_observed_fraction)
      << " theoretical; unobserved "
      << short_number(savings.empirical_unobserved_fraction) << " vs "
      << short_number(savings.theoretical_unobserved_fraction) << "\n";

  OutputWriter writer(cfg.at("out_dir").get<std::string>());
  writer.emit("control_sweep.csv", render_csv([&](std::ostream& s) {
                write_control_sweep_csv(s, rows);
              }));
  writer.emit("observation.csv", render_csv([&](std::ostream& s) {
                write_observation_csv(s, ledger, savings);
              }));
  writer.finalize_manifest("control", fnv1a64(cfg.dump()),
                           options.master_seed, options.threads);
  out << "wrote " << (writer.dir / "control_sweep.csv").string() << ", "
      << (writer.dir / "observation.csv").string() << "\n";
}

// ---------------------------------------------------------------------------
// reproduce bundles

struct ReproducePlan {
  std::string name;
  std::uint64_t default_seed;
  Matrix q_raw;
  DecayClock clock;
  double oracle_horizon;
  FitWindow window;
  double mc_horizon = 20.0;
  std::size_t mc_outputs = 11;
  std::size_t n_paths = 100000;
  std::size_t oracle_outputs = 200;
};

ReproducePlan example1_plan() {
  Matrix q(2, 2);
  q(0, 0) = -1.0;
  q(0, 1) = 1.0;
  q(1, 0) = 1.0;
  q(1, 1) = -1.0;
  // The moment system approaches its autonomous limit only algebraically
  // (the slow regime's rate decays like 1/t), so the fit window sits late.
  return ReproducePlan{"example1", 20240601, q, DecayClock::exponential(),
                       700.0,      FitWindow{400.0, 700.0}};
}

ReproducePlan example2_plan() {
  Matrix q(2, 2);
  q(0, 0) = -1.0;
  q(0, 1) = 1.0;
  q(1, 0) = 1.0;
  q(1, 1) = -1.0;
  const DecayClock clock = DecayClock::polynomial(1.0);
  return ReproducePlan{"example2",
                       20240602,
                       q,
                       clock,
                       clock.time_at_log(10.0),
                       FitWindow{clock.time_at_log(6.0), clock.time_at_log(10.0)}};
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char byte : bytes) {
    hash ^= byte;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

nlohmann::json canonical_config(const nlohmann::json& raw,
                                const std::string& command) {
  if (command == "simulate") return canonical_simulate(raw);
  if (command == "oracle") return canonical_oracle(raw);
  if (command == "certify") return canonical_certify(raw);
  if (command == "control") return canonical_control(raw);
  config_fail("unknown command '" + command + "'");
}

ReproduceResult run_reproduce_to(const std::string& which,
                                 const std::string& out_dir, std::uint64_t seed,
                                 unsigned threads, std::ostream& report) {
  const ReproducePlan plan =
      which == "example1"
          ? example1_plan()
          : (which == "example2"
                 ? example2_plan()
                 : throw Error(ErrorCode::ConfigError,
                               "reproduce takes example1 or example2, got '" +
                                   which + "'"));

  const LinearScalarRegimeModel model = build_model(plan.name);
  const TransitionRateMatrix q = validate_rate_matrix(plan.q_raw);
  const double x0 = 1.0;
  const double p = 2.0;

  // Oracle curve + decay-order fit.
  const MomentSystem system = make_moment_system(model, q, p, x0, 0);
  const std::vector<double> oracle_times =
      log_spaced_times(plan.clock, plan.oracle_horizon, plan.oracle_outputs);
  const MomentCurve curve = solve_moment_system(system, oracle_times);
  const DecayFit fit =
      fit_decay_order(curve.times, curve.total, plan.clock, plan.window);

  // Certificates.
  Certificate primary;
  std::optional<Certificate> flagged;
  if (plan.name == "example1") {
    // Regime 1 is exponentially stable with second-moment rate 1; the other
    // regime is decaying, hence nonexpanding.
    primary = single_state_exponential_certificate(0, 1.0, q);
    // The constant-rate two-state reading (psi = 1, theta = 0, strong regime
    // = state 1): psi does not decrease to zero, so the certificate comes
    // back inapplicable; its formula value is kept for the report.
    Certificate attempt =
        eta_two_state(0.0, q.rate(1, 0), q.rate(0, 1), PsiSpec{1.0, 0.0});
    attempt.orientation = "strong regime = state 1";
    flagged = attempt;
  } else {
    // Second-moment rates are 1/(1+t) and 2/(1+t): coefficients (1, 2) of
    // psi = 1/(1+t).
    const double rates[2] = {1.0, 2.0};
    primary = eta_two_state_from_rates(rates, q, PsiSpec{1.0, 1.0});
  }
  const double certificate_order = primary.rate_against(plan.clock);

  // Monte Carlo cross-check on a short horizon, exact scheme.
  const SimulationGrid mc_grid = make_grid(
      plan.mc_horizon, plan.mc_horizon, linear_times(plan.mc_horizon, plan.mc_outputs));
  EnsembleOptions options;
  options.n_paths = plan.n_paths;
  options.master_seed = seed;
  options.scheme = Scheme::exact_linear;
  options.threads = threads;
  const PathEnsembleSummary summary =
      estimate_moment_curve(model, q, 0, x0, p, mc_grid, options);
  const MomentCurve mc_oracle = solve_moment_system(system, mc_grid.output_times);

  // The sample standard error is useless late in these curves (|X|^{2p} has
  // lognormal-type tails and its empirical variance collapses), so the
  // z-scores use the exact standard error from the order-2p moment system.
  const MomentSystem fourth = make_moment_system(model, q, 2.0 * p, x0, 0);
  const MomentCurve mc_oracle4 =
      solve_moment_system(fourth, mc_grid.output_times);

  double worst_sigma = 0.0;
  for (std::size_t k = 0; k < summary.times.size(); ++k) {
    const double diff = std::abs(summary.estimate[k] - mc_oracle.total[k]);
    const double variance =
        mc_oracle4.total[k] - mc_oracle.total[k] * mc_oracle.total[k];
    const double exact_se =
        std::sqrt(std::max(0.0, variance) / static_cast<double>(plan.n_paths));
    if (exact_se > 0.0) {
      worst_sigma = std::max(worst_sigma, diff / exact_se);
    } else if (diff > 0.0) {
      worst_sigma = std::numeric_limits<double>::infinity();
    }
  }

  // Outputs.
  OutputWriter writer(out_dir);
  writer.emit("oracle_curve.csv", render_csv([&](std::ostream& s) {
                write_oracle_curve_csv(s, curve, plan.clock);
              }));
  writer.emit("fit.csv",
              render_csv([&](std::ostream& s) { write_fit_csv(s, fit); }));
  writer.emit("ensemble.csv", render_csv([&](std::ostream& s) {
                write_ensemble_csv(s, summary);
              }));
  writer.emit("certificate.txt", to_flat_record(primary));
  if (flagged)
    writer.emit("certificate_psi_constant.txt", to_flat_record(*flagged));

  json desc;
  desc["example"] = plan.name;
  desc["seed"] = seed;
  desc["threads"] = threads;
  desc["oracle_horizon"] = plan.oracle_horizon;
  desc["fit_window_t"] = {plan.window.t_lo, plan.window.t_hi};
  desc["mc_horizon"] = plan.mc_horizon;
  desc["n_paths"] = plan.n_paths;
  writer.finalize_manifest("reproduce " + plan.name, fnv1a64(desc.dump()), seed,
                           threads);

  // Report.
  report << "reproduce " << plan.name << " (q1 = " << short_number(q.exit_rate(0))
         << ", q2 = " << short_number(q.exit_rate(1)) << ")\n";
  report << "  oracle decay order vs " << plan.clock.describe() << " over t in ["
         << short_number(plan.window.t_lo) << ", "
         << short_number(plan.window.t_hi)
         << "]: " << short_number(fit.gamma_hat) << " +- "
         << short_number(fit.slope_std_error) << "\n";
  report << "  certificate " << to_string(primary.kind) << ": rate "
         << short_number(primary.rate) << " against "
         << primary.clock.describe() << " => order "
         << short_number(certificate_order) << " vs the fit clock\n";
  report << "  soundness: certificate order " << short_number(certificate_order)
         << " <= fitted order " << short_number(fit.gamma_hat) << ": "
         << (certificate_order <= fit.gamma_hat + 0.02 ? "yes" : "NO") << "\n";
  if (flagged) {
    std::string violated;
    for (const auto& flag : flagged->hypothesis_flags)
      if (!flag.satisfied) violated += flag.hypothesis + "; ";
    report << "  constant-psi two-state attempt: inapplicable (" << violated
           << "formula value "
           << short_number(flagged->diagnostics.at("eta_formula_value"))
           << " exceeds the fitted order " << short_number(fit.gamma_hat)
           << ")\n";
  }
  report << "  monte carlo vs oracle on [0, " << short_number(plan.mc_horizon)
         << "]: max |difference| / exact stderr = " << short_number(worst_sigma)
         << " over " << summary.times.size() << " output times ("
         << options.n_paths << " paths)\n";
  report << "  wrote " << (writer.dir / "oracle_curve.csv").string()
         << ", fit.csv, ensemble.csv, certificate.txt, manifest.json\n";

  ReproduceResult result;
  result.fit = fit;
  result.primary_certificate = primary;
  result.flagged_certificate = flagged;
  result.certificate_order = certificate_order;
  result.worst_mc_oracle_sigma = worst_sigma;
  result.out_dir = out_dir;
  return result;
}

int run_reproduce(const std::string& which, const CliOverrides& overrides,
                  std::ostream& out, std::ostream& err) {
  std::uint64_t seed = 0;
  std::string out_dir;
  try {
    const ReproducePlan plan = which == "example1" ? example1_plan()
                               : which == "example2"
                                   ? example2_plan()
                                   : throw Error(ErrorCode::ConfigError,
                                                 "reproduce takes example1 or "
                                                 "example2, got '" +
                                                     which + "'");
    seed = overrides.seed.value_or(plan.default_seed);
    out_dir = overrides.out_dir.value_or("out/" + plan.name);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return 2;
  }
  try {
    run_reproduce_to(which, out_dir, seed, overrides.threads.value_or(1), out);
    return 0;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return 3;
  }
}

int run_command(const std::string& command, const std::string& config_path,
                const CliOverrides& overrides, std::ostream& out,
                std::ostream& err) {
  json cfg;
  try {
    std::ifstream file(config_path);
    if (!file)
      throw Error(ErrorCode::ConfigError,
                  "cannot read config file '" + config_path + "'");
    json raw = json::parse(file);
    cfg = canonical_config(raw, command);
    if (overrides.seed && cfg.contains("seed")) cfg["seed"] = *overrides.seed;
    if (overrides.threads && cfg.contains("threads"))
      cfg["threads"] = *overrides.threads;
    if (overrides.out_dir) cfg["out_dir"] = *overrides.out_dir;
  } catch (const json::exception& e) {
    err << "ConfigError: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return 2;
  }

  try {
    if (command == "simulate") {
      do_simulate(cfg, out);
    } else if (command == "oracle") {
      do_oracle(cfg, out);
    } else if (command == "control") {
      do_control(cfg, out);
    } else {  // certify
      const Certificate cert = do_certify(cfg, out);
      if (!cert.affirmative) {
        err << "certificate inapplicable: " << cert.failure << "\n";
        if (overrides.strict) return 4;
      }
    }
    return 0;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return 3;
  }
}

}  // namespace regime::runner
