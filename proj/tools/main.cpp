#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "regime/errors.hpp"
#include "runner.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool seed_set = false;
  bool threads_set = false;
  bool out_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required) {
  auto* config = cmd->add_option("--config", opts.config, "experiment config (JSON)");
  if (config_required) config->required();
  cmd->add_option("--seed", opts.seed, "override the master seed")
      ->each([&](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--threads", opts.threads,
                  "worker threads for path ensembles (results do not depend "
                  "on this)")
      ->each([&](const std::string&) { opts.threads_set = true; });
  cmd->add_option("--out", opts.out_dir, "output directory")
      ->each([&](const std::string&) { opts.out_set = true; });
}

regime::runner::CliOverrides overrides_from(const CommonOpts& opts, bool strict) {
  regime::runner::CliOverrides o;
  if (opts.seed_set) o.seed = opts.seed;
  if (opts.threads_set) o.threads = opts.threads;
  if (opts.out_set) o.out_dir = opts.out_dir;
  o.strict = strict;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Simulation, moment-decay estimation, and stability certificates for "
      "regime-switching diffusions"};
  app.set_version_flag("--version", std::string(regime::runner::kToolVersion));
  app.require_subcommand(1);

  CommonOpts simulate_opts, oracle_opts, certify_opts, control_opts,
      reproduce_opts, echo_opts;
  bool strict = false;
  std::string reproduce_which, echo_command;

  auto* simulate =
      app.add_subcommand("simulate", "Monte Carlo moment curve of a model");
  add_common(simulate, simulate_opts, true);

  auto* oracle = app.add_subcommand(
      "oracle", "exact moment ODE curve and decay-order fit");
  add_common(oracle, oracle_opts, true);

  auto* certify =
      app.add_subcommand("certify", "compute a stability certificate");
  add_common(certify, certify_opts, true);
  certify->add_flag("--strict", strict,
                    "exit 4 when the certificate is inapplicable");

  auto* control = app.add_subcommand(
      "control", "feedback gain design, closed-loop run, observation report");
  add_common(control, control_opts, true);

  auto* reproduce = app.add_subcommand(
      "reproduce", "bundled oracle + Monte Carlo + certificate pipelines");
  reproduce->add_option("example", reproduce_which, "example1 | example2")
      ->required();
  add_common(reproduce, reproduce_opts, false);

  auto* echo = app.add_subcommand(
      "echo-config", "validate a config and print its canonical form");
  echo->add_option("--command", echo_command, "command the config is for")
      ->required();
  add_common(echo, echo_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  using regime::runner::run_command;
  using regime::runner::run_reproduce;

  if (simulate->parsed())
    return run_command("simulate", simulate_opts.config,
                       overrides_from(simulate_opts, false), std::cout,
                       std::cerr);
  if (oracle->parsed())
    return run_command("oracle", oracle_opts.config,
                       overrides_from(oracle_opts, false), std::cout, std::cerr);
  if (certify->parsed())
    return run_command("certify", certify_opts.config,
                       overrides_from(certify_opts, strict), std::cout,
                       std::cerr);
  if (control->parsed())
    return run_command("control", control_opts.config,
                       overrides_from(control_opts, false), std::cout,
                       std::cerr);
  if (reproduce->parsed())
    return run_reproduce(reproduce_which, overrides_from(reproduce_opts, false),
                         std::cout, std::cerr);
  if (echo->parsed()) {
    try {
      std::ifstream file(echo_opts.config);
      if (!file) {
        std::cerr << "ConfigError: cannot read config file '"
                  << echo_opts.config << "'\n";
        return 2;
      }
      const nlohmann::json raw = nlohmann::json::parse(file);
      std::cout << regime::runner::canonical_config(raw, echo_command).dump(2)
                << "\n";
      return 0;
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "ConfigError: " << e.what() << "\n";
      return 2;
    } catch (const regime::Error& e) {
      std::cerr << e.what() << "\n";
      return 2;
    }
  }
  return 2;
}
