#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "regime/certify.hpp"
#include "regime/oracle.hpp"

namespace regime::runner {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Command-line overrides that take precedence over config values.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out_dir;
  bool strict = false;
};

/// Executes one config-driven command (simulate | oracle | certify |
/// control). Returns the process exit code: 0 success, 2 config error,
/// 3 numerical failure, 4 hypothesis violation under certify --strict.
int run_command(const std::string& command, const std::string& config_path,
                const CliOverrides& overrides, std::ostream& out,
                std::ostream& err);

/// Structured outcome of a bundled reproduce pipeline, for tests and
/// reporting.
struct ReproduceResult {
  DecayFit fit;
  Certificate primary_certificate;
  std::optional<Certificate> flagged_certificate;
  /// Primary certificate rate converted to the fit's clock.
  double certificate_order = 0.0;
  /// max over t > 0 of |MC - oracle| / stderr on the comparison grid.
  double worst_mc_oracle_sigma = 0.0;
  std::string out_dir;
};

/// Bundled pipeline (oracle curve + fit + Monte Carlo comparison +
/// certificates) with pinned seed, grid, and fit window. `which` is
/// "example1" or "example2".
ReproduceResult run_reproduce_to(const std::string& which,
                                 const std::string& out_dir, std::uint64_t seed,
                                 unsigned threads, std::ostream& report);

int run_reproduce(const std::string& which, const CliOverrides& overrides,
                  std::ostream& out, std::ostream& err);

/// Validates a raw config against the command's schema and returns it with
/// all defaults materialized; parsing the result again yields an equivalent
/// experiment. Throws Error{ConfigError} on violations (unknown keys
/// included).
nlohmann::json canonical_config(const nlohmann::json& raw,
                                const std::string& command);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace regime::runner
