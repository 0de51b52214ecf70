#pragma once

// Batch execution of one configured command: builds the model, runs the
// requested study, and writes the result CSVs plus a JSON manifest.

#include "kfp/config.hpp"
#include "kfp/langevin_oracle.hpp"
#include "kfp/phase_field.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kfp {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitSolver = 3;

/// Smooth exact solution used by the `manufactured` presets,
/// f(x, v) = cos(k x_1)(1 + v_1/2) + 0.3 sin(k x_1) v_1^2 with k = 2 pi / L,
/// together with the continuum source that it solves.
struct ManufacturedCase {
  double length = 1.0;
  double value(std::span<const double> x, std::span<const double> v) const;
  /// -Lap_v f + v . grad_v f - v . grad_x f + b . grad_v f for drift b.
  double source(std::span<const double> x, std::span<const double> v, const DriftField& b) const;
};

/// Discrete problem described by a configuration.
struct ModelSetup {
  DomainSpec domain;
  DriftField drift;
  DiscretizationPtr disc;
  TransportScheme scheme = TransportScheme::Spectral;
  VelocityScheme velocity = VelocityScheme::Spectral;
  SourceFunction source;
  /// Set for the manufactured presets.
  std::optional<ManufacturedCase> manufactured;
};

/// Throws ConfigError for invalid or inconsistent settings.
ModelSetup build_model(const RunConfig& cfg);
ModelSetup build_model(const RunConfig& cfg, int n_x, int cutoff);

/// Comma-separated n_x:N pairs; falls back to the single (n_x, cutoff).
std::vector<std::pair<int, int>> resolutions(const RunConfig& cfg);

std::string resolve_output_dir(const RunConfig& cfg);

struct RunResult {
  int exit_code = kExitOk;
  std::string output_dir;
  std::vector<std::string> artifacts;
  std::string message;
};

/// Human-readable summary lines go to `out`, diagnostics to `err`.
RunResult run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace kfp
