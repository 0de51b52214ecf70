#pragma once

// Monte Carlo representation of Dirichlet solutions through the Langevin
// diffusion dX = V dt, dV = (-b(X, V) - V) dt + sqrt(2) dW, whose generator
// is the negative of the Kramers operator. Paths run until X leaves the
// Interval; the payoff is f0 at the exit state plus the integral of f*.

#include "kfp/phase_field.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace kfp {

using SourceFunction = std::function<double(std::span<const double> x, std::span<const double> v)>;

struct Probe {
  double x = 0.5;
  std::vector<double> v{0.0};
};

struct OracleOptions {
  int n_paths = 100000;
  /// Non-positive selects 1e-3 * L / 6.
  double dt_sde = 0.0;
  double time_cap = 1e4;
  std::uint64_t seed = 1;
  /// Worker threads; 0 uses the hardware concurrency.
  int threads = 0;
};

struct PathEstimate {
  double probe_x = 0.0;
  std::vector<double> probe_v;
  double estimate = 0.0;
  double stderr_ = 0.0;
  int n_paths = 0;
  double mean_exit_time = 0.0;
  double dt_sde = 0.0;
  int capped = 0;
  double capped_fraction = 0.0;
  /// More than 0.1% of the paths hit the time cap.
  bool flagged = false;
  /// Exits whose interpolated velocity points back into the domain.
  int wrong_side_exits = 0;
};

double default_sde_step(double length);

/// Requires an Interval domain and a probe strictly inside (0, L).
PathEstimate sample_solution(const DomainSpec& domain, int d_v, const DriftField& b, const SourceFunction& fstar,
                             const BoundaryData& f0, const Probe& probe, const OracleOptions& options = {});

/// Point value of a discrete field at an arbitrary (x, v): linear in x between
/// spatial nodes, Hermite expansion in v.
double field_value_at(const PhaseField& f, std::span<const double> x, std::span<const double> v);

struct MomentRow {
  std::string name;
  double target = 0.0;
  double estimate = 0.0;
  double stderr_ = 0.0;
  bool pass = false;
};

struct MomentTable {
  double horizon = 0.0;
  int n_paths = 0;
  double dt_sde = 0.0;
  /// Mean, variance and fourth moment of V_1, against 0, 1 and 3.
  std::vector<MomentRow> rows;
  bool pass = false;
};

struct EquilibriumOptions {
  double horizon = 10.0;
  int n_paths = 20000;
  double dt_sde = 1e-3;
  std::uint64_t seed = 1;
  int threads = 0;
  /// Initial velocity variance (0 is a cold start).
  double initial_variance = 0.0;
  double sigmas = 4.0;
};

/// b = 0 on a Torus: the position decouples and V is an Ornstein-Uhlenbeck
/// process started from N(0, initial_variance).
MomentTable equilibrium_check(int d_v, const EquilibriumOptions& options = {});

/// Columns: probe_x, probe_v, estimate, stderr, n_paths, capped_fraction.
/// probe_v joins the components with ';'.
void write_estimate_csv(std::ostream& out, const std::vector<PathEstimate>& rows);
/// Columns: moment, target, estimate, stderr, pass.
void write_moment_csv(std::ostream& out, const MomentTable& table);

}  // namespace kfp
