#pragma once

// Time stepping of d_t f + A f = f* with time-independent inflow data, and
// measurement of the exponential relaxation rate toward f_inf.

#include "kfp/phase_field.hpp"
#include "kfp/variational_solver.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace kfp {

enum class TimeScheme { ImplicitEuler, CrankNicolson };

struct DecayTrace {
  std::vector<double> times;
  /// ||f(t) - f_inf||_{L2(U; L2_gamma)}
  std::vector<double> norms;
  /// Same distance in the m-weighted norm.
  std::vector<double> norms_m;
  double lambda_fit = 0.0;
  double prefactor_fit = 0.0;
  double window_start = 0.0;
  double window_end = 0.0;
  int fit_samples = 0;
};

struct EvolveOptions {
  double final_time = 10.0;
  /// Non-positive means final_time / 400.
  double dt = 0.0;
  TimeScheme scheme = TimeScheme::ImplicitEuler;
  /// Fit window; negative endpoints default to [T/2, T].
  double window_start = -1.0;
  double window_end = -1.0;
};

struct EvolveResult {
  DecayTrace trace;
  PhaseField final_field;
  PhaseField equilibrium;
  int steps = 0;
  bool ok = true;
  std::string message;
};

/// f_inf is the stationary solve with the same data; on a Torus it also
/// carries the kernel component of f_init, which the evolution conserves.
EvolveResult evolve(const OperatorSet& ops, const PhaseField& fstar, const PhaseField& f_init,
                    const EvolveOptions& options = {});

struct DecayFit {
  double lambda = 0.0;
  double prefactor = 0.0;
  int samples = 0;
  /// True when the norms reached numerical zero inside the window and only the
  /// prefix was fitted.
  bool truncated = false;
};

/// Least-squares fit of log norm = log prefactor - lambda t over the window.
/// Throws std::invalid_argument with fewer than 10 usable samples.
DecayFit decay_rate(const std::vector<double>& times, const std::vector<double>& norms, double t0, double t1);
DecayFit decay_rate(const DecayTrace& trace, double t0, double t1);

struct SpectralGapOptions {
  /// Dense eigen-decomposition below this many unknowns.
  int dense_limit = 400;
  int krylov_dim = 120;
  int restarts = 6;
  double shift = -0.05;
  double tol = 1e-9;
};

struct SpectralGap {
  double gap = 0.0;
  double imag = 0.0;
  bool converged = false;
  std::string method;
};

/// Smallest real part of the spectrum of A restricted to the free unknowns
/// (inflow values removed), excluding the stationary kernel.
SpectralGap spectral_gap(const OperatorSet& ops, const SpectralGapOptions& options = {});

/// Columns: t, norm, log_norm.
void write_decay_csv(std::ostream& out, const DecayTrace& trace);

}  // namespace kfp
