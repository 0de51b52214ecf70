#pragma once

// Discrete certification of the hypoelliptic Poincare and Hormander
// inequalities. All two-term right-hand sides use the Hilbertian convention:
// the Poincare pencil is Q(f) = ||grad_v f||^2 + ||D f||^2_{H^-1}, so the
// reported constant C satisfies ||f - (f)|| <= C Q(f)^{1/2}.

#include "kfp/phase_field.hpp"
#include "kfp/variational_solver.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace kfp {

enum class PoincareKind {
  Velocity,  // functions of v only: ||f - <f>|| <= C ||grad_v f||
  HypMean,   // mean-zero functions on a Torus or Interval
  HypZero,   // Interval, vanishing on the inflow boundary
  Kinetic,   // space-time Torus with D = v . grad_x - d_t
};

std::string to_string(PoincareKind kind);

struct PencilOptions {
  int max_iter = 300;
  double tol = 1e-12;
  std::uint64_t seed = 7;
};

struct PencilResult {
  double lambda_min = 0.0;
  Eigen::VectorXd eigenvector;
  int iterations = 0;
  bool converged = false;
  std::string method;
};

/// Smallest eigenvalue of Q u = lambda W u (W diagonal, positive) on the
/// W-orthogonal complement of `kernel`, where Q must vanish. Shift-invert
/// Lanczos with full reorthogonalization; the final value is the Rayleigh
/// quotient of the converged Ritz vector.
PencilResult smallest_pencil_eigenvalue(const SparseMatrix& q, const Eigen::VectorXd& w,
                                        const std::vector<Eigen::VectorXd>& kernel, const PencilOptions& options = {});

/// The assembled pencil for a Poincare problem, in the ambient coordinates
/// used by the solver (coefficients on a Torus, nodal values on an Interval).
struct PoincarePencil {
  SparseMatrix q;
  Eigen::VectorXd w;
  std::vector<Eigen::VectorXd> kernel;
  /// For HypZero: the global index of each unknown; empty otherwise.
  std::vector<int> unknowns;
};

struct PoincareSetup {
  PoincareKind kind = PoincareKind::HypMean;
  DomainSpec domain = DomainSpec::torus(6.283185307179586, 32);
  int d_v = 1;
  int cutoff = 8;
  /// Kinetic only: time slices over one period of length `period`.
  int n_t = 16;
  double period = 6.283185307179586;
};

PoincarePencil poincare_pencil(const PoincareSetup& setup);

struct RefinementRow {
  int n_x = 0;
  int cutoff = 0;
  double constant = 0.0;
};

struct InequalityReport {
  double constant = 0.0;
  double lambda_min = 0.0;
  std::vector<RefinementRow> refinement_table;
  std::string method;
  int iterations = 0;
  bool converged = false;
  // Hormander studies.
  double alpha = 0.0;
  double v0 = 0.0;
  double max_ratio = 0.0;
  std::vector<double> ratios;
  /// theta = 1/2 variant: ||f||_{H^{alpha/2}(L2_gamma)} / ||f||_{H1hyp}.
  double max_ratio_half = 0.0;
  std::vector<double> ratios_half;
};

InequalityReport poincare_constant(const PoincareSetup& setup, const PencilOptions& options = {});

/// Runs the setup at each (n_x, N) pair and fills the refinement table.
InequalityReport poincare_refinement(const PoincareSetup& setup, const std::vector<std::pair<int, int>>& resolutions,
                                     const PencilOptions& options = {});

/// Closed-form Rayleigh quotient of the single trial mode exp(i 2 pi x / L) h_0.
double poincare_trial_mode_bound(double length);

/// Smooth radial cutoff: 1 for |v| <= v0/2, 0 for |v| >= v0, quintic smoothstep between.
double velocity_mask(double speed, double v0);
inline constexpr const char* kVelocityMaskVersion = "c2-smoothstep-v1";

struct EnsembleSpec {
  int count = 100;
  int max_wavenumber = 6;
  int max_degree = 6;
  double v0 = 3.0;
  std::uint64_t seed = 2024;
  /// Kinetic ensembles: temporal modes |omega| <= max_frequency; 0 gives
  /// time-independent samples.
  int max_frequency = 3;
};

/// Random fields g(x, v) = sum a_{k,alpha} trig(k x) h_alpha(v) with Gaussian
/// amplitudes decaying in |k| and |alpha|, multiplied by the velocity mask at the
/// collocation nodes. The field is defined in the continuum, so the same seed
/// gives the same function at every resolution. Fields come back in the
/// discretization's default representation.
std::vector<PhaseField> random_cutoff_ensemble(const DiscretizationPtr& disc, const EnsembleSpec& spec);

/// Space-time version on n_t periodic slices over [0, period); Torus only.
std::vector<TimeSeriesField> random_cutoff_time_ensemble(const DiscretizationPtr& disc, int n_t, double period,
                                                         const EnsembleSpec& spec);

/// ||f||^2_{H^s(X)} = |U| sum_k (1+|k|^2)^s ||fhat_k||^2_X on a Torus.
double fractional_multiplier_norm(const PhaseField& f, double s, NormKind velocity_norm = NormKind::Hm1);

struct HeatKernelNorm {
  double value = 0.0;
  /// Analytic estimate of the neglected t in (0, 4^-levels) contribution
  /// (already included in value).
  double tail = 0.0;
};

/// ||f||^2_{L2(X)} + int_0^1 t^-alpha ||grad Phi_t * f||^2_{L2(X)} dt, with the
/// time integral split on the geometric levels t_j = 4^-j and 8-point
/// Gauss-Legendre on each level.
HeatKernelNorm heatkernel_fractional_norm(const PhaseField& f, double alpha, int levels = 20,
                                          NormKind velocity_norm = NormKind::Hm1);

InequalityReport hormander_ratio(const std::vector<PhaseField>& ensemble, double alpha, double v0);

InequalityReport kinetic_hormander_ratio(const std::vector<TimeSeriesField>& ensemble, double alpha, double v0);

struct CaccioppoliSetup {
  DomainSpec domain = DomainSpec::interval(1.0, 64);
  int d_v = 1;
  int cutoff = 16;
  int samples = 50;
  double radius = 0.3;
  std::vector<double> center{0.5};
  /// Sample s uses b = grad H with H = a_s cos(2 pi x / L), a_s uniform in
  /// [-drift_amplitude, drift_amplitude].
  double drift_amplitude = 0.15;
  EnsembleSpec sources{50, 4, 4, 3.0, 77, 0};
};

struct CaccioppoliStudy {
  std::vector<CaccioppoliResult> results;
  double max_ratio = 0.0;
  bool all_finite = true;
  double max_residual = 0.0;
};

/// Direct solves with random smooth sources (zero inflow data on an
/// Interval) and the local energy ratio of each solution.
CaccioppoliStudy caccioppoli_ensemble(const CaccioppoliSetup& setup);

/// CSV writers: resolution columns first, then the constant or ratio.
void write_refinement_csv(std::ostream& out, const InequalityReport& report);
void write_ratio_csv(std::ostream& out, int n_x, int cutoff, const InequalityReport& report, bool header = true);
/// Columns: n_x, N, sample, lhs, rhs, ratio.
void write_caccioppoli_csv(std::ostream& out, int n_x, int cutoff, const CaccioppoliStudy& study, bool header = true);

}  // namespace kfp
