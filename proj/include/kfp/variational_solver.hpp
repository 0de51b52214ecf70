#pragma once

// Stationary Kramers solvers.
//
// The functional J[f, f*] is evaluated node by node in x: with s = A f - f*
// expanded in Hermite modes (equation rows only; inflow rows are excluded),
// J = 1/2 sum_i sigma_i w_i sum_{alpha != 0} s_alpha(x_i)^2 / |alpha| and
// J = +inf whenever some s_0(x_i) does not vanish.

#include "kfp/phase_field.hpp"

#include <memory>
#include <string>
#include <vector>

namespace kfp {

struct JValue {
  bool infinite = false;
  double value = 0.0;
  /// max_i |s_0(x_i)| relative to the norm of s.
  double max_mean_violation = 0.0;
};

/// Per-node Hermite coefficients of A f - f* on equation rows.
Eigen::VectorXd j_residual_coefficients(const OperatorSet& ops, const PhaseField& f, const PhaseField& fstar);

JValue j_functional(const OperatorSet& ops, const PhaseField& f, const PhaseField& fstar, double compat_tol = 1e-10);

enum class SolveMethod { Direct, Variational, FixedPoint };
std::string to_string(SolveMethod m);

struct SolveReport {
  PhaseField solution;
  PhaseField fstar;
  double residual = 0.0;
  JValue j_value;
  int iterations = 0;
  SolveMethod method = SolveMethod::Direct;
  std::vector<double> fixed_point_trace;
  std::vector<double> j_history;
  double wall_time_s = 0.0;
  bool converged = false;
  std::string message;
  /// Only filled by the variational solver.
  double condition_estimate = 0.0;
};

struct SolveOptions {
  double residual_tol = 1e-9;
  /// Variational stopping: J <= tol_j * ||f*||_m^2 or relative gradient <= tol_g.
  double tol_j = 1e-22;
  double tol_g = 1e-13;
  int max_cg_iter = 20000;
  double fixed_point_tol = 1e-8;
  int max_iter = 200;
  /// Above this many unknowns the direct path switches to preconditioned BiCGSTAB.
  int direct_size_limit = 200000;
};

/// Factorized generator, reused across right-hand sides. On the Torus the
/// kernel is handled by the bordered system [A K; K^T M 0] with K the kernel
/// basis, which returns the solution m-orthogonal to the kernel.
class GeneratorSolver {
 public:
  GeneratorSolver(const OperatorSet& ops, const SolveOptions& options = {});
  ~GeneratorSolver();
  GeneratorSolver(GeneratorSolver&&) noexcept;
  GeneratorSolver& operator=(GeneratorSolver&&) noexcept;

  /// Solves system * f = rhs (rhs already carries Dirichlet values).
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  bool ok() const;
  const std::string& message() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// m-weighted relative residual of the square system.
double system_residual(const OperatorSet& ops, const Eigen::VectorXd& f, const Eigen::VectorXd& fstar);

SolveReport solve_direct(const OperatorSet& ops, const PhaseField& fstar, const SolveOptions& options = {});

/// Conjugate gradients on the normal equations of the extended quadratic
/// Jhat (J with the alpha = 0 residual added at weight 1). Jhat equals J on
/// the constraint set and shares its null minimizer. Requires a conservative drift.
SolveReport solve_variational(const OperatorSet& ops, const PhaseField& fstar, const SolveOptions& options = {});

/// Picard iteration f <- S f with S the b = 0 solve driven by f* - b . grad_v f.
/// `ops` carries the drift; the b = 0 operator is rebuilt from its discretization.
SolveReport solve_general_b(const OperatorSet& ops, const PhaseField& fstar, const SolveOptions& options = {});

struct MaxPrincipleResult {
  double violation = 0.0;
  double tolerance = 0.0;
  bool certified = false;
  bool pass = false;
  std::string message;
};

/// max(0, sup f) at the collocation nodes. Certification requires f* <= 0 at
/// every node and f0 <= 0 on every inflow node; the default tolerance is
/// 1e-8 + slope * dx.
MaxPrincipleResult check_max_principle(const OperatorSet& ops, const SolveReport& report, double slope = 2.0,
                                       double base_tol = 1e-8);

/// Solution value at one outflow boundary node, where no data is imposed.
struct TracePoint {
  double x = 0.0;
  std::vector<double> v;
  double value = 0.0;
};

/// Values of f on the boundary nodes outside the inflow set (empty on a Torus).
std::vector<TracePoint> outflow_trace(const OperatorSet& ops, const PhaseField& f);

struct CaccioppoliResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
};

/// Ball B_r around `center` (periodic distance on the Torus). The left side is
/// ||grad_v f||_{L2(B_{r/2})} + ||v . grad_x f||_{L2(B_{r/2}; H^-1)}, the right
/// side ||f - (f)_{B_r}||_{L2(B_r)} + ||f*||_{L2(B_r; H^-1)}.
/// The ratio is reported as 0 when the right side sits at roundoff level.
CaccioppoliResult caccioppoli_check(const PhaseField& f, const PhaseField& fstar, double r, std::vector<double> center);

}  // namespace kfp
