#include "kfp/variational_solver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace kfp {

namespace {

using Clock = std::chrono::steady_clock;
using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;
using Triplet = Eigen::Triplet<double>;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// sigma_i * w_i for spatial node i, recovered from the m-weights.
double spatial_weight(const OperatorSet& ops, int i) {
  const Discretization& disc = *ops.disc;
  const double w = ops.mass_m[disc.index(i, 0)];
  return ops.rep == Representation::Nodal ? w / disc.velocity_weight(0) : w;
}

/// Block-diagonal nodal -> coefficient map (identity in coefficient form).
SparseMatrix to_coefficient_matrix(const OperatorSet& ops) {
  if (ops.rep == Representation::Nodal) return nodal_to_coefficient_matrix(*ops.disc);
  SparseMatrix out(ops.disc->size(), ops.disc->size());
  out.setIdentity();
  return out;
}

Eigen::VectorXd in_rep(const OperatorSet& ops, const PhaseField& f) {
  if (f.discretization() != ops.disc && f.disc().size() != ops.disc->size()) {
    throw std::invalid_argument("field and operator set use different discretizations");
  }
  return f.in(ops.rep).data();
}

}  // namespace

std::string to_string(SolveMethod m) {
  switch (m) {
    case SolveMethod::Direct: return "direct";
    case SolveMethod::Variational: return "variational";
    case SolveMethod::FixedPoint: return "fixed_point";
  }
  return "unknown";
}

Eigen::VectorXd j_residual_coefficients(const OperatorSet& ops, const PhaseField& f, const PhaseField& fstar) {
  const Eigen::VectorXd fv = in_rep(ops, f);
  Eigen::VectorXd s = ops.generator() * fv - ops.transport_ghost - in_rep(ops, fstar);
  for (Eigen::Index r = 0; r < s.size(); ++r) {
    if (ops.dirichlet[r]) s[r] = 0.0;
  }
  if (ops.rep == Representation::Coefficient) return s;
  const Discretization& disc = *ops.disc;
  const int nv = disc.n_velocity();
  for (int i = 0; i < disc.n_spatial(); ++i) {
    auto block = s.segment(static_cast<Eigen::Index>(i) * nv, nv);
    block = disc.velocity_to_coeff(Eigen::VectorXd(block));
  }
  return s;
}

JValue j_functional(const OperatorSet& ops, const PhaseField& f, const PhaseField& fstar, double compat_tol) {
  const Discretization& disc = *ops.disc;
  const HermiteBasis& basis = disc.basis();
  const Eigen::VectorXd s = j_residual_coefficients(ops, f, fstar);
  const PhaseField fs = fstar.to_coefficient();
  const PhaseField af = ops.make_field(ops.generator() * in_rep(ops, f)).to_coefficient();

  // Scale for the compatibility test: RMS size of s, f* and A f.
  double vol = 0.0;
  double s2 = 0.0;
  double ref2 = 0.0;
  for (int i = 0; i < disc.n_spatial(); ++i) {
    const double w = disc.x_weight(i);
    vol += w;
    for (int a = 0; a < basis.size(); ++a) {
      const int idx = disc.index(i, a);
      s2 += w * s[idx] * s[idx];
      ref2 += w * (fs.data()[idx] * fs.data()[idx] + af.data()[idx] * af.data()[idx]);
    }
  }
  const double scale = std::sqrt(s2 / vol) + std::sqrt(ref2 / vol);

  JValue out;
  double sum = 0.0;
  for (int i = 0; i < disc.n_spatial(); ++i) {
    const double s0 = std::abs(s[disc.index(i, 0)]);
    out.max_mean_violation = std::max(out.max_mean_violation, scale > 0.0 ? s0 / scale : s0);
    double local = 0.0;
    for (int a = 0; a < basis.size(); ++a) {
      const int deg = basis.degree(a);
      if (deg == 0) continue;
      const double c = s[disc.index(i, a)];
      local += c * c / deg;
    }
    sum += spatial_weight(ops, i) * local;
  }
  out.value = 0.5 * sum;
  if (out.max_mean_violation > compat_tol) {
    out.infinite = true;
    out.value = std::numeric_limits<double>::infinity();
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GeneratorSolver::Impl {
  int border = 0;
  bool iterative = false;
  Eigen::Index n = 0;
  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu;
  Eigen::BiCGSTAB<ColMatrix, Eigen::IncompleteLUT<double>> krylov;
  ColMatrix matrix;
  bool ok = true;
  std::string message;
};

GeneratorSolver::GeneratorSolver(const OperatorSet& ops, const SolveOptions& options) : impl_(std::make_unique<Impl>()) {
  Impl& s = *impl_;
  s.n = ops.system.rows();
  const std::vector<Eigen::VectorXd> kernel = ops.kernel_basis();
  s.border = static_cast<int>(kernel.size());
  if (s.border > 0) {
    std::vector<Triplet> t;
    t.reserve(ops.system.nonZeros() + 2 * s.n * s.border);
    for (int r = 0; r < ops.system.outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(ops.system, r); it; ++it) t.emplace_back(r, static_cast<int>(it.col()), it.value());
    }
    // Row scaling of the border keeps its pivots comparable to the generator.
    for (int b = 0; b < s.border; ++b) {
      const Eigen::VectorXd& k = kernel[b];
      const double w_scale = 1.0 / ops.inner_m(k, k);
      const int extra = static_cast<int>(s.n) + b;
      for (Eigen::Index r = 0; r < s.n; ++r) {
        if (k[r] == 0.0) continue;
        t.emplace_back(static_cast<int>(r), extra, k[r]);
        t.emplace_back(extra, static_cast<int>(r), k[r] * ops.mass_m[r] * w_scale);
      }
    }
    s.matrix.resize(s.n + s.border, s.n + s.border);
    s.matrix.setFromTriplets(t.begin(), t.end());
  } else {
    s.matrix = ColMatrix(ops.system);
  }
  s.matrix.makeCompressed();
  s.iterative = s.n > options.direct_size_limit;
  if (s.iterative) {
    s.krylov.setTolerance(options.residual_tol * 1e-2);
    s.krylov.setMaxIterations(5000);
    s.krylov.compute(s.matrix);
    if (s.krylov.info() != Eigen::Success) {
      s.ok = false;
      s.message = "incomplete LU preconditioner failed";
    }
  } else {
    s.lu.compute(s.matrix);
    if (s.lu.info() != Eigen::Success) {
      s.ok = false;
      s.message = "sparse LU failed: " + s.lu.lastErrorMessage();
    }
  }
}

GeneratorSolver::~GeneratorSolver() = default;
GeneratorSolver::GeneratorSolver(GeneratorSolver&&) noexcept = default;
GeneratorSolver& GeneratorSolver::operator=(GeneratorSolver&&) noexcept = default;

bool GeneratorSolver::ok() const { return impl_->ok; }
const std::string& GeneratorSolver::message() const { return impl_->message; }

Eigen::VectorXd GeneratorSolver::solve(const Eigen::VectorXd& rhs) const {
  const Impl& s = *impl_;
  if (!s.ok) throw std::runtime_error(s.message);
  Eigen::VectorXd b = rhs;
  if (s.border > 0) {
    b.conservativeResize(s.n + s.border);
    b.tail(s.border).setZero();
  }
  Eigen::VectorXd x = s.iterative ? Eigen::VectorXd(s.krylov.solve(b)) : Eigen::VectorXd(s.lu.solve(b));
  if (s.border > 0) x.conservativeResize(s.n);
  return x;
}

double system_residual(const OperatorSet& ops, const Eigen::VectorXd& f, const Eigen::VectorXd& fstar) {
  const Eigen::VectorXd rhs = ops.system_rhs(fstar);
  const Eigen::VectorXd r = ops.system * f - rhs;
  const double denom = ops.norm_m(rhs);
  const double num = ops.norm_m(r);
  return denom > 0.0 ? num / denom : num;
}

SolveReport solve_direct(const OperatorSet& ops, const PhaseField& fstar, const SolveOptions& options) {
  const auto start = Clock::now();
  SolveReport rep;
  rep.method = SolveMethod::Direct;
  rep.fstar = fstar.in(ops.rep);
  GeneratorSolver solver(ops, options);
  if (!solver.ok()) {
    rep.solution = ops.make_field(Eigen::VectorXd::Zero(ops.disc->size()));
    rep.message = solver.message();
    rep.residual = std::numeric_limits<double>::infinity();
    rep.wall_time_s = seconds_since(start);
    return rep;
  }
  const Eigen::VectorXd f = solver.solve(ops.system_rhs(rep.fstar.data()));
  rep.solution = ops.make_field(f);
  rep.iterations = 1;
  rep.residual = system_residual(ops, f, rep.fstar.data());
  rep.j_value = j_functional(ops, rep.solution, rep.fstar);
  rep.converged = std::isfinite(rep.residual) && rep.residual <= options.residual_tol;
  if (!rep.converged) {
    rep.message = ops.has_constant_kernel() ? "residual above tolerance; f* may violate the solvability condition"
                                            : "residual above tolerance; the discrete system may be singular";
  }
  rep.wall_time_s = seconds_since(start);
  return rep;
}

SolveReport solve_variational(const OperatorSet& ops, const PhaseField& fstar, const SolveOptions& options) {
  if (!ops.conservative) throw std::invalid_argument("solve_variational: drift must derive from a potential");
  const auto start = Clock::now();
  const Discretization& disc = *ops.disc;
  const int n = disc.size();
  const HermiteBasis& basis = disc.basis();

  SolveReport rep;
  rep.method = SolveMethod::Variational;
  rep.fstar = fstar.in(ops.rep);

  // Free unknowns: everything except inflow values and, on the Torus, one
  // pinned entry per kernel vector.
  std::vector<int> free_index;
  std::vector<int> position(n, -1);
  std::vector<char> pinned(n, 0);
  for (int r : ops.kernel_pins()) pinned[r] = 1;
  for (int r = 0; r < n; ++r) {
    if (ops.dirichlet[r] || pinned[r]) continue;
    position[r] = static_cast<int>(free_index.size());
    free_index.push_back(r);
  }
  const int nf = static_cast<int>(free_index.size());
  Eigen::VectorXd fixed = Eigen::VectorXd::Zero(n);
  for (int r = 0; r < n; ++r) {
    if (ops.dirichlet[r]) fixed[r] = ops.boundary_values[r];
  }

  // Rows: equation rows of A; columns restricted to the free unknowns.
  const SparseMatrix gen = ops.generator();
  std::vector<Triplet> t;
  t.reserve(gen.nonZeros());
  for (int r = 0; r < n; ++r) {
    if (ops.dirichlet[r]) continue;
    for (SparseMatrix::InnerIterator it(gen, r); it; ++it) {
      const int c = position[it.col()];
      if (c >= 0) t.emplace_back(r, c, it.value());
    }
  }
  SparseMatrix a_free(n, nf);
  a_free.setFromTriplets(t.begin(), t.end());

  Eigen::VectorXd target = rep.fstar.data() + ops.transport_ghost - gen * fixed;
  for (int r = 0; r < n; ++r) {
    if (ops.dirichlet[r]) target[r] = 0.0;
  }

  // Weighted coefficient residual: sqrt(sigma w / max(|alpha|, 1)) P (.)
  Eigen::VectorXd wsqrt(n);
  for (int i = 0; i < disc.n_spatial(); ++i) {
    const double w = spatial_weight(ops, i);
    for (int a = 0; a < basis.size(); ++a) wsqrt[disc.index(i, a)] = std::sqrt(w / std::max(basis.degree(a), 1));
  }
  const SparseMatrix p = to_coefficient_matrix(ops);
  const SparseMatrix h = wsqrt.asDiagonal() * (p * a_free);
  const Eigen::VectorXd c = wsqrt.asDiagonal() * (p * target);
  const SparseMatrix normal = SparseMatrix(h.transpose() * h);
  const Eigen::VectorXd b = h.transpose() * c;

  using Ic = Eigen::IncompleteCholesky<double, Eigen::Lower, Eigen::AMDOrdering<int>>;
  const ColMatrix normal_col(normal);
  Ic precond;
  precond.compute(normal_col);
  const bool use_ic = precond.info() == Eigen::Success;
  const Eigen::VectorXd inv_diag = normal.diagonal().cwiseMax(1e-300).cwiseInverse();
  auto apply_precond = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
    if (use_ic) return precond.solve(r);
    return inv_diag.cwiseProduct(r);
  };

  const double fstar_norm2 = ops.inner_m(rep.fstar.data(), rep.fstar.data());
  const double j_stop = options.tol_j * fstar_norm2;
  const double b_norm = b.norm();
  auto jhat = [&](const Eigen::VectorXd& u) { return 0.5 * (h * u - c).squaredNorm(); };

  Eigen::VectorXd u = Eigen::VectorXd::Zero(nf);
  Eigen::VectorXd r = b;
  Eigen::VectorXd z = apply_precond(r);
  Eigen::VectorXd d = z;
  double rz = r.dot(z);
  std::vector<double> alphas;
  std::vector<double> betas;
  int it = 0;
  rep.j_history.push_back(jhat(u));
  bool done = rep.j_history.back() <= j_stop || b_norm == 0.0;
  while (!done && it < options.max_cg_iter) {
    const Eigen::VectorXd nd = normal * d;
    const double dnd = d.dot(nd);
    if (!(dnd > 0.0)) break;
    const double alpha = rz / dnd;
    u += alpha * d;
    r -= alpha * nd;
    ++it;
    rep.j_history.push_back(jhat(u));
    if (rep.j_history.back() <= j_stop || r.norm() <= options.tol_g * b_norm) {
      done = true;
      alphas.push_back(alpha);
      break;
    }
    z = apply_precond(r);
    const double rz_new = r.dot(z);
    const double beta = rz_new / rz;
    rz = rz_new;
    d = z + beta * d;
    alphas.push_back(alpha);
    betas.push_back(beta);
  }
  rep.iterations = it;

  // Extreme Ritz values of the preconditioned normal operator from the CG
  // recurrence coefficients.
  const int m = std::min<int>(static_cast<int>(alphas.size()), 400);
  if (m > 1) {
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
    for (int j = 0; j < m; ++j) {
      tri(j, j) = 1.0 / alphas[j] + (j > 0 ? betas[j - 1] / alphas[j - 1] : 0.0);
      if (j + 1 < m) {
        tri(j, j + 1) = tri(j + 1, j) = std::sqrt(betas[j]) / alphas[j];
      }
    }
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(tri, Eigen::EigenvaluesOnly).eigenvalues();
    if (ev[0] > 0.0) rep.condition_estimate = ev[m - 1] / ev[0];
  }

  Eigen::VectorXd f = fixed;
  for (int k = 0; k < nf; ++k) f[free_index[k]] += u[k];
  f = ops.project_off_kernel(f);
  rep.solution = ops.make_field(f);
  rep.residual = system_residual(ops, f, rep.fstar.data());
  rep.j_value = j_functional(ops, rep.solution, rep.fstar);
  rep.converged = done;
  if (!done) {
    rep.message = "conjugate gradients stopped before reaching tolerance (condition estimate " +
                  std::to_string(rep.condition_estimate) + ")";
  }
  rep.wall_time_s = seconds_since(start);
  return rep;
}

SolveReport solve_general_b(const OperatorSet& ops, const PhaseField& fstar, const SolveOptions& options) {
  const auto start = Clock::now();
  SolveReport rep;
  rep.method = SolveMethod::FixedPoint;
  rep.fstar = fstar.in(ops.rep);
  const OperatorSet base = assemble(ops.disc, DriftField::zero(), ops.scheme, ops.velocity);
  GeneratorSolver solver(base, options);
  if (!solver.ok()) {
    rep.solution = ops.make_field(Eigen::VectorXd::Zero(ops.disc->size()));
    rep.message = solver.message();
    rep.wall_time_s = seconds_since(start);
    return rep;
  }
  auto l2 = [&](const Eigen::VectorXd& v) { return l2_norm(ops.make_field(v)); };

  Eigen::VectorXd f = Eigen::VectorXd::Zero(ops.disc->size());
  for (int k = 0; k < options.max_iter; ++k) {
    const Eigen::VectorXd source = rep.fstar.data() - ops.drift * f;
    const Eigen::VectorXd next = solver.solve(base.system_rhs(source));
    const double step = l2(next - f);
    rep.fixed_point_trace.push_back(step);
    f = next;
    rep.iterations = k + 1;
    if (ops.drift_is_zero || step <= options.fixed_point_tol * std::max(l2(f), 1e-300) || step == 0.0) {
      rep.converged = true;
      break;
    }
    if (!std::isfinite(step)) break;
  }
  f = ops.project_off_kernel(f);
  rep.solution = ops.make_field(f);
  rep.residual = system_residual(ops, f, rep.fstar.data());
  rep.j_value = ops.conservative ? j_functional(ops, rep.solution, rep.fstar) : JValue{};
  if (!rep.converged) {
    rep.message = "fixed-point iteration did not contract within max_iter; use the direct solver";
  }
  rep.wall_time_s = seconds_since(start);
  return rep;
}

MaxPrincipleResult check_max_principle(const OperatorSet& ops, const SolveReport& report, double slope, double base_tol) {
  const Discretization& disc = *ops.disc;
  MaxPrincipleResult out;
  const Eigen::VectorXd fs = report.fstar.to_nodal().data();
  const double fs_scale = fs.cwiseAbs().maxCoeff();
  bool certified = (fs.array() <= 1e-12 * std::max(fs_scale, 1.0)).all();
  for (int r = 0; r < disc.size(); ++r) {
    if (ops.dirichlet[r] && ops.boundary_values[r] > 0.0) certified = false;
  }
  out.certified = certified;
  double dx = disc.spacing(0);
  for (int j = 1; j < disc.domain().d_x; ++j) dx = std::max(dx, disc.spacing(j));
  out.tolerance = base_tol + slope * dx;
  out.violation = std::max(0.0, report.solution.to_nodal().data().maxCoeff());
  out.pass = certified && out.violation <= out.tolerance;
  if (!certified) out.message = "sign precondition not certified at collocation nodes";
  return out;
}

std::vector<TracePoint> outflow_trace(const OperatorSet& ops, const PhaseField& f) {
  const Discretization& disc = *ops.disc;
  std::vector<TracePoint> out;
  if (disc.domain().kind != DomainKind::Interval) return out;
  const PhaseField nodal = f.to_nodal();
  const int last = disc.n_spatial() - 1;
  for (int i : {0, last}) {
    for (int k = 0; k < disc.n_velocity(); ++k) {
      if (ops.dirichlet[disc.index(i, k)]) continue;
      const auto v = disc.velocity_node(k);
      out.push_back({disc.x(i), std::vector<double>(v.begin(), v.end()), nodal.at(i, k)});
    }
  }
  return out;
}

CaccioppoliResult caccioppoli_check(const PhaseField& f, const PhaseField& fstar, double r, std::vector<double> center) {
  const Discretization& disc = f.disc();
  const DomainSpec& dom = disc.domain();
  const HermiteBasis& basis = disc.basis();
  if (static_cast<int>(center.size()) != dom.d_x) throw std::invalid_argument("caccioppoli_check: center dimension");
  if (!(r > 0.0)) throw std::invalid_argument("caccioppoli_check: radius must be positive");

  auto distance = [&](int i) {
    double s = 0.0;
    for (int j = 0; j < dom.d_x; ++j) {
      double d = std::abs(disc.x(i, j) - center[j]);
      if (dom.kind == DomainKind::Torus) d = std::min(d, dom.extents[j] - d);
      s += d * d;
    }
    return std::sqrt(s);
  };

  const PhaseField natural = f.in(disc.default_representation());
  const PhaseField c = f.to_coefficient();
  const PhaseField tf = transport_apply(natural).to_coefficient();
  const PhaseField fs = fstar.to_coefficient();

  double mean_num = 0.0;
  double mean_den = 0.0;
  for (int i = 0; i < disc.n_spatial(); ++i) {
    if (distance(i) > r) continue;
    mean_num += disc.x_weight(i) * c.at(i, 0);
    mean_den += disc.x_weight(i);
  }
  if (mean_den == 0.0) throw std::invalid_argument("caccioppoli_check: ball contains no grid nodes");
  const double mean = mean_num / mean_den;

  double grad2 = 0.0;
  double trans2 = 0.0;
  double osc2 = 0.0;
  double src2 = 0.0;
  double size2 = 0.0;
  for (int i = 0; i < disc.n_spatial(); ++i) {
    const double dist = distance(i);
    if (dist > r) continue;
    const double w = disc.x_weight(i);
    const bool inner = dist <= 0.5 * r;
    for (int a = 0; a < basis.size(); ++a) {
      const int deg = basis.degree(a);
      const double ca = c.at(i, a);
      if (inner) {
        grad2 += w * deg * ca * ca;
        trans2 += w * tf.at(i, a) * tf.at(i, a) / (1.0 + deg);
      }
      const double centered = a == 0 ? ca - mean : ca;
      osc2 += w * centered * centered;
      size2 += w * ca * ca;
      src2 += w * fs.at(i, a) * fs.at(i, a) / (1.0 + deg);
    }
  }
  CaccioppoliResult out;
  out.lhs = std::sqrt(grad2) + std::sqrt(trans2);
  out.rhs = std::sqrt(osc2) + std::sqrt(src2);
  // A field that is constant on the ball up to roundoff has nothing to control.
  const double floor = 1e-12 * std::sqrt(size2);
  out.ratio = out.rhs > floor ? out.lhs / out.rhs : 0.0;
  return out;
}

}  // namespace kfp
