#include "kfp/kinetic_evolution.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

namespace kfp {

namespace {

using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

/// Generator with Dirichlet rows removed (zeroed).
SparseMatrix equation_generator(const OperatorSet& ops) {
  SparseMatrix g = ops.generator();
  g.prune([&](Eigen::Index row, Eigen::Index, double) { return !ops.dirichlet[static_cast<std::size_t>(row)]; });
  return g;
}

/// I + theta dt G on equation rows, identity on Dirichlet rows.
SparseMatrix step_matrix(const SparseMatrix& g_eq, double theta_dt) {
  const int n = static_cast<int>(g_eq.rows());
  SparseMatrix id(n, n);
  id.setIdentity();
  SparseMatrix m = id + theta_dt * g_eq;
  m.makeCompressed();
  return m;
}

double distance_dx_dgamma(const OperatorSet& ops, const Eigen::VectorXd& f, const Eigen::VectorXd& finf) {
  return l2_norm(ops.make_field(f - finf));
}

}  // namespace

EvolveResult evolve(const OperatorSet& ops, const PhaseField& fstar, const PhaseField& f_init,
                    const EvolveOptions& options) {
  if (!(options.final_time > 0.0)) throw std::invalid_argument("evolve: final_time must be positive");
  const double dt = options.dt > 0.0 ? options.dt : options.final_time / 400.0;
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("evolve: dt must be positive");
  const int steps = std::max(1, static_cast<int>(std::llround(options.final_time / dt)));

  const Eigen::VectorXd src = fstar.in(ops.rep).data();
  Eigen::VectorXd f = f_init.in(ops.rep).data();
  if (src.size() != ops.disc->size() || f.size() != ops.disc->size()) {
    throw std::invalid_argument("evolve: field size does not match the operator set");
  }

  EvolveResult result;
  const SolveReport stationary = solve_direct(ops, fstar);
  if (!stationary.converged) {
    result.ok = false;
    result.message = "stationary solve failed: " + stationary.message;
  }
  Eigen::VectorXd finf = stationary.solution.in(ops.rep).data();
  if (!ops.kernel_basis().empty()) finf += f - ops.project_off_kernel(f);
  result.equilibrium = ops.make_field(finf);

  // Inflow values are held at the boundary data for all t.
  for (int r = 0; r < f.size(); ++r) {
    if (ops.dirichlet[r]) f[r] = ops.boundary_values[r];
  }

  const SparseMatrix g_eq = equation_generator(ops);
  const double theta = options.scheme == TimeScheme::CrankNicolson ? 0.5 : 1.0;
  const SparseMatrix m = step_matrix(g_eq, theta * dt);
  const ColMatrix mc = m;
  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(mc);
  lu.factorize(mc);
  if (lu.info() != Eigen::Success) throw std::runtime_error("evolve: step matrix factorization failed");

  Eigen::VectorXd forcing = ops.system_rhs(src);
  for (int r = 0; r < forcing.size(); ++r) {
    if (!ops.dirichlet[r]) forcing[r] *= dt;
  }

  DecayTrace& trace = result.trace;
  auto record = [&](double t) {
    trace.times.push_back(t);
    trace.norms.push_back(distance_dx_dgamma(ops, f, finf));
    trace.norms_m.push_back(ops.norm_m(f - finf));
  };
  record(0.0);
  for (int s = 1; s <= steps; ++s) {
    Eigen::VectorXd rhs = f;
    if (theta < 1.0) rhs -= (1.0 - theta) * dt * (g_eq * f);
    for (int r = 0; r < rhs.size(); ++r) {
      rhs[r] = ops.dirichlet[r] ? forcing[r] : rhs[r] + forcing[r];
    }
    f = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !f.allFinite()) {
      result.ok = false;
      result.message = "linear solve failed at step " + std::to_string(s);
      break;
    }
    record(s * dt);
  }
  result.steps = static_cast<int>(trace.times.size()) - 1;
  result.final_field = ops.make_field(f);

  const double t_end = trace.times.back();
  trace.window_start = options.window_start >= 0.0 ? options.window_start : 0.5 * t_end;
  trace.window_end = options.window_end >= 0.0 ? options.window_end : t_end;
  try {
    const DecayFit fit = decay_rate(trace, trace.window_start, trace.window_end);
    trace.lambda_fit = fit.lambda;
    trace.prefactor_fit = fit.prefactor;
    trace.fit_samples = fit.samples;
  } catch (const std::invalid_argument& e) {
    // Already at equilibrium or too few samples: no rate to report.
    trace.lambda_fit = std::numeric_limits<double>::quiet_NaN();
    trace.prefactor_fit = std::numeric_limits<double>::quiet_NaN();
    trace.fit_samples = 0;
    if (result.message.empty()) result.message = e.what();
  }
  return result;
}

DecayFit decay_rate(const std::vector<double>& times, const std::vector<double>& norms, double t0, double t1) {
  if (times.size() != norms.size()) throw std::invalid_argument("decay_rate: times and norms differ in length");
  if (!(t1 > t0)) throw std::invalid_argument("decay_rate: empty window");
  const double floor = 1e-12 * (norms.empty() ? 0.0 : std::max(norms.front(), 1e-300));

  DecayFit fit;
  std::vector<double> ts, ys;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t0 || times[k] > t1) continue;
    if (!(norms[k] > floor) || !(norms[k] > 0.0)) {
      fit.truncated = true;
      break;
    }
    ts.push_back(times[k]);
    ys.push_back(std::log(norms[k]));
  }
  if (ts.size() < 10) {
    throw std::invalid_argument("decay_rate: fewer than 10 positive samples in the fit window");
  }
  const double n = static_cast<double>(ts.size());
  double tm = 0.0, ym = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    tm += ts[k];
    ym += ys[k];
  }
  tm /= n;
  ym /= n;
  double stt = 0.0, sty = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    stt += (ts[k] - tm) * (ts[k] - tm);
    sty += (ts[k] - tm) * (ys[k] - ym);
  }
  const double slope = sty / stt;
  fit.lambda = -slope;
  fit.prefactor = std::exp(ym - slope * tm);
  fit.samples = static_cast<int>(ts.size());
  return fit;
}

DecayFit decay_rate(const DecayTrace& trace, double t0, double t1) { return decay_rate(trace.times, trace.norms, t0, t1); }

namespace {

struct FreeOperator {
  SparseMatrix a;
  std::vector<int> free_index;
};

FreeOperator free_block(const OperatorSet& ops) {
  const SparseMatrix g = ops.generator();
  const int n = static_cast<int>(g.rows());
  std::vector<int> map(n, -1);
  FreeOperator out;
  for (int r = 0; r < n; ++r) {
    if (!ops.dirichlet[r]) {
      map[r] = static_cast<int>(out.free_index.size());
      out.free_index.push_back(r);
    }
  }
  std::vector<Eigen::Triplet<double>> t;
  for (int c = 0; c < g.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(g, c); it; ++it) {
      const int rr = map[it.row()];
      const int cc = map[it.col()];
      if (rr >= 0 && cc >= 0) t.emplace_back(rr, cc, it.value());
    }
  }
  const int m = static_cast<int>(out.free_index.size());
  out.a.resize(m, m);
  out.a.setFromTriplets(t.begin(), t.end());
  out.a.makeCompressed();
  return out;
}

double kernel_threshold(const SparseMatrix& a) {
  double scale = 1.0;
  for (int c = 0; c < a.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(a, c); it; ++it) scale = std::max(scale, std::abs(it.value()));
  }
  return 1e-8 * scale;
}

/// Selects the eigenvalue with the smallest real part among those that are
/// not kernel eigenvalues. Kernel eigenvalues are the `kernel_dim` values
/// nearest zero, provided they fall below the threshold.
bool pick_gap(std::vector<std::complex<double>> values, int kernel_dim, double threshold, SpectralGap& out) {
  std::sort(values.begin(), values.end(),
            [](const auto& x, const auto& y) { return std::abs(x) < std::abs(y); });
  int dropped = 0;
  std::vector<std::complex<double>> kept;
  for (const auto& z : values) {
    if (dropped < kernel_dim && std::abs(z) <= threshold) {
      ++dropped;
      continue;
    }
    kept.push_back(z);
  }
  if (kept.empty()) return false;
  const auto best = std::min_element(kept.begin(), kept.end(), [](const auto& x, const auto& y) {
    if (x.real() != y.real()) return x.real() < y.real();
    return std::abs(x.imag()) < std::abs(y.imag());
  });
  out.gap = best->real();
  out.imag = std::abs(best->imag());
  return true;
}

}  // namespace

SpectralGap spectral_gap(const OperatorSet& ops, const SpectralGapOptions& options) {
  const FreeOperator block = free_block(ops);
  const int n = static_cast<int>(block.a.rows());
  if (n == 0) throw std::invalid_argument("spectral_gap: no free unknowns");
  const int kernel_dim = static_cast<int>(ops.kernel_basis().size());
  const double threshold = kernel_threshold(block.a);
  SpectralGap out;

  if (n <= options.dense_limit) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(block.a), false);
    if (es.info() != Eigen::Success) throw std::runtime_error("spectral_gap: dense eigensolver failed");
    std::vector<std::complex<double>> values(es.eigenvalues().data(), es.eigenvalues().data() + n);
    out.converged = pick_gap(values, kernel_dim, threshold, out);
    out.method = "dense-eigen";
    if (!out.converged) throw std::runtime_error("spectral_gap: spectrum is entirely kernel");
    return out;
  }

  // Shift-invert Arnoldi on (A - sigma I)^-1 with explicit restarts from the
  // real part of the selected Ritz vector.
  SparseMatrix id(n, n);
  id.setIdentity();
  const ColMatrix shifted = ColMatrix(block.a - options.shift * id);
  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(shifted);
  lu.factorize(shifted);
  if (lu.info() != Eigen::Success) throw std::runtime_error("spectral_gap: shifted factorization failed");

  const int m = std::min(options.krylov_dim, n - 1);
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> normal;
  Eigen::VectorXd start(n);
  for (int k = 0; k < n; ++k) start[k] = normal(rng);

  for (int restart = 0; restart <= options.restarts; ++restart) {
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, m + 1);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m + 1, m);
    v.col(0) = start.normalized();
    int built = m;
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd w = lu.solve(v.col(j));
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i <= j; ++i) {
          const double c = v.col(i).dot(w);
          h(i, j) += c;
          w -= c * v.col(i);
        }
      }
      h(j + 1, j) = w.norm();
      if (h(j + 1, j) < 1e-14) {
        built = j + 1;
        break;
      }
      v.col(j + 1) = w / h(j + 1, j);
    }
    const Eigen::MatrixXd hm = h.topLeftCorner(built, built);
    Eigen::EigenSolver<Eigen::MatrixXd> es(hm, true);
    if (es.info() != Eigen::Success) throw std::runtime_error("spectral_gap: Hessenberg eigensolver failed");
    const double beta = built < m ? 0.0 : h(built, built - 1);

    std::vector<std::complex<double>> lambdas;
    std::vector<int> columns;
    for (int k = 0; k < built; ++k) {
      const std::complex<double> theta = es.eigenvalues()[k];
      if (std::abs(theta) < 1e-300) continue;
      const double resid = beta * std::abs(es.eigenvectors()(built - 1, k)) / std::abs(theta);
      const std::complex<double> lambda = options.shift + 1.0 / theta;
      if (resid <= options.tol * std::max(1.0, std::abs(lambda)) * std::abs(lambda)) {
        lambdas.push_back(lambda);
        columns.push_back(k);
      }
    }
    if (pick_gap(lambdas, kernel_dim, threshold, out)) {
      out.converged = true;
      out.method = "shift-invert-arnoldi";
      return out;
    }
    // Restart from the Ritz vector with the smallest real part overall.
    int best = 0;
    double best_re = std::numeric_limits<double>::infinity();
    for (int k = 0; k < built; ++k) {
      const std::complex<double> theta = es.eigenvalues()[k];
      if (std::abs(theta) < 1e-300) continue;
      const std::complex<double> lambda = options.shift + 1.0 / theta;
      if (std::abs(lambda) <= threshold) continue;
      if (lambda.real() < best_re) {
        best_re = lambda.real();
        best = k;
      }
    }
    start = v.leftCols(built) * es.eigenvectors().col(best).real();
    if (start.norm() < 1e-300) start = v.col(0);
  }
  throw std::runtime_error("spectral_gap: Arnoldi did not converge");
}

void write_decay_csv(std::ostream& out, const DecayTrace& trace) {
  char buf[128];
  out << "t,norm,log_norm\n";
  for (std::size_t k = 0; k < trace.times.size(); ++k) {
    const double v = trace.norms[k];
    const double lg = v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", trace.times[k], v, lg);
    out << buf;
  }
}

}  // namespace kfp
