#include "kfp/inequality_lab.hpp"

#include "kfp/spectral.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

namespace kfp {

namespace {

using Triplet = Eigen::Triplet<double>;
using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

SparseMatrix diagonal(const Eigen::VectorXd& d) {
  SparseMatrix m(d.size(), d.size());
  std::vector<Triplet> t;
  t.reserve(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) t.emplace_back(static_cast<int>(i), static_cast<int>(i), d[i]);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

/// Diagonal weights x_weight(i) * f(|alpha|) over the coefficient layout.
Eigen::VectorXd coefficient_weights(const Discretization& disc, double (*f)(int)) {
  Eigen::VectorXd d(disc.size());
  for (int i = 0; i < disc.n_spatial(); ++i) {
    for (int a = 0; a < disc.n_velocity(); ++a) d[disc.index(i, a)] = disc.x_weight(i) * f(disc.basis().degree(a));
  }
  return d;
}

double degree_weight(int deg) { return deg; }
double hm1_weight(int deg) { return 1.0 / (1.0 + deg); }
double unit_weight(int) { return 1.0; }

SparseMatrix kron(const SparseMatrix& a, const SparseMatrix& b) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(a.nonZeros()) * b.nonZeros());
  for (int r = 0; r < a.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator ia(a, r); ia; ++ia) {
      for (int s = 0; s < b.outerSize(); ++s) {
        for (SparseMatrix::InnerIterator ib(b, s); ib; ++ib) {
          t.emplace_back(static_cast<int>(ia.row() * b.rows() + ib.row()),
                         static_cast<int>(ia.col() * b.cols() + ib.col()), ia.value() * ib.value());
        }
      }
    }
  }
  SparseMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

/// t^T diag(h) t
SparseMatrix weighted_gram(const SparseMatrix& t, const Eigen::VectorXd& h) {
  const SparseMatrix ht = h.asDiagonal() * t;
  return SparseMatrix(SparseMatrix(t.transpose()) * ht);
}

SparseMatrix dense_to_sparse(const Eigen::MatrixXd& m) {
  std::vector<Triplet> t;
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (m(r, c) != 0.0) t.emplace_back(r, c, m(r, c));
    }
  }
  SparseMatrix out(m.rows(), m.cols());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

/// Applies (Q restricted to the W-complement of the kernel)^{-1} W.
class ShiftInvert {
 public:
  ShiftInvert(const SparseMatrix& q, const Eigen::VectorXd& w, const std::vector<Eigen::VectorXd>& kernel)
      : w_(w), kernel_(kernel) {
    const Eigen::Index n = q.rows();
    const double density = static_cast<double>(q.nonZeros()) / (static_cast<double>(n) * n);
    if (n <= 6000 && (density > 0.02 || n <= 400)) {
      // Lift the kernel to a large eigenvalue and factor densely.
      Eigen::MatrixXd qd(q);
      double scale = 1.0;
      for (Eigen::Index i = 0; i < n; ++i) scale = std::max(scale, qd(i, i) / w[i]);
      for (const Eigen::VectorXd& k : kernel_) {
        const Eigen::VectorXd kw = w.cwiseProduct(k);
        qd.noalias() += (10.0 * scale) * kw * kw.transpose();
      }
      dense_.compute(qd);
      if (dense_.info() != Eigen::Success) throw std::runtime_error("pencil: dense Cholesky failed");
      mode_ = Mode::Dense;
      method_ = "dense-cholesky";
    } else if (kernel_.empty()) {
      sparse_llt_.compute(ColMatrix(q));
      if (sparse_llt_.info() != Eigen::Success) throw std::runtime_error("pencil: sparse Cholesky failed");
      mode_ = Mode::SparseLlt;
      method_ = "sparse-cholesky";
    } else {
      const int nk = static_cast<int>(kernel_.size());
      std::vector<Triplet> t;
      t.reserve(q.nonZeros() + 2 * n * nk);
      for (int r = 0; r < q.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(q, r); it; ++it) t.emplace_back(r, static_cast<int>(it.col()), it.value());
      }
      for (int b = 0; b < nk; ++b) {
        for (Eigen::Index r = 0; r < n; ++r) {
          const double v = w[r] * kernel_[b][r];
          if (v == 0.0) continue;
          t.emplace_back(static_cast<int>(r), static_cast<int>(n) + b, v);
          t.emplace_back(static_cast<int>(n) + b, static_cast<int>(r), v);
        }
      }
      ColMatrix bordered(n + nk, n + nk);
      bordered.setFromTriplets(t.begin(), t.end());
      bordered.makeCompressed();
      lu_.compute(bordered);
      if (lu_.info() != Eigen::Success) throw std::runtime_error("pencil: bordered LU failed");
      mode_ = Mode::BorderedLu;
      method_ = "bordered-sparse-lu";
    }
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd b = w_.cwiseProduct(x);
    switch (mode_) {
      case Mode::Dense: return dense_.solve(b);
      case Mode::SparseLlt: return sparse_llt_.solve(b);
      case Mode::BorderedLu: {
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(b.size() + static_cast<Eigen::Index>(kernel_.size()));
        rhs.head(b.size()) = b;
        return Eigen::VectorXd(lu_.solve(rhs)).head(b.size());
      }
    }
    return {};
  }

  const std::string& method() const { return method_; }

 private:
  enum class Mode { Dense, SparseLlt, BorderedLu };
  Eigen::VectorXd w_;
  const std::vector<Eigen::VectorXd>& kernel_;
  Mode mode_ = Mode::Dense;
  std::string method_;
  Eigen::LLT<Eigen::MatrixXd> dense_;
  Eigen::SimplicialLLT<ColMatrix> sparse_llt_;
  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

}  // namespace

std::string to_string(PoincareKind kind) {
  switch (kind) {
    case PoincareKind::Velocity: return "velocity";
    case PoincareKind::HypMean: return "hyp_mean";
    case PoincareKind::HypZero: return "hyp_zero";
    case PoincareKind::Kinetic: return "kin";
  }
  return "unknown";
}

PencilResult smallest_pencil_eigenvalue(const SparseMatrix& q, const Eigen::VectorXd& w,
                                        const std::vector<Eigen::VectorXd>& kernel_in, const PencilOptions& options) {
  const Eigen::Index n = q.rows();
  if (q.cols() != n || w.size() != n) throw std::invalid_argument("pencil: dimension mismatch");
  auto inner = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(w.cwiseProduct(b)); };

  // W-orthonormal kernel basis.
  std::vector<Eigen::VectorXd> kernel;
  for (const Eigen::VectorXd& k : kernel_in) {
    Eigen::VectorXd v = k;
    for (const Eigen::VectorXd& e : kernel) v -= inner(e, v) * e;
    const double nv = std::sqrt(inner(v, v));
    if (nv > 1e-12) kernel.push_back(v / nv);
  }
  const int complement = static_cast<int>(n) - static_cast<int>(kernel.size());
  if (complement < 1) throw std::invalid_argument("pencil: nothing left after deflation");
  auto deflate = [&](Eigen::VectorXd& v) {
    for (const Eigen::VectorXd& e : kernel) v -= inner(e, v) * e;
  };

  ShiftInvert op(q, w, kernel);
  PencilResult out;
  out.method = "shift-invert-lanczos/" + op.method();

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = normal(rng);
  deflate(x);
  x /= std::sqrt(inner(x, x));

  const int max_iter = std::min(options.max_iter, complement);
  std::vector<Eigen::VectorXd> basis{x};
  std::vector<double> alpha;
  std::vector<double> beta;
  double theta = 0.0;
  Eigen::VectorXd ritz;
  for (int j = 0; j < max_iter; ++j) {
    Eigen::VectorXd y = op.apply(basis[j]);
    deflate(y);
    alpha.push_back(inner(basis[j], y));
    for (int pass = 0; pass < 2; ++pass) {
      for (const Eigen::VectorXd& b : basis) y -= inner(b, y) * b;
    }
    const double bnext = std::sqrt(inner(y, y));
    const int m = j + 1;
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      tri(i, i) = alpha[i];
      if (i + 1 < m) tri(i, i + 1) = tri(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
    theta = es.eigenvalues()[m - 1];
    ritz = es.eigenvectors().col(m - 1);
    out.iterations = m;
    const double resid = std::abs(bnext * ritz[m - 1]);
    if (resid <= options.tol * std::abs(theta) || bnext <= 1e-300 || m == complement) {
      out.converged = true;
      break;
    }
    beta.push_back(bnext);
    basis.push_back(y / bnext);
  }
  if (!(theta > 0.0)) throw std::runtime_error("pencil: nonpositive Ritz value");

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < static_cast<int>(ritz.size()); ++i) u += ritz[i] * basis[i];
  deflate(u);
  const double rq = u.dot(q * u) / inner(u, u);
  out.lambda_min = rq;
  out.eigenvector = u / std::sqrt(inner(u, u));
  return out;
}

PoincarePencil poincare_pencil(const PoincareSetup& setup) {
  PoincarePencil pencil;
  if (setup.kind == PoincareKind::Velocity) {
    const HermiteBasis basis(setup.d_v, setup.cutoff);
    Eigen::VectorXd qd(basis.size());
    for (int a = 0; a < basis.size(); ++a) qd[a] = basis.degree(a);
    pencil.q = diagonal(qd);
    pencil.w = Eigen::VectorXd::Ones(basis.size());
    pencil.kernel.push_back(Eigen::VectorXd::Unit(basis.size(), 0));
    return pencil;
  }

  const DomainSpec& dom = setup.domain;
  if (setup.kind == PoincareKind::HypZero && dom.kind != DomainKind::Interval) {
    throw std::invalid_argument("poincare: hyp_zero needs an Interval domain");
  }
  if (setup.kind == PoincareKind::Kinetic && dom.kind != DomainKind::Torus) {
    throw std::invalid_argument("poincare: the kinetic pencil needs a space-time Torus");
  }
  const DiscretizationPtr disc = Discretization::make(dom, setup.d_v, setup.cutoff);

  if (dom.kind == DomainKind::Torus) {
    const OperatorSet ops = assemble(disc, DriftField::zero(), TransportScheme::Spectral);
    const SparseMatrix k = diagonal(coefficient_weights(*disc, degree_weight));
    const Eigen::VectorXd h = coefficient_weights(*disc, hm1_weight);
    const Eigen::VectorXd w = coefficient_weights(*disc, unit_weight);
    const std::vector<Eigen::VectorXd> kernel = ops.kernel_basis();
    if (setup.kind == PoincareKind::HypMean) {
      pencil.q = SparseMatrix(k + weighted_gram(ops.transport, h));
      pencil.w = w;
      pencil.kernel = kernel;
      return pencil;
    }
    // Space-time: unknown (n, j) at n * size + j, D = I_t (x) T - D_t (x) I.
    const int nt = setup.n_t;
    if (nt < 4) throw std::invalid_argument("poincare: need at least 4 time slices");
    const double dt = setup.period / nt;
    SparseMatrix it(nt, nt);
    it.setIdentity();
    SparseMatrix ix(disc->size(), disc->size());
    ix.setIdentity();
    const SparseMatrix d_t = dense_to_sparse(fourier_derivative_matrix(nt, setup.period));
    const SparseMatrix d = SparseMatrix(kron(it, ops.transport) - kron(d_t, ix));
    const Eigen::VectorXd ht = dt * h.replicate(nt, 1);
    const SparseMatrix kt = dt * kron(it, k);
    pencil.q = SparseMatrix(kt + weighted_gram(d, ht));
    pencil.w = dt * w.replicate(nt, 1);
    std::vector<Eigen::VectorXd> time_modes{Eigen::VectorXd::Ones(nt)};
    if (nt % 2 == 0) {
      Eigen::VectorXd alt(nt);
      for (int n = 0; n < nt; ++n) alt[n] = n % 2 == 0 ? 1.0 : -1.0;
      time_modes.push_back(alt);
    }
    for (const Eigen::VectorXd& tm : time_modes) {
      for (const Eigen::VectorXd& km : kernel) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(nt) * disc->size());
        for (int n = 0; n < nt; ++n) v.segment(static_cast<Eigen::Index>(n) * disc->size(), disc->size()) = tm[n] * km;
        pencil.kernel.push_back(std::move(v));
      }
    }
    return pencil;
  }

  // Interval, nodal unknowns.
  const SparseMatrix p = nodal_to_coefficient_matrix(*disc);
  const SparseMatrix k = weighted_gram(p, coefficient_weights(*disc, degree_weight));
  const SparseMatrix hn = weighted_gram(p, coefficient_weights(*disc, hm1_weight));
  Eigen::VectorXd w(disc->size());
  for (int i = 0; i < disc->n_spatial(); ++i) {
    for (int a = 0; a < disc->n_velocity(); ++a) w[disc->index(i, a)] = disc->x_weight(i) * disc->velocity_weight(a);
  }
  if (setup.kind == PoincareKind::HypMean) {
    const SparseMatrix t = upwind_transport_closed(*disc);
    const SparseMatrix tt = t.transpose();
    const SparseMatrix thn = tt * hn;
    pencil.q = SparseMatrix(k + SparseMatrix(thn * t));
    pencil.w = w;
    pencil.kernel.push_back(Eigen::VectorXd::Ones(disc->size()));
    return pencil;
  }
  const OperatorSet ops = assemble(disc, DriftField::zero(), TransportScheme::Upwind);
  const SparseMatrix tt = ops.transport.transpose();
  const SparseMatrix thn = tt * hn;
  const SparseMatrix full = SparseMatrix(k + SparseMatrix(thn * ops.transport));
  std::vector<int> position(disc->size(), -1);
  for (int r = 0; r < disc->size(); ++r) {
    if (ops.dirichlet[r]) continue;
    position[r] = static_cast<int>(pencil.unknowns.size());
    pencil.unknowns.push_back(r);
  }
  const int nu = static_cast<int>(pencil.unknowns.size());
  std::vector<Triplet> t;
  for (int r = 0; r < full.outerSize(); ++r) {
    if (position[r] < 0) continue;
    for (SparseMatrix::InnerIterator itr(full, r); itr; ++itr) {
      const int c = position[itr.col()];
      if (c >= 0) t.emplace_back(position[r], c, itr.value());
    }
  }
  pencil.q.resize(nu, nu);
  pencil.q.setFromTriplets(t.begin(), t.end());
  pencil.w.resize(nu);
  for (int j = 0; j < nu; ++j) pencil.w[j] = w[pencil.unknowns[j]];
  return pencil;
}

InequalityReport poincare_constant(const PoincareSetup& setup, const PencilOptions& options) {
  const PoincarePencil pencil = poincare_pencil(setup);
  const PencilResult res = smallest_pencil_eigenvalue(pencil.q, pencil.w, pencil.kernel, options);
  if (!(res.lambda_min > 0.0)) throw std::runtime_error("poincare: degenerate pencil beyond the deflated kernel");
  InequalityReport rep;
  rep.lambda_min = res.lambda_min;
  rep.constant = 1.0 / std::sqrt(res.lambda_min);
  rep.method = to_string(setup.kind) + ":" + res.method;
  rep.iterations = res.iterations;
  rep.converged = res.converged;
  const int n_x = setup.kind == PoincareKind::Velocity ? 1 : setup.domain.n_x;
  rep.refinement_table.push_back({n_x, setup.cutoff, rep.constant});
  return rep;
}

InequalityReport poincare_refinement(const PoincareSetup& setup, const std::vector<std::pair<int, int>>& resolutions,
                                     const PencilOptions& options) {
  if (resolutions.empty()) throw std::invalid_argument("poincare_refinement: no resolutions");
  InequalityReport out;
  out.converged = true;
  for (const auto& [n_x, cutoff] : resolutions) {
    PoincareSetup s = setup;
    s.domain.n_x = n_x;
    s.cutoff = cutoff;
    const InequalityReport r = poincare_constant(s, options);
    out.refinement_table.push_back(r.refinement_table.front());
    out.constant = r.constant;
    out.lambda_min = r.lambda_min;
    out.method = r.method;
    out.iterations = std::max(out.iterations, r.iterations);
    out.converged = out.converged && r.converged;
  }
  return out;
}

double poincare_trial_mode_bound(double length) { return length / (std::numbers::pi * std::sqrt(2.0)); }

double velocity_mask(double speed, double v0) {
  const double s = std::abs(speed);
  if (s <= 0.5 * v0) return 1.0;
  if (s >= v0) return 0.0;
  const double t = (v0 - s) / (0.5 * v0);
  return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

namespace {

struct Term {
  int omega = 0;
  std::vector<int> k;
  int alpha = 0;
  double amplitude = 0.0;
  double phase = 0.0;
};

/// Draws the terms of one sample in a resolution-independent order.
std::vector<Term> draw_terms(std::mt19937_64& rng, int d_x, const HermiteBasis& degrees, const EnsembleSpec& spec,
                             int max_frequency) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<Term> terms;
  const int km = spec.max_wavenumber;
  std::vector<std::vector<int>> wavevectors;
  if (d_x == 1) {
    for (int k = 0; k <= km; ++k) wavevectors.push_back({k});
  } else {
    for (int k1 = 0; k1 <= km; ++k1) {
      for (int k2 = -km; k2 <= km; ++k2) wavevectors.push_back({k1, k2});
    }
  }
  for (int omega = -max_frequency; omega <= max_frequency; ++omega) {
    for (const std::vector<int>& k : wavevectors) {
      double k2 = 0.0;
      for (int c : k) k2 += static_cast<double>(c) * c;
      for (int a = 0; a < degrees.size(); ++a) {
        const int deg = degrees.degree(a);
        if (deg > spec.max_degree) continue;
        Term t;
        t.omega = omega;
        t.k = k;
        t.alpha = a;
        t.amplitude = normal(rng) / ((1.0 + std::sqrt(k2) + std::abs(omega)) * (1.0 + deg));
        t.phase = phase(rng);
        terms.push_back(std::move(t));
      }
    }
  }
  return terms;
}

Eigen::VectorXd sample_nodal(const Discretization& disc, const std::vector<Term>& terms, const HermiteBasis& degrees,
                             double v0, double time, double period) {
  const DomainSpec& dom = disc.domain();
  const int nv = disc.n_velocity();
  // Hermite values of the draw basis at every collocation node.
  Eigen::MatrixXd hv(nv, degrees.size());
  std::vector<double> table(degrees.cutoff() + 1);
  for (int k = 0; k < nv; ++k) {
    const auto v = disc.velocity_node(k);
    Eigen::VectorXd prod = Eigen::VectorXd::Ones(degrees.size());
    for (int j = 0; j < disc.d_v(); ++j) {
      hermite_table(v[j], table);
      for (int a = 0; a < degrees.size(); ++a) prod[a] *= table[degrees.component(a, j)];
    }
    double speed2 = 0.0;
    for (double c : v) speed2 += c * c;
    hv.row(k) = velocity_mask(std::sqrt(speed2), v0) * prod.transpose();
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(disc.size());
  for (int i = 0; i < disc.n_spatial(); ++i) {
    Eigen::VectorXd coeff = Eigen::VectorXd::Zero(degrees.size());
    for (const Term& t : terms) {
      double arg = t.phase + (period > 0.0 ? 2.0 * std::numbers::pi * t.omega * time / period : 0.0);
      for (int j = 0; j < dom.d_x; ++j) arg += 2.0 * std::numbers::pi * t.k[j] * disc.x(i, j) / dom.extents[j];
      coeff[t.alpha] += t.amplitude * std::cos(arg);
    }
    out.segment(static_cast<Eigen::Index>(i) * nv, nv) = hv * coeff;
  }
  return out;
}

void check_ensemble_target(const Discretization& disc) {
  if (disc.domain().kind != DomainKind::Torus) throw std::invalid_argument("ensemble: Torus domain required");
}

}  // namespace

std::vector<PhaseField> random_cutoff_ensemble(const DiscretizationPtr& disc, const EnsembleSpec& spec) {
  if (spec.count < 1) throw std::invalid_argument("ensemble: empty ensemble");
  const HermiteBasis degrees(disc->d_v(), spec.max_degree);
  std::mt19937_64 rng(spec.seed);
  std::vector<PhaseField> out;
  out.reserve(spec.count);
  for (int s = 0; s < spec.count; ++s) {
    const std::vector<Term> terms = draw_terms(rng, disc->domain().d_x, degrees, spec, 0);
    PhaseField f(disc, Representation::Nodal, sample_nodal(*disc, terms, degrees, spec.v0, 0.0, 0.0));
    out.push_back(f.in(disc->default_representation()));
  }
  return out;
}

std::vector<TimeSeriesField> random_cutoff_time_ensemble(const DiscretizationPtr& disc, int n_t, double period,
                                                         const EnsembleSpec& spec) {
  check_ensemble_target(*disc);
  if (spec.count < 1) throw std::invalid_argument("ensemble: empty ensemble");
  if (n_t < 4 || !(period > 0.0)) throw std::invalid_argument("ensemble: need n_t >= 4 and a positive period");
  const HermiteBasis degrees(disc->d_v(), spec.max_degree);
  std::mt19937_64 rng(spec.seed);
  std::vector<TimeSeriesField> out;
  out.reserve(spec.count);
  const double dt = period / n_t;
  for (int s = 0; s < spec.count; ++s) {
    const std::vector<Term> terms = draw_terms(rng, disc->domain().d_x, degrees, spec, spec.max_frequency);
    TimeSeriesField ts;
    ts.dt = dt;
    ts.periodic = true;
    for (int n = 0; n < n_t; ++n) {
      PhaseField f(disc, Representation::Nodal, sample_nodal(*disc, terms, degrees, spec.v0, n * dt, period));
      ts.slices.push_back(f.to_coefficient());
    }
    out.push_back(std::move(ts));
  }
  return out;
}

namespace {

double velocity_weight_for(NormKind kind, int deg) {
  switch (kind) {
    case NormKind::L2: return 1.0;
    case NormKind::H1: return 1.0 + deg;
    case NormKind::Hm1: return 1.0 / (1.0 + deg);
  }
  return 1.0;
}

/// |U| * sum_alpha w_alpha |fhat_{k,alpha}|^2 for every Fourier mode k, with |k|^2.
std::pair<std::vector<double>, std::vector<double>> mode_energies(const PhaseField& f, NormKind kind) {
  const Discretization& disc = f.disc();
  const DomainSpec& dom = disc.domain();
  if (dom.kind != DomainKind::Torus) throw std::invalid_argument("fractional norms need a Torus domain");
  const PhaseField c = f.to_coefficient();
  FourierGrid grid(std::vector<int>(dom.d_x, dom.n_x), dom.extents);
  const int ns = disc.n_spatial();
  std::vector<double> energy(ns, 0.0);
  std::vector<double> k2(ns);
  for (int m = 0; m < ns; ++m) k2[m] = grid.wavenumber_squared(m);
  std::vector<double> column(ns);
  for (int a = 0; a < disc.n_velocity(); ++a) {
    for (int i = 0; i < ns; ++i) column[i] = c.at(i, a);
    const std::vector<std::complex<double>> modes = grid.forward(column);
    const double w = velocity_weight_for(kind, disc.basis().degree(a));
    for (int m = 0; m < ns; ++m) energy[m] += w * std::norm(modes[m]);
  }
  const double vol = dom.volume();
  for (double& e : energy) e *= vol;
  return {k2, energy};
}

}  // namespace

double fractional_multiplier_norm(const PhaseField& f, double s, NormKind velocity_norm) {
  const auto [k2, energy] = mode_energies(f, velocity_norm);
  double sum = 0.0;
  for (std::size_t m = 0; m < k2.size(); ++m) sum += std::pow(1.0 + k2[m], s) * energy[m];
  return std::sqrt(sum);
}

HeatKernelNorm heatkernel_fractional_norm(const PhaseField& f, double alpha, int levels, NormKind velocity_norm) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("heatkernel: alpha must lie in [0, 1)");
  if (levels < 1) throw std::invalid_argument("heatkernel: need at least one level");
  const auto [k2, energy] = mode_energies(f, velocity_norm);
  using Rule = boost::math::quadrature::gauss<double, 8>;
  const double t_min = std::pow(4.0, -levels);
  HeatKernelNorm out;
  double total = 0.0;
  double tail = 0.0;
  std::vector<std::pair<double, double>> cache;  // (|k|^2, weight)
  for (std::size_t m = 0; m < k2.size(); ++m) {
    total += energy[m];
    if (k2[m] == 0.0 || energy[m] == 0.0) continue;
    double weight = -1.0;
    for (const auto& [kk, ww] : cache) {
      if (kk == k2[m]) weight = ww;
    }
    if (weight < 0.0) {
      // In log time: int t^{1-alpha} k^2 exp(-2 t k^2) d(log t) per level.
      const double kk = k2[m];
      auto integrand = [&](double s) {
        const double t = std::exp(s);
        return std::pow(t, 1.0 - alpha) * kk * std::exp(-2.0 * t * kk);
      };
      weight = 0.0;
      for (int j = 0; j < levels; ++j) {
        const double hi = -j * std::log(4.0);
        weight += Rule::integrate(integrand, hi - std::log(4.0), hi);
      }
      cache.emplace_back(kk, weight);
    }
    const double level_tail = k2[m] * std::pow(t_min, 1.0 - alpha) / (1.0 - alpha);
    total += (weight + level_tail) * energy[m];
    tail += level_tail * energy[m];
  }
  out.value = std::sqrt(total);
  out.tail = tail;
  return out;
}

namespace {

void validate_hormander(double alpha, std::size_t count) {
  if (!(alpha >= 0.0) || alpha >= 1.0) throw std::invalid_argument("hormander: alpha must lie in [0, 1)");
  if (count == 0) throw std::invalid_argument("hormander: empty ensemble");
}

}  // namespace

InequalityReport hormander_ratio(const std::vector<PhaseField>& ensemble, double alpha, double v0) {
  validate_hormander(alpha, ensemble.size());
  InequalityReport rep;
  rep.alpha = alpha;
  rep.v0 = v0;
  rep.method = "fourier-multiplier";
  for (const PhaseField& f : ensemble) {
    const double den = norm_hyp(f);
    const double main = fractional_multiplier_norm(f, alpha, NormKind::Hm1);
    const double half = fractional_multiplier_norm(f, 0.5 * alpha, NormKind::L2);
    rep.ratios.push_back(den > 0.0 ? main / den : 0.0);
    rep.ratios_half.push_back(den > 0.0 ? half / den : 0.0);
  }
  rep.max_ratio = *std::max_element(rep.ratios.begin(), rep.ratios.end());
  rep.max_ratio_half = *std::max_element(rep.ratios_half.begin(), rep.ratios_half.end());
  rep.constant = rep.max_ratio;
  rep.converged = true;
  return rep;
}

InequalityReport kinetic_hormander_ratio(const std::vector<TimeSeriesField>& ensemble, double alpha, double v0) {
  validate_hormander(alpha, ensemble.size());
  InequalityReport rep;
  rep.alpha = alpha;
  rep.v0 = v0;
  rep.method = "fourier-multiplier/space-time";
  for (const TimeSeriesField& ts : ensemble) {
    if (!ts.periodic) throw std::invalid_argument("kinetic_hormander_ratio: periodic time series required");
    double main2 = 0.0;
    double half2 = 0.0;
    for (const PhaseField& s : ts.slices) {
      const double a = fractional_multiplier_norm(s, alpha, NormKind::Hm1);
      const double b = fractional_multiplier_norm(s, 0.5 * alpha, NormKind::L2);
      main2 += ts.dt * a * a;
      half2 += ts.dt * b * b;
    }
    const double den = norm_kin(ts);
    rep.ratios.push_back(den > 0.0 ? std::sqrt(main2) / den : 0.0);
    rep.ratios_half.push_back(den > 0.0 ? std::sqrt(half2) / den : 0.0);
  }
  rep.max_ratio = *std::max_element(rep.ratios.begin(), rep.ratios.end());
  rep.max_ratio_half = *std::max_element(rep.ratios_half.begin(), rep.ratios_half.end());
  rep.constant = rep.max_ratio;
  rep.converged = true;
  return rep;
}

void write_refinement_csv(std::ostream& out, const InequalityReport& report) {
  out << "n_x,N,constant\n";
  char buf[64];
  for (const RefinementRow& row : report.refinement_table) {
    std::snprintf(buf, sizeof buf, "%.17g", row.constant);
    out << row.n_x << ',' << row.cutoff << ',' << buf << '\n';
  }
}

void write_ratio_csv(std::ostream& out, int n_x, int cutoff, const InequalityReport& report, bool header) {
  if (header) out << "n_x,N,sample,alpha,v0,ratio,ratio_theta_half\n";
  char buf[160];
  for (std::size_t s = 0; s < report.ratios.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%d,%d,%zu,%.17g,%.17g,%.17g,%.17g\n", n_x, cutoff, s, report.alpha, report.v0,
                  report.ratios[s], report.ratios_half[s]);
    out << buf;
  }
}

CaccioppoliStudy caccioppoli_ensemble(const CaccioppoliSetup& setup) {
  if (setup.samples < 1) throw std::invalid_argument("caccioppoli_ensemble: needs at least one sample");
  DomainSpec base = setup.domain;
  const auto base_disc = Discretization::make(base, setup.d_v, setup.cutoff);
  EnsembleSpec spec = setup.sources;
  spec.count = setup.samples;
  const std::vector<PhaseField> sources = random_cutoff_ensemble(base_disc, spec);
  std::mt19937_64 rng(spec.seed ^ 0x5DEECE66DULL);
  std::uniform_real_distribution<double> amplitude(-setup.drift_amplitude, setup.drift_amplitude);
  const double length = base.extents.at(0);
  const double wave = 2.0 * std::numbers::pi / length;

  CaccioppoliStudy study;
  for (int s = 0; s < setup.samples; ++s) {
    const double a = amplitude(rng);
    Potential h{[a, wave](std::span<const double> x) { return a * std::cos(wave * x[0]); },
                [a, wave](std::span<const double> x, std::span<double> g) {
                  std::fill(g.begin(), g.end(), 0.0);
                  g[0] = -a * wave * std::sin(wave * x[0]);
                },
                "cos"};
    DomainSpec dom = base;
    dom.potential = h;
    const auto disc = Discretization::make(dom, setup.d_v, setup.cutoff);
    const OperatorSet ops = assemble(disc, DriftField::conservative(h));
    const PhaseField fstar(disc, sources[s].representation(), sources[s].data());
    const SolveReport report = solve_direct(ops, fstar);
    if (!report.converged) throw std::runtime_error("caccioppoli_ensemble: solve failed: " + report.message);
    study.max_residual = std::max(study.max_residual, report.residual);
    const CaccioppoliResult r = caccioppoli_check(report.solution, fstar, setup.radius, setup.center);
    study.all_finite = study.all_finite && std::isfinite(r.ratio) && r.rhs > 0.0;
    study.max_ratio = std::max(study.max_ratio, r.ratio);
    study.results.push_back(r);
  }
  return study;
}

void write_caccioppoli_csv(std::ostream& out, int n_x, int cutoff, const CaccioppoliStudy& study, bool header) {
  if (header) out << "n_x,N,sample,lhs,rhs,ratio\n";
  char buf[160];
  for (std::size_t s = 0; s < study.results.size(); ++s) {
    const auto& r = study.results[s];
    std::snprintf(buf, sizeof buf, "%d,%d,%zu,%.17g,%.17g,%.17g\n", n_x, cutoff, s, r.lhs, r.rhs, r.ratio);
    out << buf;
  }
}

}  // namespace kfp
