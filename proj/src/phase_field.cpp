#include "kfp/phase_field.hpp"

#include "kfp/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kfp {

using Triplet = Eigen::Triplet<double>;

DomainSpec DomainSpec::torus(double length, int n_x, int d_x) {
  DomainSpec d;
  d.kind = DomainKind::Torus;
  d.d_x = d_x;
  d.extents.assign(d_x, length);
  d.n_x = n_x;
  return d;
}

DomainSpec DomainSpec::interval(double length, int n_x, BoundaryData f0) {
  DomainSpec d;
  d.kind = DomainKind::Interval;
  d.d_x = 1;
  d.extents = {length};
  d.n_x = n_x;
  d.boundary_data = std::move(f0);
  return d;
}

void DomainSpec::validate() const {
  if (n_x < 4) throw std::invalid_argument("DomainSpec: n_x must be at least 4");
  if (kind == DomainKind::Interval && d_x != 1) throw std::invalid_argument("DomainSpec: Interval domains have d_x = 1");
  if (kind == DomainKind::Torus && (d_x < 1 || d_x > 2)) throw std::invalid_argument("DomainSpec: Torus d_x must be 1 or 2");
  if (static_cast<int>(extents.size()) != d_x) throw std::invalid_argument("DomainSpec: one extent per spatial axis");
  for (double e : extents) {
    if (!(e > 0.0) || !std::isfinite(e)) throw std::invalid_argument("DomainSpec: extents must be positive");
  }
}

double DomainSpec::volume() const {
  double v = 1.0;
  for (double e : extents) v *= e;
  return v;
}

DriftField DriftField::conservative(Potential potential) {
  if (!potential.gradient) throw std::invalid_argument("DriftField: potential needs a gradient");
  DriftField b;
  b.kind_ = Kind::Potential;
  b.name_ = potential.name.empty() ? "potential" : potential.name;
  b.potential_ = std::move(potential);
  return b;
}

DriftField DriftField::general(Eval eval, bool depends_on_v, std::string name) {
  DriftField b;
  b.kind_ = Kind::General;
  b.eval_ = std::move(eval);
  b.depends_on_v_ = depends_on_v;
  b.name_ = std::move(name);
  return b;
}

void DriftField::evaluate(std::span<const double> x, std::span<const double> v, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  switch (kind_) {
    case Kind::Zero: return;
    case Kind::Potential: {
      std::vector<double> g(x.size(), 0.0);
      potential_->gradient(x, g);
      for (std::size_t j = 0; j < std::min(g.size(), out.size()); ++j) out[j] = g[j];
      return;
    }
    case Kind::General: eval_(x, v, out); return;
  }
}

DriftField DriftField::scaled(double factor) const {
  if (kind_ == Kind::Zero) return *this;
  if (kind_ == Kind::Potential) {
    Potential p = *potential_;
    auto value = p.value;
    auto grad = p.gradient;
    if (value) p.value = [value, factor](std::span<const double> x) { return factor * value(x); };
    p.gradient = [grad, factor](std::span<const double> x, std::span<double> g) {
      grad(x, g);
      for (double& c : g) c *= factor;
    };
    return conservative(std::move(p));
  }
  Eval e = eval_;
  return general([e, factor](std::span<const double> x, std::span<const double> v, std::span<double> out) {
    e(x, v, out);
    for (double& c : out) c *= factor;
  }, depends_on_v_, name_);
}

int Discretization::effective_cutoff(DomainKind kind, int requested) {
  if (kind == DomainKind::Interval && requested % 2 == 0) return requested + 1;
  return requested;
}

namespace {

Eigen::VectorXd tensor_apply(const Eigen::MatrixXd& op, const Eigen::VectorXd& data, int dim) {
  std::vector<int> shape(dim, static_cast<int>(op.cols()));
  Eigen::VectorXd out = data;
  for (int j = 0; j < dim; ++j) {
    out = apply_along_axis(op, out, shape, j);
    shape[j] = static_cast<int>(op.rows());
  }
  return out;
}

}  // namespace

Discretization::Discretization(DomainSpec domain, int d_v, int cutoff)
    : domain_(std::move(domain)),
      requested_cutoff_(cutoff),
      basis_(d_v, effective_cutoff(domain_.kind, cutoff)),
      collocation_(d_v, basis_.cutoff() + 1) {
  domain_.validate();
  if (domain_.d_x > d_v) throw std::invalid_argument("Discretization: need d_v >= d_x for v . grad_x");
  const int n = domain_.n_x;
  const int dx = domain_.d_x;
  n_spatial_ = 1;
  for (int j = 0; j < dx; ++j) n_spatial_ *= n;

  spacing_.resize(dx);
  for (int j = 0; j < dx; ++j) {
    spacing_[j] = domain_.kind == DomainKind::Torus ? domain_.extents[j] / n : domain_.extents[j] / (n - 1);
  }
  coords_.resize(static_cast<std::size_t>(n_spatial_) * dx);
  x_weights_.resize(n_spatial_);
  sigma_.resize(n_spatial_);
  for (int i = 0; i < n_spatial_; ++i) {
    int rest = i;
    double w = 1.0;
    for (int j = dx - 1; j >= 0; --j) {
      const int ij = rest % n;
      rest /= n;
      coords_[static_cast<std::size_t>(i) * dx + j] = ij * spacing_[j];
      double wj = spacing_[j];
      if (domain_.kind == DomainKind::Interval && (ij == 0 || ij == n - 1)) wj *= 0.5;
      w *= wj;
    }
    x_weights_[i] = w;
    sigma_[i] = domain_.potential && domain_.potential->value ? std::exp(-domain_.potential->value(point(i))) : 1.0;
  }

  const int nv = basis_.size();
  vnodes_.resize(static_cast<std::size_t>(nv) * d_v);
  vweights_.resize(nv);
  for (int k = 0; k < nv; ++k) {
    const std::vector<double> v = collocation_.node(k);
    std::copy(v.begin(), v.end(), vnodes_.begin() + static_cast<std::ptrdiff_t>(k) * d_v);
    vweights_[k] = collocation_.weight(k);
  }
  backward_ = collocation_.backward_1d(basis_.cutoff());
  forward_ = collocation_.forward_1d(basis_.cutoff());
}

Eigen::VectorXd Discretization::velocity_to_nodal(const Eigen::VectorXd& coeffs) const {
  return tensor_apply(backward_, coeffs, d_v());
}

Eigen::VectorXd Discretization::velocity_to_coeff(const Eigen::VectorXd& nodal) const {
  return tensor_apply(forward_, nodal, d_v());
}

PhaseField::PhaseField(DiscretizationPtr disc, Representation rep)
    : disc_(std::move(disc)), rep_(rep), data_(Eigen::VectorXd::Zero(disc_->size())) {}

PhaseField::PhaseField(DiscretizationPtr disc, Representation rep, Eigen::VectorXd data)
    : disc_(std::move(disc)), rep_(rep), data_(std::move(data)) {
  if (data_.size() != disc_->size()) throw std::invalid_argument("PhaseField: data size does not match discretization");
}

PhaseField PhaseField::from_function(
    DiscretizationPtr disc, const std::function<double(std::span<const double>, std::span<const double>)>& f,
    Representation rep) {
  PhaseField out(disc, Representation::Nodal);
  for (int i = 0; i < disc->n_spatial(); ++i) {
    for (int k = 0; k < disc->n_velocity(); ++k) out.at(i, k) = f(disc->point(i), disc->velocity_node(k));
  }
  return out.in(rep);
}

PhaseField PhaseField::mode(DiscretizationPtr disc, const std::function<double(std::span<const double>)>& g,
                            const MultiIndex& alpha, Representation rep) {
  PhaseField out(disc, Representation::Coefficient);
  const int a = disc->basis().flat_index(alpha);
  for (int i = 0; i < disc->n_spatial(); ++i) out.at(i, a) = g(disc->point(i));
  return out.in(rep);
}

PhaseField PhaseField::in(Representation rep) const {
  if (rep == rep_) return *this;
  PhaseField out(disc_, rep);
  const int nv = disc_->n_velocity();
  for (int i = 0; i < disc_->n_spatial(); ++i) {
    const Eigen::VectorXd block = data_.segment(static_cast<Eigen::Index>(i) * nv, nv);
    out.data_.segment(static_cast<Eigen::Index>(i) * nv, nv) =
        rep == Representation::Nodal ? disc_->velocity_to_nodal(block) : disc_->velocity_to_coeff(block);
  }
  return out;
}

HermiteRep PhaseField::velocity_slice(int i) const {
  const int nv = disc_->n_velocity();
  Eigen::VectorXd block = data_.segment(static_cast<Eigen::Index>(i) * nv, nv);
  if (rep_ == Representation::Nodal) block = disc_->velocity_to_coeff(block);
  return HermiteRep(disc_->basis(), std::move(block));
}

PhaseField& PhaseField::operator+=(const PhaseField& other) {
  if (other.disc_ != disc_) throw std::invalid_argument("PhaseField: discretization mismatch");
  data_ += other.in(rep_).data_;
  return *this;
}

PhaseField& PhaseField::operator-=(const PhaseField& other) {
  if (other.disc_ != disc_) throw std::invalid_argument("PhaseField: discretization mismatch");
  data_ -= other.in(rep_).data_;
  return *this;
}

PhaseField& PhaseField::operator*=(double s) {
  data_ *= s;
  return *this;
}

// ---------------------------------------------------------------------------
// Assembly

namespace {

SparseMatrix identity(int n) {
  SparseMatrix m(n, n);
  m.setIdentity();
  return m;
}

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

SparseMatrix dense_to_sparse(const Eigen::MatrixXd& m, double drop = 0.0) {
  std::vector<Triplet> t;
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (std::abs(m(r, c)) > drop) t.emplace_back(r, c, m(r, c));
    }
  }
  SparseMatrix out(m.rows(), m.cols());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

/// I (x) ... (x) op (x) ... (x) I with op on `axis` of a `dim`-way tensor.
SparseMatrix lift_to_axis(const SparseMatrix& op, int axis, int dim) {
  const int n = static_cast<int>(op.rows());
  SparseMatrix out = axis == 0 ? op : identity(n);
  for (int j = 1; j < dim; ++j) out = kron(out, j == axis ? op : identity(n));
  return out;
}

Eigen::MatrixXd dense_tensor(const Eigen::MatrixXd& op, int dim) {
  Eigen::MatrixXd out = op;
  for (int j = 1; j < dim; ++j) {
    Eigen::MatrixXd next(out.rows() * op.rows(), out.cols() * op.cols());
    for (int r = 0; r < out.rows(); ++r) {
      for (int c = 0; c < out.cols(); ++c) next.block(r * op.rows(), c * op.cols(), op.rows(), op.cols()) = out(r, c) * op;
    }
    out = std::move(next);
  }
  return out;
}

struct VelocityOperators {
  SparseMatrix ou;
  std::vector<SparseMatrix> position;
  std::vector<SparseMatrix> lowering;
};

VelocityOperators velocity_operators(const Discretization& disc, Representation rep) {
  const int n = disc.cutoff();
  const int d = disc.d_v();
  VelocityOperators ops;
  const SparseMatrix g1 = lowering_matrix(n);
  if (rep == Representation::Coefficient) {
    std::vector<Triplet> t;
    for (int a = 0; a < disc.n_velocity(); ++a) t.emplace_back(a, a, disc.basis().degree(a));
    ops.ou.resize(disc.n_velocity(), disc.n_velocity());
    ops.ou.setFromTriplets(t.begin(), t.end());
    const SparseMatrix v1 = position_matrix(n);
    for (int j = 0; j < d; ++j) {
      ops.position.push_back(lift_to_axis(v1, j, d));
      ops.lowering.push_back(lift_to_axis(g1, j, d));
    }
    return ops;
  }
  const Eigen::MatrixXd& e = disc.nodal_from_coeff_1d();
  const Eigen::MatrixXd& p = disc.coeff_from_nodal_1d();
  Eigen::VectorXd deg(n + 1);
  for (int a = 0; a <= n; ++a) deg[a] = a;
  const SparseMatrix ou1 = dense_to_sparse(e * deg.asDiagonal() * p, 1e-15);
  const SparseMatrix d1 = dense_to_sparse(e * Eigen::MatrixXd(g1) * p, 1e-15);
  ops.ou.resize(disc.n_velocity(), disc.n_velocity());
  for (int j = 0; j < d; ++j) {
    ops.ou += lift_to_axis(ou1, j, d);
    ops.lowering.push_back(lift_to_axis(d1, j, d));
    std::vector<Triplet> t;
    for (int k = 0; k < disc.n_velocity(); ++k) t.emplace_back(k, k, disc.velocity_node(k)[j]);
    SparseMatrix pos(disc.n_velocity(), disc.n_velocity());
    pos.setFromTriplets(t.begin(), t.end());
    ops.position.push_back(std::move(pos));
  }
  return ops;
}

/// Flux-form OU on the 1-D Gauss-Hermite nodes:
/// (L f)_k = (1/w_k) sum_{k'=k+-1} phi(mid) / |v_k' - v_k| (f_k - f_k'),
/// with phi the standard normal density at the midpoint.
SparseMatrix monotone_ou_1d(const Quadrature& q) {
  const Eigen::VectorXd& v = q.nodes_1d();
  const Eigen::VectorXd& w = q.weights_1d();
  const int m = static_cast<int>(v.size());
  std::vector<Triplet> t;
  const double inv_sqrt_2pi = 0.3989422804014327;
  for (int k = 0; k + 1 < m; ++k) {
    const double mid = 0.5 * (v[k] + v[k + 1]);
    const double c = inv_sqrt_2pi * std::exp(-0.5 * mid * mid) / (v[k + 1] - v[k]);
    t.emplace_back(k, k, c / w[k]);
    t.emplace_back(k, k + 1, -c / w[k]);
    t.emplace_back(k + 1, k + 1, c / w[k + 1]);
    t.emplace_back(k + 1, k, -c / w[k + 1]);
  }
  SparseMatrix out(m, m);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

/// Spatial neighbor of node i along axis shifted by `shift`; -1 when it leaves an Interval.
int neighbor(const Discretization& disc, int i, int axis, int shift) {
  const int n = disc.domain().n_x;
  const int dx = disc.domain().d_x;
  int stride = 1;
  for (int j = axis + 1; j < dx; ++j) stride *= n;
  const int ij = (i / stride) % n;
  int target = ij + shift;
  if (disc.domain().kind == DomainKind::Torus) {
    target = ((target % n) + n) % n;
  } else if (target < 0 || target >= n) {
    return -1;
  }
  return i + (target - ij) * stride;
}

bool on_inflow(const Discretization& disc, int i, double speed) {
  if (disc.domain().kind != DomainKind::Interval) return false;
  const int n = disc.domain().n_x;
  return (i == n - 1 && speed > 0.0) || (i == 0 && speed < 0.0);
}

/// Boundary location of the inflow ghost for node i (Interval only).
std::vector<double> boundary_point(const Discretization& disc, int i) {
  return {i == 0 ? 0.0 : disc.domain().extents[0]};
}

enum class Closure { Ghost, OneSided };

/// Transport v . grad_x for nodal unknowns with first-order upwinding.
/// Ghost closures add v f0 / dx into `ghost`; one-sided closures use the
/// inward difference at inflow nodes.
void upwind_triplets(const Discretization& disc, Closure closure, std::vector<Triplet>& t, Eigen::VectorXd& ghost) {
  const int nv = disc.n_velocity();
  ghost = Eigen::VectorXd::Zero(disc.size());
  for (int i = 0; i < disc.n_spatial(); ++i) {
    for (int k = 0; k < nv; ++k) {
      const int row = disc.index(i, k);
      for (int axis = 0; axis < disc.domain().d_x; ++axis) {
        const double speed = disc.velocity_node(k)[axis];
        const double h = disc.spacing(axis);
        if (speed == 0.0) continue;
        const int up = neighbor(disc, i, axis, speed > 0.0 ? 1 : -1);
        if (up >= 0) {
          // speed > 0: speed (f_up - f_i)/h ; speed < 0: speed (f_i - f_up)/h
          const double s = speed > 0.0 ? speed / h : -speed / h;
          t.emplace_back(row, disc.index(up, k), s);
          t.emplace_back(row, row, -s);
          continue;
        }
        if (closure == Closure::Ghost) {
          const double s = std::abs(speed) / h;
          t.emplace_back(row, row, -s);
          const DomainSpec& dom = disc.domain();
          if (dom.boundary_data) {
            const std::vector<double> xb = boundary_point(disc, i);
            ghost[row] += s * dom.boundary_data(xb, disc.velocity_node(k));
          }
        } else {
          const int down = neighbor(disc, i, axis, speed > 0.0 ? -1 : 1);
          const double s = speed > 0.0 ? speed / h : -speed / h;
          t.emplace_back(row, row, s);
          t.emplace_back(row, disc.index(down, k), -s);
        }
      }
    }
  }
}

/// Spatial first-derivative matrix on the axis (spectral on the Torus or
/// centered differences with one-sided closure at Interval ends).
SparseMatrix spatial_derivative(const Discretization& disc, int axis, TransportScheme scheme) {
  const int n = disc.domain().n_x;
  const int dx = disc.domain().d_x;
  SparseMatrix d1;
  if (scheme == TransportScheme::Spectral) {
    d1 = dense_to_sparse(fourier_derivative_matrix(n, disc.domain().extents[axis]));
  } else {
    const double h = disc.spacing(axis);
    std::vector<Triplet> t;
    const bool torus = disc.domain().kind == DomainKind::Torus;
    for (int i = 0; i < n; ++i) {
      if (torus || (i > 0 && i < n - 1)) {
        t.emplace_back(i, (i + 1) % n, 0.5 / h);
        t.emplace_back(i, (i - 1 + n) % n, -0.5 / h);
      } else if (i == 0) {
        t.emplace_back(i, 1, 1.0 / h);
        t.emplace_back(i, 0, -1.0 / h);
      } else {
        t.emplace_back(i, n - 1, 1.0 / h);
        t.emplace_back(i, n - 2, -1.0 / h);
      }
    }
    d1.resize(n, n);
    d1.setFromTriplets(t.begin(), t.end());
  }
  return lift_to_axis(d1, axis, dx);
}

}  // namespace

TransportScheme default_scheme(DomainKind kind) {
  return kind == DomainKind::Torus ? TransportScheme::Spectral : TransportScheme::Upwind;
}

bool OperatorSet::has_constant_kernel() const { return disc->domain().kind == DomainKind::Torus; }

Eigen::VectorXd OperatorSet::constant_vector() const {
  Eigen::VectorXd one = Eigen::VectorXd::Zero(disc->size());
  for (int i = 0; i < disc->n_spatial(); ++i) {
    if (rep == Representation::Coefficient) {
      one[disc->index(i, 0)] = 1.0;
    } else {
      one.segment(static_cast<Eigen::Index>(i) * disc->n_velocity(), disc->n_velocity()).setOnes();
    }
  }
  return one;
}

namespace {

/// Even axes whose discrete derivative annihilates the alternating mode.
std::vector<int> alternating_axes(const OperatorSet& ops) {
  std::vector<int> axes;
  if (!ops.has_constant_kernel() || ops.scheme == TransportScheme::Upwind) return axes;
  const DomainSpec& dom = ops.disc->domain();
  if (dom.n_x % 2 != 0) return axes;
  for (int j = 0; j < dom.d_x; ++j) axes.push_back(j);
  return axes;
}

int spatial_coordinate(const Discretization& disc, int i, int axis) {
  const int n = disc.domain().n_x;
  int stride = 1;
  for (int j = axis + 1; j < disc.domain().d_x; ++j) stride *= n;
  return (i / stride) % n;
}

}  // namespace

std::vector<Eigen::VectorXd> OperatorSet::kernel_basis() const {
  std::vector<Eigen::VectorXd> basis;
  if (!has_constant_kernel()) return basis;
  const std::vector<int> axes = alternating_axes(*this);
  const Eigen::VectorXd one = constant_vector();
  const int nv = disc->n_velocity();
  for (int mask = 0; mask < (1 << axes.size()); ++mask) {
    Eigen::VectorXd k = one;
    for (int i = 0; i < disc->n_spatial(); ++i) {
      int parity = 0;
      for (std::size_t b = 0; b < axes.size(); ++b) {
        if (mask & (1 << b)) parity += spatial_coordinate(*disc, i, axes[b]);
      }
      if (parity % 2 != 0) k.segment(static_cast<Eigen::Index>(i) * nv, nv) *= -1.0;
    }
    basis.push_back(std::move(k));
  }
  return basis;
}

std::vector<int> OperatorSet::kernel_pins() const {
  std::vector<int> pins;
  if (!has_constant_kernel()) return pins;
  const std::vector<int> axes = alternating_axes(*this);
  const int n = disc->domain().n_x;
  for (int mask = 0; mask < (1 << axes.size()); ++mask) {
    int i = 0;
    for (int j = 0; j < disc->domain().d_x; ++j) {
      int coord = 0;
      for (std::size_t b = 0; b < axes.size(); ++b) {
        if (axes[b] == j && (mask & (1 << b))) coord = 1;
      }
      i = i * n + coord;
    }
    pins.push_back(disc->index(i, 0));
  }
  return pins;
}

Eigen::VectorXd OperatorSet::project_off_kernel(const Eigen::VectorXd& f) const {
  const std::vector<Eigen::VectorXd> basis = kernel_basis();
  if (basis.empty()) return f;
  const int k = static_cast<int>(basis.size());
  Eigen::MatrixXd gram(k, k);
  Eigen::VectorXd rhs(k);
  for (int a = 0; a < k; ++a) {
    rhs[a] = inner_m(basis[a], f);
    for (int b = 0; b < k; ++b) gram(a, b) = inner_m(basis[a], basis[b]);
  }
  const Eigen::VectorXd coef = gram.ldlt().solve(rhs);
  Eigen::VectorXd out = f;
  for (int a = 0; a < k; ++a) out -= coef[a] * basis[a];
  return out;
}

Eigen::VectorXd OperatorSet::system_rhs(const Eigen::VectorXd& fstar) const {
  Eigen::VectorXd rhs = fstar;
  for (int r = 0; r < rhs.size(); ++r) {
    if (dirichlet[r]) rhs[r] = boundary_values[r];
  }
  return rhs;
}

double OperatorSet::inner_m(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  return (a.array() * mass_m.array() * b.array()).sum();
}

int OperatorSet::dirichlet_count() const {
  return static_cast<int>(std::count(dirichlet.begin(), dirichlet.end(), 1));
}

OperatorSet assemble(DiscretizationPtr disc, const DriftField& drift, TransportScheme scheme,
                     VelocityScheme velocity) {
  const DomainSpec& dom = disc->domain();
  if (dom.kind == DomainKind::Interval && scheme == TransportScheme::Spectral) {
    throw std::invalid_argument("assemble: spectral transport requires a Torus domain");
  }
  if (velocity == VelocityScheme::Monotone && scheme != TransportScheme::Upwind) {
    throw std::invalid_argument("assemble: the monotone velocity closure requires upwind transport");
  }
  OperatorSet ops;
  ops.disc = disc;
  ops.scheme = scheme;
  ops.velocity = velocity;
  ops.rep = (dom.kind == DomainKind::Interval || scheme == TransportScheme::Upwind) ? Representation::Nodal
                                                                                    : Representation::Coefficient;
  ops.conservative = drift.is_conservative();
  ops.drift_is_zero = drift.is_zero();

  const int n = disc->size();
  const int ns = disc->n_spatial();
  const int nv = disc->n_velocity();
  const int dx = dom.d_x;
  VelocityOperators vel = velocity_operators(*disc, ops.rep);
  const bool monotone = velocity == VelocityScheme::Monotone;
  if (monotone) {
    const SparseMatrix l1 = monotone_ou_1d(disc->collocation());
    vel.ou.resize(nv, nv);
    for (int j = 0; j < disc->d_v(); ++j) vel.ou += lift_to_axis(l1, j, disc->d_v());
  }

  ops.ou = kron(identity(ns), vel.ou);

  if (scheme == TransportScheme::Upwind) {
    std::vector<Triplet> t;
    upwind_triplets(*disc, Closure::Ghost, t, ops.transport_ghost);
    ops.transport.resize(n, n);
    ops.transport.setFromTriplets(t.begin(), t.end());
  } else {
    ops.transport.resize(n, n);
    for (int j = 0; j < dx; ++j) ops.transport += kron(spatial_derivative(*disc, j, scheme), vel.position[j]);
    ops.transport_ghost = Eigen::VectorXd::Zero(n);
  }

  // b . grad_v
  ops.drift.resize(n, n);
  if (!drift.is_zero()) {
    std::vector<Triplet> t;
    std::vector<double> b(disc->d_v());
    const bool need_v = drift.depends_on_v();
    if (monotone) {
      // Upwind in v: backward difference where b_j > 0, forward where b_j < 0;
      // the term is dropped on the outermost node lacking that neighbor.
      const Eigen::VectorXd& v1 = disc->collocation().nodes_1d();
      const int m1 = static_cast<int>(v1.size());
      for (int i = 0; i < ns; ++i) {
        for (int k = 0; k < nv; ++k) {
          drift.evaluate(disc->point(i), disc->velocity_node(k), b);
          for (int j = 0; j < disc->d_v(); ++j) {
            if (b[j] == 0.0) continue;
            const int kj = disc->basis().component(k, j);
            const int step = b[j] > 0.0 ? -1 : 1;
            const int nj = kj + step;
            if (nj < 0 || nj >= m1) continue;
            const int other = k + step * disc->basis().stride(j);
            const double coef = b[j] / (v1[kj] - v1[nj]);
            t.emplace_back(disc->index(i, k), disc->index(i, k), coef);
            t.emplace_back(disc->index(i, k), disc->index(i, other), -coef);
          }
        }
      }
    } else if (ops.rep == Representation::Nodal) {
      std::vector<SparseMatrix> low = vel.lowering;
      for (int i = 0; i < ns; ++i) {
        for (int j = 0; j < disc->d_v(); ++j) {
          for (int k = 0; k < nv; ++k) {
            drift.evaluate(disc->point(i), disc->velocity_node(k), b);
            if (b[j] == 0.0) continue;
            for (SparseMatrix::InnerIterator it(low[j], k); it; ++it) {
              t.emplace_back(disc->index(i, k), disc->index(i, static_cast<int>(it.col())), b[j] * it.value());
            }
          }
        }
      }
    } else if (!need_v) {
      for (int i = 0; i < ns; ++i) {
        drift.evaluate(disc->point(i), disc->velocity_node(0), b);
        for (int j = 0; j < disc->d_v(); ++j) {
          if (b[j] == 0.0) continue;
          for (int a = 0; a < nv; ++a) {
            for (SparseMatrix::InnerIterator it(vel.lowering[j], a); it; ++it) {
              t.emplace_back(disc->index(i, a), disc->index(i, static_cast<int>(it.col())), b[j] * it.value());
            }
          }
        }
      }
    } else {
      // Collocation product: P diag(b_j(x_i, v_k)) E G_j per spatial node.
      const Eigen::MatrixXd e = dense_tensor(disc->nodal_from_coeff_1d(), disc->d_v());
      const Eigen::MatrixXd p = dense_tensor(disc->coeff_from_nodal_1d(), disc->d_v());
      for (int i = 0; i < ns; ++i) {
        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(nv, nv);
        for (int j = 0; j < disc->d_v(); ++j) {
          Eigen::VectorXd bj(nv);
          for (int k = 0; k < nv; ++k) {
            drift.evaluate(disc->point(i), disc->velocity_node(k), b);
            bj[k] = b[j];
          }
          block += p * bj.asDiagonal() * e * Eigen::MatrixXd(vel.lowering[j]);
        }
        for (int r = 0; r < nv; ++r) {
          for (int c = 0; c < nv; ++c) {
            if (std::abs(block(r, c)) > 1e-15) t.emplace_back(disc->index(i, r), disc->index(i, c), block(r, c));
          }
        }
      }
    }
    ops.drift.setFromTriplets(t.begin(), t.end());
  }

  ops.mass_m.resize(n);
  for (int i = 0; i < ns; ++i) {
    double sigma = disc->sigma(i);
    if (!dom.potential && drift.potential() && drift.potential()->value) {
      sigma = std::exp(-drift.potential()->value(disc->point(i)));
    }
    const double wx = sigma * disc->x_weight(i);
    for (int a = 0; a < nv; ++a) {
      ops.mass_m[disc->index(i, a)] = ops.rep == Representation::Nodal ? wx * disc->velocity_weight(a) : wx;
    }
  }

  ops.dirichlet.assign(n, 0);
  ops.boundary_values = Eigen::VectorXd::Zero(n);
  if (dom.kind == DomainKind::Interval) {
    for (int i : {0, ns - 1}) {
      for (int k = 0; k < nv; ++k) {
        if (!on_inflow(*disc, i, disc->velocity_node(k)[0])) continue;
        const int row = disc->index(i, k);
        ops.dirichlet[row] = 1;
        if (dom.boundary_data) ops.boundary_values[row] = dom.boundary_data(boundary_point(*disc, i), disc->velocity_node(k));
      }
    }
  }

  const SparseMatrix gen = ops.generator();
  std::vector<Triplet> t;
  t.reserve(gen.nonZeros());
  for (int r = 0; r < n; ++r) {
    if (ops.dirichlet[r]) {
      t.emplace_back(r, r, 1.0);
      continue;
    }
    for (SparseMatrix::InnerIterator it(gen, r); it; ++it) t.emplace_back(r, static_cast<int>(it.col()), it.value());
  }
  ops.system.resize(n, n);
  ops.system.setFromTriplets(t.begin(), t.end());
  return ops;
}

SparseMatrix nodal_to_coefficient_matrix(const Discretization& disc) {
  const int nv = disc.n_velocity();
  Eigen::MatrixXd p(nv, nv);
  for (int k = 0; k < nv; ++k) p.col(k) = disc.velocity_to_coeff(Eigen::VectorXd::Unit(nv, k));
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(disc.n_spatial()) * nv * nv);
  for (int i = 0; i < disc.n_spatial(); ++i) {
    for (int a = 0; a < nv; ++a) {
      for (int k = 0; k < nv; ++k) {
        if (p(a, k) != 0.0) t.emplace_back(disc.index(i, a), disc.index(i, k), p(a, k));
      }
    }
  }
  SparseMatrix out(disc.size(), disc.size());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

SparseMatrix upwind_transport_closed(const Discretization& disc) {
  std::vector<Triplet> t;
  Eigen::VectorXd unused;
  upwind_triplets(disc, Closure::OneSided, t, unused);
  SparseMatrix out(disc.size(), disc.size());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

OperatorSet assemble(DiscretizationPtr disc, const DriftField& drift) {
  const TransportScheme scheme = default_scheme(disc->domain().kind);
  return assemble(std::move(disc), drift, scheme);
}

OperatorSet assemble(const DomainSpec& domain, const DriftField& drift, int d_v, int cutoff) {
  return assemble(Discretization::make(domain, d_v, cutoff), drift);
}

// ---------------------------------------------------------------------------
// Matrix-free operators and norms

PhaseField transport_apply(const PhaseField& f) {
  const Discretization& disc = f.disc();
  const DomainSpec& dom = disc.domain();
  const int nv = disc.n_velocity();
  const int ns = disc.n_spatial();
  if (dom.kind == DomainKind::Torus) {
    if (f.representation() != Representation::Coefficient) {
      throw std::invalid_argument("transport_apply: Torus fields must be in coefficient representation");
    }
    FourierGrid grid(std::vector<int>(dom.d_x, dom.n_x), dom.extents);
    PhaseField out(f.discretization(), Representation::Coefficient);
    std::vector<double> column(ns);
    for (int axis = 0; axis < dom.d_x; ++axis) {
      PhaseField deriv(f.discretization(), Representation::Coefficient);
      for (int a = 0; a < nv; ++a) {
        for (int i = 0; i < ns; ++i) column[i] = f.at(i, a);
        const std::vector<double> dcol = grid.derivative(column, axis);
        for (int i = 0; i < ns; ++i) deriv.at(i, a) = dcol[i];
      }
      for (int i = 0; i < ns; ++i) {
        const HermiteRep moved = multiply_by_v(deriv.velocity_slice(i), axis);
        out.data().segment(static_cast<Eigen::Index>(i) * nv, nv) += moved.coeffs();
      }
    }
    return out;
  }
  if (f.representation() != Representation::Nodal) {
    throw std::invalid_argument("transport_apply: Interval fields must be in nodal representation");
  }
  PhaseField out(f.discretization(), Representation::Nodal);
  const int n = dom.n_x;
  const double h = disc.spacing(0);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < nv; ++k) {
      const double speed = disc.velocity_node(k)[0];
      double value = 0.0;
      if (speed > 0.0) {
        if (i + 1 < n) {
          value = speed * (f.at(i + 1, k) - f.at(i, k)) / h;
        } else {
          const double ghost = dom.boundary_data ? dom.boundary_data(std::vector<double>{dom.extents[0]}, disc.velocity_node(k)) : 0.0;
          value = speed * (ghost - f.at(i, k)) / h;
        }
      } else if (speed < 0.0) {
        if (i > 0) {
          value = speed * (f.at(i, k) - f.at(i - 1, k)) / h;
        } else {
          const double ghost = dom.boundary_data ? dom.boundary_data(std::vector<double>{0.0}, disc.velocity_node(k)) : 0.0;
          value = speed * (f.at(i, k) - ghost) / h;
        }
      }
      out.at(i, k) = value;
    }
  }
  return out;
}

PhaseField ou_apply(const PhaseField& f) {
  PhaseField c = f.to_coefficient();
  const HermiteBasis& basis = f.disc().basis();
  for (int i = 0; i < f.disc().n_spatial(); ++i) {
    for (int a = 0; a < basis.size(); ++a) c.at(i, a) *= basis.degree(a);
  }
  return c.in(f.representation());
}

PhaseField grad_v_component(const PhaseField& f, int axis) {
  PhaseField c = f.to_coefficient();
  PhaseField out(f.discretization(), Representation::Coefficient);
  const int nv = f.disc().n_velocity();
  for (int i = 0; i < f.disc().n_spatial(); ++i) {
    const std::vector<HermiteRep> g = grad_v(c.velocity_slice(i));
    out.data().segment(static_cast<Eigen::Index>(i) * nv, nv) = g[axis].coeffs();
  }
  return out.in(f.representation());
}

double velocity_sobolev_norm(const PhaseField& f, double s) {
  const PhaseField c = f.to_coefficient();
  const Discretization& disc = f.disc();
  const HermiteBasis& basis = disc.basis();
  std::vector<double> weight(basis.size());
  for (int a = 0; a < basis.size(); ++a) weight[a] = std::pow(1.0 + basis.degree(a), s);
  double sum = 0.0;
  for (int i = 0; i < disc.n_spatial(); ++i) {
    double local = 0.0;
    for (int a = 0; a < basis.size(); ++a) local += weight[a] * c.at(i, a) * c.at(i, a);
    sum += disc.x_weight(i) * local;
  }
  return std::sqrt(sum);
}

double l2_norm(const PhaseField& f) { return velocity_sobolev_norm(f, 0.0); }

double grad_v_norm(const PhaseField& f) {
  const PhaseField c = f.to_coefficient();
  const Discretization& disc = f.disc();
  double sum = 0.0;
  for (int i = 0; i < disc.n_spatial(); ++i) {
    for (int a = 0; a < disc.n_velocity(); ++a) sum += disc.x_weight(i) * disc.basis().degree(a) * c.at(i, a) * c.at(i, a);
  }
  return std::sqrt(sum);
}

double mean_U(const PhaseField& f) {
  const PhaseField c = f.to_coefficient();
  const Discretization& disc = f.disc();
  double sum = 0.0;
  double vol = 0.0;
  for (int i = 0; i < disc.n_spatial(); ++i) {
    sum += disc.x_weight(i) * c.at(i, 0);
    vol += disc.x_weight(i);
  }
  return sum / vol;
}

double inner_dx_dgamma(const PhaseField& f, const PhaseField& g) {
  const PhaseField a = f.to_coefficient();
  const PhaseField b = g.to_coefficient();
  const Discretization& disc = f.disc();
  const int nv = disc.n_velocity();
  double sum = 0.0;
  for (int i = 0; i < disc.n_spatial(); ++i) {
    sum += disc.x_weight(i) * a.data().segment(static_cast<Eigen::Index>(i) * nv, nv).dot(
                                  b.data().segment(static_cast<Eigen::Index>(i) * nv, nv));
  }
  return sum;
}

double norm_hyp(const PhaseField& f) {
  const Representation natural = f.disc().default_representation();
  const PhaseField g = f.in(natural);
  return velocity_sobolev_norm(g, 1.0) + velocity_sobolev_norm(transport_apply(g), -1.0);
}

std::vector<PhaseField> kinetic_transport(const TimeSeriesField& f) {
  const std::size_t nt = f.slices.size();
  if (nt < 2) throw std::invalid_argument("kinetic_transport: need at least two slices");
  const Representation natural = f.slices[0].disc().default_representation();
  std::vector<PhaseField> slices;
  slices.reserve(nt);
  for (const PhaseField& s : f.slices) slices.push_back(s.in(natural));
  const Eigen::Index size = slices[0].data().size();

  std::vector<Eigen::VectorXd> dt(nt, Eigen::VectorXd::Zero(size));
  if (f.periodic) {
    FourierGrid grid({static_cast<int>(nt)}, {f.dt * static_cast<double>(nt)});
    std::vector<double> series(nt);
    for (Eigen::Index c = 0; c < size; ++c) {
      for (std::size_t n = 0; n < nt; ++n) series[n] = slices[n].data()[c];
      const std::vector<double> d = grid.derivative(series, 0);
      for (std::size_t n = 0; n < nt; ++n) dt[n][c] = d[n];
    }
  } else {
    for (std::size_t n = 0; n < nt; ++n) {
      if (n == 0) {
        dt[n] = (slices[1].data() - slices[0].data()) / f.dt;
      } else if (n + 1 == nt) {
        dt[n] = (slices[n].data() - slices[n - 1].data()) / f.dt;
      } else {
        dt[n] = (slices[n + 1].data() - slices[n - 1].data()) / (2.0 * f.dt);
      }
    }
  }
  std::vector<PhaseField> out;
  out.reserve(nt);
  for (std::size_t n = 0; n < nt; ++n) {
    PhaseField d(slices[n].discretization(), natural, dt[n]);
    out.push_back(d - transport_apply(slices[n]));
  }
  return out;
}

double norm_kin(const TimeSeriesField& f) {
  const std::vector<PhaseField> kin = kinetic_transport(f);
  const std::size_t nt = f.slices.size();
  double h1 = 0.0;
  double hm1 = 0.0;
  for (std::size_t n = 0; n < nt; ++n) {
    double w = f.dt;
    if (!f.periodic && (n == 0 || n + 1 == nt)) w *= 0.5;
    const double a = velocity_sobolev_norm(f.slices[n], 1.0);
    const double b = velocity_sobolev_norm(kin[n], -1.0);
    h1 += w * a * a;
    hm1 += w * b * b;
  }
  return std::sqrt(h1) + std::sqrt(hm1);
}

}  // namespace kfp
