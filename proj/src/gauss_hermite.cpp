#include "kfp/gauss_hermite.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace kfp {

MultiIndex::MultiIndex(std::vector<int> entries) : entries_(std::move(entries)) {
  if (entries_.empty() || static_cast<int>(entries_.size()) > kMaxVelocityDim) {
    throw std::invalid_argument("MultiIndex: dimension must be 1.." +
                                std::to_string(kMaxVelocityDim));
  }
  for (int e : entries_) {
    if (e < 0) throw std::invalid_argument("MultiIndex: negative entry");
  }
}

int MultiIndex::total_degree() const {
  return std::accumulate(entries_.begin(), entries_.end(), 0);
}

HermiteBasis::HermiteBasis(int d_v, int cutoff) : dim_(d_v), cutoff_(cutoff) {
  if (d_v < 1 || d_v > kMaxVelocityDim) {
    throw std::invalid_argument("HermiteBasis: d_v must be 1..3");
  }
  if (cutoff < 0) throw std::invalid_argument("HermiteBasis: negative cutoff");
  int total = 1;
  for (int j = 0; j < d_v; ++j) total *= cutoff + 1;
  degree_.resize(total);
  for (int flat = 0; flat < total; ++flat) {
    int rest = flat;
    int deg = 0;
    for (int j = 0; j < d_v; ++j) {
      deg += rest % (cutoff + 1);
      rest /= cutoff + 1;
    }
    degree_[flat] = deg;
  }
}

int HermiteBasis::stride(int axis) const {
  int s = 1;
  for (int j = axis + 1; j < dim_; ++j) s *= cutoff_ + 1;
  return s;
}

int HermiteBasis::component(int flat, int axis) const {
  return (flat / stride(axis)) % (cutoff_ + 1);
}

MultiIndex HermiteBasis::multi_index(int flat) const {
  std::vector<int> e(dim_);
  for (int j = 0; j < dim_; ++j) e[j] = component(flat, j);
  return MultiIndex(std::move(e));
}

int HermiteBasis::flat_index(const MultiIndex& alpha) const {
  if (alpha.dim() != dim_) throw std::invalid_argument("flat_index: dimension mismatch");
  int flat = 0;
  for (int j = 0; j < dim_; ++j) {
    if (alpha[j] > cutoff_) throw std::out_of_range("flat_index: entry above cutoff");
    flat = flat * (cutoff_ + 1) + alpha[j];
  }
  return flat;
}

HermiteRep::HermiteRep(HermiteBasis basis)
    : basis_(std::move(basis)), coeffs_(Eigen::VectorXd::Zero(basis_.size())) {}

HermiteRep::HermiteRep(HermiteBasis basis, Eigen::VectorXd coeffs)
    : basis_(std::move(basis)), coeffs_(std::move(coeffs)) {
  if (coeffs_.size() != basis_.size()) {
    throw std::invalid_argument("HermiteRep: coefficient count does not match basis");
  }
}

HermiteRep HermiteRep::basis_function(const HermiteBasis& basis, const MultiIndex& alpha) {
  HermiteRep rep(basis);
  rep.coeffs_[basis.flat_index(alpha)] = 1.0;
  return rep;
}

HermiteRep& HermiteRep::operator+=(const HermiteRep& other) {
  if (!(basis_ == other.basis_)) throw std::invalid_argument("HermiteRep: basis mismatch");
  coeffs_ += other.coeffs_;
  return *this;
}

HermiteRep& HermiteRep::operator-=(const HermiteRep& other) {
  if (!(basis_ == other.basis_)) throw std::invalid_argument("HermiteRep: basis mismatch");
  coeffs_ -= other.coeffs_;
  return *this;
}

HermiteRep& HermiteRep::operator*=(double s) {
  coeffs_ *= s;
  return *this;
}

void hermite_table(double t, std::span<double> out) {
  if (out.empty()) return;
  out[0] = 1.0;
  if (out.size() == 1) return;
  out[1] = t;
  for (std::size_t n = 1; n + 1 < out.size(); ++n) {
    const double dn = static_cast<double>(n);
    out[n + 1] = (t * out[n] - std::sqrt(dn) * out[n - 1]) / std::sqrt(dn + 1.0);
  }
}

double hermite_value(int n, double t) {
  std::vector<double> table(n + 1);
  hermite_table(t, table);
  return table[n];
}

Quadrature::Quadrature(int d_v, int nodes_per_axis) : dim_(d_v) {
  if (d_v < 1 || d_v > kMaxVelocityDim) throw std::invalid_argument("Quadrature: d_v must be 1..3");
  const int m = nodes_per_axis;
  if (m < 1) throw std::invalid_argument("Quadrature: need at least one node");

  // Golub-Welsch on the symmetric Jacobi matrix of the normalized recurrence.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(m, m);
  for (int k = 1; k < m; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi, Eigen::EigenvaluesOnly);
  Eigen::VectorXd x = eig.eigenvalues();

  // Newton polish on h_m, then exact symmetrization.
  std::vector<double> table(m + 1);
  for (int k = 0; k < m; ++k) {
    for (int it = 0; it < 3; ++it) {
      hermite_table(x[k], table);
      const double deriv = std::sqrt(static_cast<double>(m)) * table[m - 1];
      if (deriv == 0.0) break;
      x[k] -= table[m] / deriv;
    }
  }
  for (int k = 0; k < m / 2; ++k) {
    const double a = 0.5 * (x[m - 1 - k] - x[k]);
    x[k] = -a;
    x[m - 1 - k] = a;
  }
  if (m % 2 == 1) x[m / 2] = 0.0;

  // Christoffel weights for an orthonormal family under a probability measure.
  Eigen::VectorXd w(m);
  for (int k = 0; k < m; ++k) {
    hermite_table(x[k], std::span<double>(table.data(), m));
    double s = 0.0;
    for (int n = 0; n < m; ++n) s += table[n] * table[n];
    w[k] = 1.0 / s;
  }
  w /= w.sum();
  for (int k = 0; k < m / 2; ++k) {
    const double a = 0.5 * (w[k] + w[m - 1 - k]);
    w[k] = w[m - 1 - k] = a;
  }
  nodes_ = x;
  weights_ = w;
}

int Quadrature::size() const {
  int s = 1;
  for (int j = 0; j < dim_; ++j) s *= nodes_per_axis();
  return s;
}

std::vector<double> Quadrature::node(int flat) const {
  const int m = nodes_per_axis();
  std::vector<double> v(dim_);
  for (int j = dim_ - 1; j >= 0; --j) {
    v[j] = nodes_[flat % m];
    flat /= m;
  }
  return v;
}

double Quadrature::weight(int flat) const {
  const int m = nodes_per_axis();
  double w = 1.0;
  for (int j = 0; j < dim_; ++j) {
    w *= weights_[flat % m];
    flat /= m;
  }
  return w;
}

Eigen::MatrixXd Quadrature::backward_1d(int cutoff) const {
  const int m = nodes_per_axis();
  Eigen::MatrixXd e(m, cutoff + 1);
  std::vector<double> table(cutoff + 1);
  for (int k = 0; k < m; ++k) {
    hermite_table(nodes_[k], table);
    for (int a = 0; a <= cutoff; ++a) e(k, a) = table[a];
  }
  return e;
}

Eigen::MatrixXd Quadrature::forward_1d(int cutoff) const {
  Eigen::MatrixXd p = backward_1d(cutoff).transpose();
  for (int k = 0; k < p.cols(); ++k) p.col(k) *= weights_[k];
  return p;
}

Eigen::VectorXd apply_along_axis(const Eigen::MatrixXd& op, const Eigen::VectorXd& data,
                                 std::span<const int> shape, int axis) {
  const int d = static_cast<int>(shape.size());
  int outer = 1;
  for (int j = 0; j < axis; ++j) outer *= shape[j];
  int inner = 1;
  for (int j = axis + 1; j < d; ++j) inner *= shape[j];
  const int n_in = shape[axis];
  if (op.cols() != n_in) throw std::invalid_argument("apply_along_axis: operator width mismatch");
  if (data.size() != static_cast<Eigen::Index>(outer) * n_in * inner) {
    throw std::invalid_argument("apply_along_axis: data size mismatch");
  }
  const int n_out = static_cast<int>(op.rows());
  Eigen::VectorXd out(static_cast<Eigen::Index>(outer) * n_out * inner);
  for (int o = 0; o < outer; ++o) {
    // Slab of shape (n_in, inner) in row-major order is a column-major (inner, n_in) block.
    Eigen::Map<const Eigen::MatrixXd> in_block(data.data() + static_cast<Eigen::Index>(o) * n_in * inner,
                                               inner, n_in);
    Eigen::Map<Eigen::MatrixXd> out_block(out.data() + static_cast<Eigen::Index>(o) * n_out * inner,
                                          inner, n_out);
    out_block.noalias() = in_block * op.transpose();
  }
  return out;
}

namespace {

std::vector<int> cube_shape(int dim, int n) { return std::vector<int>(dim, n); }

}  // namespace

Eigen::VectorXd Quadrature::to_nodal(const HermiteRep& rep) const {
  if (rep.dim() != dim_) throw std::invalid_argument("to_nodal: dimension mismatch");
  const Eigen::MatrixXd e = backward_1d(rep.cutoff());
  std::vector<int> shape = cube_shape(dim_, rep.cutoff() + 1);
  Eigen::VectorXd data = rep.coeffs();
  for (int j = 0; j < dim_; ++j) {
    data = apply_along_axis(e, data, shape, j);
    shape[j] = nodes_per_axis();
  }
  return data;
}

HermiteRep Quadrature::to_coefficients(const Eigen::VectorXd& nodal, int cutoff) const {
  if (nodal.size() != size()) throw std::invalid_argument("project: sample count does not match quadrature");
  if (nodes_per_axis() < cutoff + 1) throw std::invalid_argument("project: need at least N+1 nodes per axis");
  const Eigen::MatrixXd p = forward_1d(cutoff);
  std::vector<int> shape = cube_shape(dim_, nodes_per_axis());
  Eigen::VectorXd data = nodal;
  for (int j = 0; j < dim_; ++j) {
    data = apply_along_axis(p, data, shape, j);
    shape[j] = cutoff + 1;
  }
  return HermiteRep(HermiteBasis(dim_, cutoff), std::move(data));
}

double eval(const HermiteRep& rep, std::span<const double> v) {
  const HermiteBasis& basis = rep.basis();
  if (static_cast<int>(v.size()) != basis.dim()) throw std::invalid_argument("eval: dimension mismatch");
  const int n = basis.modes_per_axis();
  std::vector<double> tables(static_cast<std::size_t>(basis.dim()) * n);
  for (int j = 0; j < basis.dim(); ++j) {
    hermite_table(v[j], std::span<double>(tables.data() + static_cast<std::size_t>(j) * n, n));
  }
  double sum = 0.0;
  for (int flat = 0; flat < basis.size(); ++flat) {
    const double c = rep.coeffs()[flat];
    if (c == 0.0) continue;
    double h = 1.0;
    for (int j = 0; j < basis.dim(); ++j) h *= tables[j * n + basis.component(flat, j)];
    sum += c * h;
  }
  return sum;
}

HermiteRep project(const Eigen::VectorXd& samples, const Quadrature& quad, int cutoff) {
  return quad.to_coefficients(samples, cutoff);
}

HermiteRep project(const std::function<double(std::span<const double>)>& f, const Quadrature& quad,
                   int cutoff) {
  Eigen::VectorXd samples(quad.size());
  for (int k = 0; k < quad.size(); ++k) {
    const std::vector<double> v = quad.node(k);
    samples[k] = f(v);
  }
  return quad.to_coefficients(samples, cutoff);
}

std::vector<HermiteRep> grad_v(const HermiteRep& rep) {
  const HermiteBasis& basis = rep.basis();
  std::vector<HermiteRep> out;
  out.reserve(basis.dim());
  for (int j = 0; j < basis.dim(); ++j) {
    HermiteRep g(basis);
    const int s = basis.stride(j);
    for (int flat = 0; flat < basis.size(); ++flat) {
      const int a = basis.component(flat, j);
      if (a > 0) g.coeffs()[flat - s] = std::sqrt(static_cast<double>(a)) * rep.coeffs()[flat];
    }
    out.push_back(std::move(g));
  }
  return out;
}

HermiteRep grad_v_star(std::span<const HermiteRep> field) {
  if (field.empty()) throw std::invalid_argument("grad_v_star: empty field");
  const HermiteBasis& basis = field[0].basis();
  if (static_cast<int>(field.size()) != basis.dim()) {
    throw std::invalid_argument("grad_v_star: need one component per velocity axis");
  }
  HermiteRep out(basis);
  for (int j = 0; j < basis.dim(); ++j) {
    if (!(field[j].basis() == basis)) throw std::invalid_argument("grad_v_star: basis mismatch");
    const int s = basis.stride(j);
    for (int flat = 0; flat < basis.size(); ++flat) {
      const int a = basis.component(flat, j);
      if (a < basis.cutoff()) {
        out.coeffs()[flat + s] += std::sqrt(static_cast<double>(a + 1)) * field[j].coeffs()[flat];
      }
    }
  }
  return out;
}

HermiteRep multiply_by_v(const HermiteRep& rep, int axis) {
  const HermiteBasis& basis = rep.basis();
  if (axis < 0 || axis >= basis.dim()) throw std::out_of_range("multiply_by_v: bad axis");
  HermiteRep out(basis);
  const int s = basis.stride(axis);
  for (int flat = 0; flat < basis.size(); ++flat) {
    const int a = basis.component(flat, axis);
    const double c = rep.coeffs()[flat];
    if (a < basis.cutoff()) out.coeffs()[flat + s] += std::sqrt(static_cast<double>(a + 1)) * c;
    if (a > 0) out.coeffs()[flat - s] += std::sqrt(static_cast<double>(a)) * c;
  }
  return out;
}

HermiteRep ou_apply(const HermiteRep& rep) {
  HermiteRep out = rep;
  for (int flat = 0; flat < rep.basis().size(); ++flat) out.coeffs()[flat] *= rep.basis().degree(flat);
  return out;
}

double inner(const HermiteRep& a, const HermiteRep& b) {
  if (!(a.basis() == b.basis())) throw std::invalid_argument("inner: basis mismatch");
  return a.coeffs().dot(b.coeffs());
}

double sobolev_norm(const HermiteRep& rep, double s) {
  double sum = 0.0;
  for (int flat = 0; flat < rep.basis().size(); ++flat) {
    const double c = rep.coeffs()[flat];
    sum += std::pow(1.0 + rep.basis().degree(flat), s) * c * c;
  }
  return std::sqrt(sum);
}

double norm(const HermiteRep& rep, NormKind which) {
  switch (which) {
    case NormKind::L2: return rep.coeffs().norm();
    case NormKind::H1: return sobolev_norm(rep, 1.0);
    case NormKind::Hm1: return sobolev_norm(rep, -1.0);
  }
  return 0.0;
}

SparseMatrix lowering_matrix(int cutoff) {
  SparseMatrix g(cutoff + 1, cutoff + 1);
  std::vector<Eigen::Triplet<double>> t;
  for (int n = 1; n <= cutoff; ++n) t.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
  g.setFromTriplets(t.begin(), t.end());
  return g;
}

SparseMatrix raising_matrix(int cutoff) { return SparseMatrix(lowering_matrix(cutoff).transpose()); }

SparseMatrix position_matrix(int cutoff) {
  SparseMatrix g = lowering_matrix(cutoff);
  return SparseMatrix(g + SparseMatrix(g.transpose()));
}

}  // namespace kfp
