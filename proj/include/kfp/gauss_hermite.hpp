#pragma once

// Velocity-space spectral calculus on the orthonormal probabilists' Hermite
// basis of L^2(gamma), gamma the standard Gaussian measure.
//
// Basis convention (fixed project-wide):
//   h_0 = 1, h_1(t) = t, h_{n+1}(t) = (t h_n(t) - sqrt(n) h_{n-1}(t)) / sqrt(n+1)
// and in d_v dimensions h_alpha(v) = prod_j h_{alpha_j}(v_j).
//
//   d/dt h_n          = sqrt(n) h_{n-1}                      (lowering)
//   nabla_v^* h_n     = sqrt(n+1) h_{n+1}                    (raising)
//   t h_n             = sqrt(n+1) h_{n+1} + sqrt(n) h_{n-1}
//   nabla_v^* nabla_v = diag(|alpha|)
//
// The index set is the full tensor product {0..N}^{d_v}, flattened row-major
// (last axis fastest). Raising operators drop coefficients that would leave
// the index set.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <span>
#include <vector>

namespace kfp {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline constexpr int kMaxVelocityDim = 3;

class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<int> entries);
  MultiIndex(std::initializer_list<int> entries) : MultiIndex(std::vector<int>(entries)) {}

  int dim() const { return static_cast<int>(entries_.size()); }
  int operator[](int axis) const { return entries_[axis]; }
  int total_degree() const;
  const std::vector<int>& entries() const { return entries_; }

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

 private:
  std::vector<int> entries_;
};

/// Tensor-product index set {0..N}^{d_v}.
class HermiteBasis {
 public:
  HermiteBasis() = default;
  HermiteBasis(int d_v, int cutoff);

  int dim() const { return dim_; }
  int cutoff() const { return cutoff_; }
  int modes_per_axis() const { return cutoff_ + 1; }
  int size() const { return static_cast<int>(degree_.size()); }

  MultiIndex multi_index(int flat) const;
  int flat_index(const MultiIndex& alpha) const;
  /// |alpha| of the flat index.
  int degree(int flat) const { return degree_[flat]; }
  int component(int flat, int axis) const;
  int stride(int axis) const;

  friend bool operator==(const HermiteBasis& a, const HermiteBasis& b) {
    return a.dim_ == b.dim_ && a.cutoff_ == b.cutoff_;
  }

 private:
  int dim_ = 0;
  int cutoff_ = -1;
  std::vector<int> degree_;
};

class HermiteRep {
 public:
  HermiteRep() = default;
  explicit HermiteRep(HermiteBasis basis);
  HermiteRep(HermiteBasis basis, Eigen::VectorXd coeffs);

  static HermiteRep basis_function(const HermiteBasis& basis, const MultiIndex& alpha);

  const HermiteBasis& basis() const { return basis_; }
  int dim() const { return basis_.dim(); }
  int cutoff() const { return basis_.cutoff(); }
  const Eigen::VectorXd& coeffs() const { return coeffs_; }
  Eigen::VectorXd& coeffs() { return coeffs_; }
  double coeff(const MultiIndex& alpha) const { return coeffs_[basis_.flat_index(alpha)]; }

  /// <f>_gamma, the coefficient of h_0.
  double mean() const { return coeffs_[0]; }

  HermiteRep& operator+=(const HermiteRep& other);
  HermiteRep& operator-=(const HermiteRep& other);
  HermiteRep& operator*=(double s);
  friend HermiteRep operator+(HermiteRep a, const HermiteRep& b) { return a += b; }
  friend HermiteRep operator-(HermiteRep a, const HermiteRep& b) { return a -= b; }
  friend HermiteRep operator*(double s, HermiteRep a) { return a *= s; }

 private:
  HermiteBasis basis_;
  Eigen::VectorXd coeffs_;
};

/// Normalized Hermite value h_n(t).
double hermite_value(int n, double t);
/// out[k] = h_k(t) for k = 0..out.size()-1.
void hermite_table(double t, std::span<double> out);

/// Tensor Gauss-Hermite rule for gamma: M nodes per axis, weights summing to 1.
class Quadrature {
 public:
  Quadrature() = default;
  Quadrature(int d_v, int nodes_per_axis);
  /// Default rule used for projections: M = N + 8 nodes per axis.
  static Quadrature for_cutoff(int d_v, int cutoff) { return Quadrature(d_v, cutoff + 8); }

  int dim() const { return dim_; }
  int nodes_per_axis() const { return static_cast<int>(nodes_.size()); }
  int size() const;

  const Eigen::VectorXd& nodes_1d() const { return nodes_; }
  const Eigen::VectorXd& weights_1d() const { return weights_; }
  /// Coordinates of tensor node `flat` (row-major, last axis fastest).
  std::vector<double> node(int flat) const;
  double weight(int flat) const;

  /// (N+1) x M matrix with entries w_k h_a(v_k): nodal values -> coefficients.
  Eigen::MatrixXd forward_1d(int cutoff) const;
  /// M x (N+1) matrix with entries h_a(v_k): coefficients -> nodal values.
  Eigen::MatrixXd backward_1d(int cutoff) const;

  Eigen::VectorXd to_nodal(const HermiteRep& rep) const;
  HermiteRep to_coefficients(const Eigen::VectorXd& nodal, int cutoff) const;

 private:
  int dim_ = 0;
  Eigen::VectorXd nodes_;
  Eigen::VectorXd weights_;
};

enum class NormKind { L2, H1, Hm1 };

double eval(const HermiteRep& rep, std::span<const double> v);

/// Coefficients sum_k w_k f(v_k) h_alpha(v_k) from samples on the tensor nodes.
/// Throws std::invalid_argument on size mismatch or too few nodes.
HermiteRep project(const Eigen::VectorXd& samples, const Quadrature& quad, int cutoff);
HermiteRep project(const std::function<double(std::span<const double>)>& f,
                   const Quadrature& quad, int cutoff);

std::vector<HermiteRep> grad_v(const HermiteRep& rep);
HermiteRep grad_v_star(std::span<const HermiteRep> field);
HermiteRep multiply_by_v(const HermiteRep& rep, int axis);
/// nabla_v^* nabla_v, diagonal with eigenvalue |alpha|.
HermiteRep ou_apply(const HermiteRep& rep);

double inner(const HermiteRep& a, const HermiteRep& b);
double norm(const HermiteRep& rep, NormKind which);
/// (sum (1+|alpha|)^s c_alpha^2)^{1/2}; s = 0, 1, -1 give L2, H1, Hm1.
double sobolev_norm(const HermiteRep& rep, double s);

// One-dimensional operator matrices on {0..N}.
SparseMatrix lowering_matrix(int cutoff);
SparseMatrix raising_matrix(int cutoff);
SparseMatrix position_matrix(int cutoff);

/// Apply a 1-D matrix along `axis` of a row-major tensor with `shape`.
/// The output shape equals `shape` with shape[axis] replaced by op.rows().
Eigen::VectorXd apply_along_axis(const Eigen::MatrixXd& op, const Eigen::VectorXd& data,
                                 std::span<const int> shape, int axis);

}  // namespace kfp
