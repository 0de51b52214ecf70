#pragma once

// Phase-space discretization: spatial grids x Hermite velocity space, the
// operator calculus of the Kramers operator
//
//     A f = nabla_v^* nabla_v f - v . grad_x f + b . grad_v f
//
// and the weighted norms of H^1_hyp / H^1_kin.
//
// Flattened layout: data[i * n_velocity + a] with i the spatial node (row-major
// over spatial axes) and a the velocity index (Hermite mode or collocation node).

#include "kfp/gauss_hermite.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kfp {

enum class DomainKind { Torus, Interval };

struct Potential {
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  std::string name;
};

/// f_0(x, v) on the hypoelliptic boundary.
using BoundaryData = std::function<double(std::span<const double> x, std::span<const double> v)>;

struct DomainSpec {
  DomainKind kind = DomainKind::Torus;
  int d_x = 1;
  std::vector<double> extents{1.0};
  int n_x = 16;
  BoundaryData boundary_data;
  std::optional<Potential> potential;

  static DomainSpec torus(double length, int n_x, int d_x = 1);
  static DomainSpec interval(double length, int n_x, BoundaryData f0 = {});

  void validate() const;
  double volume() const;
};

/// Drift field b(x, v) with d_v components.
class DriftField {
 public:
  using Eval = std::function<void(std::span<const double> x, std::span<const double> v,
                                   std::span<double> out)>;

  DriftField() = default;
  static DriftField zero() { return DriftField(); }
  /// b = grad H (x-only), the conservative case.
  static DriftField conservative(Potential potential);
  static DriftField general(Eval eval, bool depends_on_v, std::string name);

  bool is_zero() const { return kind_ == Kind::Zero; }
  bool is_conservative() const { return kind_ != Kind::General; }
  bool depends_on_v() const { return depends_on_v_; }
  const Potential* potential() const { return potential_ ? &*potential_ : nullptr; }
  const std::string& name() const { return name_; }

  /// Writes b(x, v) into out (size d_v); components beyond the potential's
  /// spatial dimension are zero.
  void evaluate(std::span<const double> x, std::span<const double> v, std::span<double> out) const;
  DriftField scaled(double factor) const;

 private:
  enum class Kind { Zero, Potential, General };
  Kind kind_ = Kind::Zero;
  bool depends_on_v_ = false;
  std::optional<Potential> potential_;
  Eval eval_;
  std::string name_ = "zero";
};

enum class Representation { Coefficient, Nodal };

/// Spatial grid + velocity basis + collocation rule; immutable once built.
///
/// Collocation uses M = N+1 Gauss-Hermite nodes per axis, which makes the
/// coefficient <-> nodal maps exact inverses. On Interval domains the cutoff is
/// raised to the next odd value so that M is even and no node sits on v = 0.
class Discretization {
 public:
  Discretization(DomainSpec domain, int d_v, int cutoff);

  static std::shared_ptr<const Discretization> make(DomainSpec domain, int d_v, int cutoff) {
    return std::make_shared<const Discretization>(std::move(domain), d_v, cutoff);
  }
  /// Cutoff actually used for a requested cutoff on a given domain kind.
  static int effective_cutoff(DomainKind kind, int requested);

  const DomainSpec& domain() const { return domain_; }
  const HermiteBasis& basis() const { return basis_; }
  const Quadrature& collocation() const { return collocation_; }
  int d_v() const { return basis_.dim(); }
  int cutoff() const { return basis_.cutoff(); }
  int requested_cutoff() const { return requested_cutoff_; }

  int n_spatial() const { return n_spatial_; }
  int n_velocity() const { return basis_.size(); }
  int size() const { return n_spatial_ * basis_.size(); }
  int index(int i, int a) const { return i * basis_.size() + a; }

  /// Coordinate of spatial node i along axis.
  double x(int i, int axis = 0) const { return coords_[static_cast<std::size_t>(i) * domain_.d_x + axis]; }
  std::span<const double> point(int i) const {
    return {coords_.data() + static_cast<std::size_t>(i) * domain_.d_x, static_cast<std::size_t>(domain_.d_x)};
  }
  /// Quadrature weight of node i for dx (uniform on Torus, trapezoid on Interval).
  double x_weight(int i) const { return x_weights_[i]; }
  /// exp(-H(x_i)), or 1 without a potential.
  double sigma(int i) const { return sigma_[i]; }
  double spacing(int axis = 0) const { return spacing_[axis]; }

  /// Velocity node coordinates of collocation index k.
  std::span<const double> velocity_node(int k) const {
    return {vnodes_.data() + static_cast<std::size_t>(k) * d_v(), static_cast<std::size_t>(d_v())};
  }
  double velocity_weight(int k) const { return vweights_[k]; }

  /// Default operator representation for the domain.
  Representation default_representation() const {
    return domain_.kind == DomainKind::Torus ? Representation::Coefficient : Representation::Nodal;
  }

  const Eigen::MatrixXd& nodal_from_coeff_1d() const { return backward_; }
  const Eigen::MatrixXd& coeff_from_nodal_1d() const { return forward_; }

  /// Per-velocity-block transforms (length n_velocity vectors).
  Eigen::VectorXd velocity_to_nodal(const Eigen::VectorXd& coeffs) const;
  Eigen::VectorXd velocity_to_coeff(const Eigen::VectorXd& nodal) const;

 private:
  DomainSpec domain_;
  int requested_cutoff_;
  HermiteBasis basis_;
  Quadrature collocation_;
  int n_spatial_ = 0;
  std::vector<double> coords_;
  std::vector<double> x_weights_;
  std::vector<double> sigma_;
  std::vector<double> spacing_;
  std::vector<double> vnodes_;
  std::vector<double> vweights_;
  Eigen::MatrixXd backward_;
  Eigen::MatrixXd forward_;
};

using DiscretizationPtr = std::shared_ptr<const Discretization>;

class PhaseField {
 public:
  PhaseField() = default;
  PhaseField(DiscretizationPtr disc, Representation rep);
  PhaseField(DiscretizationPtr disc, Representation rep, Eigen::VectorXd data);

  /// Samples f(x, v) on the collocation nodes (exact interpolation; coefficients
  /// obtained through the square collocation transform).
  static PhaseField from_function(DiscretizationPtr disc,
                                  const std::function<double(std::span<const double>, std::span<const double>)>& f,
                                  Representation rep);
  /// sum_i g(x_i) h_alpha at every node.
  static PhaseField mode(DiscretizationPtr disc, const std::function<double(std::span<const double>)>& g,
                         const MultiIndex& alpha, Representation rep);

  const DiscretizationPtr& discretization() const { return disc_; }
  const Discretization& disc() const { return *disc_; }
  Representation representation() const { return rep_; }
  const Eigen::VectorXd& data() const { return data_; }
  Eigen::VectorXd& data() { return data_; }
  double& at(int i, int a) { return data_[disc_->index(i, a)]; }
  double at(int i, int a) const { return data_[disc_->index(i, a)]; }

  PhaseField in(Representation rep) const;
  PhaseField to_coefficient() const { return in(Representation::Coefficient); }
  PhaseField to_nodal() const { return in(Representation::Nodal); }
  /// Hermite coefficients at spatial node i.
  HermiteRep velocity_slice(int i) const;

  PhaseField& operator+=(const PhaseField& other);
  PhaseField& operator-=(const PhaseField& other);
  PhaseField& operator*=(double s);
  friend PhaseField operator+(PhaseField a, const PhaseField& b) { return a += b; }
  friend PhaseField operator-(PhaseField a, const PhaseField& b) { return a -= b; }
  friend PhaseField operator*(double s, PhaseField a) { return a *= s; }

 private:
  DiscretizationPtr disc_;
  Representation rep_ = Representation::Coefficient;
  Eigen::VectorXd data_;
};

/// Time-indexed field on a uniform time grid. When `periodic`, the slices sample
/// one period [0, n*dt) and d/dt is spectral; otherwise they include both
/// endpoints and d/dt is second-order finite differences.
struct TimeSeriesField {
  std::vector<PhaseField> slices;
  double dt = 1.0;
  bool periodic = false;
};

enum class TransportScheme { Spectral, Upwind, Centered };

/// Velocity closure for nodal operators. Spectral applies the exact Hermite
/// calculus through the collocation transforms. Monotone uses a flux-form
/// Ornstein-Uhlenbeck operator between neighboring Gauss-Hermite nodes and
/// upwinded b . grad_v; together with upwind transport the generator is then
/// an M-matrix, at the price of first-order velocity accuracy.
enum class VelocityScheme { Spectral, Monotone };

/// Assembled sparse operators over the flattened index, in one representation.
struct OperatorSet {
  DiscretizationPtr disc;
  Representation rep = Representation::Coefficient;
  TransportScheme scheme = TransportScheme::Spectral;
  VelocityScheme velocity = VelocityScheme::Spectral;
  bool conservative = true;
  bool drift_is_zero = true;

  SparseMatrix ou;         // nabla_v^* nabla_v (x) I_x
  SparseMatrix transport;  // v . grad_x (ghost contributions excluded)
  SparseMatrix drift;      // b . grad_v
  Eigen::VectorXd mass_m;  // diagonal of the m-weighted inner product
  Eigen::VectorXd transport_ghost;  // v . grad_x contribution of boundary ghosts

  std::vector<char> dirichlet;      // inflow boundary unknowns
  Eigen::VectorXd boundary_values;  // f_0 at Dirichlet unknowns (0 elsewhere)
  SparseMatrix system;              // generator with Dirichlet rows set to identity

  /// Torus problems: the generator annihilates constants.
  bool has_constant_kernel() const;
  Eigen::VectorXd constant_vector() const;
  /// Velocity-constant fields in the generator's kernel: constants, plus the
  /// alternating (-1)^i modes on even axes whose discrete x-derivative vanishes
  /// (spectral and centered schemes). Empty on Interval domains.
  std::vector<Eigen::VectorXd> kernel_basis() const;
  /// One flattened index per kernel vector (velocity slot 0 at spatial nodes
  /// with coordinates in {0, 1}); the kernel basis restricted to them is invertible.
  std::vector<int> kernel_pins() const;
  /// Removes the kernel component, m-orthogonally.
  Eigen::VectorXd project_off_kernel(const Eigen::VectorXd& f) const;

  SparseMatrix generator() const { return SparseMatrix(ou - transport + drift); }
  /// Right-hand side of the square system: f* on equation rows, f_0 on Dirichlet rows.
  Eigen::VectorXd system_rhs(const Eigen::VectorXd& fstar) const;
  double inner_m(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
  double norm_m(const Eigen::VectorXd& a) const { return std::sqrt(inner_m(a, a)); }
  int dirichlet_count() const;

  PhaseField make_field(Eigen::VectorXd data) const { return PhaseField(disc, rep, std::move(data)); }
};

/// Throws std::invalid_argument for unsupported (kind, scheme) pairs; the
/// monotone velocity closure needs a nodal (upwind) transport scheme.
OperatorSet assemble(DiscretizationPtr disc, const DriftField& drift, TransportScheme scheme,
                     VelocityScheme velocity = VelocityScheme::Spectral);
OperatorSet assemble(DiscretizationPtr disc, const DriftField& drift);
OperatorSet assemble(const DomainSpec& domain, const DriftField& drift, int d_v, int cutoff);

TransportScheme default_scheme(DomainKind kind);

/// v . grad_x f by a matrix-free route: FFT differentiation on the Torus
/// (coefficient representation), upwind stencils on the Interval (nodal
/// representation; ghosts from the boundary data, zero when the domain carries
/// none).
PhaseField transport_apply(const PhaseField& f);

/// Block-diagonal matrix mapping nodal values to Hermite coefficients at every
/// spatial node (the identity for coefficient-form operator sets).
SparseMatrix nodal_to_coefficient_matrix(const Discretization& disc);

/// Nodal upwind v . grad_x on an Interval with inward one-sided differences on
/// inflow nodes instead of ghosts, so that constants are annihilated.
SparseMatrix upwind_transport_closed(const Discretization& disc);

/// Velocity-only Kramers pieces, matrix-free.
PhaseField ou_apply(const PhaseField& f);
/// Component `axis` of grad_v f.
PhaseField grad_v_component(const PhaseField& f, int axis);

// Norms with dx dgamma integration.
double l2_norm(const PhaseField& f);
/// (sum_i w_i sum_alpha (1+|alpha|)^s c^2)^{1/2}
double velocity_sobolev_norm(const PhaseField& f, double s);
/// ||grad_v f||_{L2(U;L2gamma)}
double grad_v_norm(const PhaseField& f);
/// (f)_U with the unweighted measure.
double mean_U(const PhaseField& f);
double inner_dx_dgamma(const PhaseField& f, const PhaseField& g);

/// ||f||_{L2(U;H1gamma)} + ||v . grad_x f||_{L2(U;Hm1gamma)}
double norm_hyp(const PhaseField& f);
/// ||f||_{L2(V;H1gamma)} + ||d_t f - v . grad_x f||_{L2(V;Hm1gamma)}
double norm_kin(const TimeSeriesField& f);
/// d_t f - v . grad_x f for every slice.
std::vector<PhaseField> kinetic_transport(const TimeSeriesField& f);

}  // namespace kfp
