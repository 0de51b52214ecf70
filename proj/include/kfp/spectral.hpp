#pragma once

// Discrete Fourier utilities on uniform periodic grids (FFTW behind the scenes).

#include <Eigen/Dense>

#include <complex>
#include <span>
#include <vector>

namespace kfp {

/// Periodic tensor grid with `dims[j]` points on [0, extents[j]).
/// Coefficients follow fhat_m = (1/n) sum_i f_i exp(-i k_m . x_i), so that
/// f_i = sum_m fhat_m exp(i k_m . x_i) and ||f||^2_{L2} = |U| sum_m |fhat_m|^2.
class FourierGrid {
 public:
  FourierGrid(std::vector<int> dims, std::vector<double> extents);

  int size() const { return total_; }
  int dim() const { return static_cast<int>(dims_.size()); }
  const std::vector<int>& dims() const { return dims_; }

  /// Angular wavevector component of flat mode index `flat` on `axis`.
  double wavenumber(int flat, int axis) const;
  double wavenumber_squared(int flat) const;
  /// True for a mode sitting on the Nyquist frequency of some even axis.
  bool is_nyquist(int flat, int axis) const;

  std::vector<std::complex<double>> forward(std::span<const double> values) const;
  std::vector<std::complex<double>> forward(std::span<const std::complex<double>> values) const;
  std::vector<std::complex<double>> backward(std::span<const std::complex<double>> modes) const;

  /// Spectral derivative along `axis`; the Nyquist mode is dropped on even grids.
  std::vector<double> derivative(std::span<const double> values, int axis) const;

 private:
  std::vector<int> dims_;
  std::vector<double> extents_;
  int total_ = 0;
};

/// Dense 1-D Fourier differentiation matrix on n points of a period of length L.
Eigen::MatrixXd fourier_derivative_matrix(int n, double length);

}  // namespace kfp
