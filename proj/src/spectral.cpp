#include "kfp/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace kfp {

namespace {

// The FFTW planner is not re-entrant; executing an existing plan on new
// arrays is. Plans are cached per (shape, direction) for the process lifetime.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_plan cached_plan(const std::vector<int>& dims, int sign) {
  static std::map<std::pair<std::vector<int>, int>, fftw_plan> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto key = std::make_pair(dims, sign);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  int total = 1;
  for (int d : dims) total *= d;
  fftw_complex* in = fftw_alloc_complex(total);
  fftw_complex* out = fftw_alloc_complex(total);
  fftw_plan plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), in, out, sign,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(in);
  fftw_free(out);
  cache.emplace(key, plan);
  return plan;
}

void run(const std::vector<int>& dims, int sign, std::vector<std::complex<double>>& in,
         std::vector<std::complex<double>>& out) {
  fftw_plan plan = cached_plan(dims, sign);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

}  // namespace

FourierGrid::FourierGrid(std::vector<int> dims, std::vector<double> extents)
    : dims_(std::move(dims)), extents_(std::move(extents)) {
  if (dims_.empty() || dims_.size() != extents_.size()) {
    throw std::invalid_argument("FourierGrid: dims/extents mismatch");
  }
  total_ = 1;
  for (int d : dims_) {
    if (d < 1) throw std::invalid_argument("FourierGrid: empty axis");
    total_ *= d;
  }
}

double FourierGrid::wavenumber(int flat, int axis) const {
  int stride = 1;
  for (int j = axis + 1; j < dim(); ++j) stride *= dims_[j];
  const int n = dims_[axis];
  int m = (flat / stride) % n;
  if (m > n / 2 || (n % 2 == 0 && m == n / 2)) m -= n;
  return 2.0 * std::numbers::pi * m / extents_[axis];
}

bool FourierGrid::is_nyquist(int flat, int axis) const {
  int stride = 1;
  for (int j = axis + 1; j < dim(); ++j) stride *= dims_[j];
  const int n = dims_[axis];
  return n % 2 == 0 && (flat / stride) % n == n / 2;
}

double FourierGrid::wavenumber_squared(int flat) const {
  double s = 0.0;
  for (int j = 0; j < dim(); ++j) {
    const double k = wavenumber(flat, j);
    s += k * k;
  }
  return s;
}

std::vector<std::complex<double>> FourierGrid::forward(std::span<const double> values) const {
  std::vector<std::complex<double>> in(values.begin(), values.end());
  return forward(std::span<const std::complex<double>>(in));
}

std::vector<std::complex<double>> FourierGrid::forward(std::span<const std::complex<double>> values) const {
  if (static_cast<int>(values.size()) != total_) throw std::invalid_argument("FourierGrid: size mismatch");
  std::vector<std::complex<double>> in(values.begin(), values.end());
  std::vector<std::complex<double>> out(total_);
  run(dims_, FFTW_FORWARD, in, out);
  const double scale = 1.0 / total_;
  for (auto& c : out) c *= scale;
  return out;
}

std::vector<std::complex<double>> FourierGrid::backward(std::span<const std::complex<double>> modes) const {
  if (static_cast<int>(modes.size()) != total_) throw std::invalid_argument("FourierGrid: size mismatch");
  std::vector<std::complex<double>> in(modes.begin(), modes.end());
  std::vector<std::complex<double>> out(total_);
  run(dims_, FFTW_BACKWARD, in, out);
  return out;
}

std::vector<double> FourierGrid::derivative(std::span<const double> values, int axis) const {
  std::vector<std::complex<double>> modes = forward(values);
  for (int m = 0; m < total_; ++m) {
    modes[m] *= is_nyquist(m, axis) ? 0.0 : std::complex<double>(0.0, wavenumber(m, axis));
  }
  const std::vector<std::complex<double>> back = backward(modes);
  std::vector<double> out(total_);
  for (int i = 0; i < total_; ++i) out[i] = back[i].real();
  return out;
}

Eigen::MatrixXd fourier_derivative_matrix(int n, double length) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  const double h = 2.0 * std::numbers::pi / n;
  const double scale = 2.0 * std::numbers::pi / length;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int diff = i - j;
      const double sign = (diff % 2 == 0) ? 1.0 : -1.0;
      const double arg = 0.5 * diff * h;
      const double entry = (n % 2 == 0) ? 0.5 * sign / std::tan(arg) : 0.5 * sign / std::sin(arg);
      d(i, j) = scale * entry;
    }
  }
  return d;
}

}  // namespace kfp
