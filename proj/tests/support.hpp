#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <string>

#include "gridcharge/common.hpp"
#include "gridcharge/dense.hpp"

namespace testsupport {

using gridcharge::Mat;
using gridcharge::Vec;

inline std::string data_path(const std::string& name) { return std::string(GRIDCHARGE_DATA_DIR) + "/" + name; }

inline Mat random_matrix(std::mt19937& rng, int r, int c) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = nd(rng);
  return M;
}

// Random matrix shifted so its spectral abscissa sits at -margin.
inline Mat random_stable(std::mt19937& rng, int n, double margin = 0.5) {
  Mat A = random_matrix(rng, n, n);
  double a = gridcharge::spectral_abscissa(A);
  return A - (a + margin) * Mat::Identity(n, n);
}

// (1/2pi) int ||C (jwI - A)^{-1} x0||^2 dw by trapezoid on a graded grid.
// The integrand is even in w, so only w >= 0 is sampled.
inline double h2_quadrature(const Mat& A, const Mat& C, const Vec& x0, double wmax = 1e6) {
  using cd = std::complex<double>;
  const int n = static_cast<int>(A.rows());
  auto value = [&](double w) {
    Eigen::MatrixXcd M = cd(0, w) * Eigen::MatrixXcd::Identity(n, n) - A.cast<cd>();
    Eigen::VectorXcd v = M.partialPivLu().solve(x0.cast<cd>());
    return (C.cast<cd>() * v).squaredNorm();
  };
  // sinh grid: dense near zero, sparse in the tail
  const int N = 200000;
  const double s = 1e-3;
  const double umax = std::asinh(wmax / s);
  double sum = 0.0, prev_w = 0.0, prev_f = value(0.0);
  for (int i = 1; i <= N; ++i) {
    double w = s * std::sinh(umax * i / N);
    double f = value(w);
    sum += 0.5 * (f + prev_f) * (w - prev_w);
    prev_w = w;
    prev_f = f;
  }
  return 2.0 * sum / (2.0 * M_PI);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace testsupport
