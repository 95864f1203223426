#include "gridcharge/dense.hpp"

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <cmath>
#include <limits>

namespace gridcharge {

namespace {

lapack_logical select_stable(const double* wr, const double* /*wi*/) { return *wr < 0.0; }

}  // namespace

RealSchur real_schur(const Mat& A, bool stable_first) {
  if (A.rows() != A.cols()) throw Error(Errc::InvalidArgument, "real_schur: matrix not square");
  const lapack_int n = static_cast<lapack_int>(A.rows());
  RealSchur s;
  s.T = A;
  s.Z.resize(n, n);
  s.wr.resize(n);
  s.wi.resize(n);
  if (n == 0) return s;
  if (!s.T.allFinite()) throw Error(Errc::Numeric, "real_schur: non-finite input");
  lapack_int sdim = 0;
  lapack_int info = LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', stable_first ? 'S' : 'N',
                                  stable_first ? select_stable : nullptr, n, s.T.data(), n, &sdim,
                                  s.wr.data(), s.wi.data(), s.Z.data(), n);
  if (info < 0) throw Error(Errc::InvalidArgument, "dgees: bad argument");
  // info == n+2 flags rounding changes in the ordering; the caller checks sdim.
  if (info > 0 && info <= n) throw Error(Errc::Convergence, "dgees: QR iteration failed");
  s.selected = static_cast<int>(sdim);
  return s;
}

Mat solve_sylvester(const Mat& A, const Mat& B, const Mat& C) {
  const lapack_int m = static_cast<lapack_int>(A.rows());
  const lapack_int n = static_cast<lapack_int>(B.rows());
  if (A.cols() != m || B.cols() != n || C.rows() != m || C.cols() != n)
    throw Error(Errc::InvalidArgument, "solve_sylvester: dimension mismatch");
  if (m == 0 || n == 0) return Mat::Zero(m, n);
  RealSchur sa = real_schur(A);
  RealSchur sb = real_schur(B);
  Mat F = sa.Z.transpose() * C * sb.Z;
  double scale = 1.0;
  lapack_int info = LAPACKE_dtrsyl(LAPACK_COL_MAJOR, 'N', 'N', 1, m, n, sa.T.data(), m, sb.T.data(),
                                   n, F.data(), m, &scale);
  if (info < 0) throw Error(Errc::InvalidArgument, "dtrsyl: bad argument");
  if (info == 1) throw Error(Errc::Singular, "solve_sylvester: A and -B share eigenvalues");
  Mat X = sa.Z * (F / scale) * sb.Z.transpose();
  if (!X.allFinite()) throw Error(Errc::Numeric, "solve_sylvester: non-finite solution");
  return X;
}

double spectral_abscissa(const Mat& A) {
  if (A.rows() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<Mat> es(A, false);
  if (es.info() != Eigen::Success) throw Error(Errc::Convergence, "eigenvalue solve failed");
  return es.eigenvalues().real().maxCoeff();
}

bool is_hurwitz(const Mat& A, double margin) { return spectral_abscissa(A) < -margin; }

}  // namespace gridcharge
