#include "gridcharge/control.hpp"

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <cmath>

#include "gridcharge/dense.hpp"

namespace gridcharge {

Mat solve_lyapunov(const Mat& A, const Mat& W) {
  const lapack_int n = static_cast<lapack_int>(A.rows());
  if (A.cols() != n || W.rows() != n || W.cols() != n)
    throw Error(Errc::InvalidArgument, "solve_lyapunov: dimension mismatch");
  if (n == 0) return Mat(0, 0);
  RealSchur s = real_schur(A);
  if (s.wr.maxCoeff() >= 0.0) throw Error(Errc::Unstable, "solve_lyapunov: A is not Hurwitz");
  // A^T L + L A = -W in Schur coordinates: T^T Y + Y T = -Z^T W Z
  Mat F = -(s.Z.transpose() * W * s.Z);
  double scale = 1.0;
  lapack_int info = LAPACKE_dtrsyl(LAPACK_COL_MAJOR, 'T', 'N', 1, n, n, s.T.data(), n, s.T.data(),
                                   n, F.data(), n, &scale);
  if (info < 0) throw Error(Errc::InvalidArgument, "dtrsyl: bad argument");
  if (info == 1) throw Error(Errc::Singular, "solve_lyapunov: near-singular spectrum");
  Mat L = s.Z * (F / scale) * s.Z.transpose();
  L = 0.5 * (L + L.transpose()).eval();
  if (!L.allFinite()) throw Error(Errc::Numeric, "solve_lyapunov: non-finite solution");
  return L;
}

Mat sqrtm_psd(const Mat& S) {
  if (S.rows() != S.cols()) throw Error(Errc::InvalidArgument, "sqrtm_psd: matrix not square");
  Mat Ss = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(Ss);
  if (es.info() != Eigen::Success) throw Error(Errc::Convergence, "sqrtm_psd: eigensolve failed");
  Vec d = es.eigenvalues();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) < -1e-12) throw Error(Errc::InvalidArgument, "sqrtm_psd: matrix is not PSD");
    d(i) = std::sqrt(std::max(d(i), 0.0));
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

namespace {

double care_residual(const Mat& A, const Mat& G, const Mat& Q, const Mat& X) {
  Mat AtX = A.transpose() * X;
  Mat XGX = X * G * X;
  Mat res = AtX + AtX.transpose() - XGX + Q;
  double den = Q.norm() + 2.0 * AtX.norm() + XGX.norm();
  return den > 0 ? res.norm() / den : res.norm();
}

Mat kleinman_step(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& K) {
  Mat Acl = A - B * K;
  return solve_lyapunov(Acl, Q + K.transpose() * R * K);
}

// Bass' construction of an initial stabilizing gain.
Mat bass_gain(const Mat& A, const Mat& B) {
  const Eigen::Index n = A.rows();
  Eigen::EigenSolver<Mat> es(A, false);
  double beta = std::max(0.0, -es.eigenvalues().real().minCoeff()) + 1.0 + 0.1 * A.norm() / std::sqrt(double(n));
  Mat As = A + beta * Mat::Identity(n, n);
  Mat P = solve_sylvester(As, As.transpose(), 2.0 * B * B.transpose());
  P = 0.5 * (P + P.transpose()).eval();
  return B.transpose() * P.ldlt().solve(Mat::Identity(n, n));
}

}  // namespace

Mat solve_care_newton(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& K0,
                      int max_iter, double rel_tol) {
  Eigen::LLT<Mat> rllt(R);
  if (rllt.info() != Eigen::Success) throw Error(Errc::InvalidArgument, "lqr: R is not positive definite");
  Mat G = B * rllt.solve(B.transpose());
  Mat K = K0;
  if (!is_hurwitz(A - B * K)) throw Error(Errc::Unstable, "Kleinman iteration needs a stabilizing K0");
  Mat X;
  double prev = INFINITY;
  for (int it = 0; it < max_iter; ++it) {
    X = kleinman_step(A, B, Q, R, K);
    K = rllt.solve(B.transpose() * X);
    double r = care_residual(A, G, Q, X);
    if (r < rel_tol || (it > 3 && r >= prev)) break;
    prev = r;
  }
  return X;
}

Mat solve_care(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const CareOptions& opt) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m)
    throw Error(Errc::InvalidArgument, "solve_care: dimension mismatch");
  Eigen::LLT<Mat> rllt(R);
  if (rllt.info() != Eigen::Success) throw Error(Errc::InvalidArgument, "lqr: R is not positive definite");
  Mat G = B * rllt.solve(B.transpose());
  G = 0.5 * (G + G.transpose()).eval();

  // X solves the equation with (G, Q) iff c X solves it with (G / c, c Q);
  // c balances the two off-diagonal blocks of the Hamiltonian.
  double gq = Q.norm(), gg = G.norm();
  double c = (gq > 0 && gg > 0) ? std::sqrt(gg / gq) : 1.0;

  Mat X;
  bool schur_ok = false;
  {
    Mat H(2 * n, 2 * n);
    H << A, -G / c, -c * Q, -A.transpose();
    try {
      RealSchur s = real_schur(H, true);
      if (s.selected == n) {
        Mat U11 = s.Z.topLeftCorner(n, n);
        Mat U21 = s.Z.bottomLeftCorner(n, n);
        Eigen::PartialPivLU<Mat> lu(U11.transpose());
        double rc = lu.rcond();
        if (rc > 1e-14) {
          X = lu.solve(U21.transpose()).transpose() / c;
          X = 0.5 * (X + X.transpose()).eval();
          schur_ok = X.allFinite();
        }
      }
    } catch (const Error&) {
      schur_ok = false;
    }
  }

  if (schur_ok) {
    double r = care_residual(A, G, Q, X);
    for (int it = 0; it < opt.newton_refine && r > opt.rel_tol; ++it) {
      Mat K = rllt.solve(B.transpose() * X);
      if (!is_hurwitz(A - B * K)) break;
      Mat Xn;
      try {
        Xn = kleinman_step(A, B, Q, R, K);
      } catch (const Error&) {
        break;
      }
      double rn = care_residual(A, G, Q, Xn);
      if (!(rn < r)) break;
      X = Xn;
      r = rn;
    }
    Mat K = rllt.solve(B.transpose() * X);
    if (is_hurwitz(A - B * K)) return X;
  }

  // Fallback: Newton from a Bass gain.
  Mat K0;
  try {
    K0 = bass_gain(A, B);
  } catch (const Error&) {
    throw Error(Errc::Unstable, "lqr: (A, B) is not stabilizable");
  }
  if (!is_hurwitz(A - B * K0)) throw Error(Errc::Unstable, "lqr: (A, B) is not stabilizable");
  return solve_care_newton(A, B, Q, R, K0);
}

Gain lqr_gain(const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
  Gain g;
  g.X = solve_care(A, B, Q, R);
  g.K = R.llt().solve(B.transpose() * g.X);
  if (!is_hurwitz(A - B * g.K)) throw Error(Errc::Unstable, "lqr: closed loop is not Hurwitz");
  return g;
}

Mat closed_loop(const Mat& A, const Mat& B, const Mat& K) {
  if (B.rows() != A.rows() || K.rows() != B.cols() || K.cols() != A.cols())
    throw Error(Errc::InvalidArgument, "closed_loop: dimension mismatch");
  return A - B * K;
}

Mat performance_output(const Mat& Q, const Mat& R, const Mat& K) {
  const Eigen::Index n = Q.rows(), m = R.rows();
  Mat C(n + m, n);
  C.topRows(n) = sqrtm_psd(Q);
  C.bottomRows(m) = sqrtm_psd(R) * K;
  return C;
}

H2Result h2_norm_sq(const Mat& Acl, const Mat& C, const Vec& x0) {
  if (C.cols() != Acl.rows() || x0.size() != Acl.rows())
    throw Error(Errc::InvalidArgument, "h2_norm_sq: dimension mismatch");
  Mat W = C.transpose() * C;
  Mat L = solve_lyapunov(Acl, W);
  H2Result r;
  r.value = x0.dot(L * x0);
  Mat res = Acl.transpose() * L + L * Acl + W;
  double wn = W.norm();
  r.residual = wn > 0 ? res.norm() / wn : res.norm();
  return r;
}

double lqr_cost(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& K, const Vec& x0) {
  Mat P = solve_lyapunov(A - B * K, Q + K.transpose() * R * K);
  return x0.dot(P * x0);
}

}  // namespace gridcharge
