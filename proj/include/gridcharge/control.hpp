#pragma once

#include "gridcharge/common.hpp"

namespace gridcharge {

// A^T L + L A + W = 0 for Hurwitz A.
Mat solve_lyapunov(const Mat& A, const Mat& W);

// Symmetric PSD square root; eigenvalues below -1e-12 are rejected.
Mat sqrtm_psd(const Mat& S);

struct CareOptions {
  int newton_refine = 4;     // Kleinman steps after the Schur solution
  double rel_tol = 1e-12;
};

// Stabilizing solution of A^T X + X A - X B R^{-1} B^T X + Q = 0.
Mat solve_care(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const CareOptions& opt = {});

// Kleinman-Newton iteration from a stabilizing K0.
Mat solve_care_newton(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& K0,
                      int max_iter = 60, double rel_tol = 1e-13);

struct Gain {
  Mat K;  // R^{-1} B^T X
  Mat X;
};

Gain lqr_gain(const Mat& A, const Mat& B, const Mat& Q, const Mat& R);

Mat closed_loop(const Mat& A, const Mat& B, const Mat& K);

// Performance output C = [Q^{1/2}; R^{1/2} K].
Mat performance_output(const Mat& Q, const Mat& R, const Mat& K);

struct H2Result {
  double value = 0.0;     // squared norm
  double residual = 0.0;  // relative Lyapunov residual
};

// x0^T L x0 with A_cl^T L + L A_cl + C^T C = 0.
H2Result h2_norm_sq(const Mat& Acl, const Mat& C, const Vec& x0);

// LQR cost of an arbitrary stabilizing gain, x0^T P x0 with
// (A-BK)^T P + P (A-BK) + Q + K^T R K = 0.
double lqr_cost(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& K, const Vec& x0);

}  // namespace gridcharge
