#pragma once

#include "gridcharge/common.hpp"

namespace gridcharge {

struct RealSchur {
  Mat T;  // quasi upper triangular
  Mat Z;  // orthogonal, A = Z T Z^T
  Vec wr, wi;
  int selected = 0;  // eigenvalues moved to the leading block when sorting
};

// Real Schur form. With stable_first, eigenvalues with negative real part are
// ordered into the leading block.
RealSchur real_schur(const Mat& A, bool stable_first = false);

// Solves A X + X B = C.
Mat solve_sylvester(const Mat& A, const Mat& B, const Mat& C);

double spectral_abscissa(const Mat& A);
bool is_hurwitz(const Mat& A, double margin = 0.0);

}  // namespace gridcharge
