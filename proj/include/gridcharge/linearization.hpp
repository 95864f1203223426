#pragma once

#include <string>
#include <vector>

#include "gridcharge/common.hpp"
#include "gridcharge/dynamics.hpp"
#include "gridcharge/grid_model.hpp"

namespace gridcharge {

struct FullLinearModel {
  Mat A;  // f_x - f_y g_y^{-1} g_x
  Mat B;  // f_u
  Vec alpha;
};

struct Jacobians {
  Mat fx, fy, fu, gx, gy;
};

Jacobians jacobians(const GridModel& g, const OperatingPoint& op);

// Eliminates y from given Jacobians; throws Singular ("algebraic degeneracy").
FullLinearModel eliminate_algebraic(const Mat& fx, const Mat& fy, const Mat& fu, const Mat& gx,
                                    const Mat& gy);

FullLinearModel linearize(const GridModel& g, const OperatingPoint& op);

enum class Reduction {
  // Schur complement over every non-physical state; fails when that block
  // is singular.
  Strict,
  // Quasi-steady elimination of PLL and line states; controller integrators
  // held at their equilibrium values.
  HoldIntegrators,
};

struct ReducedLinearModel {
  Mat A;  // 7p x 7p
  Mat B;  // 7p x 3p
  Mat P;  // 7p x nx selection
  Vec x0;
  Mat Q, R;
  Vec alpha;
};

// Schur-complement reduction onto the index set `slow`, eliminating `fast`
// and dropping everything else. Throws Singular ("non-separable timescales")
// when A_ff is numerically singular.
void reduce_generic(const Mat& A, const Mat& B, const std::vector<int>& slow,
                    const std::vector<int>& fast, Mat& Ar, Mat& Br);

std::vector<int> slow_indices(const StateLayout& lay);
Mat selection_matrix(const StateLayout& lay);
Vec default_x0(int p);

ReducedLinearModel reduce_model(const FullLinearModel& full, const GridModel& g, const Vec& x0,
                                const Mat& Q, const Mat& R,
                                Reduction policy = Reduction::HoldIntegrators);

struct ModalReport {
  CVec eigenvalues;
  Vec damping;           // -Re/|lambda|, 1 for lambda = 0 excluded
  Mat participation;     // states x modes, columns scaled to max 1
  bool defective = false;
};

Mat participation_factors(const Mat& A, bool* defective = nullptr);
ModalReport eigen_report(const Mat& A, bool with_participation = true);

// Index of the least damped oscillatory mode with positive imaginary part;
// ties go to the mode closer to the imaginary axis. -1 when A has no complex
// modes.
int dominant_mode(const ModalReport& rep, double min_imag = 1e-6);

std::string modal_csv(const ModalReport& rep, const std::vector<std::string>& names);

}  // namespace gridcharge
