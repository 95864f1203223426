#pragma once

#include <string>
#include <vector>

#include "gridcharge/common.hpp"
#include "gridcharge/grid_model.hpp"

namespace gridcharge {

// Per-EVCS state block order.
enum EvcsState : int {
  kDelta = 0,
  kZeta,
  kIgd,
  kIgq,
  kIcd,
  kIcq,
  kVcd,
  kVcq,
  kPsi,
  kChid,
  kChiq,
  kVdc,
  kEvcsStates
};

enum EvcsInput : int { kDmd = 0, kDmq, kDie, kEvcsInputs };

struct StateLayout {
  int n = 0;
  int p = 0;

  explicit StateLayout(const GridModel& g) : n(g.n()), p(g.p()) {}
  StateLayout(int n_, int p_) : n(n_), p(p_) {}

  int nx() const { return kEvcsStates * p + 2 * (n - 1); }
  int ny() const { return 2 * n; }
  int nu() const { return kEvcsInputs * p; }
  int evcs(int k, int s) const { return kEvcsStates * k + s; }
  int line(int j, int axis) const { return kEvcsStates * p + 2 * j + axis; }
  int bus(int h, int axis) const { return 2 * (h - 1) + axis; }  // h is 1-based
  int input(int k, int i) const { return kEvcsInputs * k + i; }

  std::vector<std::string> state_names(const GridModel& g) const;
};

struct OperatingPoint {
  Vec x;      // x*
  Vec y;      // y*
  Vec alpha;  // i^{e*}
  Vec Pe, Qe;  // EV powers per EVCS, W / VAr
  double Pg = 0.0, Qg = 0.0;  // PCC injection, W / VAr
  double residual_f = 0.0;    // scaled infinity norm
  double residual_g = 0.0;    // W
  int iterations = 0;
};

double saturate(double v);

struct DutyCycles {
  double md = 0.0, mq = 0.0;  // after saturation
  double md_raw = 0.0, mq_raw = 0.0;
};

using Vec12 = Eigen::Matrix<double, kEvcsStates, 1>;

// EVCS right-hand side. v_bus is the feeder-side d-q bus voltage in the
// common frame; it is referred through the transformer and rotated into the
// PLL frame internally.
Vec12 evcs_rhs(const Vec12& xk, const Eigen::Vector2d& v_bus, const Eigen::Vector3d& uk,
               double alpha_k, const EVCSParams& prm, double omega_bar, double omega_c,
               bool clamp = true, DutyCycles* duty = nullptr);

Eigen::Vector2d line_rhs(const Eigen::Vector2d& x_line, const Eigen::Vector2d& vk,
                         const Eigen::Vector2d& vh, const LineSpec& line, double omega_c);

// Full f(x, y, u, alpha).
Vec f_rhs(const GridModel& g, const Vec& x, const Vec& y, const Vec& u, const Vec& alpha,
          bool clamp = true);

// g(x, y, alpha): bus 1 pinned to the source, every other bus a static power
// balance with the EV powers taken from the converter states.
Vec algebraic_residual(const GridModel& g, const Vec& x, const Vec& y);

// EV active/reactive power drawn at the feeder bus of EVCS k.
Eigen::Vector2d ev_power(const GridModel& g, const Vec& x, const Vec& y, int k);

// Duty cycles of EVCS k at (x, y, u).
DutyCycles duty_cycles(const GridModel& g, const Vec& x, const Vec& y, const Vec& u, int k);

struct EquilibriumOptions {
  double tol_f = 1e-8;   // relative to state scale
  double tol_g = 1e-6;   // W
  int max_iter = 100;
  int max_halvings = 20;
};

// Newton on the stacked [f; g] = 0 with u = 0. Starts from init when given,
// otherwise from a power-flow/closed-form construction (see implementation).
OperatingPoint solve_equilibrium(const GridModel& g, const Vec& alpha,
                                 const OperatingPoint* init = nullptr,
                                 const EquilibriumOptions& opt = {});

// Initial guess used when no warm start is supplied.
OperatingPoint constructive_guess(const GridModel& g, const Vec& alpha);

// Plain backward/forward sweep with constant-power injections (W, VAr per bus,
// index h-1). Returns complex peak-phase bus voltages in the common frame.
CVec backward_forward_sweep(const GridModel& g, const Vec& p_w, const Vec& q_var,
                            double tol = 1e-10, int max_iter = 500);

// Per-unit bus voltage magnitudes of an operating point.
Vec bus_voltage_pu(const GridModel& g, const Vec& y);

}  // namespace gridcharge
