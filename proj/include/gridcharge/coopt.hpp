#pragma once

#include <functional>
#include <vector>

#include "gridcharge/common.hpp"
#include "gridcharge/control.hpp"
#include "gridcharge/grid_model.hpp"

namespace gridcharge {

// What the optimizer needs from a setpoint: the reduced plant, its initial
// disturbance and (for the VSI term) the per-bus index vector.
struct PointEval {
  Mat A, B;
  Vec x0;
  Vec vsi;
};

using Evaluator = std::function<PointEval(const Vec& alpha)>;

struct ArmijoOptions {
  double c1 = 1e-4;
  double shrink = 0.5;
  double alpha_init = 1.0;
  int max_backtracks = 30;
  // When set, alpha_init is a trial move in amps along -g / ||g||_inf
  // instead of a raw multiplier on g.
  bool normalized = false;
};

struct OptimizationConfig {
  double gamma1 = 0.0;  // incentive weight (gamma of Algorithm 1)
  double gamma2 = 0.0;  // VSI weight, Algorithm 2 only
  Vec beta;             // $/A^2 per EVCS
  Vec beta_si;          // per receiving bus; empty means all ones
  Vec i_demand;
  Vec i_lower;
  std::vector<Direction> direction;
  Vec i_init;  // empty: start at the demand
  double epsilon = 0.1;
  double tau = 0.05;
  int max_iters = 200;
  ArmijoOptions armijo;
  Mat Q, R;  // empty: identity and 0.1 identity
  bool dense_gradient = false;
  int threads = 0;  // 0: GRIDCHARGE_THREADS or hardware concurrency
};

struct TraceEntry {
  int iter = 0;
  double J = 0, JR1 = 0, JR2 = 0, JR3 = 0;
  double step = 0;
  double grad_norm = 0;
  Vec i;
};

struct OptimizationResult {
  Vec i_e_star;
  Mat K;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;
  double J = 0, JR1 = 0, JR2 = 0, JR3 = 0;
  double JR1_initial = 0;
  Vec vsi;
  std::vector<TraceEntry> trace;
};

struct Objective {
  double JR1 = 0, JR2 = 0, JR3 = 0;
  Gain gain;
  Mat Acl, C;
  PointEval pe;
};

// Lower/upper box per EVCS after the unidirectional clamp.
void box_bounds(const OptimizationConfig& cfg, Vec& lo, Vec& hi);
Vec project_box(const Vec& i, const OptimizationConfig& cfg);

double jr2(const Vec& i, const OptimizationConfig& cfg);
double jr3(const Vec& vsi, const OptimizationConfig& cfg);

Objective objective_terms(const Vec& i, const Evaluator& eval, const OptimizationConfig& cfg);
Objective objective_from_eval(const Vec& i, PointEval pe, const OptimizationConfig& cfg);
double weighted_objective(const Objective& o, const OptimizationConfig& cfg, bool with_vsi);

// Difference realization (G_k - G) / eps as a parallel state-space system.
struct DeltaRealization {
  Mat A, B, C;
};

DeltaRealization perturbed_system(const Objective& base, const Objective& pert, double eps);

struct AugmentedSystem {
  Mat A, B1, B2, C;
};

AugmentedSystem build_augmented(const Objective& base, const std::vector<DeltaRealization>& dg);

// 2 B2^T L B1 from the full augmented Lyapunov equation.
Vec grad_dense(const AugmentedSystem& aug);

// Same quantity from the base/perturbed blocks only: one Sylvester solve per
// EVCS instead of the full augmented Lyapunov equation.
Vec grad_structured(const Objective& base, const std::vector<Objective>& pert, double eps);

Vec grad_jr3(const Vec& vsi_base, const std::vector<Vec>& vsi_pert, double eps,
             const OptimizationConfig& cfg);

struct ArmijoResult {
  double step = 0.0;
  bool stalled = false;
  int backtracks = 0;
  Vec i_next;
  double J_next = 0.0;
};

// Backtracking on J(project(i - a g)) <= J(i) - c1 g^T (i - project(i - a g)).
// Without an active bound this is the usual c1 a ||g||^2 condition.
ArmijoResult armijo_step(double J0, const Vec& g, const Vec& i,
                         const std::function<double(const Vec&)>& J,
                         const std::function<Vec(const Vec&)>& project, const ArmijoOptions& opt);

OptimizationResult run_algorithm1(const Evaluator& eval, OptimizationConfig cfg);
OptimizationResult run_algorithm2(const Evaluator& eval, OptimizationConfig cfg);

int worker_count(int requested);

}  // namespace gridcharge
