#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gridcharge/coopt.hpp"
#include "gridcharge/pipeline.hpp"
#include "support.hpp"

using namespace gridcharge;
using testsupport::data_path;

namespace {

// A(alpha) = A0 + sum_k alpha_k A_k with fixed B and x0.
struct Parametric {
  Mat A0, B;
  std::vector<Mat> Ak;
  Vec x0;
  PointEval operator()(const Vec& a) const {
    PointEval pe;
    pe.A = A0;
    for (size_t k = 0; k < Ak.size(); ++k) pe.A += a(static_cast<Eigen::Index>(k)) * Ak[k];
    pe.B = B;
    pe.x0 = x0;
    return pe;
  }
};

Parametric random_plant(std::mt19937& rng, int n, int m, int p) {
  Parametric s;
  s.A0 = testsupport::random_stable(rng, n, 1.0);
  s.B = testsupport::random_matrix(rng, n, m);
  for (int k = 0; k < p; ++k) s.Ak.push_back(0.05 * testsupport::random_matrix(rng, n, n));
  s.x0 = testsupport::random_matrix(rng, n, 1);
  return s;
}

OptimizationConfig basic_cfg(const Vec& demand, const Vec& lower) {
  OptimizationConfig c;
  c.i_demand = demand;
  c.i_lower = lower;
  c.beta = Vec::Ones(demand.size());
  c.direction.assign(demand.size(), Direction::Unidirectional);
  return c;
}

double fd_jr1(const Parametric& s, const OptimizationConfig& cfg, const Vec& a, int k, double h) {
  Vec ap = a, am = a;
  ap(k) += h;
  am(k) -= h;
  return (objective_from_eval(ap, s(ap), cfg).JR1 - objective_from_eval(am, s(am), cfg).JR1) / (2 * h);
}

}  // namespace

TEST_CASE("incentive penalty") {
  Vec d(1), lo(1);
  d << 5;
  lo << 0;
  OptimizationConfig c = basic_cfg(d, lo);
  CHECK(jr2(d, c) == 0.0);
  c.beta << 2.0;
  Vec i(1);
  i << 8;
  CHECK(jr2(i, c) == doctest::Approx(18.0));
}

TEST_CASE("box projection") {
  Vec d(3), lo(3);
  d << 62.5, 62.5, -100;
  lo << -10, 40, -218.75;
  OptimizationConfig c = basic_cfg(d, lo);
  c.direction[2] = Direction::Bidirectional;
  Vec in(3);
  in << 50, 50, -150;
  CHECK((project_box(in, c) - in).norm() == 0.0);
  Vec cand(3);
  cand << -5, 30, -220;
  Vec out = project_box(cand, c);
  CHECK(out(0) == 0.0);  // unidirectional floor
  CHECK(out(1) == 40.0);
  CHECK(out(2) == -218.75);
  Vec l, h;
  box_bounds(c, l, h);
  for (int k = 0; k < 3; ++k) CHECK(l(k) <= h(k));
}

TEST_CASE("VSI term and its gradient") {
  Vec d(2), lo(2);
  d << 1, 1;
  lo << 0, 0;
  OptimizationConfig c = basic_cfg(d, lo);
  Vec v(3);
  v << 0.9, 0.8, 0.95;
  CHECK(jr3(v, c) == doctest::Approx(0.2));
  c.beta_si = Vec::Zero(3);
  std::vector<Vec> pert{v, v};
  pert[0](1) = 0.7;
  CHECK(grad_jr3(v, pert, 0.1, c).norm() == 0.0);
  c.beta_si = Vec::Ones(3);
  Vec g = grad_jr3(v, pert, 0.1, c);
  CHECK(g(0) == doctest::Approx(1.0));
  CHECK(g(1) == 0.0);  // untouched VSI, no dependence
}

TEST_CASE("VSI gradient on the feeder is positive for charging stations") {
  GridModel g = load_grid(data_path("ieee33_p3.json"));
  Evaluator ev = make_grid_evaluator(g);
  Vec a(3);
  a << 62.5, 62.5, 125;
  Vec d = a, lo = Vec::Zero(3);
  OptimizationConfig c = basic_cfg(d, lo);
  PointEval base = ev(a);
  std::vector<Vec> pert;
  for (int k = 0; k < 3; ++k) {
    Vec ak = a;
    ak(k) += 1.0;
    pert.push_back(ev(ak).vsi);
  }
  Vec g3 = grad_jr3(base.vsi, pert, 1.0, c);
  for (int k = 0; k < 3; ++k) CHECK(g3(k) > 0.0);
  // bus 5 sits on the path to the weakest bus, bus 19 on a lateral
  CHECK(g3(2) > g3(1));
}

TEST_CASE("difference system vanishes without setpoint dependence") {
  std::mt19937 rng(21);
  Parametric s = random_plant(rng, 4, 2, 1);
  s.Ak[0].setZero();
  Vec a = Vec::Ones(1);
  OptimizationConfig c = basic_cfg(a, Vec::Zero(1));
  Objective base = objective_from_eval(a, s(a), c);
  Vec ap = a;
  ap(0) += 0.1;
  Objective pert = objective_from_eval(ap, s(ap), c);
  DeltaRealization dg = perturbed_system(base, pert, 0.1);
  CHECK(h2_norm_sq(dg.A, dg.C, dg.B.col(0)).value < 1e-8);
}

TEST_CASE("difference system reproduces the perturbed norm") {
  std::mt19937 rng(22);
  Parametric s = random_plant(rng, 5, 2, 1);
  Vec a = Vec::Ones(1);
  OptimizationConfig c = basic_cfg(a, Vec::Zero(1));
  Objective base = objective_from_eval(a, s(a), c);
  const double eps = 1e-3;
  Vec ap = a;
  ap(0) += eps;
  Objective pert = objective_from_eval(ap, s(ap), c);
  DeltaRealization dg = perturbed_system(base, pert, eps);
  // G + eps dG as one realization
  const Eigen::Index n0 = base.Acl.rows(), nd = dg.A.rows();
  Mat A = Mat::Zero(n0 + nd, n0 + nd);
  A.topLeftCorner(n0, n0) = base.Acl;
  A.bottomRightCorner(nd, nd) = dg.A;
  Mat C(base.C.rows(), n0 + nd);
  C << base.C, dg.C;
  Vec x0(n0 + nd);
  x0 << base.pe.x0, eps * dg.B.col(0);
  double approx = h2_norm_sq(A, C, x0).value;
  CHECK(testsupport::rel_err(approx, pert.JR1) < 10 * eps);
}

TEST_CASE("augmented system structure") {
  std::mt19937 rng(23);
  Parametric s = random_plant(rng, 7, 3, 3);
  Vec a = Vec::Ones(3);
  OptimizationConfig c = basic_cfg(a, Vec::Zero(3));
  Objective base = objective_from_eval(a, s(a), c);
  std::vector<DeltaRealization> dg;
  for (int k = 0; k < 3; ++k) {
    Vec ak = a;
    ak(k) += 0.1;
    dg.push_back(perturbed_system(base, objective_from_eval(ak, s(ak), c), 0.1));
  }
  AugmentedSystem aug = build_augmented(base, dg);
  CHECK(aug.A.rows() == 7 + 3 * 14);
  CHECK(aug.B2.cols() == 3);
  CHECK(aug.B1.bottomRows(3 * 14).norm() == 0.0);
  CHECK((aug.A.block(7, 7, 14, 14) - dg[0].A).norm() == 0.0);

  SUBCASE("one block for p = 1") {
    AugmentedSystem one = build_augmented(base, {dg[0]});
    CHECK(one.A.rows() == 21);
    CHECK((one.C.rightCols(14) - dg[0].C).norm() == 0.0);
  }
  SUBCASE("zero difference systems give a zero gradient") {
    std::vector<DeltaRealization> z = dg;
    for (auto& d : z) d.B.setZero();
    CHECK(grad_dense(build_augmented(base, z)).norm() == 0.0);
  }
}

TEST_CASE("scalar plant with a closed-form optimal cost") {
  // a(alpha) = -(1 + alpha), b = q = r = 1: X = a + sqrt(a^2 + 1)
  Parametric s;
  s.A0 = Mat::Constant(1, 1, -1.0);
  s.Ak = {Mat::Constant(1, 1, -1.0)};
  s.B = Mat::Ones(1, 1);
  s.x0 = Vec::Ones(1);
  OptimizationConfig c = basic_cfg(Vec::Ones(1), Vec::Zero(1));
  c.Q = Mat::Ones(1, 1);
  c.R = Mat::Ones(1, 1);
  const double alpha = 0.5, a = -(1 + alpha);
  Vec av = Vec::Constant(1, alpha);
  Objective base = objective_from_eval(av, s(av), c);
  CHECK(base.JR1 == doctest::Approx(a + std::sqrt(a * a + 1)).epsilon(1e-10));
  const double exact = -(1.0 + a / std::sqrt(a * a + 1));
  const double eps = 1e-4;
  Vec ap = av;
  ap(0) += eps;
  std::vector<Objective> pert{objective_from_eval(ap, s(ap), c)};
  CHECK(testsupport::rel_err(grad_structured(base, pert, eps)(0), exact) < 0.01);
  CHECK(testsupport::rel_err(grad_dense(build_augmented(base, {perturbed_system(base, pert[0], eps)}))(0), exact) < 0.01);
}

TEST_CASE("gradient matches central differences on random plants") {
  std::mt19937 rng(31);
  for (int t = 0; t < 10; ++t) {
    const int n = 3 + t % 8, p = 1 + t % 3, m = 1 + t % 2;
    Parametric s = random_plant(rng, n, m, p);
    Vec a = Vec::Ones(p);
    OptimizationConfig c = basic_cfg(a, Vec::Zero(p));
    Objective base = objective_from_eval(a, s(a), c);
    const double eps = 1e-5;
    std::vector<Objective> pert;
    std::vector<DeltaRealization> dg;
    for (int k = 0; k < p; ++k) {
      Vec ak = a;
      ak(k) += eps;
      pert.push_back(objective_from_eval(ak, s(ak), c));
      dg.push_back(perturbed_system(base, pert.back(), eps));
    }
    Vec gs = grad_structured(base, pert, eps);
    Vec gd = grad_dense(build_augmented(base, dg));
    for (int k = 0; k < p; ++k) {
      double fd = fd_jr1(s, c, a, k, 1e-4);
      CHECK(std::abs(gs(k) - fd) <= 0.01 * std::abs(fd) + 1e-10);
      CHECK(std::abs(gd(k) - fd) <= 0.01 * std::abs(fd) + 1e-10);
    }
  }
}

TEST_CASE("Armijo backtracking") {
  auto J = [](const Vec& x) { return x.squaredNorm(); };
  auto id = [](const Vec& x) { return x; };
  ArmijoOptions o;
  Vec x = Vec::Ones(1), g = Vec::Constant(1, 2.0);
  ArmijoResult r = armijo_step(1.0, g, x, J, id, o);
  CHECK(!r.stalled);
  CHECK(r.step == doctest::Approx(0.5));
  CHECK(r.backtracks == 1);
  CHECK(r.i_next(0) == doctest::Approx(0.0));
  CHECK(r.J_next == doctest::Approx(0.0));

  ArmijoResult z = armijo_step(1.0, Vec::Zero(1), x, J, id, o);
  CHECK(z.stalled);
  CHECK(z.step == 0.0);
  CHECK(z.i_next(0) == 1.0);

  SUBCASE("an evaluation failure counts as a rejected trial") {
    auto Jbad = [](const Vec& v) -> double {
      if (v(0) < 0.2) throw Error(Errc::Convergence, "no equilibrium");
      return v.squaredNorm();
    };
    ArmijoResult b = armijo_step(1.0, g, x, Jbad, id, o);
    CHECK(!b.stalled);
    CHECK(b.i_next(0) >= 0.2);
    CHECK(b.J_next < 1.0);
  }
}

TEST_CASE("incentive-only objective returns the demand") {
  std::mt19937 rng(41);
  Parametric s = random_plant(rng, 4, 2, 2);
  Vec d(2), lo(2);
  d << 3, 4;
  lo << 1, 1;
  OptimizationConfig c = basic_cfg(d, lo);
  c.gamma1 = 1.0;
  c.i_init = lo;
  OptimizationResult r = run_algorithm1(s, c);
  CHECK(r.converged);
  CHECK((r.i_e_star - d).norm() < 0.1);
  CHECK(r.JR2 < 1e-2);
  // pure incentive gradient, no dynamics
  Vec expect = 2.0 * c.beta.cwiseProduct(lo - d);
  CHECK(r.trace.front().grad_norm == doctest::Approx(expect.norm()));
}

TEST_CASE("degenerate box returns the demand quickly") {
  std::mt19937 rng(42);
  Parametric s = random_plant(rng, 4, 2, 2);
  Vec d(2);
  d << 3, 4;
  OptimizationConfig c = basic_cfg(d, d);
  OptimizationResult r = run_algorithm1(s, c);
  CHECK(r.iterations <= 2);
  CHECK(r.i_e_star == d);
}

TEST_CASE("interior stationary point") {
  // a(alpha) = -3 + (alpha - 2)^2: the optimal cost is smallest at alpha = 2
  struct Bowl {
    PointEval operator()(const Vec& a) const {
      PointEval pe;
      pe.A = Mat::Constant(1, 1, -3.0 + (a(0) - 2.0) * (a(0) - 2.0));
      pe.B = Mat::Ones(1, 1);
      pe.x0 = Vec::Ones(1);
      return pe;
    }
  };
  OptimizationConfig c = basic_cfg(Vec::Constant(1, 3.0), Vec::Constant(1, 0.5));
  c.tau = 1e-4;
  c.epsilon = 1e-5;
  c.armijo.alpha_init = 10.0;
  OptimizationResult r = run_algorithm1(Bowl{}, c);
  CHECK(r.converged);
  CHECK(r.i_e_star(0) == doctest::Approx(2.0).epsilon(0.01));
  // J nonincreasing along the run
  for (size_t t = 1; t < r.trace.size(); ++t) CHECK(r.trace[t].J <= r.trace[t - 1].J + 1e-15);
}

TEST_CASE("runs stay feasible, stable and deterministic") {
  std::mt19937 rng(43);
  Parametric s = random_plant(rng, 6, 2, 3);
  Vec d = Vec::Constant(3, 2.0), lo = Vec::Constant(3, 0.5);
  OptimizationConfig c = basic_cfg(d, lo);
  c.armijo.normalized = true;
  c.armijo.alpha_init = 0.5;
  c.tau = 1e-3;
  OptimizationResult r1 = run_algorithm1(s, c);
  OptimizationResult r2 = run_algorithm2(s, c);  // gamma2 = 0 is the same problem
  REQUIRE(r1.trace.size() == r2.trace.size());
  Vec l, h;
  box_bounds(c, l, h);
  for (size_t t = 0; t < r1.trace.size(); ++t) {
    CHECK(r1.trace[t].J == r2.trace[t].J);
    CHECK(r1.trace[t].i == r2.trace[t].i);
    CHECK((r1.trace[t].i - l).minCoeff() >= 0.0);
    CHECK((h - r1.trace[t].i).minCoeff() >= 0.0);
    if (t) CHECK(r1.trace[t].J <= r1.trace[t - 1].J);
    Objective o = objective_from_eval(r1.trace[t].i, s(r1.trace[t].i), c);
    CHECK(is_hurwitz(o.Acl));
  }
  OptimizationResult again = run_algorithm1(s, c);
  CHECK(again.i_e_star == r1.i_e_star);
}

TEST_CASE("full weight off the dynamics still synthesizes a stabilizing gain") {
  std::mt19937 rng(44);
  Parametric s = random_plant(rng, 4, 2, 2);
  OptimizationConfig c = basic_cfg(Vec::Constant(2, 2.0), Vec::Constant(2, 1.0));
  c.gamma1 = 0.4;
  c.gamma2 = 0.6;
  OptimizationResult r = run_algorithm2(s, c);
  REQUIRE(r.K.rows() == 2);
  CHECK(is_hurwitz(s(r.i_e_star).A - s(r.i_e_star).B * r.K));
}

TEST_CASE("dense and structured gradients drive the same iterates") {
  std::mt19937 rng(45);
  Parametric s = random_plant(rng, 5, 2, 2);
  OptimizationConfig c = basic_cfg(Vec::Constant(2, 2.0), Vec::Constant(2, 0.5));
  c.armijo.normalized = true;
  c.max_iters = 4;
  OptimizationResult a = run_algorithm1(s, c);
  c.dense_gradient = true;
  OptimizationResult b = run_algorithm1(s, c);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t t = 0; t < a.trace.size(); ++t) CHECK((a.trace[t].i - b.trace[t].i).norm() < 1e-6);
}

TEST_CASE("config validation") {
  std::mt19937 rng(46);
  Parametric s = random_plant(rng, 3, 1, 1);
  OptimizationConfig c = basic_cfg(Vec::Ones(1), Vec::Zero(1));
  c.gamma1 = 0.7;
  c.gamma2 = 0.5;
  CHECK_THROWS_AS(run_algorithm2(s, c), Error);
  c.gamma2 = 0;
  c.beta = Vec::Ones(2);
  CHECK_THROWS_AS(run_algorithm1(s, c), Error);
}
