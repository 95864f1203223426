#include "gridcharge/coopt.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>

#include "gridcharge/dense.hpp"

namespace gridcharge {

int worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GRIDCHARGE_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

namespace {

// Runs fn(0..n-1) on up to `workers` threads; rethrows the first failure by
// index so the outcome does not depend on scheduling.
template <class F>
void parallel_for(int n, int workers, F&& fn) {
  std::vector<std::exception_ptr> errs(n);
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    int nt = std::min(workers, n);
    for (int t = 0; t < nt; ++t)
      pool.emplace_back([&] {
        for (int i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errs[i] = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

void check_config(const OptimizationConfig& cfg) {
  const Eigen::Index p = cfg.i_demand.size();
  if (p == 0) throw Error(Errc::InvalidArgument, "optimizer: empty demand vector");
  if (cfg.beta.size() != p) throw Error(Errc::InvalidArgument, "optimizer: beta has wrong size");
  if (cfg.i_lower.size() != p) throw Error(Errc::InvalidArgument, "optimizer: i_lower has wrong size");
  if (!cfg.direction.empty() && static_cast<Eigen::Index>(cfg.direction.size()) != p)
    throw Error(Errc::InvalidArgument, "optimizer: direction list has wrong size");
  if (cfg.i_init.size() && cfg.i_init.size() != p) throw Error(Errc::InvalidArgument, "optimizer: i_init has wrong size");
  if (!(cfg.epsilon > 0) || !(cfg.tau > 0)) throw Error(Errc::InvalidArgument, "optimizer: epsilon and tau must be positive");
  if (cfg.gamma1 < 0 || cfg.gamma2 < 0 || cfg.gamma1 + cfg.gamma2 > 1.0 + 1e-12)
    throw Error(Errc::InvalidArgument, "optimizer: weights must be nonnegative with gamma1 + gamma2 <= 1");
  if (!(cfg.armijo.shrink > 0 && cfg.armijo.shrink < 1) || !(cfg.armijo.alpha_init > 0))
    throw Error(Errc::InvalidArgument, "optimizer: bad line-search parameters");
}

}  // namespace

void box_bounds(const OptimizationConfig& cfg, Vec& lo, Vec& hi) {
  const Eigen::Index p = cfg.i_demand.size();
  lo.resize(p);
  hi.resize(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    bool bi = !cfg.direction.empty() && cfg.direction[k] == Direction::Bidirectional;
    double low = bi ? cfg.i_lower(k) : std::max(cfg.i_lower(k), 0.0);
    lo(k) = std::min(low, cfg.i_demand(k));
    hi(k) = std::max(low, cfg.i_demand(k));
  }
}

Vec project_box(const Vec& i, const OptimizationConfig& cfg) {
  Vec lo, hi;
  box_bounds(cfg, lo, hi);
  return i.cwiseMax(lo).cwiseMin(hi);
}

double jr2(const Vec& i, const OptimizationConfig& cfg) {
  Vec d = i - cfg.i_demand;
  return d.dot(cfg.beta.cwiseProduct(d));
}

double jr3(const Vec& vsi, const OptimizationConfig& cfg) {
  if (vsi.size() == 0) return 0.0;
  if (cfg.beta_si.size() && cfg.beta_si.size() != vsi.size())
    throw Error(Errc::InvalidArgument, "beta_si must have one entry per receiving bus");
  double m = -INFINITY;
  for (Eigen::Index h = 0; h < vsi.size(); ++h) {
    double w = cfg.beta_si.size() ? cfg.beta_si(h) : 1.0;
    m = std::max(m, w * (1.0 - vsi(h)));
  }
  return m;
}

Objective objective_from_eval(const Vec& i, PointEval pe, const OptimizationConfig& cfg) {
  Objective o;
  const Eigen::Index n = pe.A.rows(), m = pe.B.cols();
  Mat Q = cfg.Q.size() ? cfg.Q : Mat::Identity(n, n);
  Mat R = cfg.R.size() ? cfg.R : Mat(0.1 * Mat::Identity(m, m));
  o.gain = lqr_gain(pe.A, pe.B, Q, R);
  o.Acl = closed_loop(pe.A, pe.B, o.gain.K);
  o.C = performance_output(Q, R, o.gain.K);
  o.JR1 = h2_norm_sq(o.Acl, o.C, pe.x0).value;
  o.JR2 = jr2(i, cfg);
  o.JR3 = jr3(pe.vsi, cfg);
  o.pe = std::move(pe);
  return o;
}

Objective objective_terms(const Vec& i, const Evaluator& eval, const OptimizationConfig& cfg) {
  return objective_from_eval(i, eval(i), cfg);
}

double weighted_objective(const Objective& o, const OptimizationConfig& cfg, bool with_vsi) {
  double g2 = with_vsi ? cfg.gamma2 : 0.0;
  double J = (1.0 - cfg.gamma1 - g2) * o.JR1 + cfg.gamma1 * o.JR2;
  if (with_vsi) J += g2 * o.JR3;
  return J;
}

DeltaRealization perturbed_system(const Objective& base, const Objective& pert, double eps) {
  const Eigen::Index n1 = pert.Acl.rows(), n0 = base.Acl.rows();
  DeltaRealization d;
  d.A = Mat::Zero(n1 + n0, n1 + n0);
  d.A.topLeftCorner(n1, n1) = pert.Acl;
  d.A.bottomRightCorner(n0, n0) = base.Acl;
  d.B.resize(n1 + n0, 1);
  d.B << pert.pe.x0 / eps, base.pe.x0 / eps;
  d.C.resize(base.C.rows(), n1 + n0);
  d.C << pert.C, -base.C;
  return d;
}

AugmentedSystem build_augmented(const Objective& base, const std::vector<DeltaRealization>& dg) {
  const Eigen::Index n0 = base.Acl.rows();
  Eigen::Index total = n0;
  for (const auto& d : dg) {
    if (d.C.rows() != base.C.rows()) throw Error(Errc::InvalidArgument, "build_augmented: output size mismatch");
    total += d.A.rows();
  }
  AugmentedSystem a;
  a.A = Mat::Zero(total, total);
  a.B1 = Mat::Zero(total, 1);
  a.B2 = Mat::Zero(total, static_cast<Eigen::Index>(dg.size()));
  a.C.resize(base.C.rows(), total);
  a.A.topLeftCorner(n0, n0) = base.Acl;
  a.B1.topRows(n0) = base.pe.x0;
  a.C.leftCols(n0) = base.C;
  Eigen::Index off = n0;
  for (size_t k = 0; k < dg.size(); ++k) {
    const Eigen::Index nk = dg[k].A.rows();
    a.A.block(off, off, nk, nk) = dg[k].A;
    a.B2.block(off, static_cast<Eigen::Index>(k), nk, 1) = dg[k].B;
    a.C.middleCols(off, nk) = dg[k].C;
    off += nk;
  }
  return a;
}

Vec grad_dense(const AugmentedSystem& aug) {
  Mat L = solve_lyapunov(aug.A, aug.C.transpose() * aug.C);
  return 2.0 * (aug.B2.transpose() * L * aug.B1).col(0);
}

Vec grad_structured(const Objective& base, const std::vector<Objective>& pert, double eps) {
  Vec g(static_cast<Eigen::Index>(pert.size()));
  Mat AclT0 = base.Acl;
  for (size_t k = 0; k < pert.size(); ++k) {
    // cross Gramian between the perturbed and the base closed loop
    Mat X = solve_sylvester(pert[k].Acl.transpose(), base.Acl, -(pert[k].C.transpose() * base.C));
    double cross = pert[k].pe.x0.dot(X * base.pe.x0);
    g(static_cast<Eigen::Index>(k)) = 2.0 * (cross - base.JR1) / eps;
  }
  return g;
}

Vec grad_jr3(const Vec& vsi_base, const std::vector<Vec>& vsi_pert, double eps, const OptimizationConfig& cfg) {
  Vec g(static_cast<Eigen::Index>(vsi_pert.size()));
  const double j0 = jr3(vsi_base, cfg);
  for (size_t k = 0; k < vsi_pert.size(); ++k) g(static_cast<Eigen::Index>(k)) = (jr3(vsi_pert[k], cfg) - j0) / eps;
  return g;
}

ArmijoResult armijo_step(double J0, const Vec& g, const Vec& i, const std::function<double(const Vec&)>& J,
                         const std::function<Vec(const Vec&)>& project, const ArmijoOptions& opt) {
  ArmijoResult r;
  r.i_next = i;
  r.J_next = J0;
  const double gn = g.lpNorm<Eigen::Infinity>();
  if (!(gn > 0)) {
    r.stalled = true;
    return r;
  }
  double a0 = opt.alpha_init;
  if (opt.normalized) {
    // scale by the components the box does not block, so a clipped
    // coordinate with a large gradient does not shrink the useful move
    Vec probe = project(i - g / gn) - i;
    double gf = 0.0;
    for (Eigen::Index k = 0; k < g.size(); ++k)
      if (std::abs(probe(k)) > 1e-12 * (1.0 + std::abs(i(k)))) gf = std::max(gf, std::abs(g(k)));
    a0 = opt.alpha_init / (gf > 0 ? gf : gn);
  }
  double a = a0;
  for (int m = 0; m <= opt.max_backtracks; ++m, a *= opt.shrink) {
    Vec cand = project(i - a * g);
    const double dec = g.dot(i - cand);
    if (!(dec > 0)) {
      // projection leaves no descent along -g
      r.backtracks = m;
      r.stalled = true;
      return r;
    }
    double Jc;
    try {
      Jc = J(cand);
    } catch (const Error&) {
      continue;  // infeasible trial point: shorten the step
    }
    if (std::isfinite(Jc) && Jc <= J0 - opt.c1 * dec) {
      r.step = a;
      r.i_next = cand;
      r.J_next = Jc;
      r.backtracks = m;
      return r;
    }
  }
  r.stalled = true;
  r.backtracks = opt.max_backtracks;
  return r;
}

namespace {

OptimizationResult run_coopt(const Evaluator& eval, const OptimizationConfig& cfg, bool with_vsi) {
  check_config(cfg);
  const Eigen::Index p = cfg.i_demand.size();
  const int workers = worker_count(cfg.threads);
  const double w1 = 1.0 - cfg.gamma1 - (with_vsi ? cfg.gamma2 : 0.0);
  auto project = [&](const Vec& v) { return project_box(v, cfg); };

  OptimizationResult res;
  Vec i = project(cfg.i_init.size() ? cfg.i_init : cfg.i_demand);
  Objective obj = objective_terms(i, eval, cfg);
  double J = weighted_objective(obj, cfg, with_vsi);
  res.JR1_initial = obj.JR1;

  auto record = [&](int iter, double step, double gnorm) {
    TraceEntry t;
    t.iter = iter;
    t.J = J;
    t.JR1 = obj.JR1;
    t.JR2 = obj.JR2;
    t.JR3 = obj.JR3;
    t.step = step;
    t.grad_norm = gnorm;
    t.i = i;
    res.trace.push_back(std::move(t));
  };

  int iter = 1;
  for (; iter <= cfg.max_iters; ++iter) {
    // perturbed models, one per EVCS
    std::vector<Objective> pert(p);
    std::vector<double> eps(p, cfg.epsilon);
    parallel_for(static_cast<int>(p), workers, [&](int k) {
      for (int attempt = 0;; ++attempt) {
        Vec ik = i;
        ik(k) += eps[k];
        try {
          pert[k] = objective_from_eval(ik, eval(ik), cfg);
          return;
        } catch (const Error&) {
          if (attempt >= 1) throw;
          eps[k] /= 10.0;
        }
      }
    });

    Vec grad = cfg.gamma1 * 2.0 * cfg.beta.cwiseProduct(i - cfg.i_demand);
    if (w1 != 0.0) {
      Vec g1(p);
      if (cfg.dense_gradient) {
        std::vector<DeltaRealization> dg;
        for (Eigen::Index k = 0; k < p; ++k) dg.push_back(perturbed_system(obj, pert[k], eps[k]));
        g1 = grad_dense(build_augmented(obj, dg));
      } else {
        for (Eigen::Index k = 0; k < p; ++k) {
          std::vector<Objective> one{pert[k]};
          g1(k) = grad_structured(obj, one, eps[k])(0);
        }
      }
      grad += w1 * g1;
    }
    if (with_vsi && cfg.gamma2 != 0.0) {
      Vec g3(p);
      for (Eigen::Index k = 0; k < p; ++k) g3(k) = (pert[k].JR3 - obj.JR3) / eps[k];
      grad += cfg.gamma2 * g3;
    }

    Objective trial_obj;
    Vec trial_i;
    auto Jfun = [&](const Vec& v) {
      Objective o = objective_terms(v, eval, cfg);
      double val = weighted_objective(o, cfg, with_vsi);
      trial_obj = std::move(o);
      trial_i = v;
      return val;
    };
    ArmijoResult ar = armijo_step(J, grad, i, Jfun, project, cfg.armijo);
    record(iter, ar.step, grad.norm());
    if (ar.stalled) {
      res.stalled = true;
      res.converged = true;
      break;
    }
    if (trial_i.size() != ar.i_next.size() || trial_i != ar.i_next) trial_obj = objective_terms(ar.i_next, eval, cfg);
    const double move = (ar.i_next - i).norm();
    i = ar.i_next;
    obj = std::move(trial_obj);
    J = ar.J_next;
    if (!is_hurwitz(obj.Acl)) throw Error(Errc::Unstable, "closed loop lost stability along the path");
    if (move < cfg.tau) {
      res.converged = true;
      break;
    }
  }
  res.iterations = std::min(iter, cfg.max_iters);
  record(res.iterations, 0.0, 0.0);
  res.i_e_star = i;
  res.K = obj.gain.K;
  res.J = J;
  res.JR1 = obj.JR1;
  res.JR2 = obj.JR2;
  res.JR3 = obj.JR3;
  res.vsi = obj.pe.vsi;
  return res;
}

}  // namespace

OptimizationResult run_algorithm1(const Evaluator& eval, OptimizationConfig cfg) {
  cfg.gamma2 = 0.0;
  return run_coopt(eval, cfg, false);
}

OptimizationResult run_algorithm2(const Evaluator& eval, OptimizationConfig cfg) {
  return run_coopt(eval, cfg, true);
}

}  // namespace gridcharge
