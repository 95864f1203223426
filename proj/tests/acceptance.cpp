// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "gridcharge/incentive.hpp"
#include "gridcharge/pipeline.hpp"
#include "gridcharge/serialize.hpp"
#include "gridcharge/simulate.hpp"
#include "support.hpp"

using namespace gridcharge;
using testsupport::data_path;

namespace {

struct Outcome {
  bool pass = false;
  std::vector<std::string> notes;
};

std::string fmt(const char* f, double a) {
  char b[160];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

template <class... T>
std::string fmtn(const char* f, T... a) {
  char b[512];
  std::snprintf(b, sizeof b, f, a...);
  return b;
}

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return Json::parse(in);
}

GridModel grid_for(const std::string& config_path, const Json& cfg) {
  namespace fs = std::filesystem;
  return load_grid((fs::path(config_path).parent_path() / cfg.at("grid").get<std::string>()).string());
}

// ---------------------------------------------------------------------------

// Value as printed in the reference table; the decimals set the comparison.
struct Cell {
  const char* text;
  bool matches(double v) const {
    std::string s(text);
    auto dot = s.find('.');
    int dec = dot == std::string::npos ? 0 : static_cast<int>(s.size() - dot - 1);
    double scale = std::pow(10.0, dec);
    return std::round(v * scale) == std::round(std::stod(s) * scale);
  }
};

struct TableRow {
  int table_case;
  const char* station;
  double E, PD, PS, beta;
  Cell acc_ct, acc_wt, acc_ie, acc_cp;
  Cell rej_ct, rej_cp;
};

Outcome criterion1() {
  // E, P^eD, P^e*, beta and the printed Ct / Wt / Ie / C_P cells for the
  // accept and reject rows
  const std::vector<TableRow> rows = {
      {1, "EVCS-1", 45, 50, 45, 0.4, {"60"}, {"6"}, {"2"}, {"16"}, {"54"}, {"18"}},
      {1, "EVCS-3", 45, 100, 90.8, 0.5, {"29.7"}, {"2.7"}, {"2.25"}, {"20.25"}, {"27"}, {"22.5"}},
      {1, "EVCS-5", 45, 150, 139, 0.5, {"19.4"}, {"1.4"}, {"1.75"}, {"20.75"}, {"18"}, {"22.5"}},
      {2, "EVCS-1", 45, 30, 25.5, 0.5, {"106"}, {"16"}, {"4"}, {"18.5"}, {"90"}, {"22.5"}},
      // the printed reject-row C_PD here is 23.8, which contradicts the accept
      // row of the same station (C_P* + I_e = 23.8 + 3.2 = 27 = 45 * 0.6)
      {2, "EVCS-3", 45, 75, 67.1, 0.6, {"40.2"}, {"4.2"}, {"3.2"}, {"23.8"}, {"36"}, {"27"}},
      {2, "EVCS-5", 45, 120, 107.4, 0.6, {"25.1"}, {"2.6"}, {"3.1"}, {"23.9"}, {"22.5"}, {"27"}},
  };
  Outcome o;
  int good = 0, total = 0;
  for (const auto& r : rows) {
    DemandSubmission s;
    s.E_kwh = Vec::Constant(1, r.E);
    s.P_kw = Vec::Constant(1, r.PD);
    s.beta = Vec::Constant(1, r.beta);
    OfferRow off = build_offers(s, Vec::Constant(1, r.PS)).at(0);
    OfferRow acc = decide(off, Decision::Accept), rej = decide(off, Decision::Reject);
    bool a_ok = r.acc_ct.matches(acc.Ctstar) && r.acc_wt.matches(acc.Wt) && r.acc_ie.matches(acc.Ie) &&
                r.acc_cp.matches(acc.CPstar);
    bool r_ok = r.rej_ct.matches(rej.Ctstar) && rej.Wt == 0.0 && rej.Ie == 0.0 && r.rej_cp.matches(rej.CPstar);
    good += a_ok + r_ok;
    total += 2;
    o.notes.push_back(fmtn("case %d %s accept Ct*=%.1f Wt=%.1f Ie=%.3f CP*=%.3f %s | reject CtD=%.1f CPD=%.2f %s",
                           r.table_case, r.station, acc.Ctstar, acc.Wt, acc.Ie, acc.CPstar, a_ok ? "ok" : "MISMATCH",
                           rej.Ctstar, rej.CPstar, r_ok ? "ok" : "MISMATCH"));
  }
  o.notes.push_back(fmtn("%d/%d rows match after rounding to the printed precision", good, total));
  o.notes.push_back("case 2 EVCS-3 reject C_PD checked against 27 (printed 23.8 is inconsistent with its accept row)");
  o.pass = good == total;
  return o;
}

Outcome criterion2() {
  Vec p(3);
  p << 50, 50, 100;
  Vec i = demand_currents(p, 800.0);
  Outcome o;
  o.pass = i(0) == 62.5 && i(1) == 62.5 && i(2) == 125.0;
  o.notes.push_back(fmtn("[%g, %g, %g] A", i(0), i(1), i(2)));
  return o;
}

Outcome criterion3() {
  std::mt19937 rng(2024);
  Outcome o;
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const int n = 1 + t % 8;
    Mat A = testsupport::random_stable(rng, n, 0.2 + 0.1 * (t % 5));
    Mat C = testsupport::random_matrix(rng, 1 + t % 3, n);
    Vec x0 = testsupport::random_matrix(rng, n, 1);
    double lyap = h2_norm_sq(A, C, x0).value;
    double quad = testsupport::h2_quadrature(A, C, x0);
    worst = std::max(worst, testsupport::rel_err(lyap, quad));
  }
  o.pass = worst <= 1e-3;
  o.notes.push_back(fmt("worst relative gap over 20 systems %.3e", worst));
  return o;
}

Outcome criterion4() {
  Outcome o;
  Mat one = Mat::Ones(1, 1), zero = Mat::Zero(1, 1);
  Gain a = lqr_gain(zero, one, one, one);
  Gain b = lqr_gain(one, one, zero, one);
  double e1 = std::max(std::abs(a.X(0, 0) - 1), std::abs(a.K(0, 0) - 1));
  double e2 = std::max(std::abs(b.X(0, 0) - 2), std::abs(b.K(0, 0) - 2));
  double acl1 = (zero - one * a.K)(0, 0), acl2 = (one - one * b.K)(0, 0);
  bool scalar_ok = e1 <= 1e-10 && e2 <= 1e-10 && std::abs(acl1 + 1) <= 1e-10 && std::abs(acl2 + 1) <= 1e-10;
  o.notes.push_back(fmtn("scalar cases: |X-1|,|K-1| %.1e; |X-2|,|K-2| %.1e", e1, e2));

  std::mt19937 rng(77);
  int probes = 0, violations = 0, systems = 0;
  for (int t = 0; t < 20; ++t) {
    const int n = 2 + t % 8, m = 1 + t % 3;
    Mat A = testsupport::random_matrix(rng, n, n), B = testsupport::random_matrix(rng, n, m);
    Mat Q = Mat::Identity(n, n), R = Mat::Identity(m, m);
    Gain g = lqr_gain(A, B, Q, R);
    ++systems;
    for (int s = 0; s < 10; ++s) {
      Vec x0 = testsupport::random_matrix(rng, n, 1);
      Mat dK = testsupport::random_matrix(rng, m, n) * 1e-3 * std::max(1.0, g.K.norm());
      if (!is_hurwitz(A - B * (g.K + dK))) continue;
      ++probes;
      if (lqr_cost(A, B, Q, R, g.K + dK, x0) < lqr_cost(A, B, Q, R, g.K, x0) * (1 - 1e-10)) ++violations;
    }
  }
  o.notes.push_back(fmtn("local optimality: %d systems, %d perturbations, %d cost decreases", systems, probes,
                         violations));
  o.pass = scalar_ok && violations == 0 && probes > 0;
  return o;
}

Outcome criterion5() {
  struct Plant {
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
  std::mt19937 rng(555);
  Outcome o;
  double worst = 0;
  int checks = 0;
  for (int t = 0; t < 15; ++t) {
    const int n = 2 + t % 9, p = 1 + t % 3, m = 1 + t % 2;
    Plant s;
    s.A0 = testsupport::random_stable(rng, n, 1.0);
    s.B = testsupport::random_matrix(rng, n, m);
    for (int k = 0; k < p; ++k) s.Ak.push_back(0.1 * testsupport::random_matrix(rng, n, n));
    s.x0 = testsupport::random_matrix(rng, n, 1);
    OptimizationConfig c;
    c.i_demand = Vec::Ones(p);
    c.i_lower = Vec::Zero(p);
    c.beta = Vec::Ones(p);
    Vec a = Vec::Ones(p);
    Objective base = objective_from_eval(a, s(a), c);
    const double eps = 1e-5;
    std::vector<DeltaRealization> dg;
    for (int k = 0; k < p; ++k) {
      Vec ak = a;
      ak(k) += eps;
      dg.push_back(perturbed_system(base, objective_from_eval(ak, s(ak), c), eps));
    }
    Vec g = grad_dense(build_augmented(base, dg));
    for (int k = 0; k < p; ++k) {
      const double h = 1e-4;
      Vec ap = a, am = a;
      ap(k) += h;
      am(k) -= h;
      double fd = (objective_from_eval(ap, s(ap), c).JR1 - objective_from_eval(am, s(am), c).JR1) / (2 * h);
      worst = std::max(worst, std::abs(g(k) - fd) / std::max(std::abs(fd), 1e-12));
      ++checks;
    }
  }
  o.pass = worst <= 0.01;
  o.notes.push_back(fmtn("%d gradient entries, worst relative gap %.3e", checks, worst));
  return o;
}

struct Alg1Run {
  GridModel grid;
  OptimizationSetup setup;
  OptimizationResult result;
};

Alg1Run& alg1_run() {
  static Alg1Run run = [] {
    std::string path = data_path("configs/optimize1_p3.json");
    Json cfg = load_json(path);
    Alg1Run r{grid_for(path, cfg), {}, {}};
    r.setup = optimization_setup_from_json(cfg.at("optimization"), r.grid);
    r.result = run_algorithm1(make_grid_evaluator(r.grid, r.setup.pipeline), r.setup.cfg);
    return r;
  }();
  return run;
}

Outcome criterion6() {
  Outcome o;
  Alg1Run& run = alg1_run();
  const OptimizationResult& r = run.result;
  const OptimizationConfig& c = run.setup.cfg;
  const double red = (r.JR1_initial - r.JR1) / r.JR1_initial;
  o.notes.push_back(fmtn("J_R1 at demand %.6e, converged %.6e, reduction %.2f%% after %d iterations%s", r.JR1_initial,
                         r.JR1, 100 * red, r.iterations, r.stalled ? " (line search stalled)" : ""));
  o.notes.push_back(fmtn("i_e* = [%.3f, %.3f, %.3f] A", r.i_e_star(0), r.i_e_star(1), r.i_e_star(2)));

  Evaluator ev = make_grid_evaluator(run.grid, run.setup.pipeline);
  Vec lo, hi;
  box_bounds(c, lo, hi);
  bool mono = true, feasible = true, stable = true;
  for (size_t t = 0; t < r.trace.size(); ++t) {
    const Vec& i = r.trace[t].i;
    if (t && r.trace[t].J > r.trace[t - 1].J) mono = false;
    if ((i - lo).minCoeff() < 0 || (hi - i).minCoeff() < 0) feasible = false;
    if (!is_hurwitz(objective_terms(i, ev, c).Acl)) stable = false;
  }
  o.notes.push_back(fmtn("J nonincreasing: %s, iterates feasible: %s, A_cl Hurwitz: %s", mono ? "yes" : "no",
                         feasible ? "yes" : "no", stable ? "yes" : "no"));
  if (r.JR1_initial > 0 && r.trace.size() > 0) {
    // sign of the descent direction at the demand explains a stall at the corner
    o.notes.push_back(fmtn("first-iteration gradient norm %.3e", r.trace.front().grad_norm));
  }

  OptimizationConfig c1 = c;
  c1.gamma1 = 1.0;
  c1.i_init = c.i_lower;
  OptimizationResult r1 = run_algorithm1(ev, c1);
  double dist = (r1.i_e_star - c.i_demand).lpNorm<Eigen::Infinity>();
  o.notes.push_back(fmtn("gamma = 1 from the lower bound ends %.2e A from the demand", dist));
  o.pass = red >= 0.25 && mono && feasible && stable && dist <= c.tau;
  if (red < 0.25)
    o.notes.push_back("J_R1 decreases as the setpoints rise on this model, so the demand corner is the constrained optimum");
  return o;
}

Outcome criterion7() {
  Outcome o;
  GridModel g0 = load_grid(data_path("ieee33.json"));
  VSIReport r0 = compute_vsi(g0, solve_equilibrium(g0, Vec()), Vec());
  GridModel g10 = load_grid(data_path("ieee33_p10.json"));
  Vec vdc(g10.p()), pk(g10.p());
  for (int k = 0; k < g10.p(); ++k) {
    vdc(k) = g10.evcs[k].vdc_star;
    pk(k) = std::abs(g10.evcs[k].rating_kw);
  }
  // every station charging at its demanded magnitude
  Vec a = demand_currents(pk, vdc);
  VSIReport r10 = compute_vsi(g10, solve_equilibrium(g10, a), a);
  bool ok0 = std::abs(r0.v_min - 0.7141) <= 0.02 && r0.critical_bus == 18;
  bool ok10 = std::abs(r10.v_min - 0.5768) <= 0.03;
  o.notes.push_back(fmtn("no EVCS: v_min %.4f at bus %d (reference 0.7141 at bus 18)", r0.v_min, r0.critical_bus));
  o.notes.push_back(fmtn("p=10 at demanded rates: v_min %.4f at bus %d (reference 0.5768)", r10.v_min,
                         r10.critical_bus));
  o.pass = ok0 && ok10;
  return o;
}

Outcome criterion8() {
  Outcome o;
  struct CaseOut {
    double vmin, incentive, h2;
  };
  std::vector<CaseOut> out;
  for (int k = 1; k <= 3; ++k) {
    std::string path = data_path("configs/optimize2_p10_case" + std::to_string(k) + ".json");
    Json cfg = load_json(path);
    GridModel g = grid_for(path, cfg);
    OptimizationSetup s = optimization_setup_from_json(cfg.at("optimization"), g);
    auto t0 = std::chrono::steady_clock::now();
    OptimizationResult r = run_algorithm2(make_grid_evaluator(g, s.pipeline), s.cfg);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Json j = optimization_result_to_json(r, g, s);
    CaseOut c{j.at("v_min").get<double>(), j.value("incentive_total_usd", NAN), r.JR1};
    out.push_back(c);
    o.notes.push_back(fmtn("case %d (gamma1 %.2f, gamma2 %.2f): v_min %.4f, incentives $%.2f, H2^2 %.6e, %d iterations, %.1f s",
                           k, s.cfg.gamma1, s.cfg.gamma2, c.vmin, c.incentive, c.h2, r.iterations, secs));
  }
  bool vmin_up = out[2].vmin > out[0].vmin;
  bool inc_down = out[2].incentive < out[0].incentive;
  bool h2_low = out[0].h2 <= out[1].h2 && out[0].h2 <= out[2].h2;
  o.notes.push_back(fmtn("v_min case 1 -> 3 rises: %s; incentives case 1 -> 3 fall: %s; case 1 lowest H2: %s",
                         vmin_up ? "yes" : "no", inc_down ? "yes" : "no", h2_low ? "yes" : "no"));
  if (!inc_down)
    o.notes.push_back("with gamma1 = 0 the VSI term pushes V2G stations to their full contracted discharge, which "
                      "trades into a larger G2V sacrifice and a larger payout");
  o.pass = vmin_up && inc_down && h2_low;
  return o;
}

Outcome criterion9() {
  Outcome o;
  GridModel g = load_grid(data_path("ieee33_p3.json"));
  Vec a(3);
  a << 62.5, 62.5, 125;
  Scenario sc;
  sc.initial_alpha = a;
  sc.horizon = 10.0;
  sc.sample_dt = 1e-2;
  Trajectory tr = run_simulation(g, nullptr, sc);
  OperatingPoint op = solve_equilibrium(g, a);
  double worst = 0;
  for (const Vec& x : tr.x)
    for (Eigen::Index i = 0; i < x.size(); ++i)
      worst = std::max(worst, std::abs(x(i) - op.x(i)) / std::max(1.0, std::abs(op.x(i))));
  o.pass = worst < 1e-6 && tr.t.back() >= 10.0 - 1e-9;
  o.notes.push_back(fmtn("max relative deviation %.3e over %.1f s (%ld steps)", worst, tr.t.back(), tr.accepted));
  return o;
}

Outcome criterion10() {
  namespace fs = std::filesystem;
  Outcome o;
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(data_path("configs")))
    if (e.path().filename().string().rfind("simulate_", 0) == 0) files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  bool all = !files.empty();
  for (const auto& path : files) {
    Json cfg = load_json(path);
    GridModel g = grid_for(path, cfg);
    const Json& sim = cfg.at("simulation");
    Scenario sc = scenario_from_json(sim.at("scenario"), g);
    OptimizationSetup s = optimization_setup_from_json(sim.value("optimization", Json::object()), g);
    Vec a = sc.initial_alpha.size() ? sc.initial_alpha : Vec(Vec::Zero(g.p()));
    for (const Event& e : sc.events)
      if (e.action == EventAction::PlugIn) a(e.evcs) += e.rate_kw * 1e3 / g.evcs[e.evcs].vdc_star;
    PipelineEval pe = run_pipeline(g, a, s.pipeline);
    Mat K = lqr_gain(pe.reduced.A, pe.reduced.B, pe.reduced.Q, pe.reduced.R).K;
    double ise_pi = vdc_ise(g, run_simulation(g, nullptr, sc));
    double ise_lqr = vdc_ise(g, run_simulation(g, &K, sc));
    ModalReport open = eigen_report(pe.full.A, false), closed = eigen_report(full_closed_loop(pe, K), false);
    int d0 = dominant_mode(open), d1 = dominant_mode(closed);
    double z0 = d0 >= 0 ? open.damping(d0) : 1.0, z1 = d1 >= 0 ? closed.damping(d1) : 1.0;
    bool ok = ise_lqr <= ise_pi && z1 > z0;
    all = all && ok;
    o.notes.push_back(fmtn("%s: ISE PI %.4g, PI+LQR %.4g; dominant damping open %.4f, closed %.4f",
                           fs::path(path).filename().string().c_str(), ise_pi, ise_lqr, z0, z1));
  }
  o.pass = all;
  return o;
}

Outcome criterion11() {
  Outcome o;
  GridModel g = load_grid(data_path("ieee33_p3.json"));
  Vec a(3);
  a << 62.5, 62.5, 125;
  PipelineEval pe = run_pipeline(g, a);
  ModalReport full = eigen_report(pe.full.A, true), red = eigen_report(pe.reduced.A, false);
  int df = dominant_mode(full), dr = dominant_mode(red);
  if (df < 0 || dr < 0) {
    o.notes.push_back("no oscillatory mode found");
    return o;
  }
  double ef = testsupport::rel_err(red.eigenvalues(dr).imag(), full.eigenvalues(df).imag());
  double ez = testsupport::rel_err(red.damping(dr), full.damping(df));
  o.notes.push_back(fmtn("full %.2f%+.2fj (zeta %.4f), reduced %.2f%+.2fj (zeta %.4f): frequency gap %.2f%%, damping gap %.2f%%",
                         full.eigenvalues(df).real(), full.eigenvalues(df).imag(), full.damping(df),
                         red.eigenvalues(dr).real(), red.eigenvalues(dr).imag(), red.damping(dr), 100 * ef, 100 * ez));
  // dominant modes: every oscillatory mode within 1% of the least damping
  StateLayout lay(g);
  auto names = lay.state_names(g);
  std::vector<int> eliminated;
  for (int k = 0; k < lay.p; ++k)
    for (int s : {kDelta, kZeta, kPsi, kChid, kChiq}) eliminated.push_back(lay.evcs(k, s));
  for (int j = 0; j < lay.n - 1; ++j) {
    eliminated.push_back(lay.line(j, 0));
    eliminated.push_back(lay.line(j, 1));
  }
  double worst = 0;
  std::string worst_state;
  int modes = 0;
  for (Eigen::Index i = 0; i < full.eigenvalues.size(); ++i) {
    if (full.eigenvalues(i).imag() <= 1e-6 || full.damping(i) > full.damping(df) * 1.01) continue;
    ++modes;
    for (int s : eliminated)
      if (full.participation(s, i) > worst) {
        worst = full.participation(s, i);
        worst_state = names[s];
      }
  }
  o.notes.push_back(fmtn("largest PLL/controller/line participation over %d dominant modes: %.4f (%s)", modes, worst,
                         worst_state.c_str()));
  o.pass = ef <= 0.15 && ez <= 0.15 && worst < 0.15;
  return o;
}

Outcome criterion12() {
  Outcome o;
  Alg1Run& run = alg1_run();
  const OptimizationResult& r = run.result;
  GridModel heavy = scale_loads(run.grid, 1.3);
  PipelineEval base = run_pipeline(run.grid, r.i_e_star, run.setup.pipeline);
  PipelineEval pert = run_pipeline(heavy, r.i_e_star, run.setup.pipeline);
  auto h2 = [&](const PipelineEval& pe) {
    Mat Acl = closed_loop(pe.reduced.A, pe.reduced.B, r.K);
    return h2_norm_sq(Acl, performance_output(pe.reduced.Q, pe.reduced.R, r.K), pe.reduced.x0).value;
  };
  double h0 = h2(base), h1 = h2(pert);
  double change = std::abs(h1 - h0) / h0;
  o.notes.push_back(fmtn("H2^2 nominal %.6e, +30%% load %.6e, change %.3f%%", h0, h1, 100 * change));
  o.pass = change < 0.10;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> crit = {
      {"incentive table arithmetic", criterion1},
      {"demand-current mapping", criterion2},
      {"H2 kernel against frequency quadrature", criterion3},
      {"LQR kernel", criterion4},
      {"gradient against central differences", criterion5},
      {"Algorithm 1 on the p=3 feeder", criterion6},
      {"VSI reference points", criterion7},
      {"Algorithm 2 trade-off ordering", criterion8},
      {"simulation equilibrium hold", criterion9},
      {"closed-loop improvement on bundled scenarios", criterion10},
      {"reduction validity", criterion11},
      {"robustness to +30% non-EV load", criterion12},
  };
  int failed = 0;
  for (size_t k = 0; k < crit.size(); ++k) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = crit[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes.push_back(std::string("error: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %zu: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", k + 1, crit[k].first, secs);
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(crit.size()) - failed, crit.size());
  return failed;
}
