#include "gridcharge/serialize.hpp"

#include <cmath>
#include <sstream>

namespace gridcharge {

Json to_json(const Mat& M) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Json to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vec vec_from_json(const Json& j) {
  if (!j.is_array()) throw Error(Errc::Parse, "expected a numeric array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(Errc::Parse, "expected a numeric array");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Mat mat_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw Error(Errc::Parse, "expected a non-empty matrix (array of rows)");
  const size_t cols = j[0].size();
  Mat M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < j.size(); ++i) {
    Vec r = vec_from_json(j[i]);
    if (static_cast<size_t>(r.size()) != cols) throw Error(Errc::Parse, "ragged matrix rows");
    M.row(static_cast<Eigen::Index>(i)) = r.transpose();
  }
  return M;
}

namespace {

// Scalar or per-EVCS array.
Vec per_evcs(const Json& j, const char* key, Eigen::Index p, const Vec& fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (v.is_number()) return Vec::Constant(p, v.get<double>());
  Vec out = vec_from_json(v);
  if (out.size() != p) throw Error(Errc::InvalidArgument, std::string("'") + key + "' needs one entry per EVCS");
  return out;
}

template <class T>
T get_or(const Json& j, const char* key, T dflt) {
  if (!j.contains(key)) return dflt;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::Parse, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

OptimizationSetup optimization_setup_from_json(const Json& j, const GridModel& g) {
  if (!j.is_object()) throw Error(Errc::Parse, "optimization section must be an object");
  OptimizationSetup s;
  OptimizationConfig& c = s.cfg;
  const Eigen::Index p = g.p();
  if (p == 0) throw Error(Errc::InvalidArgument, "grid has no EVCS to optimize");
  Vec vdc(p), rating(p), lower(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    vdc(k) = g.evcs[k].vdc_star;
    rating(k) = g.evcs[k].rating_kw;
    lower(k) = g.evcs[k].i_lower;
    c.direction.push_back(g.evcs[k].direction);
  }
  if (j.contains("i_demand"))
    c.i_demand = per_evcs(j, "i_demand", p, Vec());
  else
    c.i_demand = demand_currents(per_evcs(j, "demand_kw", p, rating), vdc);
  if (j.contains("i_lower_fraction")) {
    if (j.contains("i_lower")) throw Error(Errc::InvalidArgument, "give either i_lower or i_lower_fraction");
    c.i_lower = j.at("i_lower_fraction").get<double>() * c.i_demand;
  } else {
    c.i_lower = per_evcs(j, "i_lower", p, lower);
  }
  c.beta = per_evcs(j, "beta", p, Vec::Constant(p, 1e-6));
  if (j.contains("beta_si")) c.beta_si = vec_from_json(j.at("beta_si"));
  if (j.contains("i_init")) c.i_init = per_evcs(j, "i_init", p, Vec());
  c.gamma1 = get_or(j, "gamma1", get_or(j, "gamma", 0.0));
  c.gamma2 = get_or(j, "gamma2", 0.0);
  c.epsilon = get_or(j, "epsilon", c.epsilon);
  c.tau = get_or(j, "tau", c.tau);
  c.max_iters = get_or(j, "max_iters", c.max_iters);
  c.dense_gradient = get_or(j, "dense_gradient", false);
  c.threads = get_or(j, "threads", 0);
  if (j.contains("armijo")) {
    const Json& a = j.at("armijo");
    c.armijo.c1 = get_or(a, "c1", c.armijo.c1);
    c.armijo.shrink = get_or(a, "shrink", c.armijo.shrink);
    c.armijo.alpha_init = get_or(a, "alpha_init", c.armijo.alpha_init);
    c.armijo.max_backtracks = get_or(a, "max_backtracks", c.armijo.max_backtracks);
    c.armijo.normalized = get_or(a, "normalized", c.armijo.normalized);
  }
  const Eigen::Index ns = 7 * p, nu = 3 * p;
  if (j.contains("Q")) c.Q = mat_from_json(j.at("Q"));
  else if (j.contains("Q_scale")) c.Q = j.at("Q_scale").get<double>() * Mat::Identity(ns, ns);
  if (j.contains("R")) c.R = mat_from_json(j.at("R"));
  else if (j.contains("R_scale")) c.R = j.at("R_scale").get<double>() * Mat::Identity(nu, nu);
  s.pipeline.Q = c.Q;
  s.pipeline.R = c.R;
  if (j.contains("x0")) s.pipeline.x0 = vec_from_json(j.at("x0"));
  std::string red = get_or<std::string>(j, "reduction", "hold_integrators");
  if (red == "strict") s.pipeline.reduction = Reduction::Strict;
  else if (red == "hold_integrators") s.pipeline.reduction = Reduction::HoldIntegrators;
  else throw Error(Errc::InvalidArgument, "reduction must be 'strict' or 'hold_integrators'");
  s.price_energy_kwh = get_or(j, "session_energy_kwh", s.price_energy_kwh);
  s.peak = get_or(j, "peak", false);
  s.duration_resolution_min = get_or(j, "duration_resolution_min", s.duration_resolution_min);
  return s;
}

Json vsi_to_json(const VSIReport& r) {
  Json j;
  j["v_min"] = r.v_min;
  j["critical_bus"] = r.critical_bus;
  Json buses = Json::array();
  for (size_t i = 0; i < r.bus.size(); ++i)
    buses.push_back({{"bus", r.bus[i]}, {"vsi", r.value[i]}, {"out_of_range", static_cast<bool>(r.out_of_range[i])}});
  j["buses"] = std::move(buses);
  return j;
}

Json optimization_result_to_json(const OptimizationResult& r, const GridModel& g, const OptimizationSetup& s) {
  const Eigen::Index p = r.i_e_star.size();
  Json j;
  j["i_e_star"] = to_json(r.i_e_star);
  Vec pk(p), pd(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    pk(k) = r.i_e_star(k) * g.evcs[k].vdc_star / 1e3;
    pd(k) = s.cfg.i_demand(k) * g.evcs[k].vdc_star / 1e3;
  }
  j["P_e_star_kw"] = to_json(pk);
  j["i_demand"] = to_json(s.cfg.i_demand);
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["stalled"] = r.stalled;
  j["J"] = r.J;
  j["J_R1"] = r.JR1;
  j["J_R2"] = r.JR2;
  j["J_R3"] = r.JR3;
  j["h2_sq_before"] = r.JR1_initial;
  j["h2_sq_after"] = r.JR1;
  if (r.vsi.size()) {
    Eigen::Index arg;
    double vmin = r.vsi.minCoeff(&arg);
    j["v_min"] = vmin;
    j["critical_bus"] = static_cast<int>(arg) + 2;
  }
  // incentive summary for the session energy
  bool all_nonzero = true;
  for (Eigen::Index k = 0; k < p; ++k)
    if (pk(k) == 0.0 || pd(k) == 0.0) all_nonzero = false;
  if (all_nonzero) {
    DemandSubmission sub;
    sub.E_kwh = Vec::Constant(p, s.price_energy_kwh);
    sub.P_kw = pd;
    sub.beta.resize(p);
    for (Eigen::Index k = 0; k < p; ++k) sub.beta(k) = default_beta(pd(k), s.peak);
    OfferOptions oo;
    oo.duration_resolution_min = s.duration_resolution_min;
    try {
      auto rows = build_offers(sub, pk, oo);
      double total = 0;
      for (auto& row : rows) total += row.Ie;
      j["incentive_total_usd"] = total;
      j["offers"] = Json::parse(offers_json(rows));
    } catch (const Error&) {
      // optimum left the demanded direction; no offer can be quoted
    }
  }
  j["K"] = to_json(r.K);
  Json tr = Json::array();
  for (const auto& t : r.trace)
    tr.push_back({{"iter", t.iter},
                  {"J", t.J},
                  {"J_R1", t.JR1},
                  {"J_R2", t.JR2},
                  {"J_R3", t.JR3},
                  {"step", t.step},
                  {"grad_norm", t.grad_norm},
                  {"i", to_json(t.i)}});
  j["trace"] = std::move(tr);
  return j;
}

std::string trace_csv(const OptimizationResult& r) {
  std::ostringstream os;
  os.precision(12);
  os << "iteration,J,J_R1,J_R2,J_R3,step,grad_norm\n";
  for (const auto& t : r.trace)
    os << t.iter << ',' << t.J << ',' << t.JR1 << ',' << t.JR2 << ',' << t.JR3 << ',' << t.step << ','
       << t.grad_norm << '\n';
  return os.str();
}

Scenario scenario_from_json(const Json& j, const GridModel& g) {
  if (!j.is_object()) throw Error(Errc::Parse, "scenario must be an object");
  Scenario sc;
  sc.scale_ratio = get_or(j, "scale_ratio", 1.0);
  sc.horizon = get_or(j, "horizon_s", 1.0);
  sc.sample_dt = get_or(j, "sample_dt_s", 0.0);
  if (j.contains("initial_alpha")) sc.initial_alpha = per_evcs(j, "initial_alpha", g.p(), Vec());
  if (j.contains("solver")) {
    const Json& s = j.at("solver");
    sc.solver.dt_max = get_or(s, "dt_max", sc.solver.dt_max);
    sc.solver.dt_init = get_or(s, "dt_init", sc.solver.dt_init);
    sc.solver.rtol = get_or(s, "rtol", sc.solver.rtol);
    sc.solver.atol = get_or(s, "atol", sc.solver.atol);
    sc.solver.max_steps = get_or(s, "max_steps", sc.solver.max_steps);
  }
  if (j.contains("events")) {
    for (const Json& e : j.at("events")) {
      Event ev;
      ev.time = get_or(e, "time_s", 0.0);
      ev.evcs = get_or(e, "evcs", 0);
      ev.port = get_or(e, "port", 0);
      std::string act = get_or<std::string>(e, "action", "plug_in");
      if (act == "plug_in") ev.action = EventAction::PlugIn;
      else if (act == "plug_out") ev.action = EventAction::PlugOut;
      else throw Error(Errc::Parse, "event action must be plug_in or plug_out");
      ev.energy_kwh = get_or(e, "energy_kwh", 0.0);
      ev.rate_kw = get_or(e, "rate_kw", 0.0);
      sc.events.push_back(ev);
    }
  }
  return sc;
}

}  // namespace gridcharge
