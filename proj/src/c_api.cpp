#include "gridcharge/gridcharge.h"

#include <cstring>
#include <string>

#include "gridcharge/serialize.hpp"

using namespace gridcharge;

struct gc_grid {
  GridModel model;
};

namespace {

thread_local std::string g_last_error;

gc_status map_code(Errc c) {
  switch (c) {
    case Errc::InvalidArgument: return GC_E_INVALID;
    case Errc::Io: return GC_E_IO;
    case Errc::Parse: return GC_E_PARSE;
    case Errc::Topology: return GC_E_TOPOLOGY;
    case Errc::Convergence: return GC_E_CONVERGENCE;
    case Errc::Saturated: return GC_E_SATURATED;
    case Errc::Singular: return GC_E_SINGULAR;
    case Errc::Unstable: return GC_E_UNSTABLE;
    case Errc::Numeric: return GC_E_NUMERIC;
  }
  return GC_E_INTERNAL;
}

template <class F>
gc_status guarded(F&& fn) {
  g_last_error.clear();
  try {
    fn();
    return GC_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return map_code(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("JSON: ") + e.what();
    return GC_E_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GC_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GC_E_INTERNAL;
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** dst, const std::string& s) {
  if (dst) *dst = dup(s);
}

void need(const void* p, const char* what) {
  if (!p) throw Error(Errc::InvalidArgument, std::string(what) + " must not be NULL");
}

Json parse_or_empty(const char* text) {
  if (!text || !*text) return Json::object();
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::Parse, std::string("config is not valid JSON: ") + e.what());
  }
}

Vec setpoint_from(const Json& j, const GridModel& g, const OptimizationSetup& s) {
  if (j.contains("alpha")) {
    Vec a = vec_from_json(j.at("alpha"));
    if (a.size() != g.p()) throw Error(Errc::InvalidArgument, "'alpha' needs one entry per EVCS");
    return a;
  }
  return s.cfg.i_demand;
}

Mat lqr_at(const GridModel& g, const Vec& alpha, const OptimizationSetup& s) {
  PipelineEval pe = run_pipeline(g, alpha, s.pipeline);
  return lqr_gain(pe.reduced.A, pe.reduced.B, pe.reduced.Q, pe.reduced.R).K;
}

Json summarize(const GridModel& g, const Trajectory& tr) {
  Json j;
  j["ise_vdc"] = vdc_ise(g, tr);
  double peak = 0;
  StateLayout lay(g);
  for (size_t i = 0; i < tr.t.size(); ++i)
    for (int k = 0; k < lay.p; ++k)
      peak = std::max(peak, std::abs(tr.x[i](lay.evcs(k, kVdc)) - g.evcs[k].vdc_star));
  j["vdc_peak_deviation"] = peak;
  j["samples"] = tr.t.size();
  j["accepted_steps"] = tr.accepted;
  j["rejected_steps"] = tr.rejected;
  j["events"] = Json::parse(events_json(tr));
  return j;
}

}  // namespace

extern "C" {

const char* gc_version(void) { return "0.1.0"; }

const char* gc_last_error(void) { return g_last_error.c_str(); }

const char* gc_status_name(gc_status s) {
  switch (s) {
    case GC_OK: return "ok";
    case GC_E_INVALID: return "invalid argument";
    case GC_E_IO: return "i/o error";
    case GC_E_PARSE: return "parse error";
    case GC_E_TOPOLOGY: return "topology error";
    case GC_E_CONVERGENCE: return "convergence failure";
    case GC_E_SATURATED: return "saturated";
    case GC_E_SINGULAR: return "singular";
    case GC_E_UNSTABLE: return "unstable";
    case GC_E_NUMERIC: return "numeric error";
    case GC_E_INTERNAL: return "internal error";
  }
  return "unknown";
}

void gc_string_free(char* s) { std::free(s); }

gc_status gc_grid_load(const char* path, gc_grid** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new gc_grid{load_grid(path)};
  });
}

gc_status gc_grid_parse(const char* json_text, gc_grid** out) {
  return guarded([&] {
    need(json_text, "json_text");
    need(out, "out");
    *out = nullptr;
    *out = new gc_grid{parse_grid(json_text)};
  });
}

gc_status gc_grid_scale_loads(const gc_grid* g, double factor, gc_grid** out) {
  return guarded([&] {
    need(g, "grid");
    need(out, "out");
    *out = nullptr;
    *out = new gc_grid{scale_loads(g->model, factor)};
  });
}

void gc_grid_free(gc_grid* g) { delete g; }

gc_status gc_grid_size(const gc_grid* g, int* n_bus, int* n_evcs) {
  return guarded([&] {
    need(g, "grid");
    if (n_bus) *n_bus = g->model.n();
    if (n_evcs) *n_evcs = g->model.p();
  });
}

gc_status gc_sending_bus(const gc_grid* g, int bus, int* parent) {
  return guarded([&] {
    need(g, "grid");
    need(parent, "parent");
    *parent = sending_bus(g->model, bus);
  });
}

gc_status gc_demand_currents(const double* p_kw, size_t p, double vdc_star, double* out_a) {
  return guarded([&] {
    need(p_kw, "p_kw");
    need(out_a, "out_a");
    Vec in = Eigen::Map<const Vec>(p_kw, static_cast<Eigen::Index>(p));
    Vec r = demand_currents(in, vdc_star);
    for (size_t k = 0; k < p; ++k) out_a[k] = r(static_cast<Eigen::Index>(k));
  });
}

gc_status gc_vsi(const gc_grid* g, const double* alpha, size_t p, char** report_json) {
  return guarded([&] {
    need(g, "grid");
    need(report_json, "report_json");
    const GridModel& m = g->model;
    if (alpha && p != static_cast<size_t>(m.p()))
      throw Error(Errc::InvalidArgument, "setpoint length does not match the EVCS count");
    Vec a = alpha ? Vec(Eigen::Map<const Vec>(alpha, m.p())) : Vec(Vec::Zero(m.p()));
    OperatingPoint op = solve_equilibrium(m, a);
    Json j = vsi_to_json(compute_vsi(m, op, a));
    j["alpha"] = to_json(a);
    j["v_pu"] = to_json(bus_voltage_pu(m, op.y));
    *report_json = dup(j.dump(2) + "\n");
  });
}

gc_status gc_optimize(const gc_grid* g, int algorithm, const char* config_json, char** result_json,
                      char** trace) {
  return guarded([&] {
    need(g, "grid");
    need(result_json, "result_json");
    if (algorithm != 1 && algorithm != 2) throw Error(Errc::InvalidArgument, "algorithm must be 1 or 2");
    Json cfg = parse_or_empty(config_json);
    OptimizationSetup s = optimization_setup_from_json(cfg, g->model);
    Evaluator ev = make_grid_evaluator(g->model, s.pipeline);
    OptimizationResult r = algorithm == 1 ? run_algorithm1(ev, s.cfg) : run_algorithm2(ev, s.cfg);
    Json out = optimization_result_to_json(r, g->model, s);
    if (!r.vsi.size()) {
      // Algorithm 1 does not carry the VSI; report it at the optimum anyway
      OperatingPoint op = solve_equilibrium(g->model, r.i_e_star);
      VSIReport v = compute_vsi(g->model, op, r.i_e_star);
      out["v_min"] = v.v_min;
      out["critical_bus"] = v.critical_bus;
    }
    out["algorithm"] = algorithm;
    out["gamma1"] = s.cfg.gamma1;
    out["gamma2"] = s.cfg.gamma2;
    *result_json = dup(out.dump(2) + "\n");
    put(trace, trace_csv(r));
  });
}

gc_status gc_simulate(const gc_grid* g, const char* scenario_json, char** summary_json, char** trajectory) {
  return guarded([&] {
    need(g, "grid");
    need(summary_json, "summary_json");
    const GridModel& m = g->model;
    Json j = parse_or_empty(scenario_json);
    Scenario sc = scenario_from_json(j.contains("scenario") ? j.at("scenario") : j, m);
    std::string ctl = j.value("controller", std::string("lqr"));
    if (ctl != "pi" && ctl != "lqr" && ctl != "both")
      throw Error(Errc::InvalidArgument, "controller must be pi, lqr or both");
    Mat K;
    if (ctl != "pi") {
      if (j.contains("K")) {
        K = mat_from_json(j.at("K"));
      } else {
        OptimizationSetup s = optimization_setup_from_json(j.value("optimization", Json::object()), m);
        Vec a;
        if (j.contains("lqr_alpha")) {
          a = vec_from_json(j.at("lqr_alpha"));
        } else {
          // setpoint with every scheduled port drawing its rate
          a = sc.initial_alpha.size() ? sc.initial_alpha : Vec(Vec::Zero(m.p()));
          for (const Event& e : sc.events)
            if (e.action == EventAction::PlugIn) a(e.evcs) += e.rate_kw * 1e3 / m.evcs[e.evcs].vdc_star;
        }
        if (a.size() != m.p()) throw Error(Errc::InvalidArgument, "'lqr_alpha' needs one entry per EVCS");
        K = lqr_at(m, a, s);
      }
    }
    Json out;
    out["controller"] = ctl;
    Trajectory last;
    if (ctl == "pi" || ctl == "both") {
      last = run_simulation(m, nullptr, sc);
      out["pi"] = summarize(m, last);
    }
    if (ctl == "lqr" || ctl == "both") {
      last = run_simulation(m, &K, sc);
      out["lqr"] = summarize(m, last);
    }
    *summary_json = dup(out.dump(2) + "\n");
    if (trajectory) *trajectory = dup(trajectory_csv(m, last));
  });
}

gc_status gc_eig(const gc_grid* g, const char* config_json, char** summary_json, char** modal_csv_out) {
  return guarded([&] {
    need(g, "grid");
    need(summary_json, "summary_json");
    const GridModel& m = g->model;
    Json j = parse_or_empty(config_json);
    OptimizationSetup s = optimization_setup_from_json(j.value("optimization", Json::object()), m);
    Vec a = setpoint_from(j, m, s);
    std::string model = j.value("model", std::string("full"));
    bool closed = j.value("closed_loop", false);
    PipelineEval pe = run_pipeline(m, a, s.pipeline);
    Mat A;
    std::vector<std::string> names;
    if (model == "full") {
      A = closed ? full_closed_loop(pe, lqr_gain(pe.reduced.A, pe.reduced.B, pe.reduced.Q, pe.reduced.R).K)
                 : pe.full.A;
      names = StateLayout(m).state_names(m);
    } else if (model == "reduced") {
      A = pe.reduced.A;
      if (closed) A = closed_loop(A, pe.reduced.B, lqr_gain(A, pe.reduced.B, pe.reduced.Q, pe.reduced.R).K);
      std::vector<std::string> all = StateLayout(m).state_names(m);
      for (int i : slow_indices(StateLayout(m))) names.push_back(all[i]);
    } else {
      throw Error(Errc::InvalidArgument, "model must be 'full' or 'reduced'");
    }
    ModalReport rep = eigen_report(A, true);
    Json out;
    out["alpha"] = to_json(a);
    out["model"] = model;
    out["closed_loop"] = closed;
    out["states"] = A.rows();
    out["spectral_abscissa"] = rep.eigenvalues.real().maxCoeff();
    int d = dominant_mode(rep);
    if (d >= 0) {
      out["dominant"] = {{"real", rep.eigenvalues(d).real()},
                         {"imag", rep.eigenvalues(d).imag()},
                         {"damping", rep.damping(d)}};
    }
    out["defective"] = rep.defective;
    *summary_json = dup(out.dump(2) + "\n");
    put(modal_csv_out, modal_csv(rep, names));
  });
}

gc_status gc_offers(const char* request_json, char** csv, char** js) {
  return guarded([&] {
    need(request_json, "request_json");
    Json j = parse_or_empty(request_json);
    DemandSubmission sub;
    sub.E_kwh = vec_from_json(j.at("energy_kwh"));
    sub.P_kw = vec_from_json(j.at("rate_kw"));
    Vec opt = vec_from_json(j.at("opt_rate_kw"));
    const Eigen::Index p = sub.E_kwh.size();
    bool peak = j.value("peak", false);
    if (j.contains("beta")) {
      sub.beta = vec_from_json(j.at("beta"));
    } else {
      sub.beta.resize(p);
      for (Eigen::Index k = 0; k < std::min(p, sub.P_kw.size()); ++k) sub.beta(k) = default_beta(sub.P_kw(k), peak);
    }
    OfferOptions oo;
    oo.duration_resolution_min = j.value("duration_resolution_min", oo.duration_resolution_min);
    std::vector<OfferRow> rows = build_offers(sub, opt, oo);
    if (j.contains("decisions")) {
      const Json& d = j.at("decisions");
      if (!d.is_array() || d.size() != rows.size())
        throw Error(Errc::InvalidArgument, "'decisions' needs one entry per EVCS");
      for (size_t k = 0; k < rows.size(); ++k) {
        std::string s = d[k].get<std::string>();
        Decision dec = s == "accept" ? Decision::Accept : s == "reject" ? Decision::Reject : Decision::Pending;
        if (dec == Decision::Pending && s != "pending")
          throw Error(Errc::InvalidArgument, "decision must be accept, reject or pending");
        rows[k] = decide(rows[k], dec);
      }
    }
    put(csv, offers_csv(rows));
    put(js, offers_json(rows));
  });
}

}  // extern "C"
