// gridcharge-cli: experiment front end over the C API.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gridcharge/gridcharge.h"
#include "json.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// sysexits.h values
constexpr int kExUsage = 64;
constexpr int kExData = 65;
constexpr int kExNoInput = 66;
constexpr int kExSoftware = 70;
constexpr int kExCantCreate = 73;

struct Failure {
  int code;
  std::string msg;
};

int exit_code(gc_status s) {
  switch (s) {
    case GC_OK: return 0;
    case GC_E_IO: return kExNoInput;
    case GC_E_PARSE:
    case GC_E_TOPOLOGY:
    case GC_E_INVALID: return kExData;
    default: return kExSoftware;
  }
}

void check(gc_status s) {
  if (s != GC_OK) throw Failure{exit_code(s), std::string(gc_status_name(s)) + ": " + gc_last_error()};
}

// Owns a library string.
struct LibString {
  char* p = nullptr;
  ~LibString() { gc_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

struct Grid {
  gc_grid* g = nullptr;
  ~Grid() { gc_grid_free(g); }
};

std::vector<double> parse_list(const std::string& s, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Failure{kExUsage, std::string("bad number '") + tok + "' in " + flag};
    }
  }
  if (out.empty()) throw Failure{kExUsage, std::string(flag) + " needs a comma-separated list"};
  return out;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{kExNoInput, "cannot open '" + path + "'"};
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Failure{kExData, "'" + path + "' is not valid JSON: " + e.what()};
  }
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Failure{kExCantCreate, "cannot write '" + p.string() + "'"};
  out << text;
}

struct Options {
  std::string mode;
  std::string grid, config, out;
  std::string demand, alpha, beta, energy, rate, opt_rate, decisions, controller;
  double gamma = -1, gamma1 = -1, gamma2 = -1, epsilon = -1, tau = -1;
  int max_iters = -1, threads = -1;
  bool closed_loop = false, reduced = false, peak = false, dense = false;
};

Json load_config(const Options& o, std::string& grid_path) {
  Json cfg = Json::object();
  fs::path base = ".";
  if (!o.config.empty()) {
    cfg = read_json_file(o.config);
    base = fs::path(o.config).parent_path();
    if (!cfg.is_object()) throw Failure{kExData, "config must be a JSON object"};
  }
  if (!o.grid.empty()) {
    grid_path = o.grid;
  } else if (cfg.contains("grid")) {
    fs::path gp = cfg["grid"].get<std::string>();
    grid_path = gp.is_absolute() ? gp.string() : (base / gp).string();
  }
  return cfg;
}

void load_grid(Grid& g, const std::string& path) {
  if (path.empty()) throw Failure{kExUsage, "--grid is required (or a config with a 'grid' entry)"};
  check(gc_grid_load(path.c_str(), &g.g));
}

void emit(const Options& o, const std::vector<std::pair<std::string, std::string>>& files, const std::string& summary) {
  if (!o.out.empty()) {
    std::error_code ec;
    fs::create_directories(o.out, ec);
    if (ec) throw Failure{kExCantCreate, "cannot create '" + o.out + "'"};
    for (const auto& [name, text] : files) write_file(fs::path(o.out) / name, text);
  }
  std::cout << summary;
}

int run(const Options& o) {
  std::string grid_path;
  Json cfg = load_config(o, grid_path);

  if (o.mode == "offers") {
    Json req = cfg.value("demand", Json::object());
    if (!o.energy.empty()) req["energy_kwh"] = parse_list(o.energy, "--energy");
    if (!o.rate.empty()) req["rate_kw"] = parse_list(o.rate, "--rate");
    if (!o.opt_rate.empty()) req["opt_rate_kw"] = parse_list(o.opt_rate, "--opt-rate");
    if (!o.beta.empty()) req["beta"] = parse_list(o.beta, "--beta");
    if (o.peak) req["peak"] = true;
    if (!o.decisions.empty()) {
      Json d = Json::array();
      std::stringstream ss(o.decisions);
      std::string tok;
      while (std::getline(ss, tok, ',')) d.push_back(tok);
      req["decisions"] = d;
    }
    for (const char* k : {"energy_kwh", "rate_kw", "opt_rate_kw"})
      if (!req.contains(k)) throw Failure{kExUsage, std::string("offers needs ") + k};
    LibString csv, js;
    check(gc_offers(req.dump().c_str(), &csv.p, &js.p));
    emit(o, {{"offers.csv", csv.str()}, {"offers.json", js.str()}}, csv.str());
    return 0;
  }

  Grid g;
  load_grid(g, grid_path);
  int n = 0, p = 0;
  check(gc_grid_size(g.g, &n, &p));

  if (o.mode == "vsi") {
    std::vector<double> a;
    if (!o.alpha.empty()) a = parse_list(o.alpha, "--alpha");
    LibString js;
    check(gc_vsi(g.g, a.empty() ? nullptr : a.data(), a.size(), &js.p));
    Json r = Json::parse(js.str());
    std::ostringstream s;
    s << "v_min " << r["v_min"].get<double>() << " at bus " << r["critical_bus"].get<int>() << '\n';
    emit(o, {{"vsi.json", js.str()}}, s.str());
    return 0;
  }

  Json opt = cfg.value("optimization", Json::object());
  if (!o.demand.empty()) opt["i_demand"] = parse_list(o.demand, "--demand");
  if (!o.beta.empty()) opt["beta"] = parse_list(o.beta, "--beta");
  if (o.gamma >= 0) opt["gamma"] = o.gamma;
  if (o.gamma1 >= 0) opt["gamma1"] = o.gamma1;
  if (o.gamma2 >= 0) opt["gamma2"] = o.gamma2;
  if (o.epsilon >= 0) opt["epsilon"] = o.epsilon;
  if (o.tau >= 0) opt["tau"] = o.tau;
  if (o.max_iters >= 0) opt["max_iters"] = o.max_iters;
  if (o.threads >= 0) opt["threads"] = o.threads;
  if (o.dense) opt["dense_gradient"] = true;

  if (o.mode == "optimize1" || o.mode == "optimize2") {
    if (o.mode == "optimize1" && opt.contains("gamma") && !opt.contains("gamma1")) opt["gamma1"] = opt["gamma"];
    LibString res, trace;
    check(gc_optimize(g.g, o.mode == "optimize1" ? 1 : 2, opt.dump().c_str(), &res.p, &trace.p));
    Json r = Json::parse(res.str());
    std::ostringstream s;
    s.precision(8);
    s << "converged " << (r["converged"].get<bool>() ? "yes" : "no") << " after " << r["iterations"] << " iterations\n";
    s << "i_e_star " << r["i_e_star"].dump() << '\n';
    s << "h2_sq_before " << r["h2_sq_before"].get<double>() << " h2_sq_after " << r["h2_sq_after"].get<double>()
      << '\n';
    if (r.contains("v_min")) s << "v_min " << r["v_min"].get<double>() << '\n';
    if (r.contains("incentive_total_usd")) s << "incentive_total_usd " << r["incentive_total_usd"].get<double>() << '\n';
    emit(o, {{"result.json", res.str()}, {"trace.csv", trace.str()}}, s.str());
    return 0;
  }

  if (o.mode == "eig") {
    Json e = cfg.value("eig", Json::object());
    e["optimization"] = opt;
    if (!o.alpha.empty()) e["alpha"] = parse_list(o.alpha, "--alpha");
    if (o.closed_loop) e["closed_loop"] = true;
    if (o.reduced) e["model"] = "reduced";
    LibString js, csv;
    check(gc_eig(g.g, e.dump().c_str(), &js.p, &csv.p));
    emit(o, {{"eig.json", js.str()}, {"modes.csv", csv.str()}}, js.str());
    return 0;
  }

  if (o.mode == "simulate") {
    Json s = cfg.value("simulation", Json::object());
    if (cfg.contains("scenario")) s["scenario"] = cfg["scenario"];
    if (!s.contains("scenario")) throw Failure{kExUsage, "simulate needs a config with a 'scenario' section"};
    s["optimization"] = opt;
    if (!o.controller.empty()) s["controller"] = o.controller;
    LibString js, csv;
    check(gc_simulate(g.g, s.dump().c_str(), &js.p, o.out.empty() ? nullptr : &csv.p));
    emit(o, {{"simulation.json", js.str()}, {"trajectory.csv", csv.str()}}, js.str());
    return 0;
  }
  throw Failure{kExUsage, "unknown mode '" + o.mode + "'"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EVCS-integrated grid co-optimization and simulation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sc) {
    sc->add_option("--grid", o.grid, "grid JSON file");
    sc->add_option("--config", o.config, "run configuration JSON");
    sc->add_option("--out", o.out, "output directory");
  };
  auto opt_flags = [&](CLI::App* sc) {
    sc->add_option("--demand", o.demand, "demanded currents in A, comma separated");
    sc->add_option("--beta", o.beta, "incentive coefficients in $/A^2");
    sc->add_option("--epsilon", o.epsilon, "perturbation in A");
    sc->add_option("--tau", o.tau, "stopping tolerance in A");
    sc->add_option("--max-iters", o.max_iters, "iteration cap");
    sc->add_option("--threads", o.threads, "worker threads (0: automatic)");
    sc->add_flag("--dense-gradient", o.dense, "use the full augmented Lyapunov gradient");
  };

  auto* o1 = app.add_subcommand("optimize1", "setpoint/LQR co-optimization, H2 and incentive");
  common(o1);
  opt_flags(o1);
  o1->add_option("--gamma", o.gamma, "incentive weight in [0,1]");

  auto* o2 = app.add_subcommand("optimize2", "co-optimization with the VSI term");
  common(o2);
  opt_flags(o2);
  o2->add_option("--gamma1", o.gamma1, "incentive weight");
  o2->add_option("--gamma2", o.gamma2, "VSI weight");

  auto* sim = app.add_subcommand("simulate", "nonlinear plug-in/plug-out simulation");
  common(sim);
  sim->add_option("--controller", o.controller, "pi, lqr or both")->check(CLI::IsMember({"pi", "lqr", "both"}));

  auto* vsi = app.add_subcommand("vsi", "voltage stability index at a setpoint");
  common(vsi);
  vsi->add_option("--alpha", o.alpha, "EVCS currents in A (default zero)");

  auto* eig = app.add_subcommand("eig", "modal analysis");
  common(eig);
  opt_flags(eig);
  eig->add_option("--alpha", o.alpha, "EVCS currents in A (default: demand)");
  eig->add_flag("--closed-loop", o.closed_loop, "apply the LQR gain");
  eig->add_flag("--reduced", o.reduced, "analyse the reduced model");

  auto* off = app.add_subcommand("offers", "wait & save offer table");
  common(off);
  off->add_option("--energy", o.energy, "energy demand per EVCS in kWh");
  off->add_option("--rate", o.rate, "demanded rate in kW (negative: discharge)");
  off->add_option("--opt-rate", o.opt_rate, "optimal rate in kW");
  off->add_option("--beta", o.beta, "price in $/kWh");
  off->add_flag("--peak", o.peak, "peak-hour default prices");
  off->add_option("--decisions", o.decisions, "accept/reject/pending per EVCS");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExUsage;
  }
  for (auto* sc : app.get_subcommands()) o.mode = sc->get_name();

  try {
    return run(o);
  } catch (const Failure& f) {
    std::cerr << "gridcharge-cli: " << f.msg << '\n';
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "gridcharge-cli: " << e.what() << '\n';
    return kExSoftware;
  }
}
