#include "gridcharge/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include "gridcharge/dynamics.hpp"
#include "json.hpp"

namespace gridcharge {

using json = nlohmann::json;

double GridModel::v_pcc_peak() const { return v_pcc_kv * 1e3 * std::sqrt(2.0 / 3.0); }

void GridModel::finalize() {
  if (buses.size() < 2) throw Error(Errc::Topology, "grid needs at least two buses");
  std::sort(buses.begin(), buses.end(), [](const BusSpec& a, const BusSpec& b) { return a.id < b.id; });
  for (size_t i = 0; i < buses.size(); ++i) {
    if (i > 0 && buses[i].id == buses[i - 1].id)
      throw Error(Errc::Parse, "duplicate bus id " + std::to_string(buses[i].id));
  }
  for (size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id != static_cast<int>(i) + 1)
      throw Error(Errc::Parse, "bus ids must run 1..n without gaps (missing " + std::to_string(i + 1) + ")");
  }
  int npcc = 0;
  for (const auto& b : buses) {
    if (b.kind == BusKind::PCC) ++npcc;
    if (b.kind != BusKind::PCC && (b.p_kw < 0 || b.q_kvar < 0))
      throw Error(Errc::InvalidArgument, "negative load at bus " + std::to_string(b.id));
  }
  if (npcc != 1 || buses[0].kind != BusKind::PCC)
    throw Error(Errc::InvalidArgument, "exactly one PCC bus is required and it must be bus 1");
  if (!(omega_c > 0)) throw Error(Errc::InvalidArgument, "omega_c must be positive");
  if (!(v_pcc_kv > 0)) throw Error(Errc::InvalidArgument, "v_pcc must be positive");

  const int nb = n();
  if (static_cast<int>(lines.size()) != nb - 1) throw Error(Errc::Topology, "non-tree topology: expected n-1 lines");
  std::vector<std::vector<std::pair<int, int>>> adj(nb + 1);
  for (size_t j = 0; j < lines.size(); ++j) {
    auto& ln = lines[j];
    if (ln.from == ln.to) throw Error(Errc::Topology, "line from a bus to itself");
    if (ln.from < 1 || ln.from > nb || ln.to < 1 || ln.to > nb)
      throw Error(Errc::Topology, "line references an unknown bus");
    if (!(ln.l > 0)) throw Error(Errc::InvalidArgument, "line inductance must be positive");
    if (ln.r < 0) throw Error(Errc::InvalidArgument, "line resistance must be nonnegative");
    adj[ln.from].push_back({ln.to, static_cast<int>(j)});
    adj[ln.to].push_back({ln.from, static_cast<int>(j)});
  }
  parent.assign(nb, -1);
  feeder_line.assign(nb, -1);
  parent[0] = 0;
  order.clear();
  // iterative DFS so order lists parents before children
  std::vector<int> stack{1};
  std::vector<bool> seen(nb + 1, false);
  seen[1] = true;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    order.push_back(u);
    for (auto it = adj[u].rbegin(); it != adj[u].rend(); ++it) {
      auto [v, j] = *it;
      if (seen[v]) continue;
      seen[v] = true;
      parent[v - 1] = u;
      feeder_line[v - 1] = j;
      stack.push_back(v);
    }
  }
  if (static_cast<int>(order.size()) != nb) throw Error(Errc::Topology, "non-tree topology: network is disconnected");
  for (int h = 2; h <= nb; ++h) {
    auto& ln = lines[feeder_line[h - 1]];
    if (ln.to != h) std::swap(ln.from, ln.to);  // orient sending -> receiving
  }
  for (auto& ln : lines) {
    if (ln.Gd == 0 && ln.Gq == 0 && ln.Bd == 0 && ln.Bq == 0) {
      double x = omega_c * ln.l;
      double z2 = ln.r * ln.r + x * x;
      ln.Gd = ln.Gq = ln.r / z2;
      ln.Bd = ln.Bq = -x / z2;
    }
    if (ln.Bd == 0 || ln.Bq == 0) throw Error(Errc::InvalidArgument, "line susceptance must be nonzero");
  }

  evcs_at.assign(nb, -1);
  for (size_t k = 0; k < evcs.size(); ++k) {
    auto& e = evcs[k];
    if (e.bus < 1 || e.bus > nb) throw Error(Errc::InvalidArgument, "EVCS on unknown bus " + std::to_string(e.bus));
    if (e.bus == 1) throw Error(Errc::InvalidArgument, "EVCS cannot sit on the PCC bus");
    if (evcs_at[e.bus - 1] >= 0) throw Error(Errc::InvalidArgument, "two EVCSs on bus " + std::to_string(e.bus));
    if (!(e.Lg > 0 && e.Lc > 0 && e.Cf > 0 && e.Cdc > 0))
      throw Error(Errc::InvalidArgument, "EVCS filter and DC-link elements must be positive");
    if (!(e.vdc_star > 0)) throw Error(Errc::InvalidArgument, "EVCS v_dc* must be positive");
    if (!(e.turns_ratio > 0)) throw Error(Errc::InvalidArgument, "EVCS turns ratio must be positive");
    evcs_at[e.bus - 1] = static_cast<int>(k);
    buses[e.bus - 1].kind = BusKind::EV;
  }
  for (const auto& b : buses)
    if (b.kind == BusKind::EV && evcs_at[b.id - 1] < 0)
      throw Error(Errc::InvalidArgument, "EV bus " + std::to_string(b.id) + " has no EVCS attached");
}

namespace {

BusKind parse_kind(const std::string& s) {
  if (s == "PCC" || s == "pcc") return BusKind::PCC;
  if (s == "EV" || s == "ev") return BusKind::EV;
  if (s == "Load" || s == "load") return BusKind::Load;
  throw Error(Errc::Parse, "unknown bus kind '" + s + "'");
}

Direction parse_direction(const std::string& s) {
  if (s == "uni" || s == "unidirectional" || s == "Unidirectional") return Direction::Unidirectional;
  if (s == "bi" || s == "bidirectional" || s == "Bidirectional") return Direction::Bidirectional;
  throw Error(Errc::Parse, "unknown EVCS direction '" + s + "'");
}

double num(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(Errc::Parse, std::string("missing field '") + key + "'");
  if (!j.at(key).is_number()) throw Error(Errc::Parse, std::string("field '") + key + "' is not a number");
  return j.at(key).get<double>();
}

double num_or(const json& j, const char* key, double dflt) { return j.contains(key) ? num(j, key) : dflt; }

EVCSParams parse_evcs(const json& e) {
  EVCSParams p;
  p.bus = static_cast<int>(num(e, "bus"));
  p.rating_kw = num(e, "rating_kw");
  p.direction = parse_direction(e.value("directional", std::string("uni")));
  p.i_lower = num_or(e, "i_lower_a", 0.0);
  if (!e.contains("params")) throw Error(Errc::Parse, "EVCS entry without params");
  const json& q = e.at("params");
  p.Lg = num(q, "L_g");
  p.Lc = num(q, "L_c");
  p.Cf = num(q, "C_f");
  p.Cdc = num(q, "C_dc");
  p.vdc_star = num(q, "v_dc_star");
  p.kP1 = num(q, "kP1");
  p.kI1 = num(q, "kI1");
  p.kP2 = num(q, "kP2");
  p.kI2 = num(q, "kI2");
  p.kP3 = num(q, "kP3");
  p.kI3 = num(q, "kI3");
  p.kP4 = num(q, "kP4");
  p.kI4 = num(q, "kI4");
  p.turns_ratio = num_or(q, "turns_ratio", 1.0);
  return p;
}

}  // namespace

GridModel parse_grid(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw Error(Errc::Parse, std::string("grid file is not valid JSON: ") + ex.what());
  }
  GridModel g;
  try {
    if (!j.contains("buses") || !j.at("buses").is_array()) throw Error(Errc::Parse, "missing 'buses' array");
    if (!j.contains("lines") || !j.at("lines").is_array()) throw Error(Errc::Parse, "missing 'lines' array");
    g.omega_bar = num_or(j, "omega_bar_rad_s", 1.0);
    g.omega_c = num_or(j, "omega_c_rad_s", 2.0 * M_PI * 60.0);
    g.v_pcc_kv = num_or(j, "v_pcc_kv", 12.66);
    for (const auto& b : j.at("buses")) {
      BusSpec s;
      s.id = static_cast<int>(num(b, "id"));
      s.kind = parse_kind(b.value("kind", std::string("Load")));
      s.p_kw = num_or(b, "p_load_kw", 0.0);
      s.q_kvar = num_or(b, "q_load_kvar", 0.0);
      g.buses.push_back(s);
    }
    for (const auto& l : j.at("lines")) {
      LineSpec s;
      s.from = static_cast<int>(num(l, "from"));
      s.to = static_cast<int>(num(l, "to"));
      s.r = num(l, "r_ohm");
      s.l = num(l, "l_henry");
      s.Gd = num_or(l, "G_d", 0.0);
      s.Gq = num_or(l, "G_q", 0.0);
      s.Bd = num_or(l, "B_d", 0.0);
      s.Bq = num_or(l, "B_q", 0.0);
      g.lines.push_back(s);
    }
    if (j.contains("evcs"))
      for (const auto& e : j.at("evcs")) g.evcs.push_back(parse_evcs(e));
  } catch (const json::exception& ex) {
    throw Error(Errc::Parse, std::string("malformed grid file: ") + ex.what());
  }
  g.finalize();
  return g;
}

GridModel load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open grid file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_grid(ss.str());
}

int sending_bus(const GridModel& grid, int h) {
  if (h == 1) throw Error(Errc::InvalidArgument, "the PCC has no sending bus");
  if (h < 1 || h > grid.n()) throw Error(Errc::InvalidArgument, "bus id out of range");
  return grid.parent[h - 1];
}

GridModel scale_loads(const GridModel& grid, double factor) {
  GridModel g = grid;
  for (auto& b : g.buses) {
    b.p_kw *= factor;
    b.q_kvar *= factor;
  }
  return g;
}

GridModel with_evcs_subset(const GridModel& grid, const std::vector<int>& keep) {
  GridModel g = grid;
  g.evcs.clear();
  for (auto& b : g.buses)
    if (b.kind == BusKind::EV) b.kind = BusKind::Load;
  for (int k : keep) {
    if (k < 0 || k >= grid.p()) throw Error(Errc::InvalidArgument, "EVCS index out of range");
    g.evcs.push_back(grid.evcs[k]);
  }
  g.finalize();
  return g;
}

VSIReport compute_vsi_from_voltages(const GridModel& grid, const Vec& v_pu, const Vec& i_e_star) {
  const int nb = grid.n();
  if (v_pu.size() != nb) throw Error(Errc::InvalidArgument, "compute_vsi: voltage vector size");
  if (i_e_star.size() != grid.p()) throw Error(Errc::InvalidArgument, "compute_vsi: setpoint size");
  const double vll = grid.v_pcc_kv * 1e3;
  const double z_scale = vll * vll;  // impedance times power over this is per unit
  VSIReport rep;
  rep.v_min = INFINITY;
  for (int h = 2; h <= nb; ++h) {
    const int k = grid.parent[h - 1];
    const LineSpec& ln = grid.lines[grid.feeder_line[h - 1]];
    const double r = ln.r, x = grid.reactance(ln);
    double P = grid.buses[h - 1].p_kw * 1e3;
    const double Q = grid.buses[h - 1].q_kvar * 1e3;
    const int e = grid.evcs_at[h - 1];
    if (e >= 0) P += grid.evcs[e].vdc_star * i_e_star(e);
    const double Pr = P * r / z_scale, Qx = Q * x / z_scale;
    const double vk = v_pu(k - 1), vh = v_pu(h - 1);
    const double val = std::pow(vk, 4) - 4.0 * std::pow(Pr - Qx, 2) - 4.0 * (Pr + Qx) * vh * vh;
    rep.bus.push_back(h);
    rep.value.push_back(val);
    rep.out_of_range.push_back(val < 0.0 || val > 1.0);
    if (val < rep.v_min) {
      rep.v_min = val;
      rep.critical_bus = h;
    }
  }
  return rep;
}

VSIReport compute_vsi(const GridModel& grid, const OperatingPoint& op, const Vec& i_e_star) {
  return compute_vsi_from_voltages(grid, bus_voltage_pu(grid, op.y), i_e_star);
}

}  // namespace gridcharge
