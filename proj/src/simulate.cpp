#include "gridcharge/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "gridcharge/linearization.hpp"
#include "json.hpp"

namespace gridcharge {

double schedule_duration(double energy_kwh, double rate_kw, double scale_ratio) {
  if (rate_kw == 0.0) throw Error(Errc::InvalidArgument, "schedule_duration: zero charging rate");
  if (!(scale_ratio > 0)) throw Error(Errc::InvalidArgument, "schedule_duration: scale ratio must be positive");
  return 3600.0 * energy_kwh * scale_ratio / std::abs(rate_kw);
}

namespace {

// Dormand-Prince 5(4)
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

struct Port {
  double current = 0.0;   // A
  double target_j = 0.0;  // 0: no automatic plug-out
  double delivered_j = 0.0;
};

class Simulator {
 public:
  Simulator(const GridModel& g, const Mat* K, const Scenario& sc) : g_(g), lay_(g), K_(K), sc_(sc) {
    if (K_) {
      P_ = selection_matrix(lay_);
      if (K_->rows() != lay_.nu() || K_->cols() != P_.rows())
        throw Error(Errc::InvalidArgument, "simulation gain must be 3p x 7p");
    }
    if (!(sc.scale_ratio > 0 && sc.scale_ratio <= 1))
      throw Error(Errc::InvalidArgument, "scale ratio must lie in (0, 1]");
    base_alpha_ = sc.initial_alpha.size() ? sc.initial_alpha : Vec(Vec::Zero(lay_.p));
    if (base_alpha_.size() != lay_.p) throw Error(Errc::InvalidArgument, "initial_alpha must have one entry per EVCS");
    events_ = sc.events;
    std::stable_sort(events_.begin(), events_.end(), [](const Event& a, const Event& b) { return a.time < b.time; });
    for (const Event& e : events_)
      if (e.evcs < 0 || e.evcs >= lay_.p) throw Error(Errc::InvalidArgument, "event refers to an unknown EVCS");
  }

  Trajectory run() {
    alpha_ = base_alpha_;
    op_ = solve_equilibrium(g_, alpha_);
    x_ = op_.x;
    y_ = op_.y;
    refresh_jacobian();
    double t = 0.0;
    size_t next_ev = 0;
    apply_events(t, next_ev);
    record(t, true);
    double h = sc_.solver.dt_init;
    long steps = 0;
    while (t < sc_.horizon - 1e-14) {
      double t_stop = sc_.horizon;
      if (next_ev < events_.size()) t_stop = std::min(t_stop, events_[next_ev].time);
      h = std::min({h, sc_.solver.dt_max, t_stop - t});
      if (++steps > sc_.solver.max_steps) throw Error(Errc::Convergence, "simulation exceeded the step budget");
      if (h < sc_.solver.dt_min) throw Error(Errc::Convergence, "step-size underflow at t=" + std::to_string(t));

      StepOut so;
      double err = step(t, h, so);
      if (!(err <= 1.0)) {
        ++tr_.rejected;
        h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.5);
        if (!std::isfinite(err)) h = 0.1 * h;
        continue;
      }
      ++tr_.accepted;
      // energy-triggered plug-outs inside this step
      double frac = 1.0;
      for (auto& [key, port] : ports_) {
        if (port.target_j <= 0) continue;
        double add = so.energy.at(key);
        if (port.delivered_j + add >= port.target_j && add > 0)
          frac = std::min(frac, (port.target_j - port.delivered_j) / add);
      }
      if (frac < 1.0 - 1e-9) {
        double h2 = std::max(frac * h, sc_.solver.dt_min);
        StepOut so2;
        step(t, h2, so2);  // shortened step to the crossing
        commit(so2);
        t += h2;
        finish_ports(t);
        refresh_equilibrium();
        record(t, true);
        h = std::max(h2, sc_.solver.dt_init);
        continue;
      }
      commit(so);
      t += h;
      double fac = err > 0 ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0) : 5.0;
      h *= fac;
      bool at_event = next_ev < events_.size() && t >= events_[next_ev].time - 1e-12;
      if (at_event) {
        apply_events(t, next_ev);
        h = sc_.solver.dt_init;
      }
      record(t, at_event || t >= sc_.horizon - 1e-14);
    }
    return std::move(tr_);
  }

 private:
  struct StepOut {
    Vec x, y;
    std::map<std::pair<int, int>, double> energy;
  };

  Vec control(const Vec& x) const {
    if (!K_) return Vec::Zero(lay_.nu());
    return -(*K_) * (P_ * (x - op_.x));
  }

  // Chord Newton on g(x, y) = 0 with the factorization from the last refresh.
  Vec solve_y(const Vec& x, const Vec& y0, double t) {
    Vec y = y0;
    const double dy_tol = 1e-10 * g_.v_pcc_peak();
    for (int it = 0; it < 30; ++it) {
      Vec r = algebraic_residual(g_, x, y);
      if (r.lpNorm<Eigen::Infinity>() <= 1e-6) return y;
      Vec dy = lu_.solve(r);
      y -= dy;
      if (dy.lpNorm<Eigen::Infinity>() <= dy_tol) return y;
      if (it == 6) refresh_jacobian(x, y);
    }
    Vec r = algebraic_residual(g_, x, y);
    if (r.lpNorm<Eigen::Infinity>() <= 1e-4 && y.allFinite()) return y;
    char buf[96];
    std::snprintf(buf, sizeof buf, "algebraic collapse at t=%.6f s", t);
    throw Error(Errc::Convergence, buf);
  }

  void refresh_jacobian() { refresh_jacobian(x_, y_); }
  void refresh_jacobian(const Vec& x, const Vec& y) {
    const Eigen::Index m = y.size();
    Mat J(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      double hstep = std::max(1e-7, 1e-7 * std::abs(y(i)));
      Vec yp = y, ym = y;
      yp(i) += hstep;
      ym(i) -= hstep;
      J.col(i) = (algebraic_residual(g_, x, yp) - algebraic_residual(g_, x, ym)) / (2 * hstep);
    }
    lu_.compute(J);
  }

  Vec rhs(const Vec& x, Vec& y, double t) {
    y = solve_y(x, y, t);
    return f_rhs(g_, x, y, control(x), alpha_, true);
  }

  double port_power(const std::pair<int, int>& key, const Port& p, const Vec& x) const {
    (void)key;
    return std::abs(p.current) * x(lay_.evcs(key.first, kVdc));
  }

  double step(double t, double h, StepOut& out) {
    Vec y = y_;
    Vec k1 = rhs(x_, y, t);
    Vec y1 = y;
    Vec k2 = rhs(x_ + h * a21 * k1, y, t + c2 * h);
    Vec k3 = rhs(x_ + h * (a31 * k1 + a32 * k2), y, t + c3 * h);
    Vec k4 = rhs(x_ + h * (a41 * k1 + a42 * k2 + a43 * k3), y, t + c4 * h);
    Vec k5 = rhs(x_ + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), y, t + c5 * h);
    Vec x6 = x_ + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    Vec k6 = rhs(x6, y, t + h);
    Vec xn = x_ + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    Vec yn = y;
    Vec k7 = rhs(xn, yn, t + h);
    Vec e = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    if (!xn.allFinite()) return INFINITY;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < xn.size(); ++i) {
      double sc = sc_.solver.atol + sc_.solver.rtol * std::max(std::abs(x_(i)), std::abs(xn(i)));
      acc += (e(i) / sc) * (e(i) / sc);
    }
    out.x = std::move(xn);
    out.y = std::move(yn);
    // trapezoidal port energy
    for (const auto& [key, port] : ports_)
      out.energy[key] = 0.5 * h * (port_power(key, port, x_) + port_power(key, port, out.x));
    (void)y1;
    return std::sqrt(acc / static_cast<double>(x_.size()));
  }

  void commit(const StepOut& so) {
    x_ = so.x;
    y_ = so.y;
    for (auto& [key, port] : ports_) port.delivered_j += so.energy.at(key);
  }

  void recompute_alpha() {
    alpha_ = base_alpha_;
    for (const auto& [key, port] : ports_) alpha_(key.first) += port.current;
  }

  void refresh_equilibrium() {
    recompute_alpha();
    op_ = solve_equilibrium(g_, alpha_, &op_);
    refresh_jacobian();
  }

  void unplug(double t, const std::pair<int, int>& key, bool scheduled) {
    auto it = ports_.find(key);
    if (it == ports_.end()) return;
    EventRecord r;
    r.time = t;
    r.evcs = key.first;
    r.port = key.second;
    r.action = EventAction::PlugOut;
    r.delivered_kwh = it->second.delivered_j / 3.6e6;
    r.scheduled = scheduled;
    tr_.events.push_back(r);
    ports_.erase(it);
  }

  void finish_ports(double t) {
    std::vector<std::pair<int, int>> done;
    for (const auto& [key, port] : ports_)
      if (port.target_j > 0 && port.delivered_j >= port.target_j * (1 - 1e-9)) done.push_back(key);
    for (const auto& key : done) unplug(t, key, true);
  }

  void apply_events(double t, size_t& next_ev) {
    bool changed = false;
    while (next_ev < events_.size() && events_[next_ev].time <= t + 1e-12) {
      const Event& e = events_[next_ev++];
      auto key = std::make_pair(e.evcs, e.port);
      if (e.action == EventAction::PlugIn) {
        if (ports_.count(key)) throw Error(Errc::InvalidArgument, "plug-in on an occupied port");
        Port p;
        p.current = e.rate_kw * 1e3 / g_.evcs[e.evcs].vdc_star;
        p.target_j = e.energy_kwh > 0 ? e.energy_kwh * sc_.scale_ratio * 3.6e6 : 0.0;
        ports_[key] = p;
        EventRecord r;
        r.time = t;
        r.evcs = e.evcs;
        r.port = e.port;
        r.action = EventAction::PlugIn;
        tr_.events.push_back(r);
      } else {
        if (!ports_.count(key)) throw Error(Errc::InvalidArgument, "plug-out without a matching plug-in");
        unplug(t, key, false);
      }
      changed = true;
    }
    if (changed) refresh_equilibrium();
  }

  void record(double t, bool force) {
    if (!force && sc_.sample_dt > 0 && !tr_.t.empty() && t < tr_.t.back() + sc_.sample_dt - 1e-12) return;
    tr_.t.push_back(t);
    tr_.x.push_back(x_);
    tr_.u.push_back(control(x_));
    tr_.vmag_pu.push_back(bus_voltage_pu(g_, y_));
    tr_.x_ref.push_back(op_.x);
  }

  const GridModel& g_;
  StateLayout lay_;
  const Mat* K_;
  Mat P_;
  const Scenario& sc_;
  std::vector<Event> events_;
  Vec base_alpha_, alpha_;
  OperatingPoint op_;
  Vec x_, y_;
  Eigen::PartialPivLU<Mat> lu_;
  std::map<std::pair<int, int>, Port> ports_;
  Trajectory tr_;
};

}  // namespace

Trajectory run_simulation(const GridModel& g, const Mat* K, const Scenario& sc) {
  if (!(sc.horizon > 0)) throw Error(Errc::InvalidArgument, "simulation horizon must be positive");
  Simulator sim(g, K, sc);
  return sim.run();
}

double vdc_ise(const GridModel& g, const Trajectory& tr) {
  StateLayout lay(g);
  double acc = 0.0;
  for (size_t i = 1; i < tr.t.size(); ++i) {
    const double dt = tr.t[i] - tr.t[i - 1];
    if (dt <= 0) continue;
    for (int k = 0; k < lay.p; ++k) {
      const int s = lay.evcs(k, kVdc);
      const double v0 = tr.x[i - 1](s) - g.evcs[k].vdc_star, v1 = tr.x[i](s) - g.evcs[k].vdc_star;
      acc += 0.5 * dt * (v0 * v0 + v1 * v1);
    }
  }
  return acc;
}

std::string trajectory_csv(const GridModel& g, const Trajectory& tr) {
  StateLayout lay(g);
  std::ostringstream os;
  os.precision(10);
  os << "t";
  for (const auto& nm : lay.state_names(g)) os << ',' << nm;
  for (int k = 0; k < lay.p; ++k) os << ",vdc_evcs" << (k + 1);
  for (int h = 1; h <= lay.n; ++h) os << ",vpu_" << h;
  os << '\n';
  for (size_t i = 0; i < tr.t.size(); ++i) {
    os << tr.t[i];
    for (Eigen::Index j = 0; j < tr.x[i].size(); ++j) os << ',' << tr.x[i](j);
    for (int k = 0; k < lay.p; ++k) os << ',' << tr.x[i](lay.evcs(k, kVdc));
    for (Eigen::Index h = 0; h < tr.vmag_pu[i].size(); ++h) os << ',' << tr.vmag_pu[i](h);
    os << '\n';
  }
  return os.str();
}

std::string events_json(const Trajectory& tr) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : tr.events)
    arr.push_back({{"time_s", e.time},
                   {"evcs", e.evcs},
                   {"port", e.port},
                   {"action", e.action == EventAction::PlugIn ? "plug_in" : "plug_out"},
                   {"delivered_kwh", e.delivered_kwh},
                   {"scheduled", e.scheduled}});
  return arr.dump(2) + "\n";
}

}  // namespace gridcharge
