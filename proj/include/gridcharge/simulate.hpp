#pragma once

#include <string>
#include <vector>

#include "gridcharge/common.hpp"
#include "gridcharge/dynamics.hpp"
#include "gridcharge/grid_model.hpp"

namespace gridcharge {

enum class EventAction { PlugIn, PlugOut };

struct Event {
  double time = 0.0;  // s
  int evcs = 0;       // index into grid.evcs
  int port = 0;
  EventAction action = EventAction::PlugIn;
  double energy_kwh = 0.0;  // full-scale demand; 0 means no automatic plug-out
  double rate_kw = 0.0;     // negative discharges
};

struct SolverOptions {
  double dt_max = 1e-3;
  double dt_init = 1e-5;
  double rtol = 1e-6;
  double atol = 1e-8;
  long max_steps = 20000000;
  double dt_min = 1e-12;
};

struct Scenario {
  std::vector<Event> events;
  double scale_ratio = 1.0;
  double horizon = 1.0;
  double sample_dt = 0.0;  // output decimation, 0 keeps every step
  Vec initial_alpha;       // per-EVCS base current, empty means zero
  SolverOptions solver;
};

struct EventRecord {
  double time = 0.0;
  int evcs = 0;
  int port = 0;
  EventAction action = EventAction::PlugIn;
  double delivered_kwh = 0.0;  // scaled energy at plug-out
  bool scheduled = false;      // generated by energy completion
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Vec> x;
  std::vector<Vec> u;
  std::vector<Vec> vmag_pu;
  std::vector<EventRecord> events;
  std::vector<Vec> x_ref;  // equilibrium in force at each sample
  long accepted = 0, rejected = 0;
};

double schedule_duration(double energy_kwh, double rate_kw, double scale_ratio);

// K is the reduced-order gain (3p x 7p); nullptr runs the PI-only loop.
Trajectory run_simulation(const GridModel& g, const Mat* K, const Scenario& sc);

// Sum over EVCSs of the integral of (v_dc - v_dc*)^2, trapezoidal on samples.
double vdc_ise(const GridModel& g, const Trajectory& tr);

std::string trajectory_csv(const GridModel& g, const Trajectory& tr);
std::string events_json(const Trajectory& tr);

}  // namespace gridcharge
