#pragma once

#include <string>
#include <vector>

#include "gridcharge/common.hpp"

namespace gridcharge {

enum class BusKind { PCC, EV, Load };
enum class Direction { Unidirectional, Bidirectional };

struct BusSpec {
  int id = 0;
  BusKind kind = BusKind::Load;
  double p_kw = 0.0;
  double q_kvar = 0.0;
};

// Series branch. G/B are the d and q admittance components (S); when the file
// only gives r and l they are derived from r + j*omega_c*l.
struct LineSpec {
  int from = 0;
  int to = 0;
  double r = 0.0;  // ohm
  double l = 0.0;  // H
  double Gd = 0.0, Gq = 0.0, Bd = 0.0, Bq = 0.0;
};

struct EVCSParams {
  int bus = 0;
  double Lg = 0.0, Lc = 0.0, Cf = 0.0, Cdc = 0.0;  // H, H, F, F
  double vdc_star = 800.0;                         // V
  double kP1 = 0.0, kI1 = 0.0;                     // PLL
  double kP2 = 0.0, kI2 = 0.0;                     // DC voltage loop
  double kP3 = 0.0, kI3 = 0.0;                     // d current loop
  double kP4 = 0.0, kI4 = 0.0;                     // q current loop
  double rating_kw = 0.0;
  Direction direction = Direction::Unidirectional;
  double i_lower = 0.0;  // A
  // Step-down transformer between the feeder and the converter terminals.
  // Ratio is feeder line voltage over converter line voltage; 1 means direct.
  double turns_ratio = 1.0;
};

struct GridModel {
  std::vector<BusSpec> buses;  // sorted, id == index + 1
  std::vector<LineSpec> lines;
  std::vector<EVCSParams> evcs;
  double omega_bar = 1.0;            // PLL angle scale
  double omega_c = 376.99111843077515;  // rad/s
  double v_pcc_kv = 12.66;           // line-to-line rms

  // derived by finalize()
  std::vector<int> parent;       // parent[h-1] = sending bus of h, 0 for the PCC
  std::vector<int> feeder_line;  // feeder_line[h-1] = index of the line ending at h
  std::vector<int> evcs_at;      // evcs_at[h-1] = EVCS index or -1
  std::vector<int> order;        // buses in depth-first order from the PCC

  int n() const { return static_cast<int>(buses.size()); }
  int p() const { return static_cast<int>(evcs.size()); }

  // Peak phase voltage of the PCC, the d-q amplitude reference.
  double v_pcc_peak() const;
  // Line reactance omega_c * l.
  double reactance(const LineSpec& ln) const { return omega_c * ln.l; }

  // Validates ids, radiality and EVCS placement, derives G/B, fills the
  // topology caches. Throws Error on any inconsistency.
  void finalize();
};

GridModel load_grid(const std::string& path);
GridModel parse_grid(const std::string& json_text);

int sending_bus(const GridModel& grid, int h);

// Non-EV load multiplier, used by the robustness study.
GridModel scale_loads(const GridModel& grid, double factor);
// Copy with only the listed EVCS entries (by index) kept.
GridModel with_evcs_subset(const GridModel& grid, const std::vector<int>& keep);

struct OperatingPoint;

struct VSIReport {
  std::vector<int> bus;        // receiving buses 2..n
  std::vector<double> value;   // raw index, not clamped
  std::vector<bool> out_of_range;
  double v_min = 0.0;
  int critical_bus = 0;
};

// Per-unit evaluation: voltages over the PCC magnitude, powers times
// impedances over the squared line voltage.
VSIReport compute_vsi(const GridModel& grid, const OperatingPoint& op, const Vec& i_e_star);

// Same formula with explicit per-bus voltage magnitudes in per unit.
VSIReport compute_vsi_from_voltages(const GridModel& grid, const Vec& v_pu, const Vec& i_e_star);

}  // namespace gridcharge
