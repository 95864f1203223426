#pragma once

// JSON glue between configuration files and the library types. Used by the C
// API; not part of the stable surface.

#include <string>

#include "gridcharge/coopt.hpp"
#include "gridcharge/incentive.hpp"
#include "gridcharge/linearization.hpp"
#include "gridcharge/pipeline.hpp"
#include "gridcharge/simulate.hpp"
#include "json.hpp"

namespace gridcharge {

using Json = nlohmann::ordered_json;

Json to_json(const Mat& M);
Json to_json(const Vec& v);
Mat mat_from_json(const Json& j);
Vec vec_from_json(const Json& j);

// Everything an optimization run needs besides the grid.
struct OptimizationSetup {
  OptimizationConfig cfg;
  PipelineOptions pipeline;
  double price_energy_kwh = 45.0;  // per-session energy used for the incentive summary
  bool peak = false;
  double duration_resolution_min = 0.01;
};

// Missing fields fall back to grid data: demand = rating, bounds and
// directions from the EVCS entries.
OptimizationSetup optimization_setup_from_json(const Json& j, const GridModel& g);

Json optimization_result_to_json(const OptimizationResult& r, const GridModel& g, const OptimizationSetup& s);
std::string trace_csv(const OptimizationResult& r);

Scenario scenario_from_json(const Json& j, const GridModel& g);

Json vsi_to_json(const VSIReport& r);

}  // namespace gridcharge
