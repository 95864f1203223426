#pragma once

#include "gridcharge/coopt.hpp"
#include "gridcharge/dynamics.hpp"
#include "gridcharge/grid_model.hpp"
#include "gridcharge/linearization.hpp"

namespace gridcharge {

struct PipelineOptions {
  Reduction reduction = Reduction::HoldIntegrators;
  Mat Q, R;  // empty: defaults
  Vec x0;    // empty: unit disturbance on every v_dc
  EquilibriumOptions equilibrium;
};

struct PipelineEval {
  OperatingPoint op;
  FullLinearModel full;
  ReducedLinearModel reduced;
  VSIReport vsi;
};

// equilibrium -> linearize -> reduce, plus the VSI at the same point.
PipelineEval run_pipeline(const GridModel& g, const Vec& alpha, const PipelineOptions& opt = {});

Evaluator make_grid_evaluator(const GridModel& g, const PipelineOptions& opt = {});

// Full-order state matrix with u = -K P (x - x*) applied.
Mat full_closed_loop(const PipelineEval& pe, const Mat& K);

}  // namespace gridcharge
