#include "gridcharge/pipeline.hpp"

namespace gridcharge {

PipelineEval run_pipeline(const GridModel& g, const Vec& alpha, const PipelineOptions& opt) {
  if (alpha.size() != g.p()) throw Error(Errc::InvalidArgument, "setpoint vector must have one entry per EVCS");
  PipelineEval pe;
  pe.op = solve_equilibrium(g, alpha, nullptr, opt.equilibrium);
  pe.full = linearize(g, pe.op);
  pe.reduced = reduce_model(pe.full, g, opt.x0, opt.Q, opt.R, opt.reduction);
  pe.vsi = compute_vsi(g, pe.op, alpha);
  return pe;
}

Evaluator make_grid_evaluator(const GridModel& g, const PipelineOptions& opt) {
  // captured by value: the evaluator may outlive the caller's copies and is
  // called from several worker threads at once
  return [g, opt](const Vec& alpha) {
    PipelineEval pe = run_pipeline(g, alpha, opt);
    PointEval out;
    out.A = std::move(pe.reduced.A);
    out.B = std::move(pe.reduced.B);
    out.x0 = std::move(pe.reduced.x0);
    out.vsi = Eigen::Map<const Vec>(pe.vsi.value.data(), static_cast<Eigen::Index>(pe.vsi.value.size()));
    return out;
  };
}

Mat full_closed_loop(const PipelineEval& pe, const Mat& K) {
  if (K.rows() != pe.full.B.cols() || K.cols() != pe.reduced.P.rows())
    throw Error(Errc::InvalidArgument, "full_closed_loop: gain does not match the reduced model");
  return pe.full.A - pe.full.B * K * pe.reduced.P;
}

}  // namespace gridcharge
