#include "gridcharge/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace gridcharge {

namespace {

const char* kStateNames[kEvcsStates] = {"delta", "zeta", "igd", "igq", "icd", "icq",
                                        "vcd",   "vcq",  "psi", "chid", "chiq", "vdc"};

cplx bus_v(const Vec& y, int h) { return {y(2 * (h - 1)), y(2 * (h - 1) + 1)}; }

cplx line_admittance(const LineSpec& ln) { return {ln.Gd, ln.Bd}; }

// Converter terminal voltage in the PLL frame.
Eigen::Vector2d local_voltage(const Eigen::Vector2d& v_bus, double delta, double ratio) {
  const double c = std::cos(delta), s = std::sin(delta);
  const double vd = v_bus(0) / ratio, vq = v_bus(1) / ratio;
  return {c * vd + s * vq, -s * vd + c * vq};
}

}  // namespace

std::vector<std::string> StateLayout::state_names(const GridModel& g) const {
  std::vector<std::string> out;
  out.reserve(nx());
  for (int k = 0; k < p; ++k)
    for (int s = 0; s < kEvcsStates; ++s)
      out.push_back(std::string(kStateNames[s]) + "_" + std::to_string(g.evcs[k].bus));
  for (int j = 0; j < n - 1; ++j) {
    std::string tag = std::to_string(g.lines[j].from) + "_" + std::to_string(g.lines[j].to);
    out.push_back("id_" + tag);
    out.push_back("iq_" + tag);
  }
  return out;
}

double saturate(double v) { return std::clamp(v, -1.0, 1.0); }

Vec12 evcs_rhs(const Vec12& xk, const Eigen::Vector2d& v_bus, const Eigen::Vector3d& uk, double alpha_k,
               const EVCSParams& P, double omega_bar, double omega_c, bool clamp, DutyCycles* duty) {
  const double delta = xk(kDelta), zeta = xk(kZeta);
  const double igd = xk(kIgd), igq = xk(kIgq), icd = xk(kIcd), icq = xk(kIcq);
  const double vcd = xk(kVcd), vcq = xk(kVcq);
  const double psi = xk(kPsi), chid = xk(kChid), chiq = xk(kChiq), vdc = xk(kVdc);
  if (!(vdc > 0)) throw Error(Errc::Singular, "v_dc must stay positive");

  Eigen::Vector2d vl = local_voltage(v_bus, delta, P.turns_ratio);
  const double Vd = vl(0), Vq = vl(1);
  const double w = P.kP1 * Vq + zeta;
  const double L = P.Lg + P.Lc;

  const double icd_ref = P.kP2 * (P.vdc_star - vdc) + psi;
  const double icq_ref = 0.0;
  const double vtd = w * L * icq + Vd;
  const double vtq = Vq - w * L * icd;
  // The current PI acts on the converter-current error with the sign that
  // makes the loop stable for a rectifier drawing i^c from the grid.
  const double md_raw = 2.0 / vdc * (-P.kP3 * (icd_ref - icd) - chid + vtd) + uk(kDmd);
  const double mq_raw = 2.0 / vdc * (-P.kP4 * (icq_ref - icq) - chiq + vtq) + uk(kDmq);
  const double md = clamp ? saturate(md_raw) : md_raw;
  const double mq = clamp ? saturate(mq_raw) : mq_raw;
  if (duty) *duty = {md, mq, md_raw, mq_raw};

  Vec12 d;
  d(kDelta) = omega_bar * (w - omega_c);
  d(kZeta) = P.kI1 * Vq;
  d(kIgd) = (Vd - vcd + w * P.Lg * igq) / P.Lg;
  d(kIgq) = (Vq - vcq - w * P.Lg * igd) / P.Lg;
  d(kIcd) = (vcd - md * vdc / 2.0 + w * P.Lc * icq) / P.Lc;
  d(kIcq) = (vcq - mq * vdc / 2.0 - w * P.Lc * icd) / P.Lc;
  d(kVcd) = (igd - icd + w * P.Cf * vcq) / P.Cf;
  d(kVcq) = (igq - icq - w * P.Cf * vcd) / P.Cf;
  d(kPsi) = P.kI2 * (P.vdc_star - vdc);
  d(kChid) = P.kI3 * (icd_ref - icd);
  d(kChiq) = P.kI4 * (icq_ref - icq);
  // 3/4 keeps AC-side and DC-side power equal with peak d-q quantities.
  d(kVdc) = 3.0 * (md * icd + mq * icq) / (4.0 * P.Cdc) - (alpha_k + uk(kDie)) / P.Cdc;
  return d;
}

Eigen::Vector2d line_rhs(const Eigen::Vector2d& xl, const Eigen::Vector2d& vk, const Eigen::Vector2d& vh,
                         const LineSpec& ln, double omega_c) {
  const double l = ln.l;
  const double id = xl(0), iq = xl(1);
  return {(vk(0) - vh(0) + ln.Gd * omega_c * l / ln.Bd * id + omega_c * l * iq) / l,
          (vk(1) - vh(1) + ln.Gq * omega_c * l / ln.Bq * iq - omega_c * l * id) / l};
}

Vec f_rhs(const GridModel& g, const Vec& x, const Vec& y, const Vec& u, const Vec& alpha, bool clamp) {
  StateLayout lay(g);
  Vec out(lay.nx());
  for (int k = 0; k < lay.p; ++k) {
    const EVCSParams& P = g.evcs[k];
    const int b = P.bus;
    Eigen::Vector2d vb(y(lay.bus(b, 0)), y(lay.bus(b, 1)));
    Vec12 xk = x.segment<kEvcsStates>(lay.evcs(k, 0));
    Eigen::Vector3d uk = u.segment<3>(lay.input(k, 0));
    out.segment<kEvcsStates>(lay.evcs(k, 0)) = evcs_rhs(xk, vb, uk, alpha(k), P, g.omega_bar, g.omega_c, clamp);
  }
  for (int j = 0; j < lay.n - 1; ++j) {
    const LineSpec& ln = g.lines[j];
    Eigen::Vector2d vk(y(lay.bus(ln.from, 0)), y(lay.bus(ln.from, 1)));
    Eigen::Vector2d vh(y(lay.bus(ln.to, 0)), y(lay.bus(ln.to, 1)));
    out.segment<2>(lay.line(j, 0)) = line_rhs(x.segment<2>(lay.line(j, 0)), vk, vh, ln, g.omega_c);
  }
  return out;
}

Eigen::Vector2d ev_power(const GridModel& g, const Vec& x, const Vec& y, int k) {
  StateLayout lay(g);
  const EVCSParams& P = g.evcs[k];
  Eigen::Vector2d vb(y(lay.bus(P.bus, 0)), y(lay.bus(P.bus, 1)));
  Eigen::Vector2d vl = local_voltage(vb, x(lay.evcs(k, kDelta)), P.turns_ratio);
  const double igd = x(lay.evcs(k, kIgd)), igq = x(lay.evcs(k, kIgq));
  return {1.5 * (vl(0) * igd + vl(1) * igq), 1.5 * (vl(1) * igd - vl(0) * igq)};
}

DutyCycles duty_cycles(const GridModel& g, const Vec& x, const Vec& y, const Vec& u, int k) {
  StateLayout lay(g);
  const EVCSParams& P = g.evcs[k];
  Eigen::Vector2d vb(y(lay.bus(P.bus, 0)), y(lay.bus(P.bus, 1)));
  DutyCycles dc;
  evcs_rhs(x.segment<kEvcsStates>(lay.evcs(k, 0)), vb, u.segment<3>(lay.input(k, 0)), 0.0, P, g.omega_bar,
           g.omega_c, true, &dc);
  return dc;
}

Vec algebraic_residual(const GridModel& g, const Vec& x, const Vec& y) {
  StateLayout lay(g);
  const int nb = lay.n;
  std::vector<cplx> inflow(nb + 1, cplx(0, 0));
  for (const LineSpec& ln : g.lines) {
    cplx yl = line_admittance(ln);
    cplx vk = bus_v(y, ln.from), vh = bus_v(y, ln.to);
    inflow[ln.from] += yl * (vh - vk);
    inflow[ln.to] += yl * (vk - vh);
  }
  Vec out(lay.ny());
  out(0) = y(0) - g.v_pcc_peak();
  out(1) = y(1);
  for (int h = 2; h <= nb; ++h) {
    cplx s = 1.5 * bus_v(y, h) * std::conj(inflow[h]);
    double pd = g.buses[h - 1].p_kw * 1e3, qd = g.buses[h - 1].q_kvar * 1e3;
    int k = g.evcs_at[h - 1];
    if (k >= 0) {
      Eigen::Vector2d pq = ev_power(g, x, y, k);
      pd += pq(0);
      qd += pq(1);
    }
    out(lay.bus(h, 0)) = s.real() - pd;
    out(lay.bus(h, 1)) = s.imag() - qd;
  }
  return out;
}

CVec backward_forward_sweep(const GridModel& g, const Vec& p_w, const Vec& q_var, double tol, int max_iter) {
  const int nb = g.n();
  CVec V = CVec::Constant(nb, cplx(g.v_pcc_peak(), 0.0));
  for (int it = 0; it < max_iter; ++it) {
    CVec I = CVec::Zero(nb);
    for (int h = 2; h <= nb; ++h) {
      cplx s((g.buses[h - 1].p_kw * 1e3 + p_w(h - 1)), (g.buses[h - 1].q_kvar * 1e3 + q_var(h - 1)));
      I(h - 1) = std::conj(s / (1.5 * V(h - 1)));
    }
    for (auto it2 = g.order.rbegin(); it2 != g.order.rend(); ++it2) {
      int h = *it2;
      if (h == 1) continue;
      I(g.parent[h - 1] - 1) += I(h - 1);
    }
    double change = 0.0;
    for (int h : g.order) {
      if (h == 1) continue;
      const LineSpec& ln = g.lines[g.feeder_line[h - 1]];
      cplx z = 1.0 / line_admittance(ln);
      cplx vn = V(g.parent[h - 1] - 1) - z * I(h - 1);
      change = std::max(change, std::abs(vn - V(h - 1)));
      V(h - 1) = vn;
    }
    if (change < tol * g.v_pcc_peak()) return V;
  }
  throw Error(Errc::Convergence, "power-flow sweep did not converge (infeasible loading)");
}

Vec bus_voltage_pu(const GridModel& g, const Vec& y) {
  Vec v(g.n());
  for (int h = 1; h <= g.n(); ++h) v(h - 1) = std::abs(bus_v(y, h)) / g.v_pcc_peak();
  return v;
}

namespace {

struct EvcsSteady {
  Vec12 x;
  double pe = 0, qe = 0;
};

// Closed-form converter steady state at a given terminal voltage.
EvcsSteady evcs_steady(const EVCSParams& P, cplx vt, double ie, double wc) {
  const double mag = std::abs(vt), ang = std::arg(vt);
  const double L = P.Lg + P.Lc;
  const double den = 1.0 - wc * wc * P.Lg * P.Cf;
  const double vcd = mag / den;
  const double icd = ie * P.vdc_star / (1.5 * vcd);
  const double igd = icd / den;
  const double igq = wc * P.Cf * vcd;
  const double vcq = -wc * P.Lg * igd;
  const double mq = 2.0 * (vcq - wc * P.Lc * icd) / P.vdc_star;
  EvcsSteady s;
  s.x << ang, wc, igd, igq, icd, 0.0, vcd, vcq, icd, mag - vcd, -(mq * P.vdc_star / 2.0 + wc * L * icd),
      P.vdc_star;
  s.pe = 1.5 * mag * igd;
  s.qe = -1.5 * mag * igq;
  return s;
}

double f_scale(const Vec& x) { return std::max(1.0, x.lpNorm<Eigen::Infinity>()); }

void fill_derived(const GridModel& g, OperatingPoint& op) {
  StateLayout lay(g);
  op.Pe.resize(lay.p);
  op.Qe.resize(lay.p);
  for (int k = 0; k < lay.p; ++k) {
    Eigen::Vector2d pq = ev_power(g, op.x, op.y, k);
    op.Pe(k) = pq(0);
    op.Qe(k) = pq(1);
  }
  cplx out(0, 0);
  cplx v1 = bus_v(op.y, 1);
  for (const LineSpec& ln : g.lines) {
    if (ln.from == 1) out += line_admittance(ln) * (v1 - bus_v(op.y, ln.to));
    if (ln.to == 1) out += line_admittance(ln) * (v1 - bus_v(op.y, ln.from));
  }
  cplx sg = 1.5 * v1 * std::conj(out);
  op.Pg = sg.real();
  op.Qg = sg.imag();
  Vec u0 = Vec::Zero(lay.nu());
  op.residual_f = f_rhs(g, op.x, op.y, u0, op.alpha).lpNorm<Eigen::Infinity>() / f_scale(op.x);
  op.residual_g = algebraic_residual(g, op.x, op.y).lpNorm<Eigen::Infinity>();
}

}  // namespace

OperatingPoint constructive_guess(const GridModel& g, const Vec& alpha) {
  StateLayout lay(g);
  if (alpha.size() != lay.p) throw Error(Errc::InvalidArgument, "setpoint vector has wrong size");
  const int nb = lay.n;
  Vec pe = Vec::Zero(nb), qe = Vec::Zero(nb);
  CVec V;
  std::vector<EvcsSteady> ss(lay.p);
  for (int it = 0; it < 60; ++it) {
    V = backward_forward_sweep(g, pe, qe);
    Vec pn = Vec::Zero(nb), qn = Vec::Zero(nb);
    for (int k = 0; k < lay.p; ++k) {
      const EVCSParams& P = g.evcs[k];
      ss[k] = evcs_steady(P, V(P.bus - 1) / P.turns_ratio, alpha(k), g.omega_c);
      pn(P.bus - 1) = ss[k].pe;
      qn(P.bus - 1) = ss[k].qe;
    }
    double d = std::max((pn - pe).lpNorm<Eigen::Infinity>(), (qn - qe).lpNorm<Eigen::Infinity>());
    pe = pn;
    qe = qn;
    if (d < 1e-7) break;
  }
  OperatingPoint op;
  op.alpha = alpha;
  op.x = Vec::Zero(lay.nx());
  op.y = Vec::Zero(lay.ny());
  for (int h = 1; h <= nb; ++h) {
    op.y(lay.bus(h, 0)) = V(h - 1).real();
    op.y(lay.bus(h, 1)) = V(h - 1).imag();
  }
  for (int k = 0; k < lay.p; ++k) op.x.segment<kEvcsStates>(lay.evcs(k, 0)) = ss[k].x;
  for (int j = 0; j < nb - 1; ++j) {
    const LineSpec& ln = g.lines[j];
    cplx i = line_admittance(ln) * (V(ln.from - 1) - V(ln.to - 1));
    op.x(lay.line(j, 0)) = i.real();
    op.x(lay.line(j, 1)) = i.imag();
  }
  fill_derived(g, op);
  return op;
}

OperatingPoint solve_equilibrium(const GridModel& g, const Vec& alpha, const OperatingPoint* init,
                                 const EquilibriumOptions& opt) {
  StateLayout lay(g);
  if (alpha.size() != lay.p) throw Error(Errc::InvalidArgument, "setpoint vector has wrong size");
  for (int k = 0; k < lay.p; ++k)
    if (!std::isfinite(alpha(k))) throw Error(Errc::InvalidArgument, "non-finite setpoint");
  OperatingPoint op = init ? *init : constructive_guess(g, alpha);
  op.alpha = alpha;
  const int nx = lay.nx(), ny = lay.ny(), N = nx + ny;
  const Vec u0 = Vec::Zero(lay.nu());

  auto residual = [&](const Vec& z, Vec& F) {
    F.resize(N);
    F.head(nx) = f_rhs(g, z.head(nx), z.tail(ny), u0, alpha, false);
    F.tail(ny) = algebraic_residual(g, z.head(nx), z.tail(ny));
  };
  auto merit = [&](const Vec& z, const Vec& F) {
    double rf = F.head(nx).lpNorm<Eigen::Infinity>() / f_scale(z.head(nx));
    double rg = F.tail(ny).lpNorm<Eigen::Infinity>();
    return std::max(rf / opt.tol_f, rg / opt.tol_g);
  };

  Vec z(N);
  z << op.x, op.y;
  Vec F;
  residual(z, F);
  double m = merit(z, F);
  int it = 0;
  for (; it < opt.max_iter && m > 1.0; ++it) {
    Mat J(N, N);
    for (int i = 0; i < N; ++i) {
      double hstep = std::max(1e-7, 1e-7 * std::abs(z(i)));
      Vec zp = z, zm = z, Fp, Fm;
      zp(i) += hstep;
      zm(i) -= hstep;
      residual(zp, Fp);
      residual(zm, Fm);
      J.col(i) = (Fp - Fm) / (2.0 * hstep);
    }
    Eigen::PartialPivLU<Mat> lu(J);
    Vec dz = lu.solve(-F);
    if (!dz.allFinite()) throw Error(Errc::Convergence, "equilibrium Newton step is not finite");
    double t = 1.0;
    bool accepted = false;
    for (int hv = 0; hv <= opt.max_halvings; ++hv, t *= 0.5) {
      Vec zn = z + t * dz;
      Vec Fn;
      try {
        residual(zn, Fn);
      } catch (const Error&) {
        continue;
      }
      double mn = merit(zn, Fn);
      if (std::isfinite(mn) && mn < m) {
        z = zn;
        F = Fn;
        m = mn;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  op.x = z.head(nx);
  op.y = z.tail(ny);
  op.iterations = it;
  fill_derived(g, op);
  if (!(op.residual_f <= opt.tol_f && op.residual_g <= opt.tol_g))
    throw Error(Errc::Convergence, "equilibrium did not converge (residual f " + std::to_string(op.residual_f) +
                                       ", g " + std::to_string(op.residual_g) + " W); loading may be infeasible");
  for (int k = 0; k < lay.p; ++k) {
    DutyCycles dc = duty_cycles(g, op.x, op.y, u0, k);
    if (std::abs(dc.md_raw) >= 1.0 || std::abs(dc.mq_raw) >= 1.0)
      throw Error(Errc::Saturated, "duty cycle saturated at equilibrium for EVCS on bus " + std::to_string(g.evcs[k].bus));
  }
  return op;
}

}  // namespace gridcharge
