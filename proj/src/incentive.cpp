#include "gridcharge/incentive.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace gridcharge {

Vec demand_currents(const Vec& p_kw, const Vec& vdc_star) {
  if (p_kw.size() != vdc_star.size()) throw Error(Errc::InvalidArgument, "demand_currents: size mismatch");
  Vec i(p_kw.size());
  for (Eigen::Index k = 0; k < p_kw.size(); ++k) {
    if (!(vdc_star(k) > 0)) throw Error(Errc::InvalidArgument, "demand_currents: v_dc* must be positive");
    i(k) = p_kw(k) * 1e3 / vdc_star(k);
  }
  return i;
}

Vec demand_currents(const Vec& p_kw, double vdc_star) {
  return demand_currents(p_kw, Vec::Constant(p_kw.size(), vdc_star));
}

double default_beta(double p_kw, bool peak) {
  double base = std::abs(p_kw) <= 50.0 ? 0.4 : 0.5;
  return peak ? base + 0.1 : base;
}

namespace {

double quantize(double v, double res) { return res > 0 ? std::round(v / res) * res : v; }

}  // namespace

std::vector<OfferRow> build_offers(const DemandSubmission& sub, const Vec& P_e_star, const OfferOptions& opt) {
  const Eigen::Index p = sub.E_kwh.size();
  if (sub.P_kw.size() != p || sub.beta.size() != p || P_e_star.size() != p)
    throw Error(Errc::InvalidArgument, "build_offers: vectors must have equal length");
  std::vector<OfferRow> rows;
  for (Eigen::Index k = 0; k < p; ++k) {
    const double E = sub.E_kwh(k), PD = sub.P_kw(k), PS = P_e_star(k), b = sub.beta(k);
    if (!(E > 0) || !(b > 0)) throw Error(Errc::InvalidArgument, "build_offers: energy and price must be positive");
    if (PD == 0.0 || PS == 0.0) throw Error(Errc::InvalidArgument, "build_offers: zero charging rate");
    if ((PD > 0) != (PS > 0)) throw Error(Errc::InvalidArgument, "build_offers: optimal rate changes direction");
    if (std::abs(PS) > std::abs(PD) * (1 + 1e-12))
      throw Error(Errc::InvalidArgument, "build_offers: optimal rate exceeds the demand");
    OfferRow r;
    r.E = E;
    r.PeD = PD;
    r.Pestar = PS;
    r.CtD = quantize(60.0 * E / std::abs(PD), opt.duration_resolution_min);
    r.Ctstar = quantize(60.0 * E / std::abs(PS), opt.duration_resolution_min);
    r.Wt = r.Ctstar - r.CtD;
    r.CPD = E * b;
    r.Ie = r.CPD * r.Wt / r.CtD;
    r.CPstar = r.CPD - r.Ie;
    rows.push_back(r);
  }
  return rows;
}

OfferRow decide(const OfferRow& offer, Decision d) {
  OfferRow r = offer;
  r.decision = d;
  if (d == Decision::Reject) {
    r.Pestar = r.PeD;
    r.Ctstar = r.CtD;
    r.Wt = 0.0;
    r.Ie = 0.0;
    r.CPstar = r.CPD;
  }
  return r;
}

namespace {

const char* decision_name(Decision d) {
  switch (d) {
    case Decision::Accept: return "accept";
    case Decision::Reject: return "reject";
    default: return "pending";
  }
}

}  // namespace

std::string offers_csv(const std::vector<OfferRow>& rows) {
  std::ostringstream os;
  os << "evcs,E_D_kwh,P_eD_kw,P_estar_kw,C_tstar_min,C_tD_min,W_t_min,I_e_usd,C_Pstar_usd,C_PD_usd,decision\n";
  char buf[256];
  for (size_t k = 0; k < rows.size(); ++k) {
    const OfferRow& r = rows[k];
    std::snprintf(buf, sizeof buf, "%zu,%.4g,%.4g,%.4g,%.1f,%.1f,%.1f,%.2f,%.2f,%.2f,%s\n", k + 1, r.E, r.PeD,
                  r.Pestar, r.Ctstar, r.CtD, r.Wt, r.Ie, r.CPstar, r.CPD, decision_name(r.decision));
    os << buf;
  }
  return os.str();
}

std::string offers_json(const std::vector<OfferRow>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (size_t k = 0; k < rows.size(); ++k) {
    const OfferRow& r = rows[k];
    arr.push_back({{"evcs", k + 1},
                   {"E_D_kwh", r.E},
                   {"P_eD_kw", r.PeD},
                   {"P_estar_kw", r.Pestar},
                   {"C_tstar_min", r.Ctstar},
                   {"C_tD_min", r.CtD},
                   {"W_t_min", r.Wt},
                   {"I_e_usd", r.Ie},
                   {"C_Pstar_usd", r.CPstar},
                   {"C_PD_usd", r.CPD},
                   {"decision", decision_name(r.decision)}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace gridcharge
