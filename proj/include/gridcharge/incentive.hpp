#pragma once

#include <string>
#include <vector>

#include "gridcharge/common.hpp"

namespace gridcharge {

// i^{eD} = P^{eD} / v^{dc*}, sign preserved. P in kW, result in A.
Vec demand_currents(const Vec& p_kw, const Vec& vdc_star);
Vec demand_currents(const Vec& p_kw, double vdc_star);

enum class Decision { Pending, Accept, Reject };

struct DemandSubmission {
  Vec E_kwh;
  Vec P_kw;   // negative for a contracted discharge
  Vec beta;   // $/kWh
};

struct OfferRow {
  double E = 0, PeD = 0, Pestar = 0;
  double CtD = 0, Ctstar = 0, Wt = 0;  // minutes
  double CPD = 0, Ie = 0, CPstar = 0;  // $
  Decision decision = Decision::Pending;
};

struct OfferOptions {
  // Durations are quoted to the customer at this resolution, and waiting time
  // and incentive follow from the quoted durations. 0 keeps full precision.
  double duration_resolution_min = 0.1;
};

std::vector<OfferRow> build_offers(const DemandSubmission& sub, const Vec& P_e_star,
                                   const OfferOptions& opt = {});

// Row as seen after the owner decides: Reject restores the demanded rate.
OfferRow decide(const OfferRow& offer, Decision d);

// Default $/kWh tiers: 0.4/0.5 up to 50 kW, 0.5/0.6 above (off-peak/peak).
double default_beta(double p_kw, bool peak);

std::string offers_csv(const std::vector<OfferRow>& rows);
std::string offers_json(const std::vector<OfferRow>& rows);

}  // namespace gridcharge
