#include <amiv/region.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace amiv {

std::string_view to_string(Region r) { return r == Region::Holding ? "holding" : "stopping"; }

double intrinsic_put(const MarketParams& p) {
  const double forward_bound = p.strike * std::exp(-p.rate * p.tau) - p.s0 * std::exp(-p.div_yield * p.tau);
  return std::max({p.strike - p.s0, forward_bound, 0.0});
}

double intrinsic_value(const MarketParams& p) {
  if (p.kind == OptionKind::Put) return intrinsic_put(p);
  const double forward_bound = p.s0 * std::exp(-p.div_yield * p.tau) - p.strike * std::exp(-p.rate * p.tau);
  return std::max({p.s0 - p.strike, forward_bound, 0.0});
}

double squash(double price, const MarketParams& p) {
  const double tv = price - intrinsic_value(p);
  if (!(tv > 0.0))
    throw NonPositiveTimeValue("squash: time value " + std::to_string(tv) + " is not positive");
  return std::log(tv);
}

RegionLabel classify(const MarketParams& p, double price, double vega, const RegionThresholds& eps) {
  RegionLabel out;
  out.time_value = price - intrinsic_value(p);
  bool holding = out.time_value > 0.0;
  if (holding && p.in_the_money())
    holding = std::abs(price - p.payoff()) > eps.eps1 && vega > eps.eps2;
  out.label = holding ? Region::Holding : Region::Stopping;
  out.log_time_value = holding ? std::log(out.time_value) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace amiv
