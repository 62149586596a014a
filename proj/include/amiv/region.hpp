#ifndef AMIV_REGION_HPP
#define AMIV_REGION_HPP

// Holding/stopping classification and the log time-value transform used as
// the regression input of the implied-volatility network.

#include <amiv/types.hpp>

#include <string_view>

namespace amiv {

enum class Region { Holding, Stopping };

std::string_view to_string(Region r);

struct RegionThresholds {
  /// Minimum |V - payoff| for an in-the-money sample.
  double eps1 = 1e-4;
  /// Minimum vega for an in-the-money sample.
  double eps2 = 1e-3;
};

struct RegionLabel {
  Region label = Region::Stopping;
  /// V minus the no-arbitrage lower bound.
  double time_value = 0.0;
  /// log(time_value); NaN unless label is Holding.
  double log_time_value = 0.0;
};

/// max(K - S0, K e^{-r tau} - S0 e^{-q tau}, 0)
double intrinsic_put(const MarketParams& p);

/// intrinsic_put for puts; max(S0 - K, S0 e^{-q tau} - K e^{-r tau}, 0) for calls.
double intrinsic_value(const MarketParams& p);

/// log(price - intrinsic_value(p)). Throws NonPositiveTimeValue when the
/// time value is not strictly positive.
double squash(double price, const MarketParams& p);

/// Out-of-the-money samples (spot at strike included) are always holding.
/// In-the-money samples need |price - payoff| > eps1 and vega > eps2. A
/// sample without positive time value is stopping in either case.
RegionLabel classify(const MarketParams& p, double price, double vega, const RegionThresholds& eps = {});

}  // namespace amiv

#endif  // AMIV_REGION_HPP
