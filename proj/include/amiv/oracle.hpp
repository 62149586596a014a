#ifndef AMIV_ORACLE_HPP
#define AMIV_ORACLE_HPP

// Reference pricers independent of the cosine engine, and parity analytics.

#include <amiv/types.hpp>

namespace amiv {

/// Early-exercise premiums and their deviation from European put-call parity.
struct ParityReport {
  double call_premium = 0.0;
  double put_premium = 0.0;
  /// call_premium - put_premium
  double eed = 0.0;
  /// q implied by applying the European parity inverse to the American prices.
  double implied_div_european = 0.0;
  double call_american = 0.0;
  double put_american = 0.0;
};

inline constexpr int kOracleSteps = 5000;

double normal_cdf(double x);

/// Black-Scholes closed form with continuous dividend yield.
double european_bs(const MarketParams& p);

/// Cox-Ross-Rubinstein tree with an exercise check at every node.
double binomial_american(const MarketParams& p, int steps = kOracleSteps);

ParityReport early_exercise_premiums(const MarketParams& p, int steps = kOracleSteps);

/// eed from given American and European prices.
ParityReport parity_report(double call_american, double put_american, const MarketParams& p);

/// q = -log((C - P + K e^{-r tau}) / S) / tau. Throws DomainError when the
/// log argument is not positive.
double implied_div_european(double call, double put, const MarketParams& p);

}  // namespace amiv

#endif  // AMIV_ORACLE_HPP
