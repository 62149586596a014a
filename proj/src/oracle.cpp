#include <amiv/oracle.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace amiv {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double european_bs(const MarketParams& p) {
  p.validate();
  const double vol_sqrt_t = p.sigma * std::sqrt(p.tau);
  const double d1 = (std::log(p.s0 / p.strike) + (p.rate - p.div_yield + 0.5 * p.sigma * p.sigma) * p.tau) / vol_sqrt_t;
  const double d2 = d1 - vol_sqrt_t;
  const double spot_disc = p.s0 * std::exp(-p.div_yield * p.tau);
  const double strike_disc = p.strike * std::exp(-p.rate * p.tau);
  if (p.kind == OptionKind::Call) return spot_disc * normal_cdf(d1) - strike_disc * normal_cdf(d2);
  return strike_disc * normal_cdf(-d2) - spot_disc * normal_cdf(-d1);
}

double binomial_american(const MarketParams& p, int steps) {
  p.validate();
  if (steps < 2) throw std::invalid_argument("binomial_american: steps must be at least 2");
  const double dt = p.tau / steps;
  const double up = std::exp(p.sigma * std::sqrt(dt));
  const double down = 1.0 / up;
  const double prob = (std::exp((p.rate - p.div_yield) * dt) - down) / (up - down);
  if (!(prob > 0.0 && prob < 1.0))
    throw DomainError("binomial_american: risk-neutral probability " + std::to_string(prob) +
                      " outside (0, 1); increase steps");
  const double disc = std::exp(-p.rate * dt);
  const double pu = disc * prob;
  const double pd = disc * (1.0 - prob);
  const double a = alpha(p.kind);

  // node j at level i holds S0 u^j d^(i-j) = S0 u^(2j - i)
  std::vector<double> values(steps + 1);
  std::vector<double> spots(steps + 1);
  const double up2 = up * up;
  spots[0] = p.s0 * std::pow(down, steps);
  for (int j = 1; j <= steps; ++j) spots[j] = spots[j - 1] * up2;
  for (int j = 0; j <= steps; ++j) values[j] = std::max(a * (spots[j] - p.strike), 0.0);

  for (int i = steps - 1; i >= 0; --i) {
    // spots at level i are the level-(i+1) spots shifted by one down-move
    for (int j = 0; j <= i; ++j) {
      const double spot = spots[j] * up;
      spots[j] = spot;
      const double hold = pu * values[j + 1] + pd * values[j];
      values[j] = std::max(hold, a * (spot - p.strike));
    }
  }
  return values[0];
}

ParityReport parity_report(double call_american, double put_american, const MarketParams& p) {
  ParityReport out;
  out.call_american = call_american;
  out.put_american = put_american;
  out.call_premium = call_american - european_bs(p.with_kind(OptionKind::Call));
  out.put_premium = put_american - european_bs(p.with_kind(OptionKind::Put));
  out.eed = out.call_premium - out.put_premium;
  try {
    out.implied_div_european = implied_div_european(call_american, put_american, p);
  } catch (const DomainError&) {
    out.implied_div_european = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

ParityReport early_exercise_premiums(const MarketParams& p, int steps) {
  return parity_report(binomial_american(p.with_kind(OptionKind::Call), steps),
                       binomial_american(p.with_kind(OptionKind::Put), steps), p);
}

double implied_div_european(double call, double put, const MarketParams& p) {
  const double arg = (call - put + p.strike * std::exp(-p.rate * p.tau)) / p.s0;
  if (!(arg > 0.0))
    throw DomainError("implied_div_european: parity argument " + std::to_string(arg) + " is not positive");
  return -std::log(arg) / p.tau;
}

}  // namespace amiv
