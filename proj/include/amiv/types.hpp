#ifndef AMIV_TYPES_HPP
#define AMIV_TYPES_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace amiv {

enum class OptionKind { Call, Put };

/// +1 for a call, -1 for a put.
constexpr int alpha(OptionKind kind) { return kind == OptionKind::Call ? 1 : -1; }

std::string_view to_string(OptionKind kind);
OptionKind parse_option_kind(std::string_view text);

/// Black-Scholes market state with continuous dividend yield.
/// Rates and yields are annualized and may be negative.
struct MarketParams {
  double s0 = 1.0;
  double strike = 1.0;
  double tau = 1.0;
  double rate = 0.0;
  double div_yield = 0.0;
  double sigma = 0.2;
  OptionKind kind = OptionKind::Put;

  /// Throws std::invalid_argument when a positivity invariant is broken.
  void validate() const;

  /// x0 = log(S0 / K)
  double log_moneyness() const { return std::log(s0 / strike); }

  /// Payoff max(alpha (S0 - K), 0).
  double payoff() const;

  bool in_the_money() const {
    return kind == OptionKind::Put ? s0 < strike : s0 > strike;
  }

  MarketParams with_kind(OptionKind k) const {
    MarketParams out = *this;
    out.kind = k;
    return out;
  }
  MarketParams with_sigma(double s) const {
    MarketParams out = *this;
    out.sigma = s;
    return out;
  }
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NewtonDiverged : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NonPositiveTimeValue : public Error {
 public:
  using Error::Error;
};

class StoppingRegionInput : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DivergenceDetected : public Error {
 public:
  using Error::Error;
};

}  // namespace amiv

#endif  // AMIV_TYPES_HPP
