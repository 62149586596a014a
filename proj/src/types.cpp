#include <amiv/types.hpp>

#include <algorithm>
#include <string>

namespace amiv {

std::string_view to_string(OptionKind kind) { return kind == OptionKind::Call ? "call" : "put"; }

OptionKind parse_option_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "call" || lower == "c" || lower == "1") return OptionKind::Call;
  if (lower == "put" || lower == "p" || lower == "-1") return OptionKind::Put;
  throw std::invalid_argument("unknown option kind '" + std::string(text) + "'");
}

void MarketParams::validate() const {
  if (!(s0 > 0.0)) throw std::invalid_argument("s0 must be positive");
  if (!(strike > 0.0)) throw std::invalid_argument("strike must be positive");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (!std::isfinite(rate) || !std::isfinite(div_yield)) throw std::invalid_argument("rates must be finite");
}

double MarketParams::payoff() const { return std::max(alpha(kind) * (s0 - strike), 0.0); }

}  // namespace amiv
