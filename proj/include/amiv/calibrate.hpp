#ifndef AMIV_CALIBRATE_HPP
#define AMIV_CALIBRATE_HPP

// Differential Evolution (best1bin) and the two inversion paths built on it:
// joint (sigma, q) calibration to a call/put quote pair, and one-shot implied
// volatility from the inverse network.

#include <amiv/cos_engine.hpp>
#include <amiv/neuralnet.hpp>
#include <amiv/region.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace amiv {

struct DeConfig {
  int population = 10;
  /// The differential weight F is drawn from [dither_low, dither_high) once per generation.
  double dither_low = 0.5;
  double dither_high = 1.0;
  double crossover = 0.7;
  /// Converged when std(energies) <= abs_tol + tol * |mean(energies)|.
  double tol = 0.01;
  double abs_tol = 0.0;
  int max_generations = 500;
  std::vector<std::pair<double, double>> bounds;
  std::uint64_t seed = 0;

  void validate() const;

  /// Bounds sigma in [1e-4, 1] and q in [-0.08, 0.1].
  static DeConfig sigma_and_yield();
};

struct DeResult {
  Eigen::VectorXd x;
  double objective = 0.0;
  long n_evals = 0;
  int generations = 0;
  bool converged = false;
  /// Best energy after initialisation and after every generation.
  std::vector<double> best_history;
};

/// Columns of `candidates` are parameter vectors; returns one energy each.
using BatchObjective = std::function<Eigen::VectorXd(const Eigen::MatrixXd& candidates)>;
using PointObjective = std::function<double(const Eigen::VectorXd& x)>;

/// Returns the best point found; converged is false when max_generations ran out.
DeResult de_optimize(const BatchObjective& objective, const DeConfig& cfg);
/// Evaluates each generation's candidates on up to `threads` workers.
DeResult de_optimize(const PointObjective& objective, const DeConfig& cfg, int threads = 1);

struct CalibrationResult {
  double sigma_star = 0.0;
  double q_star = 0.0;
  double objective = 0.0;
  long n_evals = 0;
  int generations = 0;
  bool converged = false;
  std::vector<double> best_history;
};

struct QuotePair {
  double call = 0.0;
  double put = 0.0;
};

struct QuoteTerms {
  double strike = 1.0;
  double tau = 1.0;
  double rate = 0.0;
  double s0 = 1.0;
};

/// Objective (C_net - C)^2 + (P_net - P)^2 over (sigma, q). The network must
/// take (strike, tau, rate, div_yield, sigma) at unit spot and return
/// (put_price, call_price); other spots are handled by price homogeneity.
template <typename Scalar>
CalibrationResult cann_backward(const Mlp<Scalar>& net, const QuotePair& quote, const QuoteTerms& terms,
                                const DeConfig& cfg = DeConfig::sigma_and_yield());

/// Same loop with the cosine pricer as the objective.
CalibrationResult calibrate_direct(const QuotePair& quote, const QuoteTerms& terms,
                                   const DeConfig& cfg = DeConfig::sigma_and_yield(), const CosConfig& c = {},
                                   int threads = 1);

struct IvInput {
  double price = 0.0;
  OptionKind kind = OptionKind::Put;
  double strike = 1.0;
  double tau = 1.0;
  double rate = 0.0;
  double div_yield = 0.0;
  double s0 = 1.0;
};

/// One forward pass of the inverse network on (log time value, K, r, q, tau)
/// at unit spot. Calls are first mapped to their symmetric puts. Throws
/// StoppingRegionInput when the quote has no positive time value or sits
/// within eps1 of the payoff in the money.
template <typename Scalar>
double implied_vol_predict(const Mlp<Scalar>& net, const IvInput& in, const RegionThresholds& eps = {});

/// The unit-spot put equivalent of a quote: its parameters and price.
std::pair<MarketParams, double> unit_put_equivalent(const IvInput& in);

/// Equally spaced test grid over sigma, q, K, tau and r with S0 = 1. The
/// reduced grid keeps every other sigma, q, K and r value and all tau values.
std::vector<MarketParams> systemic_grid(bool full = false);

struct SystemicCase {
  MarketParams params;  // kind unused
  QuotePair quote;
};

/// Prices the grid and keeps cases whose call and put both lie in the
/// holding region.
std::vector<SystemicCase> systemic_cases(const std::vector<MarketParams>& grid, const CosConfig& c,
                                         const RegionThresholds& eps = {}, int threads = 1);

struct SystemicOutcome {
  CalibrationResult result;
  double seconds = 0.0;
  bool failed = false;
  std::string error;
};

struct SystemicSummary {
  std::size_t cases = 0;
  std::size_t failures = 0;
  double mean_abs_sigma = 0.0;
  double mean_abs_q = 0.0;
  double mean_evals = 0.0;
  double mean_seconds = 0.0;
};

/// Runs cann_backward on every case; per-case failures are recorded, not thrown.
template <typename Scalar>
std::vector<SystemicOutcome> run_systemic(const Mlp<Scalar>& net, const std::vector<SystemicCase>& cases,
                                          const DeConfig& cfg = DeConfig::sigma_and_yield());

SystemicSummary summarize(const std::vector<SystemicCase>& cases, const std::vector<SystemicOutcome>& outcomes);

}  // namespace amiv

#endif  // AMIV_CALIBRATE_HPP
