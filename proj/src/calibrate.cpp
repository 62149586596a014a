#include <amiv/calibrate.hpp>
#include <amiv/parallel.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>

namespace amiv {

namespace {

constexpr double kInfeasible = 1e6;

void require_names(const std::vector<std::string>& have, const std::vector<std::string>& want, const char* what) {
  if (have != want) {
    std::string msg = std::string(what) + " network must have inputs";
    for (const auto& w : want) msg += " " + w;
    throw std::invalid_argument(msg);
  }
}

CalibrationResult to_calibration(const DeResult& r) {
  CalibrationResult out;
  out.sigma_star = r.x[0];
  out.q_star = r.x[1];
  out.objective = r.objective;
  out.n_evals = r.n_evals;
  out.generations = r.generations;
  out.converged = r.converged;
  out.best_history = r.best_history;
  return out;
}

bool population_converged(const Eigen::VectorXd& energies, const DeConfig& cfg) {
  if (!energies.allFinite()) return false;
  const double mean = energies.mean();
  const double sd = std::sqrt((energies.array() - mean).square().mean());
  return sd <= cfg.abs_tol + cfg.tol * std::abs(mean);
}

}  // namespace

void DeConfig::validate() const {
  if (population < 4) throw std::invalid_argument("DeConfig: population must be at least 4");
  if (!(crossover >= 0.0 && crossover <= 1.0)) throw std::invalid_argument("DeConfig: crossover must lie in [0, 1]");
  if (!(dither_low > 0.0 && dither_low <= dither_high && dither_high <= 2.0))
    throw std::invalid_argument("DeConfig: dither bounds must satisfy 0 < low <= high <= 2");
  if (!(tol >= 0.0) || !(abs_tol >= 0.0)) throw std::invalid_argument("DeConfig: tolerances must be non-negative");
  if (max_generations < 1) throw std::invalid_argument("DeConfig: max_generations must be at least 1");
  if (bounds.empty()) throw std::invalid_argument("DeConfig: no search bounds");
  for (const auto& [lo, hi] : bounds)
    if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
      throw std::invalid_argument("DeConfig: each bound needs finite low < high");
}

DeConfig DeConfig::sigma_and_yield() {
  DeConfig c;
  c.bounds = {{1e-4, 1.0}, {-0.08, 0.1}};
  return c;
}

DeResult de_optimize(const BatchObjective& objective, const DeConfig& cfg) {
  cfg.validate();
  const auto dim = static_cast<Eigen::Index>(cfg.bounds.size());
  const Eigen::Index pop = cfg.population;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd lo(dim), hi(dim);
  for (Eigen::Index j = 0; j < dim; ++j) std::tie(lo[j], hi[j]) = cfg.bounds[static_cast<std::size_t>(j)];

  auto evaluate = [&](const Eigen::MatrixXd& c) {
    Eigen::VectorXd e = objective(c);
    if (e.size() != c.cols()) throw std::invalid_argument("de_optimize: objective returned the wrong count");
    for (Eigen::Index i = 0; i < e.size(); ++i)
      if (std::isnan(e[i])) e[i] = std::numeric_limits<double>::infinity();
    return e;
  };

  // Latin hypercube start
  Eigen::MatrixXd x(dim, pop);
  std::vector<Eigen::Index> strata(static_cast<std::size_t>(pop));
  for (Eigen::Index j = 0; j < dim; ++j) {
    std::iota(strata.begin(), strata.end(), Eigen::Index{0});
    std::shuffle(strata.begin(), strata.end(), rng);
    for (Eigen::Index i = 0; i < pop; ++i)
      x(j, i) = lo[j] + (hi[j] - lo[j]) * (static_cast<double>(strata[static_cast<std::size_t>(i)]) + unit(rng)) /
                            static_cast<double>(pop);
  }
  Eigen::VectorXd energies = evaluate(x);

  DeResult out;
  out.n_evals = pop;
  Eigen::Index best;
  energies.minCoeff(&best);
  out.best_history.push_back(energies[best]);
  out.converged = population_converged(energies, cfg);

  std::uniform_int_distribution<Eigen::Index> pick(0, pop - 1);
  std::uniform_int_distribution<Eigen::Index> pick_gene(0, dim - 1);
  Eigen::MatrixXd trials(dim, pop);
  while (!out.converged && out.generations < cfg.max_generations) {
    const double f = cfg.dither_low + (cfg.dither_high - cfg.dither_low) * unit(rng);
    const Eigen::VectorXd best_x = x.col(best);
    for (Eigen::Index i = 0; i < pop; ++i) {
      Eigen::Index r1, r2;
      do r1 = pick(rng);
      while (r1 == i);
      do r2 = pick(rng);
      while (r2 == i || r2 == r1);
      const Eigen::Index forced = pick_gene(rng);
      for (Eigen::Index j = 0; j < dim; ++j) {
        const bool take = unit(rng) < cfg.crossover || j == forced;
        double v = take ? best_x[j] + f * (x(j, r1) - x(j, r2)) : x(j, i);
        // out-of-bounds genes are redrawn uniformly
        if (v < lo[j] || v > hi[j]) v = lo[j] + (hi[j] - lo[j]) * unit(rng);
        trials(j, i) = v;
      }
    }
    const Eigen::VectorXd trial_energies = evaluate(trials);
    out.n_evals += pop;
    for (Eigen::Index i = 0; i < pop; ++i) {
      if (trial_energies[i] <= energies[i]) {
        energies[i] = trial_energies[i];
        x.col(i) = trials.col(i);
      }
    }
    energies.minCoeff(&best);
    ++out.generations;
    out.best_history.push_back(energies[best]);
    out.converged = population_converged(energies, cfg);
  }
  out.x = x.col(best);
  out.objective = energies[best];
  return out;
}

DeResult de_optimize(const PointObjective& objective, const DeConfig& cfg, int threads) {
  return de_optimize(
      [&](const Eigen::MatrixXd& c) {
        Eigen::VectorXd e(c.cols());
        parallel_for(static_cast<std::size_t>(c.cols()), threads, [&](std::size_t i) {
          e[static_cast<Eigen::Index>(i)] = objective(c.col(static_cast<Eigen::Index>(i)));
        });
        return e;
      },
      cfg);
}

template <typename Scalar>
CalibrationResult cann_backward(const Mlp<Scalar>& net, const QuotePair& quote, const QuoteTerms& terms,
                                const DeConfig& cfg) {
  require_names(net.input_names, forward_inputs(), "pricing");
  if (net.output_names != forward_targets())
    throw std::invalid_argument("pricing network must output put_price and call_price");
  if (cfg.bounds.size() != 2) throw std::invalid_argument("cann_backward: search is over (sigma, q)");
  if (!(terms.s0 > 0.0)) throw std::invalid_argument("cann_backward: spot must be positive");

  const double k = terms.strike / terms.s0;
  const double call = quote.call / terms.s0;
  const double put = quote.put / terms.s0;
  using Matrix = typename Mlp<Scalar>::Matrix;
  Matrix inputs(5, cfg.population);
  inputs.row(0).setConstant(static_cast<Scalar>(k));
  inputs.row(1).setConstant(static_cast<Scalar>(terms.tau));
  inputs.row(2).setConstant(static_cast<Scalar>(terms.rate));

  const DeResult r = de_optimize(
      [&](const Eigen::MatrixXd& c) {
        inputs.conservativeResize(Eigen::NoChange, c.cols());
        inputs.row(3) = c.row(1).cast<Scalar>();
        inputs.row(4) = c.row(0).cast<Scalar>();
        const Eigen::MatrixXd prices = net.forward_batch(inputs).template cast<double>();
        return ((prices.row(0).array() - put).square() + (prices.row(1).array() - call).square()).matrix().transpose().eval();
      },
      cfg);
  CalibrationResult out = to_calibration(r);
  out.objective *= terms.s0 * terms.s0;
  return out;
}

CalibrationResult calibrate_direct(const QuotePair& quote, const QuoteTerms& terms, const DeConfig& cfg,
                                   const CosConfig& c, int threads) {
  c.validate();
  if (cfg.bounds.size() != 2) throw std::invalid_argument("calibrate_direct: search is over (sigma, q)");
  const DeResult r = de_optimize(
      [&](const Eigen::VectorXd& x) {
        MarketParams p;
        p.s0 = terms.s0;
        p.strike = terms.strike;
        p.tau = terms.tau;
        p.rate = terms.rate;
        p.sigma = x[0];
        p.div_yield = x[1];
        try {
          const double call = price_american(p.with_kind(OptionKind::Call), c, false).price;
          const double put = price_american(p.with_kind(OptionKind::Put), c, false).price;
          return (call - quote.call) * (call - quote.call) + (put - quote.put) * (put - quote.put);
        } catch (const std::exception&) {
          return kInfeasible;
        }
      },
      cfg, threads);
  return to_calibration(r);
}

std::pair<MarketParams, double> unit_put_equivalent(const IvInput& in) {
  MarketParams p;
  p.s0 = in.s0;
  p.strike = in.strike;
  p.tau = in.tau;
  p.rate = in.rate;
  p.div_yield = in.div_yield;
  p.kind = in.kind;
  if (p.kind == OptionKind::Call) p = call_via_symmetry(p);
  p.validate();
  const double spot = p.s0;
  p.strike /= spot;
  p.s0 = 1.0;
  return {p, in.price / spot};
}

template <typename Scalar>
double implied_vol_predict(const Mlp<Scalar>& net, const IvInput& in, const RegionThresholds& eps) {
  require_names(net.input_names, iv_inputs(), "implied-volatility");
  const auto [p, price] = unit_put_equivalent(in);
  double ltv;
  try {
    ltv = squash(price, p);
  } catch (const NonPositiveTimeValue& e) {
    throw StoppingRegionInput(std::string("implied_vol_predict: quote has no time value (") + e.what() + ")");
  }
  if (p.in_the_money() && !(std::abs(price - p.payoff()) > eps.eps1))
    throw StoppingRegionInput("implied_vol_predict: quote lies within eps1 of the payoff");
  typename Mlp<Scalar>::Vector x(5);
  x << static_cast<Scalar>(ltv), static_cast<Scalar>(p.strike), static_cast<Scalar>(p.rate),
      static_cast<Scalar>(p.div_yield), static_cast<Scalar>(p.tau);
  return static_cast<double>(net.forward(x)[0]);
}

std::vector<MarketParams> systemic_grid(bool full) {
  auto values = [&](double lo, double step, int count, bool thin) {
    std::vector<double> v;
    for (int i = 0; i < count; i += thin && !full ? 2 : 1) v.push_back(lo + step * i);
    return v;
  };
  std::vector<MarketParams> grid;
  for (double sigma : values(0.1, 0.05, 8, true))
    for (double q : values(-0.06, 0.02, 8, true))
      for (double k : values(0.7, 0.1, 6, true))
        for (double tau : values(0.5, 0.25, 5, false))
          for (double r : values(-0.04, 0.02, 6, true)) {
            MarketParams p;
            p.s0 = 1.0;
            p.strike = k;
            p.tau = tau;
            p.rate = r;
            p.div_yield = q;
            p.sigma = sigma;
            grid.push_back(p);
          }
  return grid;
}

std::vector<SystemicCase> systemic_cases(const std::vector<MarketParams>& grid, const CosConfig& c,
                                         const RegionThresholds& eps, int threads) {
  std::vector<std::optional<SystemicCase>> slots(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    SystemicCase sc{grid[i], {}};
    for (OptionKind kind : {OptionKind::Call, OptionKind::Put}) {
      const MarketParams p = grid[i].with_kind(kind);
      const PriceResult r = price_american(p, c, p.in_the_money());
      if (r.in_stopping_region || classify(p, r.price, r.vega, eps).label == Region::Stopping) return;
      (kind == OptionKind::Call ? sc.quote.call : sc.quote.put) = r.price;
    }
    slots[i] = sc;
  });
  std::vector<SystemicCase> out;
  for (auto& s : slots)
    if (s) out.push_back(*s);
  return out;
}

template <typename Scalar>
std::vector<SystemicOutcome> run_systemic(const Mlp<Scalar>& net, const std::vector<SystemicCase>& cases,
                                          const DeConfig& cfg) {
  std::vector<SystemicOutcome> out(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& p = cases[i].params;
    const auto start = std::chrono::steady_clock::now();
    try {
      out[i].result = cann_backward(net, cases[i].quote, {p.strike, p.tau, p.rate, p.s0}, cfg);
    } catch (const std::exception& e) {
      out[i].failed = true;
      out[i].error = e.what();
    }
    out[i].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return out;
}

SystemicSummary summarize(const std::vector<SystemicCase>& cases, const std::vector<SystemicOutcome>& outcomes) {
  SystemicSummary s;
  for (std::size_t i = 0; i < cases.size() && i < outcomes.size(); ++i) {
    if (outcomes[i].failed) {
      ++s.failures;
      continue;
    }
    ++s.cases;
    s.mean_abs_sigma += std::abs(outcomes[i].result.sigma_star - cases[i].params.sigma);
    s.mean_abs_q += std::abs(outcomes[i].result.q_star - cases[i].params.div_yield);
    s.mean_evals += static_cast<double>(outcomes[i].result.n_evals);
    s.mean_seconds += outcomes[i].seconds;
  }
  if (s.cases > 0) {
    const double n = static_cast<double>(s.cases);
    s.mean_abs_sigma /= n;
    s.mean_abs_q /= n;
    s.mean_evals /= n;
    s.mean_seconds /= n;
  }
  return s;
}

template std::vector<SystemicOutcome> run_systemic<float>(const Mlp<float>&, const std::vector<SystemicCase>&,
                                                          const DeConfig&);
template std::vector<SystemicOutcome> run_systemic<double>(const Mlp<double>&, const std::vector<SystemicCase>&,
                                                           const DeConfig&);
template CalibrationResult cann_backward<float>(const Mlp<float>&, const QuotePair&, const QuoteTerms&,
                                                const DeConfig&);
template CalibrationResult cann_backward<double>(const Mlp<double>&, const QuotePair&, const QuoteTerms&,
                                                 const DeConfig&);
template double implied_vol_predict<float>(const Mlp<float>&, const IvInput&, const RegionThresholds&);
template double implied_vol_predict<double>(const Mlp<double>&, const IvInput&, const RegionThresholds&);

}  // namespace amiv
