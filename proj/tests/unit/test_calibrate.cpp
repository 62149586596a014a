#include <amiv/calibrate.hpp>
#include <amiv/dataset.hpp>

#include <gtest/gtest.h>

using namespace amiv;

namespace {

DeConfig sphere_config(std::uint64_t seed = 1) {
  DeConfig c;
  c.bounds = {{-1.0, 1.0}, {-1.0, 1.0}};
  c.max_generations = 200;
  c.tol = 0.0;
  c.abs_tol = 1e-10;
  c.seed = seed;
  return c;
}

double sphere(const Eigen::VectorXd& x) { return x.squaredNorm(); }

CosConfig fast_cos() {
  CosConfig c;
  c.n_terms = 256;
  return c;
}

Mlp<double> named_net(const std::vector<std::string>& in, const std::vector<std::string>& out) {
  auto net = Mlp<double>::init_glorot({static_cast<int>(in.size()), 4, static_cast<int>(out.size())}, 1);
  net.input_names = in;
  net.output_names = out;
  return net;
}

}  // namespace

TEST(De, SphereReachesOrigin) {
  const DeResult r = de_optimize(PointObjective(sphere), sphere_config());
  EXPECT_LT(r.x.norm(), 1e-2);
  EXPECT_LE(r.generations, 200);
}

TEST(De, BestObjectiveNeverIncreases) {
  DeConfig c = sphere_config();
  c.tol = 0.01;
  c.abs_tol = 0.0;
  const DeResult r = de_optimize(PointObjective(sphere), c);
  ASSERT_GE(r.best_history.size(), 2u);
  for (std::size_t i = 1; i < r.best_history.size(); ++i) EXPECT_LE(r.best_history[i], r.best_history[i - 1]);
}

TEST(De, SameSeedSameTrajectory) {
  const DeResult a = de_optimize(PointObjective(sphere), sphere_config(4));
  const DeResult b = de_optimize(PointObjective(sphere), sphere_config(4));
  EXPECT_EQ(a.best_history, b.best_history);
  EXPECT_EQ(a.x, b.x);
  const DeResult threaded = de_optimize(PointObjective(sphere), sphere_config(4), 3);
  EXPECT_EQ(a.best_history, threaded.best_history);
}

TEST(De, BatchAndPointObjectivesAgree) {
  const BatchObjective batch = [](const Eigen::MatrixXd& c) -> Eigen::VectorXd {
    return c.colwise().squaredNorm().transpose();
  };
  EXPECT_EQ(de_optimize(batch, sphere_config(2)).best_history,
            de_optimize(PointObjective(sphere), sphere_config(2)).best_history);
}

TEST(De, StaysInBoundsAndReportsExhaustion) {
  DeConfig c;
  c.bounds = {{0.5, 1.0}};
  c.max_generations = 3;
  c.tol = 0.0;
  const DeResult r = de_optimize(PointObjective([](const Eigen::VectorXd& x) { return (x[0] - 0.75) * (x[0] - 0.75); }), c);
  EXPECT_FALSE(r.converged);
  EXPECT_GE(r.x[0], 0.5);
  EXPECT_LE(r.x[0], 1.0);
}

TEST(De, ConfigValidation) {
  DeConfig c = sphere_config();
  c.population = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = sphere_config();
  c.crossover = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = sphere_config();
  c.dither_high = 2.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = sphere_config();
  c.bounds = {{0.0, std::numeric_limits<double>::infinity()}};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(De, NanEnergiesAreTolerated) {
  DeConfig c = sphere_config();
  const DeResult r = de_optimize(
      PointObjective([](const Eigen::VectorXd& x) { return x[0] > 0.5 ? std::nan("") : x.squaredNorm(); }), c);
  EXPECT_TRUE(std::isfinite(r.objective));
}

TEST(Calibrate, DirectRecoversTableRowTwo) {
  const QuoteTerms terms{1.1, 0.5, -0.04, 1.0};
  const QuotePair quote{0.0255, 0.1181};
  const CalibrationResult r = calibrate_direct(quote, terms, DeConfig::sigma_and_yield(), fast_cos());
  EXPECT_NEAR(r.sigma_star, 0.2, 5e-3);
  EXPECT_NEAR(r.q_star, -0.06, 2e-3);
  EXPECT_GE(r.objective, 0.0);
}

TEST(Calibrate, DirectIsStableUnderTinyQuoteShifts) {
  MarketParams p;
  p.strike = 1.0;
  p.tau = 0.75;
  p.rate = 0.0;
  p.div_yield = -0.02;
  p.sigma = 0.3;
  const QuotePair quote{price_american(p.with_kind(OptionKind::Call), fast_cos(), false).price,
                        price_american(p, fast_cos(), false).price};
  const QuoteTerms terms{1.0, 0.75, 0.0, 1.0};
  const CalibrationResult a = calibrate_direct(quote, terms, DeConfig::sigma_and_yield(), fast_cos());
  const CalibrationResult b =
      calibrate_direct({quote.call + 1e-6, quote.put + 1e-6}, terms, DeConfig::sigma_and_yield(), fast_cos());
  EXPECT_NEAR(a.sigma_star, b.sigma_star, 5e-3);
  EXPECT_NEAR(a.q_star, b.q_star, 2e-3);
}

TEST(Calibrate, ArbitrageViolatingQuotesDoNotCrash) {
  DeConfig c = DeConfig::sigma_and_yield();
  c.max_generations = 20;
  const CalibrationResult r = calibrate_direct({-1.0, 5.0}, {1.0, 1.0, 0.0, 1.0}, c, fast_cos());
  EXPECT_TRUE(!r.converged || r.objective > 1.0);
  EXPECT_GE(r.sigma_star, 1e-4);
  EXPECT_LE(r.sigma_star, 1.0);
  EXPECT_GE(r.q_star, -0.08);
  EXPECT_LE(r.q_star, 0.1);
}

TEST(Calibrate, CannChecksNetworkLayout) {
  const auto wrong = named_net({"a", "b", "c", "d", "e"}, forward_targets());
  EXPECT_THROW(cann_backward(wrong, {0.1, 0.1}, {}), std::invalid_argument);
  const auto ok = named_net(forward_inputs(), forward_targets());
  DeConfig c = DeConfig::sigma_and_yield();
  c.max_generations = 5;
  const CalibrationResult r = cann_backward(ok, {0.1, 0.1}, {}, c);
  EXPECT_GE(r.objective, 0.0);
  EXPECT_EQ(r.best_history.size(), static_cast<std::size_t>(r.generations) + 1);
}

TEST(Calibrate, CannUsesPriceHomogeneity) {
  const auto net = named_net(forward_inputs(), forward_targets());
  DeConfig c = DeConfig::sigma_and_yield();
  c.max_generations = 10;
  const CalibrationResult unit = cann_backward(net, {0.05, 0.07}, {1.1, 1.0, 0.01, 1.0}, c);
  const CalibrationResult scaled = cann_backward(net, {5.0, 7.0}, {110.0, 1.0, 0.01, 100.0}, c);
  EXPECT_NEAR(unit.sigma_star, scaled.sigma_star, 1e-12);
  EXPECT_NEAR(unit.q_star, scaled.q_star, 1e-12);
}

TEST(ImpliedVol, RefusesStoppingRegionQuotes) {
  const auto net = named_net(iv_inputs(), {"sigma"});
  IvInput deep{0.5, OptionKind::Put, 1.0, 1.0, 0.1, 0.0, 0.5};
  EXPECT_THROW(implied_vol_predict(net, deep), StoppingRegionInput);
  IvInput near_payoff{0.2 + 5e-5, OptionKind::Put, 1.0, 1.0, 0.0, 0.0, 0.8};
  EXPECT_THROW(implied_vol_predict(net, near_payoff), StoppingRegionInput);
}

TEST(ImpliedVol, DeterministicAndSymmetric) {
  const auto net = named_net(iv_inputs(), {"sigma"});
  const IvInput put{0.08, OptionKind::Put, 1.0, 1.0, 0.02, 0.01, 1.0};
  EXPECT_EQ(implied_vol_predict(net, put), implied_vol_predict(net, put));
  // a call at (S, K, r, q) is the put at (K, S, q, r); at S = K = 1 and r = q only the kind differs
  const IvInput call{0.08, OptionKind::Call, 1.0, 1.0, 0.02, 0.02, 1.0};
  IvInput mirrored = call;
  mirrored.kind = OptionKind::Put;
  EXPECT_EQ(implied_vol_predict(net, call), implied_vol_predict(net, mirrored));
  EXPECT_THROW(implied_vol_predict(named_net({"a", "b", "c", "d", "e"}, {"sigma"}), put), std::invalid_argument);
}

TEST(ImpliedVol, UnitPutEquivalentScalesSpot) {
  const auto [p, price] = unit_put_equivalent({8.0, OptionKind::Put, 110.0, 1.0, 0.02, 0.01, 100.0});
  EXPECT_DOUBLE_EQ(p.s0, 1.0);
  EXPECT_DOUBLE_EQ(p.strike, 1.1);
  EXPECT_DOUBLE_EQ(price, 0.08);
}

TEST(Systemic, GridSizes) {
  EXPECT_EQ(systemic_grid(true).size(), 8u * 8 * 6 * 5 * 6);
  EXPECT_EQ(systemic_grid(false).size(), 4u * 4 * 3 * 5 * 3);
}
