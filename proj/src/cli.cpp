#include <amiv/calibrate.hpp>
#include <amiv/cli.hpp>
#include <amiv/cos_engine.hpp>
#include <amiv/csv.hpp>
#include <amiv/dataset.hpp>
#include <amiv/neuralnet.hpp>
#include <amiv/oracle.hpp>
#include <amiv/parallel.hpp>
#include <amiv/region.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace amiv::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string num(double v) { return format_number(v, 12); }

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

/// Output sink: a file when --output is given, else the caller's stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw Error("cannot write '" + path + "'");
    }
    out_ = file_ ? file_.get() : &fallback;
  }
  std::ostream& operator*() { return *out_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_;
};

struct CosFlags {
  CosConfig cfg;
  std::string fft_mode = "fft";

  void add(CLI::App* app, const CosConfig& defaults) {
    cfg = defaults;
    auto* g = app->add_option_group("cos", "cosine engine controls");
    g->add_option("--n-terms", cfg.n_terms, "Fourier cosine terms N")->capture_default_str();
    g->add_option("--trunc-width", cfg.trunc_width, "truncation width L")->capture_default_str();
    g->add_option("--richardson-level", cfg.richardson_level, "Richardson level l (dates 2^l..2^(l+3))")
        ->capture_default_str();
    g->add_option("--newton-tol", cfg.newton_tol, "exercise-point tolerance")->capture_default_str();
    g->add_option("--newton-max-iter", cfg.newton_max_iter)->capture_default_str();
    g->add_option("--scan-points", cfg.scan_points, "root bracketing grid size")->capture_default_str();
    g->add_option("--fft-mode", fft_mode, "fft or direct")->check(CLI::IsMember({"fft", "direct"}))->capture_default_str();
  }
  CosConfig resolve() const {
    CosConfig c = cfg;
    c.fft_mode = fft_mode == "direct" ? FftMode::Direct : FftMode::Fft;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

struct ParamFlags {
  std::string input;
  double s0 = 1.0;
  double strike = 0, tau = 0, rate = 0, div_yield = 0, sigma = 0;
  std::string kind;
  std::vector<CLI::Option*> required;
  CLI::Option* kind_opt = nullptr;

  void add(CLI::App* app, bool need_kind) {
    app->add_option("-i,--input", input, "CSV with header s0,strike,tau,rate,div_yield,sigma,kind");
    app->add_option("--s0", s0, "spot price")->capture_default_str();
    required = {app->add_option("--strike", strike, "strike price"),
                app->add_option("--tau", tau, "time to maturity in years"),
                app->add_option("--rate", rate, "interest rate r"),
                app->add_option("--div-yield", div_yield, "dividend yield q"),
                app->add_option("--sigma", sigma, "volatility")};
    kind_opt = app->add_option("--kind", kind, "call or put");
    if (need_kind) required.push_back(kind_opt);
  }

  /// One MarketParams per input row, or the single flag set.
  std::vector<MarketParams> load(bool need_kind) const {
    std::vector<MarketParams> rows;
    if (!input.empty()) {
      const CsvTable t = read_csv_file(input);
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        MarketParams p;
        p.s0 = t.has_column("s0") ? t.number(r, "s0") : 1.0;
        p.strike = t.number(r, "strike");
        p.tau = t.number(r, "tau");
        p.rate = t.number(r, "rate");
        p.div_yield = t.number(r, "div_yield");
        p.sigma = t.number(r, "sigma");
        if (t.has_column("kind"))
          p.kind = parse_option_kind(t.rows[r][t.column("kind")]);
        else if (need_kind)
          throw FormatError("csv: missing column 'kind'");
        rows.push_back(p);
      }
      return rows;
    }
    for (auto* o : required)
      if (o->count() == 0) throw UsageError(o->get_name() + " is required when --input is not given");
    MarketParams p;
    p.s0 = s0;
    p.strike = strike;
    p.tau = tau;
    p.rate = rate;
    p.div_yield = div_yield;
    p.sigma = sigma;
    if (kind_opt->count()) p.kind = parse_option_kind(kind);
    rows.push_back(p);
    return rows;
  }
};

std::vector<std::string> param_fields(const MarketParams& p, bool with_kind = true) {
  std::vector<std::string> f{num(p.s0), num(p.strike), num(p.tau), num(p.rate), num(p.div_yield), num(p.sigma)};
  if (with_kind) f.emplace_back(to_string(p.kind));
  return f;
}

const std::vector<std::string> kParamHeader{"s0", "strike", "tau", "rate", "div_yield", "sigma", "kind"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// Evaluates rows on the worker pool and writes them in input order. A row
/// that throws yields NaN fields and its message in the trailing error column.
void emit_rows(std::ostream& out, const std::vector<std::string>& header, std::size_t n, std::size_t n_values,
               int threads, const std::function<std::vector<std::string>(std::size_t)>& prefix,
               const std::function<std::vector<std::string>(std::size_t)>& values) {
  write_csv_row(out, concat(header, {"error"}));
  std::vector<std::vector<std::string>> rows(n);
  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<std::string> row = prefix(i);
    try {
      row = concat(row, values(i));
      row.emplace_back("");
    } catch (const std::exception& e) {
      row.insert(row.end(), n_values, "nan");
      row.push_back(sanitize(e.what()));
    }
    rows[i] = std::move(row);
  });
  for (const auto& r : rows) write_csv_row(out, r);
}

void add_de_flags(CLI::App* app, DeConfig& de) {
  auto* g = app->add_option_group("de", "differential evolution controls");
  g->add_option("--population", de.population)->capture_default_str();
  g->add_option("--crossover", de.crossover)->capture_default_str();
  g->add_option("--dither-low", de.dither_low)->capture_default_str();
  g->add_option("--dither-high", de.dither_high)->capture_default_str();
  g->add_option("--tol", de.tol, "relative convergence tolerance")->capture_default_str();
  g->add_option("--abs-tol", de.abs_tol, "absolute convergence tolerance")->capture_default_str();
  g->add_option("--max-generations", de.max_generations)->capture_default_str();
  g->add_option("--de-seed", de.seed)->capture_default_str();
}

void check_de(const DeConfig& de) {
  try {
    de.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

Mlp<double> load_net(const std::string& path) { return load_weights<double>(path); }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"American option pricing and implied volatility / dividend extraction", "amiv"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read option defaults from an INI/TOML file");
  int threads = default_thread_count();
  app.add_option("--threads", threads, "worker threads (default from AMIV_THREADS)")
      ->check(CLI::PositiveNumber)
      ->envname("AMIV_THREADS");
  std::string output;

  // price
  auto* price = app.add_subcommand("price", "price American (or Bermudan) options");
  ParamFlags price_params;
  CosFlags price_cos;
  bool ladder = false;
  int dates = 0;
  price_params.add(price, true);
  price_cos.add(price, CosConfig{});
  price->add_flag("--ladder", ladder, "append the four Bermudan prices used by Richardson");
  price->add_option("--dates", dates, "price a Bermudan with this many exercise dates instead");
  price->add_option("-o,--output", output, "output CSV (default stdout)");

  // greeks
  auto* greeks = app.add_subcommand("greeks", "delta, vega and holding/stopping label");
  ParamFlags greeks_params;
  CosFlags greeks_cos;
  RegionThresholds greeks_eps;
  greeks_params.add(greeks, true);
  greeks_cos.add(greeks, CosConfig{});
  greeks->add_option("--eps1", greeks_eps.eps1)->capture_default_str();
  greeks->add_option("--eps2", greeks_eps.eps2)->capture_default_str();
  greeks->add_option("-o,--output", output);

  // eed
  auto* eed = app.add_subcommand("eed", "early-exercise premiums and put-call parity deviation");
  ParamFlags eed_params;
  CosFlags eed_cos;
  std::string eed_engine = "cos";
  int eed_steps = kOracleSteps;
  eed_params.add(eed, false);
  eed_cos.add(eed, CosConfig{});
  eed->add_option("--engine", eed_engine, "cos or binomial")->check(CLI::IsMember({"cos", "binomial"}))
      ->capture_default_str();
  eed->add_option("--steps", eed_steps, "binomial steps")->capture_default_str();
  eed->add_option("-o,--output", output);

  // figures
  auto* figures = app.add_subcommand("figures", "curve data for price, vega and EED plots");
  std::string figure;
  int points = 80;
  CosFlags fig_cos;
  figures
      ->add_option("--name", figure, "am-eu-r-gt-q | am-eu-r-lt-q | double-region | vega | eed-maturity | eed-carry | eed-vol")
      ->required()
      ->check(CLI::IsMember(
          {"am-eu-r-gt-q", "am-eu-r-lt-q", "double-region", "vega", "eed-maturity", "eed-carry", "eed-vol"}));
  figures->add_option("--points", points, "spot grid size")->check(CLI::Range(2, 100000))->capture_default_str();
  fig_cos.add(figures, CosConfig{});
  figures->add_option("-o,--output", output);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a labeled training corpus");
  std::string gen_kind;
  Eigen::Index gen_rows = 100000;
  std::uint64_t gen_seed = 0;
  CosFlags gen_cos;
  GenerationOptions gen_opt;
  gen->add_option("--kind", gen_kind, "iv (inverse map) or forward (call/put prices)")
      ->required()
      ->check(CLI::IsMember({"iv", "forward"}));
  gen->add_option("--rows", gen_rows, "Latin hypercube samples to draw")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--eps1", gen_opt.thresholds.eps1)->capture_default_str();
  gen->add_option("--eps2", gen_opt.thresholds.eps2)->capture_default_str();
  gen_cos.add(gen, corpus_cos_config());
  gen->add_option("-o,--output", output, "corpus CSV; provenance goes to <output>.meta")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a network on a generated corpus");
  std::string tr_data, tr_kind, tr_history, tr_precision = "double";
  TrainConfig tr_cfg;
  int hidden_layers = 4, hidden_width = 200, log_every = 0;
  std::uint64_t init_seed = 0;
  tr->add_option("--data", tr_data, "corpus CSV from gen-data")->required();
  tr->add_option("--kind", tr_kind, "iv or forward")->required()->check(CLI::IsMember({"iv", "forward"}));
  tr->add_option("--epochs", tr_cfg.epochs)->capture_default_str();
  tr->add_option("--batch-size", tr_cfg.batch_size)->capture_default_str();
  tr->add_option("--learning-rate", tr_cfg.learning_rate)->capture_default_str();
  tr->add_option("--halving-period", tr_cfg.halving_period, "epochs between learning-rate halvings")
      ->capture_default_str();
  tr->add_option("--seed", tr_cfg.seed, "shuffle seed")->capture_default_str();
  tr->add_option("--init-seed", init_seed, "weight initialisation seed")->capture_default_str();
  tr->add_option("--hidden-layers", hidden_layers)->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--hidden-width", hidden_width)->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--precision", tr_precision, "float or double")->check(CLI::IsMember({"float", "double"}))
      ->capture_default_str();
  tr->add_option("--history", tr_history, "per-epoch loss CSV");
  tr->add_option("--log-every", log_every, "print progress every N epochs to stderr");
  tr->add_option("-o,--output", output, "weight file")->required();

  // implied-vol
  auto* iv = app.add_subcommand("implied-vol", "implied volatility from the inverse network");
  std::string iv_weights, iv_input, iv_kind;
  IvInput iv_in;
  RegionThresholds iv_eps;
  iv->add_option("--weights", iv_weights)->required();
  iv->add_option("-i,--input", iv_input, "CSV with header price,kind,strike,tau,rate,div_yield[,s0]");
  auto* iv_price = iv->add_option("--price", iv_in.price);
  auto* iv_kind_opt = iv->add_option("--kind", iv_kind);
  auto* iv_strike = iv->add_option("--strike", iv_in.strike);
  auto* iv_tau = iv->add_option("--tau", iv_in.tau);
  auto* iv_rate = iv->add_option("--rate", iv_in.rate);
  auto* iv_q = iv->add_option("--div-yield", iv_in.div_yield);
  iv->add_option("--s0", iv_in.s0)->capture_default_str();
  iv->add_option("--eps1", iv_eps.eps1)->capture_default_str();
  iv->add_option("-o,--output", output);

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "recover (sigma, q) from call/put quote pairs");
  std::string cal_weights, cal_input;
  bool cal_direct = false;
  QuotePair cal_quote;
  QuoteTerms cal_terms;
  DeConfig cal_de = DeConfig::sigma_and_yield();
  CosFlags cal_cos;
  cal->add_option("--weights", cal_weights, "pricing network (CaNN objective)");
  cal->add_flag("--direct", cal_direct, "use the cosine pricer as the objective");
  cal->add_option("-i,--input", cal_input, "CSV with header strike,tau,rate,s0,call_price,put_price");
  auto* cal_call = cal->add_option("--call-price", cal_quote.call);
  auto* cal_put = cal->add_option("--put-price", cal_quote.put);
  auto* cal_strike = cal->add_option("--strike", cal_terms.strike);
  auto* cal_tau = cal->add_option("--tau", cal_terms.tau);
  auto* cal_rate = cal->add_option("--rate", cal_terms.rate);
  cal->add_option("--s0", cal_terms.s0)->capture_default_str();
  add_de_flags(cal, cal_de);
  cal_cos.add(cal, CosConfig{});
  cal->add_option("-o,--output", output);

  // eval
  auto* ev = app.add_subcommand("eval", "systemic calibration or inverse-map evaluation");
  std::string ev_weights, ev_mode = "systemic", ev_details;
  bool ev_full = false;
  int ev_samples = 500;
  std::uint64_t ev_seed = 0;
  DeConfig ev_de = DeConfig::sigma_and_yield();
  CosFlags ev_cos;
  ev->add_option("--weights", ev_weights)->required();
  ev->add_option("--mode", ev_mode, "systemic (pricing network) or inverse (implied-vol network)")
      ->check(CLI::IsMember({"systemic", "inverse"}))
      ->capture_default_str();
  ev->add_flag("--full", ev_full, "use every grid step instead of every other step");
  ev->add_option("--samples", ev_samples, "inverse mode sample count")->capture_default_str();
  ev->add_option("--seed", ev_seed)->capture_default_str();
  ev->add_option("--details", ev_details, "per-case CSV");
  add_de_flags(ev, ev_de);
  ev_cos.add(ev, CosConfig{});
  ev->add_option("-o,--output", output);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (!output.empty()) {
      std::ofstream cfg(output + ".cfg");
      if (cfg) cfg << app.config_to_str(true, false);
    }

    if (price->parsed()) {
      const CosConfig c = price_cos.resolve();
      const auto rows = price_params.load(true);
      Sink sink(output, out);
      auto header = concat(kParamHeader, {"price", "vega", "delta"});
      if (ladder) header = concat(header, {"bermudan_1", "bermudan_2", "bermudan_3", "bermudan_4"});
      const std::size_t n_values = header.size() - kParamHeader.size();
      emit_rows(*sink, header, rows.size(), n_values, threads,
                [&](std::size_t i) { return param_fields(rows[i]); },
                [&](std::size_t i) {
                  const PriceResult r = dates > 0 ? price_bermudan(rows[i], dates, c) : price_american(rows[i], c);
                  std::vector<std::string> f{num(r.price), num(r.vega), num(r.delta)};
                  if (ladder) {
                    for (std::size_t k = 0; k < 4; ++k)
                      f.push_back(k < r.bermudan_ladder.size() ? num(r.bermudan_ladder[k]) : "nan");
                  }
                  return f;
                });
      return kExitOk;
    }

    if (greeks->parsed()) {
      const CosConfig c = greeks_cos.resolve();
      const auto rows = greeks_params.load(true);
      Sink sink(output, out);
      emit_rows(*sink, concat(kParamHeader, {"price", "delta", "vega", "region", "time_value"}), rows.size(), 5,
                threads, [&](std::size_t i) { return param_fields(rows[i]); },
                [&](std::size_t i) {
                  const PriceResult r = price_american(rows[i], c);
                  const RegionLabel l = classify(rows[i], r.price, r.vega, greeks_eps);
                  const bool stop = r.in_stopping_region || l.label == Region::Stopping;
                  return std::vector<std::string>{num(r.price), num(r.delta), num(r.vega),
                                                  std::string(to_string(stop ? Region::Stopping : Region::Holding)),
                                                  num(l.time_value)};
                });
      return kExitOk;
    }

    if (eed->parsed()) {
      const CosConfig c = eed_cos.resolve();
      const auto rows = eed_params.load(false);
      Sink sink(output, out);
      const std::vector<std::string> header{"s0", "strike", "tau", "rate", "div_yield", "sigma",
                                            "call_american", "put_american", "call_premium", "put_premium",
                                            "eed", "implied_div_european"};
      emit_rows(*sink, header, rows.size(), 6, threads, [&](std::size_t i) { return param_fields(rows[i], false); },
                [&](std::size_t i) {
                  const MarketParams& p = rows[i];
                  const ParityReport r =
                      eed_engine == "binomial"
                          ? early_exercise_premiums(p, eed_steps)
                          : parity_report(price_american(p.with_kind(OptionKind::Call), c, false).price,
                                          price_american(p.with_kind(OptionKind::Put), c, false).price, p);
                  return std::vector<std::string>{num(r.call_american), num(r.put_american), num(r.call_premium),
                                                  num(r.put_premium),   num(r.eed),          num(r.implied_div_european)};
                });
      return kExitOk;
    }

    if (figures->parsed()) {
      const CosConfig c = fig_cos.resolve();
      Sink sink(output, out);
      auto spots = [&](double lo, double hi) {
        std::vector<double> s(static_cast<std::size_t>(points));
        for (int i = 0; i < points; ++i) s[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
        return s;
      };
      MarketParams base;
      base.strike = 1.0;
      if (figure == "am-eu-r-gt-q" || figure == "am-eu-r-lt-q") {
        base.tau = 1.5;
        base.sigma = 0.4;
        base.rate = figure == "am-eu-r-gt-q" ? 0.10 : 0.04;
        base.div_yield = figure == "am-eu-r-gt-q" ? 0.04 : 0.10;
        const auto s = spots(0.05, 2.0);
        write_csv_row(*sink, {"s0", "american_put", "european_put", "american_call", "european_call", "put_payoff",
                              "call_payoff"});
        std::vector<std::vector<std::string>> lines(s.size());
        parallel_for(s.size(), threads, [&](std::size_t i) {
          MarketParams p = base;
          p.s0 = s[i];
          const MarketParams put = p.with_kind(OptionKind::Put), call = p.with_kind(OptionKind::Call);
          lines[i] = {num(p.s0), num(price_american(put, c, false).price), num(european_bs(put)),
                      num(price_american(call, c, false).price), num(european_bs(call)), num(put.payoff()),
                      num(call.payoff())};
        });
        for (const auto& l : lines) write_csv_row(*sink, l);
      } else if (figure == "double-region" || figure == "vega") {
        if (figure == "double-region") {
          base.tau = 20.0;
          base.sigma = 0.2;
          base.rate = -0.01;
          base.div_yield = -0.06;
        } else {
          base.tau = 1.0;
          base.sigma = 0.3;
          base.rate = 0.1;
          base.div_yield = 0.0;
        }
        const auto s = spots(0.05, 2.0);
        write_csv_row(*sink, {"s0", "american_put", "european_put", "payoff", "gap", "vega", "delta", "region"});
        std::vector<std::vector<std::string>> lines(s.size());
        parallel_for(s.size(), threads, [&](std::size_t i) {
          MarketParams p = base;
          p.s0 = s[i];
          const PriceResult r = price_american(p, c);
          const RegionLabel l = classify(p, r.price, r.vega);
          const bool stop = r.in_stopping_region || l.label == Region::Stopping;
          lines[i] = {num(p.s0), num(r.price), num(european_bs(p)), num(p.payoff()), num(r.price - p.payoff()),
                      num(r.vega), num(r.delta), std::string(to_string(stop ? Region::Stopping : Region::Holding))};
        });
        for (const auto& l : lines) write_csv_row(*sink, l);
      } else {
        base.tau = 1.0;
        base.sigma = 0.4;
        base.rate = 0.1;
        base.div_yield = 0.05;
        std::string sweep_name;
        std::vector<double> sweep;
        std::function<void(MarketParams&, double)> apply;
        if (figure == "eed-maturity") {
          sweep_name = "tau";
          sweep = {0.25, 0.5, 1.0, 2.0};
          apply = [](MarketParams& p, double v) { p.tau = v; };
        } else if (figure == "eed-carry") {
          sweep_name = "r_minus_q";
          sweep = {-0.1, -0.05, 0.0, 0.05, 0.1};
          apply = [](MarketParams& p, double v) { p.div_yield = p.rate - v; };
        } else {
          base.div_yield = 0.04;
          sweep_name = "sigma";
          sweep = {0.1, 0.2, 0.3, 0.4, 0.5};
          apply = [](MarketParams& p, double v) { p.sigma = v; };
        }
        const auto s = spots(0.5, 1.5);
        write_csv_row(*sink, {sweep_name, "s0", "call_premium", "put_premium", "eed"});
        std::vector<std::vector<std::string>> lines(sweep.size() * s.size());
        parallel_for(lines.size(), threads, [&](std::size_t i) {
          MarketParams p = base;
          apply(p, sweep[i / s.size()]);
          p.s0 = s[i % s.size()];
          const ParityReport r = parity_report(price_american(p.with_kind(OptionKind::Call), c, false).price,
                                               price_american(p.with_kind(OptionKind::Put), c, false).price, p);
          lines[i] = {num(sweep[i / s.size()]), num(p.s0), num(r.call_premium), num(r.put_premium), num(r.eed)};
        });
        for (const auto& l : lines) write_csv_row(*sink, l);
      }
      return kExitOk;
    }

    if (gen->parsed()) {
      gen_opt.cos = gen_cos.resolve();
      gen_opt.threads = threads;
      gen_opt.progress = [&](Eigen::Index done, Eigen::Index total) {
        if (done % 10000 == 0 || done == total) err << "labeled " << done << " / " << total << '\n';
      };
      GenerationStats stats;
      const Dataset d = gen_kind == "iv"
                            ? generate_iv_dataset(ParamBox::implied_vol(), gen_rows, gen_seed, gen_opt, &stats)
                            : generate_forward_dataset(ParamBox::forward(), gen_rows, gen_seed, gen_opt, &stats);
      write_dataset(d, output);
      out << "requested,emitted,dropped_stopping,dropped_range,dropped_error\n"
          << stats.requested << ',' << stats.emitted << ',' << stats.dropped_stopping << ',' << stats.dropped_range
          << ',' << stats.dropped_error << '\n';
      return kExitOk;
    }

    if (tr->parsed()) {
      try {
        tr_cfg.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const Dataset d = read_dataset(tr_data);
      const bool is_iv = tr_kind == "iv";
      const auto& inputs = is_iv ? iv_inputs() : forward_inputs();
      const std::vector<std::string> targets = is_iv ? std::vector<std::string>{"sigma"} : forward_targets();
      tr_cfg.loss = is_iv ? Loss::Mse : Loss::DualMse;
      std::vector<int> widths{static_cast<int>(inputs.size())};
      widths.insert(widths.end(), static_cast<std::size_t>(hidden_layers), hidden_width);
      widths.push_back(static_cast<int>(targets.size()));

      std::unique_ptr<std::ofstream> history;
      if (!tr_history.empty()) {
        history = std::make_unique<std::ofstream>(tr_history);
        if (!*history) throw Error("cannot write '" + tr_history + "'");
        *history << "epoch,learning_rate,train_loss,validation_loss\n";
      }
      const auto start = std::chrono::steady_clock::now();
      tr_cfg.on_epoch = [&](const EpochRecord& r) {
        if (history)
          *history << r.epoch << ',' << num(r.learning_rate) << ',' << num(r.train_loss) << ','
                   << num(r.validation_loss) << '\n';
        if (log_every > 0 && (r.epoch + 1) % log_every == 0)
          err << "epoch " << r.epoch + 1 << " lr " << num(r.learning_rate) << " train " << num(r.train_loss)
              << " val " << num(r.validation_loss) << " ("
              << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s)\n";
      };

      TrainReport rep;
      if (tr_precision == "float") {
        auto net = Mlp<float>::init_glorot(widths, init_seed);
        rep = train(net, d, inputs, targets, tr_cfg);
        save_weights(net, output);
      } else {
        auto net = Mlp<double>::init_glorot(widths, init_seed);
        rep = train(net, d, inputs, targets, tr_cfg);
        save_weights(net, output);
      }
      out << "split,head,mse,mae,mape,r2\n";
      auto dump = [&](const char* split, const MetricsReport& m) {
        for (std::size_t h = 0; h < m.heads.size(); ++h)
          out << split << ',' << targets[h] << ',' << num(m.heads[h].mse) << ',' << num(m.heads[h].mae) << ','
              << (m.heads[h].mape ? num(*m.heads[h].mape) : "") << ',' << num(m.heads[h].r2) << '\n';
      };
      dump("train", rep.train);
      dump("val", rep.validation);
      dump("test", rep.test);
      return kExitOk;
    }

    if (iv->parsed()) {
      const Mlp<double> net = load_net(iv_weights);
      std::vector<IvInput> rows;
      if (!iv_input.empty()) {
        const CsvTable t = read_csv_file(iv_input);
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
          IvInput q;
          q.price = t.number(r, "price");
          q.kind = parse_option_kind(t.rows[r][t.column("kind")]);
          q.strike = t.number(r, "strike");
          q.tau = t.number(r, "tau");
          q.rate = t.number(r, "rate");
          q.div_yield = t.number(r, "div_yield");
          q.s0 = t.has_column("s0") ? t.number(r, "s0") : 1.0;
          rows.push_back(q);
        }
      } else {
        for (auto* o : {iv_price, iv_kind_opt, iv_strike, iv_tau, iv_rate, iv_q})
          if (o->count() == 0) throw UsageError(o->get_name() + " is required when --input is not given");
        iv_in.kind = parse_option_kind(iv_kind);
        rows.push_back(iv_in);
      }
      Sink sink(output, out);
      emit_rows(*sink, {"price", "kind", "strike", "tau", "rate", "div_yield", "s0", "sigma_star"}, rows.size(), 1,
                threads,
                [&](std::size_t i) {
                  const auto& q = rows[i];
                  return std::vector<std::string>{num(q.price), std::string(to_string(q.kind)), num(q.strike),
                                                  num(q.tau),   num(q.rate),                    num(q.div_yield),
                                                  num(q.s0)};
                },
                [&](std::size_t i) { return std::vector<std::string>{num(implied_vol_predict(net, rows[i], iv_eps))}; });
      return kExitOk;
    }

    if (cal->parsed()) {
      check_de(cal_de);
      if (cal_direct == !cal_weights.empty()) throw UsageError("give exactly one of --weights or --direct");
      const CosConfig c = cal_cos.resolve();
      std::vector<std::pair<QuotePair, QuoteTerms>> rows;
      if (!cal_input.empty()) {
        const CsvTable t = read_csv_file(cal_input);
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
          QuoteTerms terms{t.number(r, "strike"), t.number(r, "tau"), t.number(r, "rate"),
                           t.has_column("s0") ? t.number(r, "s0") : 1.0};
          rows.push_back({{t.number(r, "call_price"), t.number(r, "put_price")}, terms});
        }
      } else {
        for (auto* o : {cal_call, cal_put, cal_strike, cal_tau, cal_rate})
          if (o->count() == 0) throw UsageError(o->get_name() + " is required when --input is not given");
        rows.push_back({cal_quote, cal_terms});
      }
      std::optional<Mlp<double>> net;
      if (!cal_direct) net = load_net(cal_weights);
      Sink sink(output, out);
      emit_rows(*sink,
                {"strike", "tau", "rate", "s0", "call_price", "put_price", "sigma_star", "q_star", "objective",
                 "n_evals", "converged"},
                rows.size(), 5, threads,
                [&](std::size_t i) {
                  const auto& [q, t] = rows[i];
                  return std::vector<std::string>{num(t.strike), num(t.tau), num(t.rate),
                                                  num(t.s0),     num(q.call), num(q.put)};
                },
                [&](std::size_t i) {
                  const auto& [q, t] = rows[i];
                  const CalibrationResult r = net ? cann_backward(*net, q, t, cal_de) : calibrate_direct(q, t, cal_de, c);
                  return std::vector<std::string>{num(r.sigma_star), num(r.q_star), num(r.objective),
                                                  std::to_string(r.n_evals), r.converged ? "1" : "0"};
                });
      return kExitOk;
    }

    if (ev->parsed()) {
      check_de(ev_de);
      const CosConfig c = ev_cos.resolve();
      const Mlp<double> net = load_net(ev_weights);
      Sink sink(output, out);
      std::unique_ptr<std::ofstream> details;
      if (!ev_details.empty()) {
        details = std::make_unique<std::ofstream>(ev_details);
        if (!*details) throw Error("cannot write '" + ev_details + "'");
      }
      if (ev_mode == "inverse") {
        ParamBox box = ParamBox::implied_vol();
        const Eigen::MatrixXd x = lhs_sample(box, ev_samples, ev_seed);
        std::vector<std::optional<std::pair<double, double>>> res(static_cast<std::size_t>(ev_samples));
        parallel_for(res.size(), threads, [&](std::size_t i) {
          const auto r = static_cast<Eigen::Index>(i);
          MarketParams p;
          p.strike = x(r, box.index("strike"));
          p.tau = x(r, box.index("tau"));
          p.rate = x(r, box.index("rate"));
          p.div_yield = x(r, box.index("div_yield"));
          p.sigma = x(r, box.index("sigma"));
          const PriceResult pr = price_american(p, c, p.in_the_money());
          if (pr.in_stopping_region || classify(p, pr.price, pr.vega).label == Region::Stopping) return;
          try {
            const double s = implied_vol_predict(net, {pr.price, OptionKind::Put, p.strike, p.tau, p.rate,
                                                       p.div_yield, 1.0});
            res[i] = std::make_pair(p.sigma, s);
          } catch (const StoppingRegionInput&) {
          }
        });
        Eigen::VectorXd truth(ev_samples), pred(ev_samples);
        Eigen::Index n = 0;
        if (details) *details << "sigma,sigma_star\n";
        for (const auto& r : res) {
          if (!r) continue;
          truth[n] = r->first;
          pred[n] = r->second;
          ++n;
          if (details) *details << num(r->first) << ',' << num(r->second) << '\n';
        }
        if (n == 0) {
          *sink << "no cases\n";
          return kExitOk;
        }
        const HeadMetrics m = metrics(Eigen::VectorXd(truth.head(n)), Eigen::VectorXd(pred.head(n)));
        *sink << "metric,value\ncases," << n << "\nmae," << num(m.mae) << "\nmse," << num(m.mse) << "\nr2,"
              << num(m.r2) << '\n';
        return kExitOk;
      }
      const auto grid = systemic_grid(ev_full);
      const auto cases = systemic_cases(grid, c, {}, threads);
      if (cases.empty()) {
        *sink << "no cases\n";
        return kExitOk;
      }
      const auto outcomes = run_systemic(net, cases, ev_de);
      const SystemicSummary s = summarize(cases, outcomes);
      if (details) {
        *details << "sigma,div_yield,strike,tau,rate,sigma_star,q_star,objective,n_evals,seconds,error\n";
        for (std::size_t i = 0; i < cases.size(); ++i) {
          const auto& p = cases[i].params;
          const auto& o = outcomes[i];
          *details << num(p.sigma) << ',' << num(p.div_yield) << ',' << num(p.strike) << ',' << num(p.tau) << ','
                   << num(p.rate) << ',' << num(o.result.sigma_star) << ',' << num(o.result.q_star) << ','
                   << num(o.result.objective) << ',' << o.result.n_evals << ',' << num(o.seconds) << ','
                   << sanitize(o.error) << '\n';
        }
      }
      *sink << "metric,value\ngrid," << grid.size() << "\nremoved," << grid.size() - cases.size() << "\ncases,"
            << s.cases << "\nfailures," << s.failures << "\nmean_abs_sigma," << num(s.mean_abs_sigma)
            << "\nmean_abs_q," << num(s.mean_abs_q) << "\nmean_n_evals," << num(s.mean_evals)
            << "\nmean_seconds," << num(s.mean_seconds) << '\n';
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace amiv::cli
