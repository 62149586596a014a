#include <amiv/cos_engine.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace amiv {

namespace {

constexpr double kPi = std::numbers::pi;

using Grid = CosGrid<double>;

// Per-step transition weights e^{-r dt} phi(u_k, dt) with the k = 0 term halved,
// plus their sigma-derivative.
struct StepWeights {
  Eigen::VectorXcd w;
  Eigen::VectorXcd dw;
};

StepWeights step_weights(const MarketParams& p, const Grid& grid, double dt) {
  StepWeights out{Eigen::VectorXcd(grid.n), Eigen::VectorXcd(grid.n)};
  const double discount = std::exp(-p.rate * dt);
  for (int k = 0; k < grid.n; ++k) {
    const double u = grid.frequency(k);
    out.w[k] = discount * char_fn(u, dt, p);
    out.dw[k] = discount * char_fn_dsigma(u, dt, p);
  }
  out.w[0] *= 0.5;
  out.dw[0] *= 0.5;
  return out;
}

double payoff_at(double x, const MarketParams& p) {
  return std::max(alpha(p.kind) * p.strike * std::expm1(x), 0.0);
}

double payoff_slope(double x, const MarketParams& p) {
  return payoff_at(x, p) > 0.0 ? alpha(p.kind) * p.strike * std::exp(x) : 0.0;
}

// g(x) = c(x) - h(x) and g'(x) for coefficients f = w .* V.
struct GapFunction {
  const Eigen::VectorXcd& f;
  const Grid& grid;
  const MarketParams& p;

  std::pair<double, double> operator()(double x) const {
    const auto [value, slope] = cosine_series(f, grid.angle(x));
    return {value - payoff_at(x, p), slope * kPi / grid.width() - payoff_slope(x, p)};
  }
};

// Uniform scan grid over the payoff-positive part of [a, b] with the cosine
// and sine tables needed to evaluate c(x) there by two matrix-vector products.
// The grid is fixed for a given (p, c, horizon), so it is shared by every step
// and every Bermudan of the Richardson ladder.
struct ScanBasis {
  Eigen::ArrayXd xs;
  Eigen::ArrayXd payoff;
  Eigen::MatrixXd cos_table;  // cos(k theta_i)
  Eigen::MatrixXd sin_table;  // sin(k theta_i)

  bool empty() const { return xs.size() == 0; }
};

ScanBasis make_scan_basis(const Grid& grid, const MarketParams& p, const CosConfig& c) {
  ScanBasis out;
  double lo = grid.a, hi = grid.b;
  if (p.kind == OptionKind::Put) {
    hi = std::min(hi, 0.0);
  } else {
    lo = std::max(lo, 0.0);
  }
  if (!(lo < hi)) return out;
  out.xs = Eigen::ArrayXd::LinSpaced(c.scan_points, lo, hi);
  out.payoff = out.xs.unaryExpr([&](double x) { return payoff_at(x, p); });
  out.cos_table.resize(c.scan_points, grid.n);
  out.sin_table.resize(c.scan_points, grid.n);
  std::vector<std::complex<double>> powers(grid.n);
  for (int i = 0; i < c.scan_points; ++i) {
    unit_powers(grid.angle(out.xs[i]), 0, grid.n, powers.data());
    for (int k = 0; k < grid.n; ++k) {
      out.cos_table(i, k) = powers[k].real();
      out.sin_table(i, k) = powers[k].imag();
    }
  }
  return out;
}

// c(x_i) - h(x_i) on the scan grid.
Eigen::ArrayXd scan_gap(const Eigen::VectorXcd& f, const ScanBasis& basis) {
  const Eigen::ArrayXd values = (basis.cos_table * f.real() - basis.sin_table * f.imag()).array();
  return values - basis.payoff;
}

// Safeguarded Newton inside a sign-changing bracket, bisection when a Newton
// iterate leaves the bracket or the iteration budget runs out.
double polish_root(const GapFunction& gap, double lo, double hi, double g_lo, double g_hi, const CosConfig& c) {
  double x = lo - g_lo * (hi - lo) / (g_hi - g_lo);
  int newton_iters = 0;
  for (int iter = 0; iter < c.newton_max_iter + 200; ++iter) {
    const auto [g, dg] = gap(x);
    if (std::abs(g) <= c.newton_tol) return x;
    if ((g < 0.0) == (g_lo < 0.0)) {
      lo = x;
      g_lo = g;
    } else {
      hi = x;
    }
    double next = x - g / dg;
    const bool newton_ok = newton_iters < c.newton_max_iter && std::isfinite(next) && next > lo && next < hi;
    if (newton_ok) {
      ++newton_iters;
    } else {
      next = 0.5 * (lo + hi);
    }
    // bracket collapsed to machine resolution: the sign change is located
    // as well as doubles allow, even when |g| stays above newton_tol because
    // the payoff is large there
    if (next == x || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x)))
      return next;
    x = next;
  }
  throw NewtonDiverged("early-exercise point polish did not reach |c - h| <= " + std::to_string(c.newton_tol) +
                       " in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

ExercisePoints locate_roots(const Eigen::VectorXcd& f, const ScanBasis& basis, const Grid& grid,
                            const MarketParams& p, const CosConfig& c) {
  ExercisePoints out;
  if (basis.empty()) return out;
  const Eigen::ArrayXd& xs = basis.xs;
  const Eigen::ArrayXd g = scan_gap(f, basis);
  const GapFunction gap{f, grid, p};
  for (Eigen::Index i = 0; i + 1 < xs.size(); ++i) {
    if (g[i] == 0.0) {
      if (i > 0) out.points.push_back(xs[i]);
      continue;
    }
    if ((g[i] < 0.0) != (g[i + 1] < 0.0) && g[i + 1] != 0.0) {
      out.points.push_back(polish_root(gap, xs[i], xs[i + 1], g[i], g[i + 1], c));
    }
  }
  return out;
}

struct Segment {
  double lo;
  double hi;
  bool exercise;
};

std::vector<Segment> exercise_segments(const ExercisePoints& roots, const Eigen::VectorXcd& f, const Grid& grid,
                                       const MarketParams& p) {
  std::vector<double> cuts{grid.a};
  cuts.insert(cuts.end(), roots.points.begin(), roots.points.end());
  cuts.push_back(grid.b);
  const GapFunction gap{f, grid, p};
  std::vector<Segment> out;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (!(cuts[i] < cuts[i + 1])) continue;
    const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
    const bool exercise = payoff_at(mid, p) > 0.0 && gap(mid).first < 0.0;
    out.push_back({cuts[i], cuts[i + 1], exercise});
  }
  return out;
}

struct BermudanSolve {
  double price;
  double vega;
  double delta;
  bool exercisable_at_start;
};

BermudanSolve solve_bermudan(const MarketParams& p, int m_dates, const CosConfig& c, bool with_vega,
                             const Grid& grid, const ScanBasis& basis) {
  const double dt = p.tau / m_dates;
  const StepWeights weights = step_weights(p, grid, dt);
  ContinuationProduct<double> product(grid.n, c.fft_mode);

  Eigen::VectorXd v = payoff_coeffs(grid.a, grid.b, grid, p);
  Eigen::VectorXd v_dot = Eigen::VectorXd::Zero(grid.n);
  Eigen::VectorXd next(grid.n), next_dot(grid.n), scratch(grid.n);
  Eigen::VectorXcd f(grid.n), f_dot(grid.n);

  for (int m = m_dates - 1; m >= 1; --m) {
    f = weights.w.cwiseProduct(v.cast<std::complex<double>>());
    if (with_vega) {
      f_dot = weights.dw.cwiseProduct(v.cast<std::complex<double>>()) +
              weights.w.cwiseProduct(v_dot.cast<std::complex<double>>());
    }
    const ExercisePoints roots = locate_roots(f, basis, grid, p, c);
    next.setZero();
    next_dot.setZero();
    // Boundary terms of the sigma-derivative cancel because c = h at every root.
    for (const Segment& seg : exercise_segments(roots, f, grid, p)) {
      if (seg.exercise) {
        next += payoff_coeffs(seg.lo, seg.hi, grid, p);
        continue;
      }
      product.set_interval(grid.angle(seg.lo), grid.angle(seg.hi));
      product.apply(f, scratch);
      next += scratch;
      if (with_vega) {
        product.apply(f_dot, scratch);
        next_dot += scratch;
      }
    }
    v.swap(next);
    v_dot.swap(next_dot);
  }

  f = weights.w.cwiseProduct(v.cast<std::complex<double>>());
  const double x0 = p.log_moneyness();
  const double theta0 = grid.angle(x0);
  const auto [value, slope] = cosine_series(f, theta0);
  BermudanSolve out{value, 0.0, slope * kPi / grid.width() / p.s0, false};
  if (with_vega) {
    f_dot = weights.dw.cwiseProduct(v.cast<std::complex<double>>()) +
            weights.w.cwiseProduct(v_dot.cast<std::complex<double>>());
    out.vega = cosine_series(f_dot, theta0).first;
  }
  const double h0 = payoff_at(x0, p);
  out.exercisable_at_start = h0 > 0.0 && value < h0;
  return out;
}

}  // namespace

void CosConfig::validate() const {
  if (n_terms < 16) throw std::invalid_argument("n_terms must be at least 16");
  if (fft_mode == FftMode::Fft && !std::has_single_bit(static_cast<unsigned>(n_terms)))
    throw std::invalid_argument("n_terms must be a power of two in fft mode");
  if (!(trunc_width > 0.0)) throw std::invalid_argument("trunc_width must be positive");
  if (richardson_level < 0) throw std::invalid_argument("richardson_level must be non-negative");
  if (richardson_level > 16) throw std::invalid_argument("richardson_level is unreasonably large");
  if (!(newton_tol > 0.0)) throw std::invalid_argument("newton_tol must be positive");
  if (newton_max_iter < 1) throw std::invalid_argument("newton_max_iter must be at least 1");
  if (scan_points < 2) throw std::invalid_argument("scan_points must be at least 2");
}

CosGrid<double> truncation_interval(const MarketParams& p, const CosConfig& c, double horizon) {
  if (!(horizon > 0.0)) throw std::invalid_argument("truncation_interval: horizon must be positive");
  const double xi1 = (p.rate - p.div_yield - 0.5 * p.sigma * p.sigma) * horizon;
  const double xi2 = 0.5 * p.sigma * p.sigma * horizon;
  const double x0 = p.log_moneyness();
  const double half = c.trunc_width * std::sqrt(xi2);
  return {std::min(x0, x0 + xi1) - half, std::max(x0, x0 + xi1) + half, c.n_terms};
}

Eigen::VectorXd continuation_coeffs(double x1, double x2, const Eigen::VectorXd& vk_next, double dt,
                                    const MarketParams& p, const CosGrid<double>& grid, FftMode mode) {
  if (vk_next.size() != grid.n)
    throw std::invalid_argument("continuation_coeffs: coefficient vector has length " +
                                std::to_string(vk_next.size()) + ", grid expects " + std::to_string(grid.n));
  if (!(x1 < x2)) throw std::invalid_argument("continuation_coeffs: requires x1 < x2");
  const StepWeights weights = step_weights(p, grid, dt);
  const Eigen::VectorXcd f = weights.w.cwiseProduct(vk_next.cast<std::complex<double>>());
  ContinuationProduct<double> product(grid.n, mode);
  product.set_interval(grid.angle(x1), grid.angle(x2));
  Eigen::VectorXd out(grid.n);
  product.apply(f, out);
  return out;
}

double continuation_value(double x, const Eigen::VectorXd& vk, double dt, const MarketParams& p,
                          const CosGrid<double>& grid) {
  const StepWeights weights = step_weights(p, grid, dt);
  const Eigen::VectorXcd f = weights.w.cwiseProduct(vk.cast<std::complex<double>>());
  return cosine_series(f, grid.angle(x)).first;
}

ExercisePoints find_exercise_points(const Eigen::VectorXd& vk, double dt, const MarketParams& p,
                                    const CosGrid<double>& grid, const CosConfig& c) {
  const StepWeights weights = step_weights(p, grid, dt);
  const Eigen::VectorXcd f = weights.w.cwiseProduct(vk.cast<std::complex<double>>());
  return locate_roots(f, make_scan_basis(grid, p, c), grid, p, c);
}

PriceResult price_bermudan(const MarketParams& p, int m_dates, const CosConfig& c, bool with_vega) {
  p.validate();
  c.validate();
  if (m_dates < 1) throw std::invalid_argument("price_bermudan: m_dates must be at least 1");
  const Grid grid = truncation_interval(p, c, p.tau);
  const BermudanSolve s = solve_bermudan(p, m_dates, c, with_vega, grid, make_scan_basis(grid, p, c));
  PriceResult out;
  out.price = s.price;
  out.vega = s.vega;
  out.delta = s.delta;
  out.in_stopping_region = s.exercisable_at_start;
  return out;
}

double richardson_extrapolate(std::span<const double, 4> ladder) {
  return (64.0 * ladder[3] - 56.0 * ladder[2] + 14.0 * ladder[1] - ladder[0]) / 21.0;
}

PriceResult price_american(const MarketParams& p, const CosConfig& c, bool with_vega) {
  p.validate();
  c.validate();
  std::array<double, 4> prices{}, vegas{}, deltas{};
  bool exercisable = false;
  const Grid grid = truncation_interval(p, c, p.tau);
  const ScanBasis basis = make_scan_basis(grid, p, c);
  for (int i = 0; i < 4; ++i) {
    const int m_dates = 1 << (c.richardson_level + i);
    const BermudanSolve s = solve_bermudan(p, m_dates, c, with_vega, grid, basis);
    prices[i] = s.price;
    vegas[i] = s.vega;
    deltas[i] = s.delta;
    exercisable = s.exercisable_at_start;  // finest ladder member decides
  }
  PriceResult out;
  out.bermudan_ladder.assign(prices.begin(), prices.end());
  out.price = richardson_extrapolate(prices);
  out.vega = richardson_extrapolate(vegas);
  out.delta = richardson_extrapolate(deltas);

  const double h0 = p.payoff();
  if (h0 > 0.0 && (exercisable || out.price <= h0)) {
    out.in_stopping_region = true;
    out.price = h0;
    out.vega = 0.0;
    out.delta = alpha(p.kind);
  }
  return out;
}

MarketParams call_via_symmetry(const MarketParams& p) {
  if (p.kind != OptionKind::Call) throw std::invalid_argument("call_via_symmetry: expects a call");
  MarketParams out = p;
  out.s0 = p.strike;
  out.strike = p.s0;
  out.rate = p.div_yield;
  out.div_yield = p.rate;
  out.kind = OptionKind::Put;
  return out;
}

double vega_cos(const MarketParams& p, const CosConfig& c) { return price_american(p, c, true).vega; }

}  // namespace amiv
