#ifndef AMIV_COS_ENGINE_HPP
#define AMIV_COS_ENGINE_HPP

// Bermudan and American Black-Scholes pricing by Fourier-cosine expansion.
//
// The log-price state is x = log(S / K). Every backward step projects the
// option value onto N cosine coefficients on a fixed interval [a, b]; the
// continuation part of each coefficient is a Toeplitz-plus-Hankel
// matrix-vector product evaluated through length-2N FFTs.

#include <amiv/types.hpp>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include <array>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace amiv {

enum class FftMode { Fft, Direct };

struct CosConfig {
  int n_terms = 512;
  double trunc_width = 10.0;
  int richardson_level = 2;
  double newton_tol = 1e-10;
  int newton_max_iter = 50;
  int scan_points = 201;
  FftMode fft_mode = FftMode::Fft;

  void validate() const;
};

template <typename Scalar>
struct CosGrid {
  Scalar a;
  Scalar b;
  int n;

  Scalar width() const { return b - a; }
  /// u_k = k pi / (b - a)
  Scalar frequency(int k) const { return Scalar(k) * std::numbers::pi_v<Scalar> / (b - a); }
  /// Angle pi (x - a) / (b - a) used by the cosine basis.
  Scalar angle(Scalar x) const { return std::numbers::pi_v<Scalar> * (x - a) / (b - a); }
};

/// Early-exercise points of one time step, strictly increasing.
struct ExercisePoints {
  std::vector<double> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct PriceResult {
  double price = 0.0;
  double vega = 0.0;
  double delta = 0.0;
  /// Bermudan prices at 2^l, 2^(l+1), 2^(l+2), 2^(l+3) dates (American only).
  std::vector<double> bermudan_ladder;
  /// Spot sits inside the stopping region at t0: price is the payoff, vega 0.
  bool in_stopping_region = false;
};

// ---------------------------------------------------------------------------
// Scalar-generic kernels
// ---------------------------------------------------------------------------

/// Characteristic function of the log-price increment over dt:
/// exp(i u dt (r - q - sigma^2/2) - sigma^2 u^2 dt / 2).
template <typename Scalar>
std::complex<Scalar> char_fn(Scalar u, Scalar dt, const MarketParams& p) {
  const Scalar sigma = Scalar(p.sigma);
  const Scalar drift = Scalar(p.rate - p.div_yield) - sigma * sigma / Scalar(2);
  return std::exp(std::complex<Scalar>(-sigma * sigma * u * u * dt / Scalar(2), u * dt * drift));
}

/// d char_fn / d sigma
template <typename Scalar>
std::complex<Scalar> char_fn_dsigma(Scalar u, Scalar dt, const MarketParams& p) {
  const Scalar sigma = Scalar(p.sigma);
  return char_fn(u, dt, p) * std::complex<Scalar>(-sigma * u * u * dt, -u * dt * sigma);
}

/// exp(i m theta) for m in [m_begin, m_end), by recurrence re-anchored every 32 terms.
template <typename Scalar>
void unit_powers(Scalar theta, long m_begin, long m_end, std::complex<Scalar>* out) {
  constexpr long kAnchor = 32;
  const std::complex<Scalar> step = std::polar(Scalar(1), theta);
  std::complex<Scalar> z;
  for (long m = m_begin; m < m_end; ++m) {
    z = (m - m_begin) % kAnchor == 0 ? std::polar(Scalar(1), Scalar(m) * theta) : z * step;
    out[m - m_begin] = z;
  }
}

/// Analytic cosine coefficients of h(x) = max(alpha K (e^x - 1), 0) over [x1, x2]:
/// G_k = 2/(b-a) * int_{x1}^{x2} h(x) cos(u_k (x - a)) dx.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> payoff_coeffs(Scalar x1, Scalar x2, const CosGrid<Scalar>& grid,
                                                       const MarketParams& p) {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  if (!(x1 < x2)) throw std::invalid_argument("payoff_coeffs: requires x1 < x2");

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(grid.n);
  // restrict to the part of [x1, x2] where the payoff is positive
  Scalar lo = x1, hi = x2;
  if (p.kind == OptionKind::Put) {
    hi = std::min(hi, Scalar(0));
  } else {
    lo = std::max(lo, Scalar(0));
  }
  if (!(lo < hi)) return out;

  const Array k = Array::LinSpaced(grid.n, Scalar(0), Scalar(grid.n - 1));
  const Array u = k * std::numbers::pi_v<Scalar> / grid.width();
  std::vector<std::complex<Scalar>> powers_hi(grid.n), powers_lo(grid.n);
  unit_powers(grid.angle(hi), 0, grid.n, powers_hi.data());
  unit_powers(grid.angle(lo), 0, grid.n, powers_lo.data());
  Array cos_hi(grid.n), cos_lo(grid.n), sin_hi(grid.n), sin_lo(grid.n);
  for (int i = 0; i < grid.n; ++i) {
    cos_hi[i] = powers_hi[i].real();
    sin_hi[i] = powers_hi[i].imag();
    cos_lo[i] = powers_lo[i].real();
    sin_lo[i] = powers_lo[i].imag();
  }
  const Scalar e_hi = std::exp(hi), e_lo = std::exp(lo);

  // chi_k = int e^x cos(u (x - a)) dx, psi_k = int cos(u (x - a)) dx
  const Array chi = (cos_hi * e_hi - cos_lo * e_lo + u * (sin_hi * e_hi - sin_lo * e_lo)) / (Scalar(1) + u.square());
  Array psi(grid.n);
  psi(0) = hi - lo;
  psi.tail(grid.n - 1) = (sin_hi.tail(grid.n - 1) - sin_lo.tail(grid.n - 1)) / u.tail(grid.n - 1);

  const Scalar scale = Scalar(2) / grid.width() * Scalar(p.strike) * Scalar(alpha(p.kind));
  out = (scale * (chi - psi)).matrix();
  return out;
}

/// E(m) = int_{theta1}^{theta2} exp(i m theta) d theta. The Toeplitz entries of
/// the continuation matrix are E(j - k), the Hankel entries E(j + k).
template <typename Scalar>
std::complex<Scalar> cosine_moment(long m, Scalar theta1, Scalar theta2) {
  if (m == 0) return {theta2 - theta1, Scalar(0)};
  const Scalar mm = Scalar(m);
  const std::complex<Scalar> diff = std::polar(Scalar(1), mm * theta2) - std::polar(Scalar(1), mm * theta1);
  return diff / std::complex<Scalar>(Scalar(0), mm);
}

/// H_{k,j}(x1, x2) = 2/(b-a) int_{x1}^{x2} exp(i u_j (x - a)) cos(u_k (x - a)) dx
///                = (E(j + k) + E(j - k)) / pi.
template <typename Scalar>
std::complex<Scalar> continuation_kernel(int k, int j, Scalar theta1, Scalar theta2) {
  return (cosine_moment<Scalar>(j + k, theta1, theta2) + cosine_moment<Scalar>(j - k, theta1, theta2)) /
         std::numbers::pi_v<Scalar>;
}

/// Computes out_k = Re sum_j w_j H_{k,j} for one sub-interval [theta1, theta2]
/// of the angle domain [0, pi]. In FFT mode the Toeplitz and Hankel parts are
/// embedded in circulants of length 2N; kernel spectra are cached per interval
/// so several weight vectors can share them.
template <typename Scalar>
class ContinuationProduct {
 public:
  using Complex = std::complex<Scalar>;
  using CVector = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  ContinuationProduct(int n, FftMode mode) : n_(n), mode_(mode) {
    if (mode_ == FftMode::Fft) {
      const int len = 2 * n_;
      toeplitz_hat_.resize(len);
      hankel_hat_.resize(len);
      buffer_.resize(len);
      spectrum_.resize(len);
      twiddle_.resize(len);
      for (int f = 0; f < len; ++f) {
        // exp(-2 pi i f (N - 1) / 2N), reduced mod 2N for accuracy
        const long phase = (static_cast<long>(f) * (n_ - 1)) % len;
        twiddle_[f] = std::polar(Scalar(1), -Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(phase) / Scalar(len));
      }
    }
  }

  int size() const { return n_; }

  void set_interval(Scalar theta1, Scalar theta2) {
    if (has_interval_ && theta1 == theta1_ && theta2 == theta2_) return;
    has_interval_ = true;
    theta1_ = theta1;
    theta2_ = theta2;
    // moments_[m + N] = E(m) for m in [-N, 2N)
    const long count = 3L * n_;
    powers_hi_.resize(count);
    powers_lo_.resize(count);
    moments_.resize(count);
    unit_powers(theta2, -n_, 2L * n_, powers_hi_.data());
    unit_powers(theta1, -n_, 2L * n_, powers_lo_.data());
    for (long m = -n_; m < 2L * n_; ++m) {
      const long i = m + n_;
      moments_[i] = m == 0 ? Complex(theta2 - theta1, Scalar(0))
                           : (powers_hi_[i] - powers_lo_[i]) / Complex(Scalar(0), Scalar(m));
    }
    if (mode_ == FftMode::Direct) return;

    const int len = 2 * n_;
    // circulant for T_k = sum_j E(j - k) w_j: A[n mod 2N] = E(-n)
    buffer_.assign(len, Complex(0));
    buffer_[0] = moment(0);
    for (int i = 1; i < n_; ++i) {
      buffer_[i] = moment(-i);
      buffer_[len - i] = moment(i);
    }
    fft_.fwd(toeplitz_hat_, buffer_);
    // circulant for S_k = sum_j E(j + k) w_j after reversing w: B[n mod 2N] = E(N - 1 + n)
    buffer_.assign(len, Complex(0));
    for (int i = 0; i < n_; ++i) buffer_[i] = moment(n_ - 1 + i);
    for (int i = 1; i < n_; ++i) buffer_[len - i] = moment(n_ - 1 - i);
    fft_.fwd(hankel_hat_, buffer_);
  }

  /// out = Re(H w), with H_{k,j} = (E(j+k) + E(j-k)) / pi.
  void apply(const CVector& w, Eigen::Ref<Vector> out) {
    eigen_assert(w.size() == n_ && out.size() == n_);
    const Scalar inv_pi = Scalar(1) / std::numbers::pi_v<Scalar>;
    if (mode_ == FftMode::Direct) {
      for (int k = 0; k < n_; ++k) {
        Complex acc(0);
        for (int j = 0; j < n_; ++j) acc += w[j] * (moment(j + k) + moment(j - k));
        out[k] = acc.real() * inv_pi;
      }
      return;
    }
    const int len = 2 * n_;
    buffer_.assign(len, Complex(0));
    for (int j = 0; j < n_; ++j) buffer_[j] = w[j];
    fft_.fwd(spectrum_, buffer_);
    // spectrum of the reversed sequence from the forward one
    for (int f = 0; f < len; ++f) {
      const Complex reversed = twiddle_[f] * spectrum_[(len - f) % len];
      buffer_[f] = toeplitz_hat_[f] * spectrum_[f] + hankel_hat_[f] * reversed;
    }
    fft_.inv(spectrum_, buffer_);
    for (int k = 0; k < n_; ++k) out[k] = spectrum_[k].real() * inv_pi;
  }

 private:
  const Complex& moment(long m) const { return moments_[m + n_]; }

  int n_;
  FftMode mode_;
  bool has_interval_ = false;
  Scalar theta1_ = 0, theta2_ = 0;
  Eigen::FFT<Scalar> fft_;
  std::vector<Complex> toeplitz_hat_, hankel_hat_, buffer_, spectrum_, twiddle_;
  std::vector<Complex> moments_, powers_hi_, powers_lo_;
};

/// Value and angle-derivative of Re sum_k f_k exp(i k theta). The k = 0 half
/// weight is expected to be folded into f already.
template <typename Scalar>
std::pair<Scalar, Scalar> cosine_series(const Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>& f,
                                        Scalar theta) {
  const std::complex<Scalar> step = std::polar(Scalar(1), theta);
  std::complex<Scalar> z(1);
  Scalar value = 0, slope = 0;
  for (Eigen::Index k = 0; k < f.size(); ++k) {
    const std::complex<Scalar> term = f[k] * z;
    value += term.real();
    slope -= Scalar(k) * term.imag();
    z *= step;
  }
  return {value, slope};
}

// ---------------------------------------------------------------------------
// Pricing operations
// ---------------------------------------------------------------------------

/// [a, b] = x0 + xi1 -/+ L sqrt(xi2) with xi1 = (r - q - sigma^2/2) t and
/// xi2 = sigma^2 t / 2, stretched to also cover x0 -/+ L sqrt(xi2) when the
/// drift moves the centre that far. The fourth cumulant vanishes for
/// Black-Scholes.
CosGrid<double> truncation_interval(const MarketParams& p, const CosConfig& c, double horizon);

/// C_k(x1, x2) = e^{-r dt} sum'_j Re(phi(u_j, dt) V_j H_{k,j}(x1, x2)).
Eigen::VectorXd continuation_coeffs(double x1, double x2, const Eigen::VectorXd& vk_next, double dt,
                                    const MarketParams& p, const CosGrid<double>& grid, FftMode mode);

/// c(x) = e^{-r dt} sum'_k Re(phi(u_k, dt) exp(i u_k (x - a))) V_k.
double continuation_value(double x, const Eigen::VectorXd& vk, double dt, const MarketParams& p,
                          const CosGrid<double>& grid);

/// Roots of c(x) - h(x) inside the region where the payoff is positive.
ExercisePoints find_exercise_points(const Eigen::VectorXd& vk, double dt, const MarketParams& p,
                                    const CosGrid<double>& grid, const CosConfig& c);

PriceResult price_bermudan(const MarketParams& p, int m_dates, const CosConfig& c, bool with_vega = true);

/// Four-point Richardson extrapolation over Bermudan prices at
/// 2^l, 2^(l+1), 2^(l+2) and 2^(l+3) exercise dates.
PriceResult price_american(const MarketParams& p, const CosConfig& c, bool with_vega = true);

/// (64 V(2^{l+3}) - 56 V(2^{l+2}) + 14 V(2^{l+1}) - V(2^l)) / 21, ladder in increasing date count.
double richardson_extrapolate(std::span<const double, 4> ladder);

/// Put parameters (S <-> K, r <-> q) whose price equals the given call.
MarketParams call_via_symmetry(const MarketParams& p);

double vega_cos(const MarketParams& p, const CosConfig& c);

}  // namespace amiv

#endif  // AMIV_COS_ENGINE_HPP
