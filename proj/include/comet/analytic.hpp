#pragma once

// Closed-form results: squeezing, excitation numbers, QFI formulas, preparation
// time, Gaussian covariance dynamics and the local generator of the inverted
// oscillator quench.

#include <cmath>
#include <complex>

#include "comet/errors.hpp"
#include "comet/models.hpp"
#include "comet/operators.hpp"

namespace comet {

struct AdiabaticSchedule {
  double gamma = 0.01;  // adiabaticity rate, << 1
  double k_final = 0.0;

  void validate(const SocParams& p) const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("AdiabaticSchedule: gamma must lie in (0, 1)");
    if (!(k_final >= 0.0 && k_final < p.k_c())) throw ConfigError("AdiabaticSchedule: need 0 <= k_final < k_c");
  }
};

struct QuenchSpec {
  double B_initial = 0.0;
  double B_final = 0.0;
  double t = 0.0;

  void validate(const CrystalParams& p) const {
    if (!(B_initial > p.B_c())) throw ConfigError("QuenchSpec: B_initial must exceed B_c");
    if (!(B_final > 0.0)) throw ConfigError("QuenchSpec: B_final must be positive");
    if (!(t >= 0.0)) throw ConfigError("QuenchSpec: t must be >= 0");
  }
};

namespace detail {
inline double one_minus_u_checked(const SocParams& p, const char* where) {
  p.validate();
  const double w = 1.0 - p.u();
  if (!(w > 0.0)) throw ConfigError(std::string(where) + ": requires k < k_c");
  return w;
}
}  // namespace detail

// xi = -1/4 ln(1 - u).
inline double squeeze_parameter(const SocParams& p) {
  return -0.25 * std::log(detail::one_minus_u_checked(p, "squeeze_parameter"));
}

struct ExcitationEstimate {
  double exact = 0.0;   // sinh^2 xi
  double approx = 0.0;  // 1 / (4 sqrt(1 - u))
};

inline ExcitationEstimate mean_excitations_adiabatic(const SocParams& p) {
  const double w = detail::one_minus_u_checked(p, "mean_excitations_adiabatic");
  const double s = std::sinh(squeeze_parameter(p));
  return {s * s, 1.0 / (4.0 * std::sqrt(w))};
}

// u^2 / (8 Omega^2 (1 - u)^2).
inline double qfi_omega_adiabatic(const SocParams& p) {
  const double w = detail::one_minus_u_checked(p, "qfi_omega_adiabatic");
  const double u = p.u();
  return u * u / (8.0 * p.Omega * p.Omega * w * w);
}

// d xi / d Omega at fixed k: u / (4 Omega (1 - u)) in magnitude, negative sign.
inline double squeeze_rate_omega(const SocParams& p) {
  const double w = detail::one_minus_u_checked(p, "squeeze_rate_omega");
  return -p.u() / (4.0 * p.Omega * w);
}

// T = 1 / (2 gamma omega sqrt(1 - k_f^2/k_c^2)).
inline double adiabatic_time(const AdiabaticSchedule& s, const SocParams& p) {
  p.validate();
  s.validate(p);
  const double kc = p.k_c();
  return 1.0 / (2.0 * s.gamma * p.omega * std::sqrt(1.0 - s.k_final * s.k_final / (kc * kc)));
}

// 8 (omega/Omega)^2 gamma^2 <n>^2 T^2 with <n> ~ 1 / (4 sqrt(1 - u_f)).
inline double qfi_omega_time_form(const AdiabaticSchedule& s, const SocParams& p) {
  const double T = adiabatic_time(s, p);
  SocParams final_point = p;
  final_point.k = s.k_final;
  const double n = mean_excitations_adiabatic(final_point).approx;
  const double r = p.omega / p.Omega;
  return 8.0 * r * r * s.gamma * s.gamma * n * n * T * T;
}

inline double cramer_rao_bound(double qfi, int copies) {
  if (!(qfi > 0.0)) throw ConfigError("cramer_rao_bound: QFI must be positive");
  if (copies < 1) throw ConfigError("cramer_rao_bound: copies must be >= 1");
  return 1.0 / (static_cast<double>(copies) * qfi);
}

struct QuenchQfi {
  double qfi = 0.0;
  double n_mean = 0.0;
};

// Quench to B = B_c/2: <n> = sinh^2(delta t), I = 2 <n>^2 / delta^2.
inline QuenchQfi quench_qfi_special(const CrystalParams& p, double t) {
  p.validate();
  if (std::abs(p.B - 0.5 * p.B_c()) > 1e-12 * p.B_c())
    throw ConfigError("quench_qfi_special: requires B = B_c/2; use effective_covariance_evolution");
  if (!(t >= 0.0)) throw ConfigError("quench_qfi_special: t must be >= 0");
  const double s = std::sinh(p.delta * t);
  const double n = s * s;
  return {2.0 * n * n / (p.delta * p.delta), n};
}

struct Covariance {
  double xx = 0.5;  // <X^2> - <X>^2
  double pp = 0.5;
  double xp = 0.0;  // <XP + PX>/2 - <X><P>

  double n_mean() const { return 0.5 * (xx + pp - 1.0); }
  double determinant() const { return xx * pp - xp * xp; }
};

// Gaussian covariance under (delta/2) P^2 + (kappa/2) X^2 with kappa = delta (1 - B_c/B).
inline Covariance effective_covariance_evolution(const CrystalParams& p, double t, Covariance start = {}) {
  p.validate();
  if (!(t >= 0.0)) throw ConfigError("effective_covariance_evolution: t must be >= 0");
  const double d = p.delta;
  const double kappa = d * (1.0 - p.B_c() / p.B);
  // X(t) = c X + d s P,  P(t) = c P - kappa s X
  double c = 1.0, s = t;
  if (kappa > 0.0) {
    const double w = std::sqrt(d * kappa);
    c = std::cos(w * t);
    s = std::sin(w * t) / w;
  } else if (kappa < 0.0) {
    const double g = std::sqrt(-d * kappa);
    c = std::cosh(g * t);
    s = std::sinh(g * t) / g;
  }
  const double a = d * s, b = -kappa * s;
  Covariance out;
  out.xx = c * c * start.xx + a * a * start.pp + 2.0 * c * a * start.xp;
  out.pp = c * c * start.pp + b * b * start.xx + 2.0 * c * b * start.xp;
  out.xp = c * b * start.xx + c * a * start.pp + (c * c + a * b) * start.xp;
  return out;
}

struct GeneratorCoefficients {
  double cos_term = 0.0;  // (cos(sqrt(eps) t) - 1) / eps
  double sin_term = 0.0;  // (sin(sqrt(eps) t) - sqrt(eps) t) / eps^{3/2}
};

// Both functions are entire in eps; small |eps| t^2 uses their Taylor series,
// eps < 0 continues through complex sqrt(eps).
inline GeneratorCoefficients generator_coefficients(double eps, double t) {
  GeneratorCoefficients out;
  if (std::abs(eps) * t * t < 1e-2) {
    // sum_{n>=1} (-1)^n eps^{n-1} t^{2n}/(2n)!  and  t^{2n+1}/(2n+1)!
    double term_c = -t * t / 2.0, term_s = -t * t * t / 6.0;
    for (int n = 1; n < 30; ++n) {
      out.cos_term += term_c;
      out.sin_term += term_s;
      term_c *= -eps * t * t / ((2.0 * n + 1.0) * (2.0 * n + 2.0));
      term_s *= -eps * t * t / ((2.0 * n + 2.0) * (2.0 * n + 3.0));
      if (std::abs(term_c) < 1e-18 * std::abs(out.cos_term) && std::abs(term_s) < 1e-18 * std::abs(out.sin_term))
        break;
    }
    return out;
  }
  const std::complex<double> r = std::sqrt(std::complex<double>(eps, 0.0));
  out.cos_term = ((std::cos(r * t) - 1.0) / eps).real();
  out.sin_term = ((std::sin(r * t) - r * t) / (eps * r)).real();
  return out;
}

// Local generator for delta as the unknown parameter of the effective crystal model:
// (t/2)(X^2 + P^2) - (g^2/2B) f1 (XP + PX) + (g^2 delta/B) f2 (X^2 - P^2) - (g^4/B^2) f2 X^2,
// with eps = 4 delta^2 (1 - B_c/B).
inline OperatorMatrix local_generator_closed_form(const CrystalParams& p, double t, const TruncationSpec& trunc) {
  p.validate();
  if (!(t >= 0.0)) throw ConfigError("local_generator_closed_form: t must be >= 0");
  const double eps = 4.0 * p.delta * p.delta * (1.0 - p.B_c() / p.B);
  const auto f = generator_coefficients(eps, t);
  const auto q = quadrature_operators(trunc);
  const auto X2 = q.X * q.X, P2 = q.P * q.P, XP = anticommutator(q.X, q.P);
  const double g2B = p.g * p.g / p.B;
  return (0.5 * t) * (X2 + P2) - (0.5 * g2B * f.cos_term) * XP + (g2B * p.delta * f.sin_term) * (X2 - P2) -
         (g2B * g2B * f.sin_term) * X2;
}

}  // namespace comet
