#pragma once

// Gibbs states and mixed-state QFI: the generator form for unitary encoding and
// the adiabatic form with frozen populations.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comet/analytic.hpp"
#include "comet/errors.hpp"
#include "comet/linalg.hpp"
#include "comet/models.hpp"
#include "comet/operators.hpp"
#include "comet/spectral.hpp"

namespace comet {

// rho = sum_n p_n |v_n><v_n| over the columns kept; dropped columns carry p = 0.
struct DensityState {
  RealVector populations;
  DenseMatrix vectors;
  BasisTag basis;
  double beta = std::numeric_limits<double>::infinity();
  RealVector energies;  // of the generating Hamiltonian, when there is one

  Index rank() const { return populations.size(); }

  void validate() const {
    if (vectors.rows() != basis.dim() || vectors.cols() != populations.size())
      throw BasisMismatch("DensityState: vectors do not match basis or populations");
    if ((populations.array() < 0.0).any()) throw ConfigError("DensityState: negative population");
    if (std::abs(populations.sum() - 1.0) > 1e-10)
      throw ConfigError("DensityState: populations sum to " + fmt(populations.sum()));
    const DenseMatrix gram = vectors.adjoint() * vectors;
    if ((gram - DenseMatrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() > 1e-10)
      throw ConfigError("DensityState: eigenvectors not orthonormal");
  }

  static DensityState pure(const StateVector& psi) {
    DensityState rho{RealVector::Ones(1), DenseMatrix(psi.amplitudes()), psi.basis(), std::numeric_limits<double>::infinity(), {}};
    return rho;
  }

  DenseMatrix matrix() const { return vectors * populations.cast<cplx>().asDiagonal() * vectors.adjoint(); }

  // Population-weighted top-Fock-level tail.
  double tail() const {
    double out = 0.0;
    for (Index k = 0; k < rank(); ++k)
      out += populations[k] * fock_tail(StateVector::normalized(vectors.col(k), basis));
    return out;
  }
};

// exp(-beta (E - E_0)) / Z; the shift keeps the exponentials in range.
inline RealVector gibbs_populations(const RealVector& energies, double beta) {
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  const double e0 = energies.minCoeff();
  RealVector p = (-(beta * (energies.array() - e0))).exp().matrix();
  return p / p.sum();
}

struct ThermalOptions {
  double population_floor = 1e-16;  // relative to p_0; states below are dropped
};

inline void require_thermal_tail(const DensityState& rho, const TruncationSpec& trunc) {
  const double tail = rho.tail();
  if (tail > trunc.tail_tol)
    throw TruncationError("truncation insufficient for this temperature: tail " + fmt(tail) + " at n_max " +
                              std::to_string(trunc.n_max),
                          trunc.n_max, tail);
}

inline DensityState thermal_state(const OperatorMatrix& H, double beta, const TruncationSpec& trunc,
                                  const ThermalOptions& opts = {}) {
  if (!(beta > 0.0)) throw ConfigError("thermal_state: beta must be positive");
  if (H.basis().fock_dim() != trunc.fock_dim()) throw BasisMismatch("thermal_state: truncation mismatch");
  const auto es = dense_eigensystem(H);
  const RealVector p = gibbs_populations(es.values, beta);
  Index keep = 1;
  while (keep < p.size() && p[keep] > opts.population_floor * p[0]) ++keep;
  DensityState rho{p.head(keep) / p.head(keep).sum(), es.vectors.leftCols(keep), H.basis(), beta, es.values};
  require_thermal_tail(rho, trunc);
  return rho;
}

// Bose-distributed Fock-diagonal state with q = exp(-freq beta), normalized on the truncated space.
inline DensityState bose_state(const TruncationSpec& trunc, double freq_beta, const ThermalOptions& opts = {}) {
  trunc.validate();
  if (!(freq_beta > 0.0)) throw ConfigError("bose_state: freq * beta must be positive");
  const Index dim = trunc.fock_dim();
  RealVector energies = RealVector::LinSpaced(dim, 0.0, static_cast<double>(dim - 1));
  const RealVector p = gibbs_populations(energies, freq_beta);
  Index keep = 1;
  while (keep < dim && p[keep] > opts.population_floor * p[0]) ++keep;
  DensityState rho{p.head(keep) / p.head(keep).sum(), DenseMatrix::Identity(dim, keep), BasisTag::fock(dim), freq_beta,
                   energies};
  require_thermal_tail(rho, trunc);
  return rho;
}

// rho (x) |s><s| for a pure factor appended on the right.
inline DensityState tensor(const DensityState& rho, const StateVector& s) {
  DensityState out;
  out.populations = rho.populations;
  out.beta = rho.beta;
  for (Index k = 0; k < rho.rank(); ++k) {
    const auto col = tensor(StateVector::normalized(rho.vectors.col(k), rho.basis), s);
    if (k == 0) {
      out.basis = col.basis();
      out.vectors.resize(col.dim(), rho.rank());
    }
    out.vectors.col(k) = col.amplitudes();
  }
  return out;
}

namespace detail {
// 2 sum_{n,m in S} (p_n - p_m)^2/(p_n + p_m) |h_nm|^2 + 4 sum_{n in S} p_n (||h v_n||^2 - sum_{m in S} |h_mn|^2).
// The second sum is the coupling to states outside the kept set, which carry p = 0.
inline double mixed_qfi(const RealVector& p, const DenseMatrix& h_in_set, const RealVector& h_col_norms2) {
  const Index r = p.size();
  double inside = 0.0, outside = 0.0;
  for (Index n = 0; n < r; ++n) {
    double kept = 0.0;
    for (Index m = 0; m < r; ++m) {
      kept += std::norm(h_in_set(m, n));
      const double s = p[n] + p[m];
      if (m == n || s < 1e-300) continue;
      const double d = p[n] - p[m];
      inside += d * d / s * std::norm(h_in_set(m, n));
    }
    outside += p[n] * std::max(0.0, h_col_norms2[n] - kept);
  }
  return 2.0 * inside + 4.0 * outside;
}
}  // namespace detail

// QFI of a mixed state under unitary encoding with local generator h_op.
inline double thermal_qfi_generator(const DensityState& rho, const OperatorMatrix& h_op) {
  require_same_basis(rho.basis, h_op.basis(), "thermal_qfi_generator");
  if (!h_op.is_hermitian(1e-10 * std::max(1.0, h_op.max_abs())))
    throw ConfigError("thermal_qfi_generator: generator is not Hermitian");
  const DenseMatrix hv = h_op.matrix() * rho.vectors;
  const DenseMatrix in_set = rho.vectors.adjoint() * hv;
  const RealVector norms2 = hv.colwise().squaredNorm().transpose();
  return detail::mixed_qfi(rho.populations, in_set, norms2);
}

struct ParametricQfi {
  double value = 0.0;
  double classical = 0.0;    // sum (d p_n)^2 / p_n for a lambda-dependent Gibbs state
  int degenerate_pairs = 0;  // coupled pairs closer than 1e-10 ||H||, skipped
  double tail = 0.0;         // population-weighted top-Fock tail of the kept eigenvectors
};

// q^n / Z for n = 0.. while q^n stays above floor; q = exp(-freq beta).
inline RealVector bose_populations(double freq_beta, double floor = 1e-16) {
  if (!(freq_beta > 0.0)) throw ConfigError("bose_populations: freq * beta must be positive");
  if (!(floor > 0.0 && floor < 1.0)) throw ConfigError("bose_populations: floor must lie in (0, 1)");
  const double q = std::exp(-freq_beta);
  std::vector<double> p{1.0};
  while (p.back() * q > floor) p.push_back(p.back() * q);
  RealVector out = Eigen::Map<RealVector>(p.data(), static_cast<Index>(p.size()));
  return out / out.sum();
}

// Frozen populations p (energy order) on the eigenstates es of H, with dH = dH/dlambda:
// 2 sum_{n != m} (p_n - p_m)^2/(p_n + p_m) |<n|dH|m>|^2 / (E_m - E_n)^2.
inline ParametricQfi frozen_population_qfi(const Eigensystem& es, const OperatorMatrix& dH, const RealVector& populations) {
  const Index dim = es.vectors.rows();
  if (dH.dim() != dim || es.vectors.cols() != dim)
    throw BasisMismatch("frozen_population_qfi: needs the complete eigensystem of a matching Hamiltonian");
  if (populations.size() < 1 || populations.size() > dim)
    throw ConfigError("frozen_population_qfi: population count must be in [1, dim]");
  if ((populations.array() < 0.0).any() || std::abs(populations.sum() - 1.0) > 1e-10)
    throw ConfigError("frozen_population_qfi: populations must be a probability vector");
  const Index r = populations.size();
  const DenseMatrix dH_rows = es.vectors.leftCols(r).adjoint() * (dH.matrix() * es.vectors);
  const double spread = std::max(std::abs(es.values[0]), std::abs(es.values[dim - 1]));
  const double gap_floor = 1e-10 * std::max(1.0, spread);
  const double elem_floor = 1e-12 * std::max(1e-300, dH.max_abs());
  ParametricQfi out;
  double sum = 0.0;
  for (Index n = 0; n < r; ++n) {
    for (Index m = 0; m < dim; ++m) {
      if (m == n) continue;
      const double pm = m < r ? populations[m] : 0.0;
      const double s = populations[n] + pm;
      if (s < 1e-300) continue;
      const double elem2 = std::norm(dH_rows(n, m));
      const double gap = es.values[m] - es.values[n];
      if (std::abs(gap) < gap_floor) {
        if (std::sqrt(elem2) > elem_floor) ++out.degenerate_pairs;
        continue;
      }
      const double d = populations[n] - pm;
      // pairs with both members kept are visited twice, pairs with m outside once
      sum += (m < r ? 1.0 : 2.0) * d * d / s * elem2 / (gap * gap);
    }
  }
  out.value = 2.0 * sum;
  if (dH.basis().has_leading_fock())
    for (Index n = 0; n < r; ++n)
      out.tail += populations[n] * fock_tail(StateVector::normalized(es.vectors.col(n), dH.basis()));
  return out;
}

inline OperatorMatrix central_derivative(const HamiltonianFamily& family, double lambda, double h) {
  return (1.0 / (2.0 * h)) * (family(lambda + h) - family(lambda - h));
}

inline ParametricQfi thermal_qfi_parametric(const HamiltonianFamily& family, double lambda, const RealVector& populations,
                                            double step = 0.0) {
  const double h = step > 0.0 ? step : default_step(lambda);
  const OperatorMatrix H = family(lambda);
  if (populations.size() < 1 || populations.size() > H.dim())
    throw ConfigError("thermal_qfi_parametric: population count must be in [1, dim]");
  return frozen_population_qfi(dense_eigensystem(H), central_derivative(family, lambda, h), populations);
}

// Gibbs state of H(lambda) itself; also reports the classical term of a lambda-dependent Gibbs state.
inline ParametricQfi thermal_qfi_parametric(const HamiltonianFamily& family, double lambda, double beta,
                                            double step = 0.0, const ThermalOptions& opts = {}) {
  const OperatorMatrix H = family(lambda);
  const auto es = dense_eigensystem(H);
  const RealVector p_all = gibbs_populations(es.values, beta);
  Index keep = 1;
  while (keep < p_all.size() && p_all[keep] > opts.population_floor * p_all[0]) ++keep;
  const RealVector p = p_all.head(keep) / p_all.head(keep).sum();
  const OperatorMatrix dH = central_derivative(family, lambda, step > 0.0 ? step : default_step(lambda));
  auto out = frozen_population_qfi(es, dH, p);
  RealVector dE(keep);
  for (Index n = 0; n < keep; ++n) dE[n] = std::real(es.vectors.col(n).dot(dH.matrix() * es.vectors.col(n)));
  const double mean = p.dot(dE);
  for (Index n = 0; n < keep; ++n) {
    const double dp = -beta * p[n] * (dE[n] - mean);
    out.classical += dp * dp / p[n];
  }
  return out;
}

// Frozen Bose populations (q = exp(-omega beta), from k = 0) on the effective SOC
// eigenstates S(xi)|n>. In the normal-mode frame <n|d m> = (d xi/d Omega) <n|(a^dag^2 - a^2)/2|m>,
// so this is the generator form with h = (d xi/d Omega) (i/2)(a^dag^2 - a^2) on a Bose state.
inline double soc_effective_thermal_qfi(const SocParams& p, double omega_beta, const TruncationSpec& frame_trunc) {
  p.validate();
  const double w = 1.0 - p.u();
  if (!(w > 0.0)) throw ConfigError("soc_effective_thermal_qfi: requires u < 1");
  const double dxi = -p.u() / (4.0 * p.Omega * w);
  const auto b = fock_operators(frame_trunc);
  const auto a2 = b.a * b.a, ad2 = b.adag * b.adag;
  const OperatorMatrix h = cplx(0.0, 0.5 * dxi) * (ad2 - a2);
  return thermal_qfi_generator(bose_state(frame_trunc, p.omega * omega_beta), h);
}

// 2 (1+q)^2 / (1+q^2) (d xi / d Omega)^2.
inline double soc_effective_thermal_qfi_closed_form(const SocParams& p, double omega_beta) {
  const double q = std::exp(-p.omega * omega_beta);
  const double dxi = -p.u() / (4.0 * p.Omega * (1.0 - p.u()));
  return 2.0 * (1.0 + q) * (1.0 + q) / (1.0 + q * q) * dxi * dxi;
}

// Effective crystal quench to B = B_c/2 from a Bose state: 2 sinh^4(delta t)/delta^2 (1+q)^2/(1+q^2).
inline double crystal_effective_thermal_qfi_closed_form(const CrystalParams& p, double t, double delta_beta) {
  const double q = std::exp(-delta_beta);
  return quench_qfi_special(p, t).qfi * (1.0 + q) * (1.0 + q) / (1.0 + q * q);
}

// Effective crystal model at any B: generator form with the closed-form local generator.
inline double crystal_effective_thermal_qfi(const CrystalParams& p, double t, double delta_beta,
                                            const TruncationSpec& trunc) {
  return thermal_qfi_generator(bose_state(trunc, delta_beta), local_generator_closed_form(p, t, trunc));
}

// QFI of U(t; lambda) rho0 U^dag with h = i U^dag dU/dlambda applied to the kept eigenvectors
// of rho0 by central differences, refined like refine_fidelity_qfi. Branch propagators are
// built once per step size and shared across times.
inline std::vector<QfiEstimate> thermal_evolved_qfi_series(const HamiltonianFamily& family, double lambda,
                                                           const DensityState& rho0, const std::vector<double>& times,
                                                           double step = 0.0, const QfiOptions& opts = {},
                                                           const PropagatorOptions& popts = {}) {
  rho0.validate();
  const Propagator center(family(lambda), popts);
  std::map<double, std::pair<Propagator, Propagator>> branches;
  auto estimate = [&](double h, double t) {
    auto it = branches.find(h);
    if (it == branches.end())
      it = branches.emplace(h, std::make_pair(Propagator(family(lambda + h), popts), Propagator(family(lambda - h), popts))).first;
    const auto& [plus, minus] = it->second;
    DenseMatrix hv(rho0.vectors.rows(), rho0.rank());
    for (Index k = 0; k < rho0.rank(); ++k) {
      const Vector v = rho0.vectors.col(k);
      hv.col(k) = cplx(0.0, 1.0 / (2.0 * h)) * center.apply(plus.apply(v, t) - minus.apply(v, t), -t);
    }
    const DenseMatrix in_set = rho0.vectors.adjoint() * hv;
    const DenseMatrix herm = 0.5 * (in_set + in_set.adjoint());
    const RealVector norms2 = hv.colwise().squaredNorm().transpose();
    return detail::mixed_qfi(rho0.populations, herm, norms2);
  };
  std::vector<QfiEstimate> out;
  out.reserve(times.size());
  for (double t : times) {
    if (t == 0.0) {
      out.push_back({0.0, 0.0, 0.0});
      continue;
    }
    double h = step > 0.0 ? step : default_step(lambda);
    double f_prev = estimate(h, t);
    double r_prev = std::nan("");
    bool done = false;
    for (int k = 0; k < opts.max_halvings && !done; ++k) {
      h *= 0.5;
      const double f = estimate(h, t);
      const double r = (4.0 * f - f_prev) / 3.0;
      if (std::isfinite(r_prev) && std::abs(r - r_prev) <= opts.rel_tol * std::abs(r)) {
        out.push_back({r, std::abs(r - r_prev), h});
        done = true;
      }
      r_prev = r;
      f_prev = f;
    }
    if (!done) throw NumericalError("thermal QFI step refinement did not converge at t = " + fmt(t));
  }
  return out;
}

struct EvolvedQfiPoint {
  double value = 0.0;
  double tail = 0.0;  // population-weighted top-Fock tail of the evolved state
};

// QFI of rho0 evolved under a fixed H, from the exact local generator
// h(t) = int_0^t e^{iHs} dH e^{-iHs} ds, whose eigenbasis elements are
// dH_nm (e^{i w t} - 1) / (i w) = dH_nm t e^{i w t/2} sinc(w t/2), w = E_n - E_m.
// `es` must be the complete eigensystem of H.
inline std::vector<EvolvedQfiPoint> thermal_evolved_qfi_spectral(const Eigensystem& es, const OperatorMatrix& dH,
                                                                 const DensityState& rho0,
                                                                 const std::vector<double>& times) {
  rho0.validate();
  require_same_basis(rho0.basis, dH.basis(), "thermal_evolved_qfi_spectral");
  const Index d = es.values.size();
  if (d != dH.dim() || es.vectors.cols() != d)
    throw ConfigError("thermal_evolved_qfi_spectral: eigensystem must be complete");
  const DenseMatrix D = es.vectors.adjoint() * (dH.matrix() * es.vectors);
  const DenseMatrix C = es.vectors.adjoint() * rho0.vectors;
  std::vector<EvolvedQfiPoint> out;
  out.reserve(times.size());
  DenseMatrix G(d, d);
  for (double t : times) {
    if (t < 0.0) throw ConfigError("thermal_evolved_qfi_spectral: times must be non-negative");
    EvolvedQfiPoint pt;
    for (Index m = 0; m < d; ++m)
      for (Index n = 0; n < d; ++n) {
        const double x = 0.5 * (es.values[n] - es.values[m]) * t;
        const double sinc = std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
        G(n, m) = D(n, m) * (t * sinc * std::exp(cplx(0.0, x)));
      }
    const DenseMatrix hC = G * C;
    const DenseMatrix in_set = C.adjoint() * hC;
    const RealVector norms2 = hC.colwise().squaredNorm().transpose();
    pt.value = detail::mixed_qfi(rho0.populations, 0.5 * (in_set + in_set.adjoint()), norms2);
    DenseMatrix evolved = C;
    for (Index n = 0; n < d; ++n) evolved.row(n) *= std::exp(cplx(0.0, -es.values[n] * t));
    evolved = es.vectors * evolved;
    for (Index k = 0; k < rho0.rank(); ++k)
      pt.tail += rho0.populations[k] * fock_tail(StateVector::normalized(evolved.col(k), rho0.basis));
    out.push_back(pt);
  }
  return out;
}

inline QfiEstimate thermal_evolved_qfi(const HamiltonianFamily& family, double lambda, const DensityState& rho0,
                                       double t, double step = 0.0, const QfiOptions& opts = {},
                                       const PropagatorOptions& popts = {}) {
  return thermal_evolved_qfi_series(family, lambda, rho0, {t}, step, opts, popts).front();
}

}  // namespace comet
