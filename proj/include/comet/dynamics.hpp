#pragma once

// Sudden-quench dynamics: time evolution, excitation trajectories, evolved-state
// QFI and the local generator i U^dag dU/dlambda.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "comet/analytic.hpp"
#include "comet/errors.hpp"
#include "comet/linalg.hpp"
#include "comet/models.hpp"
#include "comet/operators.hpp"
#include "comet/spectral.hpp"

namespace comet {

enum class ModelKind { Full, Effective };

inline const char* model_tag(ModelKind kind) { return kind == ModelKind::Full ? "full" : "effective"; }

inline StateVector evolve(const OperatorMatrix& H, const StateVector& psi0, double t, const PropagatorOptions& opts = {}) {
  return Propagator(H, opts).evolve(psi0, t);
}

struct QuenchPoint {
  double t = 0.0;
  double x2 = 0.0;
  double n_mean = 0.0;
  double tail = 0.0;
  bool beyond_cap = false;  // <n> above half the superradiant ground-state excitation number
};

struct QuenchTrajectory {
  std::vector<QuenchPoint> points;
  std::optional<double> breakdown_time;  // first time with <n> > 0.5 cap
  double cap = 0.0;                      // 0 when B_final > B_c
};

// Crystal Hamiltonian after the quench; p.B is the final field.
inline OperatorMatrix crystal_hamiltonian(const CrystalParams& p, const TruncationSpec& trunc, ModelKind kind) {
  return kind == ModelKind::Full ? dicke_hamiltonian(p, trunc) : crystal_effective_hamiltonian(p, trunc);
}

inline StateVector crystal_start_state(const CrystalParams& p, const TruncationSpec& trunc, ModelKind kind) {
  return kind == ModelKind::Full ? crystal_initial_state(p, trunc) : vacuum(trunc);
}

// Evolution from the decoupled state (vacuum x lowest Sx) under the final Hamiltonian.
inline QuenchTrajectory quench_trajectory(const CrystalParams& p, const std::vector<double>& times,
                                          const TruncationSpec& trunc, ModelKind kind = ModelKind::Full,
                                          const PropagatorOptions& opts = {}) {
  p.validate();
  trunc.validate();
  const Propagator prop(crystal_hamiltonian(p, trunc, kind), opts);
  const auto states = prop.trajectory(crystal_start_state(p, trunc, kind), times);
  QuenchTrajectory out;
  out.cap = p.B <= p.B_c() ? gs_excitation_cap(p) : 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    BosonMoments m;
    try {
      m = boson_moments(states[i], trunc);
    } catch (const TruncationError& e) {
      throw TruncationError(std::string(e.what()) + " at t = " + fmt(times[i]), e.n_max(), e.tail());
    }
    QuenchPoint pt{times[i], m.x2, m.n_mean, m.tail, out.cap > 0.0 && m.n_mean > 0.5 * out.cap};
    if (pt.beyond_cap && !out.breakdown_time) out.breakdown_time = pt.t;
    out.points.push_back(pt);
  }
  return out;
}

inline QuenchTrajectory quench_trajectory(const CrystalParams& p, double B_final, const std::vector<double>& times,
                                          const TruncationSpec& trunc, ModelKind kind = ModelKind::Full,
                                          const PropagatorOptions& opts = {}) {
  return quench_trajectory(p.with_B(B_final), times, trunc, kind, opts);
}

// QFI of exp(-i H(lambda) t) psi0 at each time, step-refined per time. Branch
// trajectories are computed once per step size and shared across times.
inline std::vector<QfiEstimate> evolved_qfi_series(const HamiltonianFamily& family, const StateVector& psi0,
                                                   double lambda, const std::vector<double>& times, double step = 0.0,
                                                   const QfiOptions& qopts = {}, const PropagatorOptions& popts = {}) {
  std::map<double, std::pair<std::vector<StateVector>, std::vector<StateVector>>> cache;
  auto branch_states = [&](double h) -> const auto& {
    auto it = cache.find(h);
    if (it == cache.end()) {
      auto plus = Propagator(family(lambda + h), popts).trajectory(psi0, times);
      auto minus = Propagator(family(lambda - h), popts).trajectory(psi0, times);
      it = cache.emplace(h, std::make_pair(std::move(plus), std::move(minus))).first;
    }
    return it->second;
  };
  std::vector<QfiEstimate> out;
  out.reserve(times.size());
  const double h0 = step > 0.0 ? step : default_step(lambda);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const BranchPair branches = [&](double h) {
      const auto& s = branch_states(h);
      return std::make_pair(s.first[i].amplitudes(), s.second[i].amplitudes());
    };
    out.push_back(refine_fidelity_qfi(branches, h0, qopts));
  }
  return out;
}

inline QfiEstimate evolved_qfi(const HamiltonianFamily& family, const StateVector& psi0, double lambda, double t,
                               double step = 0.0, const QfiOptions& qopts = {}, const PropagatorOptions& popts = {}) {
  return evolved_qfi_series(family, psi0, lambda, {t}, step, qopts, popts).front();
}

// QFI for delta after a quench of the crystal to field p.B.
inline QfiEstimate crystal_evolved_qfi(const CrystalParams& p, double t, const TruncationSpec& trunc,
                                       ModelKind kind = ModelKind::Full, double step = 0.0) {
  const auto family = kind == ModelKind::Full ? dicke_family(p, trunc) : crystal_effective_family(p, trunc);
  return evolved_qfi(family, crystal_start_state(p, trunc, kind), p.delta, t, step);
}

struct SeriesOptions {
  double monitor_fraction = 0.8;  // term norms are measured on this leading block
};

// -i sum_{n < order} (it)^{n+1}/(n+1)! [H, H_lambda]_n, symmetrized.
inline OperatorMatrix generator_series(const OperatorMatrix& H, const OperatorMatrix& H_lambda, double t, int order,
                                       const SeriesOptions& opts = {}) {
  require_same_basis(H.basis(), H_lambda.basis(), "generator_series");
  if (order < 1) throw ConfigError("generator_series: order must be >= 1");
  const Index block = std::max<Index>(1, static_cast<Index>(opts.monitor_fraction * static_cast<double>(H.dim())));
  auto block_norm = [&](const SparseMatrix& m) {
    double r = 0.0;
    for (Index k = 0; k < std::min<Index>(block, m.outerSize()); ++k)
      for (SparseMatrix::InnerIterator it(m, k); it; ++it)
        if (it.row() < block) r = std::max(r, std::abs(it.value()));
    return r;
  };
  SparseMatrix nested = H_lambda.matrix();
  SparseMatrix sum(H.dim(), H.dim());
  cplx coeff(0.0, -1.0);  // -i (it)^{n+1}/(n+1)!, built up incrementally
  std::vector<double> term_norms;
  for (int n = 0; n < order; ++n) {
    coeff *= cplx(0.0, t) / static_cast<double>(n + 1);
    SparseMatrix term = coeff * nested;
    term_norms.push_back(block_norm(term));
    sum += term;
    if (n + 1 < order) {
      nested = SparseMatrix(H.matrix() * nested - nested * H.matrix());
      nested.prune([](Index, Index, const cplx& v) { return v != cplx(0.0); });
    }
  }
  if (order >= 4) {
    const double mid = term_norms[static_cast<std::size_t>(order / 2)];
    const double last = term_norms.back();
    const double scale = *std::max_element(term_norms.begin(), term_norms.end());
    if (last >= mid && last > 1e-14 * scale)
      throw NumericalError("generator_series: terms stop decreasing at t = " + fmt(t) +
                           "; use a smaller t or generator_exact");
  }
  return OperatorMatrix(SparseMatrix(0.5 * (sum + SparseMatrix(sum.adjoint()))), H.basis());
}

// xx X^2 + pp P^2 + s (XP + PX). Nested commutators of these close on the same
// three operators, so the series can be summed on coefficients alone.
struct QuadraticForm {
  double xx = 0.0;
  double pp = 0.0;
  double s = 0.0;

  OperatorMatrix on(const TruncationSpec& trunc) const {
    const auto q = quadrature_operators(trunc);
    return xx * (q.X * q.X) + pp * (q.P * q.P) + s * anticommutator(q.X, q.P);
  }
};

inline QuadraticForm crystal_effective_form(const CrystalParams& p) {
  p.validate();
  return {0.5 * p.delta * (1.0 - p.B_c() / p.B), 0.5 * p.delta, 0.0};
}

// d/d delta of the effective crystal Hamiltonian.
inline QuadraticForm crystal_effective_delta_derivative() { return {0.5, 0.5, 0.0}; }

// Same sum as generator_series, with [A, B] evaluated in the quadratic algebra:
// [A, B] = i (4(a_xx b_s - a_s b_xx) X^2 + 4(a_s b_pp - a_pp b_s) P^2 + 2(a_xx b_pp - a_pp b_xx)(XP + PX)).
inline QuadraticForm generator_series(const QuadraticForm& H, const QuadraticForm& H_lambda, double t, int order) {
  if (order < 1) throw ConfigError("generator_series: order must be >= 1");
  using C3 = std::array<cplx, 3>;
  const C3 h{H.xx, H.pp, H.s};
  C3 nested{H_lambda.xx, H_lambda.pp, H_lambda.s};
  C3 sum{};
  cplx coeff(0.0, -1.0);
  std::vector<double> term_norms;
  const cplx i4(0.0, 4.0), i2(0.0, 2.0);
  for (int n = 0; n < order; ++n) {
    coeff *= cplx(0.0, t) / static_cast<double>(n + 1);
    double norm = 0.0;
    for (int k = 0; k < 3; ++k) {
      sum[k] += coeff * nested[k];
      norm = std::max(norm, std::abs(coeff * nested[k]));
    }
    term_norms.push_back(norm);
    nested = C3{i4 * (h[0] * nested[2] - h[2] * nested[0]), i4 * (h[2] * nested[1] - h[1] * nested[2]),
                i2 * (h[0] * nested[1] - h[1] * nested[0])};
  }
  if (order >= 4) {
    const double mid = term_norms[static_cast<std::size_t>(order / 2)];
    const double scale = *std::max_element(term_norms.begin(), term_norms.end());
    if (term_norms.back() >= mid && term_norms.back() > 1e-14 * scale)
      throw NumericalError("generator_series: terms stop decreasing at t = " + fmt(t) +
                           "; use a smaller t or generator_exact");
  }
  return {sum[0].real(), sum[1].real(), sum[2].real()};
}

// Dense unitary exp(-i H t).
inline DenseMatrix unitary(const OperatorMatrix& H, double t) {
  const auto es = dense_eigensystem(H);
  Vector phases(es.values.size());
  for (Index k = 0; k < phases.size(); ++k) phases[k] = std::exp(cplx(0.0, -es.values[k] * t));
  return es.vectors * phases.asDiagonal() * es.vectors.adjoint();
}

// i U(t; lambda)^dag (U(t; lambda + h) - U(t; lambda - h)) / 2h with Richardson refinement.
inline OperatorMatrix generator_exact(const HamiltonianFamily& family, double lambda, double t, double step = 0.0,
                                      double rel_tol = 1e-7, int max_halvings = 8) {
  const OperatorMatrix H0 = family(lambda);
  if (t == 0.0) return OperatorMatrix::zero(H0.basis());
  const DenseMatrix U0adj = unitary(H0, t).adjoint();
  auto G = [&](double h) -> DenseMatrix {
    return cplx(0.0, 1.0) * U0adj * (unitary(family(lambda + h), t) - unitary(family(lambda - h), t)) / (2.0 * h);
  };
  double h = step > 0.0 ? step : 1e-3 * (lambda != 0.0 ? std::abs(lambda) : 1.0);
  DenseMatrix g_prev = G(h);
  std::optional<DenseMatrix> r_prev;
  for (int k = 0; k < max_halvings; ++k) {
    h *= 0.5;
    const DenseMatrix g = G(h);
    const DenseMatrix r = (4.0 * g - g_prev) / 3.0;
    const double scale = r.cwiseAbs().maxCoeff();
    if (scale == 0.0) return OperatorMatrix::zero(H0.basis());
    if (r_prev && (r - *r_prev).cwiseAbs().maxCoeff() <= rel_tol * scale) {
      const DenseMatrix sym = 0.5 * (r + r.adjoint());
      return OperatorMatrix(sym, H0.basis(), 1e-14 * scale);
    }
    r_prev = r;
    g_prev = g;
  }
  throw NumericalError("generator_exact: step refinement did not converge");
}

}  // namespace comet
