#pragma once

// Ground states, gaps, boson moments and fidelity-susceptibility QFI.

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "comet/errors.hpp"
#include "comet/linalg.hpp"
#include "comet/models.hpp"
#include "comet/operators.hpp"

namespace comet {

struct GroundState {
  double energy = 0.0;
  StateVector psi;
};

inline GroundState ground_state(const OperatorMatrix& H, const EigenOptions& opts = {}) {
  const auto es = lowest_eigenpairs(H, 1, opts);
  return {es.values[0], StateVector::normalized(es.vectors.col(0), H.basis())};
}

// Plain E1 - E0.
inline double energy_gap(const OperatorMatrix& H, const EigenOptions& opts = {}) {
  const auto es = lowest_eigenpairs(H, 2, opts);
  return es.values[1] - es.values[0];
}

// Gap to the lowest excited state that `coupling` connects to the ground state.
inline double energy_gap_connected(const OperatorMatrix& H, const OperatorMatrix& coupling, int search = 6,
                                   const EigenOptions& opts = {}) {
  require_same_basis(H.basis(), coupling.basis(), "energy_gap_connected");
  const int count = static_cast<int>(std::min<Index>(search, H.dim()));
  const auto es = lowest_eigenpairs(H, count, opts);
  const Vector v0 = coupling.matrix() * es.vectors.col(0);
  const double scale = std::max(1e-300, v0.norm());
  for (int k = 1; k < count; ++k)
    if (std::abs(es.vectors.col(k).dot(v0)) > 1e-8 * scale) return es.values[k] - es.values[0];
  throw NumericalError("energy_gap_connected: no connected state among the lowest " + std::to_string(count));
}

struct BosonMoments {
  double n_mean = 0.0;
  double x2 = 0.0;  // <X^2>
  double p2 = 0.0;  // <P^2>
  double tail = 0.0;
};

// Second moments of the leading Fock factor; a tail above trunc.tail_tol throws.
inline BosonMoments boson_moments(const StateVector& psi, const TruncationSpec& trunc) {
  if (psi.basis().fock_dim() != trunc.fock_dim()) throw BasisMismatch("boson_moments: truncation mismatch");
  const Index nf = trunc.fock_dim();
  Eigen::Map<const DenseMatrix> M(psi.amplitudes().data(), nf, psi.dim() / nf);
  const auto q = quadrature_operators(trunc);
  BosonMoments m;
  for (Index n = 0; n < nf; ++n) m.n_mean += static_cast<double>(n) * M.row(n).squaredNorm();
  // <A^2> = ||A psi||^2 for Hermitian A on the boson factor
  m.x2 = (q.X.matrix() * M).squaredNorm();
  m.p2 = (q.P.matrix() * M).squaredNorm();
  m.tail = fock_tail(psi);
  if (m.tail > trunc.tail_tol)
    throw TruncationError("truncation insufficient: tail " + fmt(m.tail) + " at n_max " +
                              std::to_string(trunc.n_max),
                          trunc.n_max, m.tail);
  return m;
}

inline BosonMoments ground_moments(const OperatorMatrix& H, const TruncationSpec& trunc, const EigenOptions& opts = {}) {
  return boson_moments(ground_state(H, opts).psi, trunc);
}

struct QfiEstimate {
  double value = 0.0;
  double error = 0.0;  // |difference| of the last two extrapolated estimates
  double step = 0.0;   // smallest step used
};

struct QfiOptions {
  double rel_tol = 1e-3;
  int max_halvings = 10;
  double level_crossing_overlap = 0.5;
};

// Pair of normalized states at lambda + h and lambda - h.
using BranchPair = std::function<std::pair<Vector, Vector>(double h)>;

namespace detail {
// 4 ||psi+ - e^{i phi} psi-||^2 / (2h)^2 = 8 (1 - |<psi-|psi+>|) / (2h)^2, phase-aligned for stability.
inline double fidelity_qfi(const Vector& plus, const Vector& minus, double h, double crossing_overlap) {
  const cplx ov = minus.dot(plus);
  const double mag = std::abs(ov);
  if (mag < crossing_overlap)
    throw NumericalError("level crossing detected: overlap " + fmt(mag) + " at step " + fmt(h));
  const cplx phase = mag > 0.0 ? ov / mag : cplx(1.0);
  const double dist2 = (plus - phase * minus).squaredNorm();
  return 4.0 * dist2 / (4.0 * h * h);
}
}  // namespace detail

// Central fidelity estimate F(h) = I + c h^2 + ..., refined by halving h and
// Richardson extrapolation until two extrapolated values agree to rel_tol.
inline QfiEstimate refine_fidelity_qfi(const BranchPair& branches, double h0, const QfiOptions& opts = {}) {
  if (!(h0 > 0.0)) throw ConfigError("QFI step must be positive");
  auto F = [&](double h) {
    const auto [plus, minus] = branches(h);
    return detail::fidelity_qfi(plus, minus, h, opts.level_crossing_overlap);
  };
  double h = h0;
  double f_prev = F(h);
  double r_prev = std::nan("");
  for (int k = 0; k < opts.max_halvings; ++k) {
    h *= 0.5;
    const double f = F(h);
    // states that do not move with lambda at all
    if (f_prev < 1e-28 / (h0 * h0) && f < 1e-28 / (h * h)) return {0.0, 0.0, h};
    const double r = (4.0 * f - f_prev) / 3.0;
    if (std::isfinite(r_prev)) {
      const double err = std::abs(r - r_prev);
      if (err <= opts.rel_tol * std::abs(r)) return {r, err, h};
    }
    r_prev = r;
    f_prev = f;
  }
  throw NumericalError("QFI step refinement did not converge");
}

inline double default_step(double lambda) { return 1e-4 * (lambda != 0.0 ? std::abs(lambda) : 1.0); }

// Ground-state QFI of a Hamiltonian family at lambda (factor-4 convention).
inline QfiEstimate qfi_fidelity(const HamiltonianFamily& family, double lambda, double step = 0.0,
                                const QfiOptions& opts = {}, const EigenOptions& eig = {}) {
  const BranchPair branches = [&](double h) {
    return std::make_pair(ground_state(family(lambda + h), eig).psi.amplitudes(),
                          ground_state(family(lambda - h), eig).psi.amplitudes());
  };
  return refine_fidelity_qfi(branches, step > 0.0 ? step : default_step(lambda), opts);
}

}  // namespace comet
