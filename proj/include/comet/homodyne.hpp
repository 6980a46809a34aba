#pragma once

// Simulated homodyne readout of a single bosonic mode: free rotation under
// freq * n, generalized quadrature statistics, position distributions and
// Husimi grids.
//
// Sign convention: rotate_state multiplies Fock amplitude n by e^{-i n theta},
// which is free evolution for t = theta / freq. The Heisenberg image of X is then
// X cos(theta) + P sin(theta) = Q(theta), so the X statistics of the rotated state
// are the Q(theta) statistics of the original one.

#include <cmath>
#include <complex>
#include <vector>

#include "comet/operators.hpp"

namespace comet {

inline void require_boson_only(const BasisTag& tag, const char* where) {
  if (tag.factors().size() != 1 || !tag.has_leading_fock())
    throw BasisMismatch(std::string(where) + ": expected a boson-only state, got " + tag.str());
}

// Fock amplitudes of a state with any trailing factors traced out. A product state
// with a spin keeps its boson factor exactly; otherwise use boson_reduced_density.
inline StateVector boson_marginal(const StateVector& psi, double purity_tol = 1e-10) {
  if (psi.basis().factors().size() == 1) {
    require_boson_only(psi.basis(), "boson_marginal");
    return psi;
  }
  const DenseMatrix rho = boson_reduced_density(psi);
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(rho);
  const Index top = rho.rows() - 1;
  if (1.0 - es.eigenvalues()[top] > purity_tol)
    throw NumericalError("boson_marginal: boson factor is entangled with the rest (purity defect " +
                         fmt(1.0 - es.eigenvalues()[top]) + ")");
  return StateVector::normalized(es.eigenvectors().col(top), BasisTag::fock(rho.rows()));
}

inline Vector rotation_phases(Index dim, double theta) {
  Vector ph(dim);
  for (Index n = 0; n < dim; ++n) ph[n] = std::polar(1.0, -theta * static_cast<double>(n));
  return ph;
}

inline StateVector rotate_state(const StateVector& psi, double theta) {
  require_boson_only(psi.basis(), "rotate_state");
  const Vector out = rotation_phases(psi.dim(), theta).cwiseProduct(psi.amplitudes());
  return StateVector::normalized(out, psi.basis());
}

// Free-evolution time under freq * n that realizes rotate_state(psi, theta).
inline double wait_time(double theta, double freq) {
  if (!(freq > 0.0)) throw ConfigError("wait_time: freq must be positive");
  return theta / freq;
}

inline DenseMatrix rotate_density(const DenseMatrix& rho, double theta) {
  const Vector ph = rotation_phases(rho.rows(), theta);
  return ph.asDiagonal() * rho * ph.conjugate().asDiagonal();
}

struct QuadratureMoments {
  double mean = 0.0;
  double second_moment = 0.0;
  double variance() const { return second_moment - mean * mean; }
};

// <Q> and <Q^2> with Q = X cos(theta) + P sin(theta), from the ladder operators directly.
// <Q^2> is taken as |Q psi|^2, which stays exact while the top Fock level is empty.
inline QuadratureMoments generalized_quadrature_moments(const StateVector& psi, double theta) {
  require_boson_only(psi.basis(), "generalized_quadrature_moments");
  const Index d = psi.dim();
  const Vector& c = psi.amplitudes();
  const cplx e = std::polar(1.0, -theta);
  // Q = (a e^{-i theta} + a^dag e^{i theta}) / sqrt 2
  Vector q = Vector::Zero(d);
  for (Index n = 0; n < d; ++n) {
    if (n + 1 < d) q[n] += e * std::sqrt(static_cast<double>(n + 1)) * c[n + 1];
    if (n > 0) q[n] += std::conj(e) * std::sqrt(static_cast<double>(n)) * c[n - 1];
  }
  q /= std::sqrt(2.0);
  return {c.dot(q).real(), q.squaredNorm()};
}

// Position readout through the sparse X operator.
inline QuadratureMoments x_moments(const StateVector& psi) {
  require_boson_only(psi.basis(), "x_moments");
  const auto X = quadrature_operators(TruncationSpec{static_cast<int>(psi.dim() - 1), 0.5}).X;
  const Vector xpsi = X.apply(psi.amplitudes());
  return {psi.amplitudes().dot(xpsi).real(), xpsi.squaredNorm()};
}

inline QuadratureMoments generalized_quadrature_moments(const DenseMatrix& rho, double theta) {
  const Index d = rho.rows();
  const cplx e = std::polar(1.0, -theta);
  DenseMatrix a = DenseMatrix::Zero(d, d);
  for (Index n = 1; n < d; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  const DenseMatrix Q = (e * a + std::conj(e) * a.adjoint()) / std::sqrt(2.0);
  const DenseMatrix Qrho = Q * rho;
  // Q^2 through Q^dag Q on the kept space, matching the pure-state |Q psi|^2
  return {Qrho.trace().real(), (Q * rho * Q.adjoint()).trace().real()};
}

// Normalized Hermite functions psi_n(q) for n = 0..count-1, eigenfunctions of X.
inline RealVector hermite_functions(double q, Index count) {
  RealVector h(count);
  if (count == 0) return h;
  h[0] = std::pow(kPi, -0.25) * std::exp(-0.5 * q * q);
  if (count > 1) h[1] = std::sqrt(2.0) * q * h[0];
  for (Index n = 1; n + 1 < count; ++n) {
    const double nn = static_cast<double>(n);
    h[n + 1] = std::sqrt(2.0 / (nn + 1.0)) * q * h[n] - std::sqrt(nn / (nn + 1.0)) * h[n - 1];
  }
  return h;
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

struct QuadratureDistribution {
  std::vector<double> grid;
  std::vector<double> density;
  double mass = 0.0;
};

inline constexpr double kMassDeficitTol = 1e-4;

namespace detail {

template <class Density>
QuadratureDistribution sample_distribution(const std::vector<double>& grid, Index dim, Density&& density_at) {
  if (grid.size() < 2) throw ConfigError("quadrature_distribution: grid needs at least two points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ConfigError("quadrature_distribution: grid must be strictly ascending");
  QuadratureDistribution out{grid, std::vector<double>(grid.size()), 0.0};
  for (std::size_t i = 0; i < grid.size(); ++i) out.density[i] = density_at(hermite_functions(grid[i], dim).cast<cplx>());
  out.mass = trapezoid(out.grid, out.density);
  if (1.0 - out.mass > kMassDeficitTol)
    throw ConfigError("quadrature_distribution: grid too narrow, captured mass " + fmt(out.mass));
  return out;
}

}  // namespace detail

// |<q, theta|psi>|^2 on an ascending grid, via the X wavefunction of the rotated state.
inline QuadratureDistribution quadrature_distribution(const StateVector& psi, double theta, const std::vector<double>& grid) {
  const Vector c = rotate_state(psi, theta).amplitudes();
  return detail::sample_distribution(grid, c.size(), [&](const Vector& h) { return std::norm(h.dot(c)); });
}

inline QuadratureDistribution quadrature_distribution(const DenseMatrix& rho, double theta, const std::vector<double>& grid) {
  const DenseMatrix r = rotate_density(rho, theta);
  return detail::sample_distribution(grid, r.rows(), [&](const Vector& h) { return h.dot(r * h).real(); });
}

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

// <n|alpha> for n = 0..dim-1.
inline Vector coherent_amplitudes(cplx alpha, Index dim) {
  Vector w(dim);
  w[0] = std::exp(-0.5 * std::norm(alpha));
  for (Index n = 1; n < dim; ++n) w[n] = w[n - 1] * alpha / std::sqrt(static_cast<double>(n));
  return w;
}

inline void require_husimi_radius(const std::vector<cplx>& alphas, Index dim) {
  const double limit = static_cast<double>(dim - 1) / 4.0;
  for (const auto& a : alphas)
    if (std::norm(a) > limit)
      throw ConfigError("husimi_grid: |alpha|^2 = " + fmt(std::norm(a)) + " exceeds n_max/4 = " + fmt(limit));
}

// Q(alpha) = |<alpha|psi>|^2 / pi.
inline std::vector<double> husimi_grid(const StateVector& psi, const std::vector<cplx>& alphas) {
  require_boson_only(psi.basis(), "husimi_grid");
  require_husimi_radius(alphas, psi.dim());
  std::vector<double> q(alphas.size());
  for (std::size_t i = 0; i < alphas.size(); ++i)
    q[i] = std::norm(coherent_amplitudes(alphas[i], psi.dim()).dot(psi.amplitudes())) / kPi;
  return q;
}

inline std::vector<double> husimi_grid(const DenseMatrix& rho, const std::vector<cplx>& alphas) {
  require_husimi_radius(alphas, rho.rows());
  std::vector<double> q(alphas.size());
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const Vector w = coherent_amplitudes(alphas[i], rho.rows());
    q[i] = w.dot(rho * w).real() / kPi;
  }
  return q;
}

// Row-major square grid of side 2*radius, re fastest.
inline std::vector<cplx> square_alpha_grid(double radius, std::size_t points) {
  const auto axis = uniform_grid(-radius, radius, points);
  std::vector<cplx> g;
  g.reserve(points * points);
  for (double im : axis)
    for (double re : axis) g.emplace_back(re, im);
  return g;
}

struct RotationChoice {
  double theta = 0.0;     // in [0, pi)
  double variance = 0.0;  // Var Q(theta) at the minimum
  bool flat = false;      // variance independent of theta within tolerance
};

// Var Q(theta) = (A+B)/2 + (A-B)/2 cos 2theta + C sin 2theta with A = Var X, B = Var P and
// C the symmetrized covariance; minimized in closed form.
template <class State>
RotationChoice optimal_rotation_angle(const State& psi, double flat_tol = 1e-9) {
  const auto mx = generalized_quadrature_moments(psi, 0.0);
  const auto mp = generalized_quadrature_moments(psi, kPi / 2);
  const auto md = generalized_quadrature_moments(psi, kPi / 4);
  const double A = mx.variance(), B = mp.variance();
  // Var Q(pi/4) = (A+B)/2 + C
  const double C = md.variance() - 0.5 * (A + B);
  const double half = 0.5 * (A - B);
  const double amp = std::hypot(half, C);
  RotationChoice r;
  r.flat = amp <= flat_tol * 0.5 * (A + B);
  double theta = 0.5 * std::atan2(-C, -half);
  if (theta < 0.0) theta += kPi;
  if (theta >= kPi) theta -= kPi;
  r.theta = r.flat ? 0.0 : theta;
  r.variance = 0.5 * (A + B) - amp;
  return r;
}

}  // namespace comet
