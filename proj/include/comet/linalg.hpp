#pragma once

// Eigensolvers and propagators behind the spectral, dynamics and thermal modules.
//
// * dense_eigensystem: full spectrum via Eigen (real path when H is real).
// * lowest_eigenpairs: banded LAPACK bisection for the eigenvalues, inverse
//   iteration with a sparse LU for the vectors. Memory stays O(dim * band).
// * Propagator: cached spectral decomposition for small spaces, Lanczos
//   (Krylov) exponential for large ones.

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "comet/errors.hpp"
#include "comet/operators.hpp"

namespace comet {

struct Eigensystem {
  RealVector values;    // ascending
  DenseMatrix vectors;  // column k belongs to values[k]
};

namespace detail {

inline void require_hermitian(const OperatorMatrix& H, const char* where) {
  const double defect = H.hermiticity_defect();
  if (defect > 1e-10 * std::max(1.0, H.max_abs()))
    throw ConfigError(std::string(where) + ": operator is not Hermitian (defect " + fmt(defect) + ")");
}

// Largest-magnitude amplitude made real and positive.
inline void fix_phase(Eigen::Ref<Vector> v) {
  Index imax = 0;
  v.cwiseAbs2().maxCoeff(&imax);
  const cplx c = v[imax];
  if (std::abs(c) > 0.0) v *= std::conj(c) / std::abs(c);
}

inline double spectral_scale(const OperatorMatrix& H) {
  // Gershgorin-style bound on ||H||.
  RealVector rows = RealVector::Zero(H.dim());
  const auto& m = H.matrix();
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) rows[it.row()] += std::abs(it.value());
  return std::max(1.0, rows.maxCoeff());
}

struct BandOrdering {
  std::vector<Index> new_to_old;
  Index kd = 0;
};

// Bandwidth of H under the identity ordering and under the reversed-factor
// ordering (last factor fastest); the narrower one wins.
inline BandOrdering best_band_ordering(const OperatorMatrix& H) {
  const auto& factors = H.basis().factors();
  const Index n = H.dim();
  auto bandwidth = [&](const std::vector<Index>& old_to_new) {
    Index kd = 0;
    const auto& m = H.matrix();
    for (Index k = 0; k < m.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(m, k); it; ++it)
        kd = std::max<Index>(kd, std::abs(old_to_new[it.row()] - old_to_new[it.col()]));
    return kd;
  };
  std::vector<Index> ident(n);
  std::iota(ident.begin(), ident.end(), Index{0});
  BandOrdering best{ident, bandwidth(ident)};
  if (factors.size() >= 2) {
    // old index = sum_f i_f * stride_f (factor 0 fastest); new ordering reverses the strides.
    std::vector<Index> dims;
    for (const auto& f : factors) dims.push_back(f.dim);
    std::vector<Index> old_to_new(n);
    for (Index old = 0; old < n; ++old) {
      Index rem = old;
      std::vector<Index> digits(dims.size());
      for (std::size_t f = 0; f < dims.size(); ++f) {
        digits[f] = rem % dims[f];
        rem /= dims[f];
      }
      Index idx = 0;
      for (std::size_t f = 0; f < dims.size(); ++f) idx = idx * dims[f] + digits[f];
      old_to_new[old] = idx;
    }
    const Index kd = bandwidth(old_to_new);
    if (kd < best.kd) {
      std::vector<Index> new_to_old(n);
      for (Index old = 0; old < n; ++old) new_to_old[old_to_new[old]] = old;
      best = {std::move(new_to_old), kd};
    }
  }
  return best;
}

template <typename Scalar>
RealVector banded_lowest_eigenvalues(const OperatorMatrix& H, const BandOrdering& ord, int count) {
  const lapack_int n = static_cast<lapack_int>(H.dim());
  const lapack_int kd = static_cast<lapack_int>(ord.kd);
  const lapack_int ldab = kd + 1;
  std::vector<Index> old_to_new(n);
  for (Index i = 0; i < n; ++i) old_to_new[ord.new_to_old[i]] = i;
  std::vector<Scalar> ab(static_cast<std::size_t>(ldab) * n, Scalar(0));
  const auto& m = H.matrix();
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      const Index i = old_to_new[it.row()], j = old_to_new[it.col()];
      if (i > j) continue;  // upper triangle, column-major band storage
      if constexpr (std::is_same_v<Scalar, double>)
        ab[static_cast<std::size_t>(kd + i - j + j * ldab)] = it.value().real();
      else
        ab[static_cast<std::size_t>(kd + i - j + j * ldab)] = it.value();
    }
  std::vector<double> w(n);
  std::vector<lapack_int> ifail(n);
  lapack_int found = 0;
  const double abstol = 2.0 * LAPACKE_dlamch('S');
  lapack_int info = 0;
  Scalar qdummy(0), zdummy(0);
  if constexpr (std::is_same_v<Scalar, double>) {
    info = LAPACKE_dsbevx(LAPACK_COL_MAJOR, 'N', 'I', 'U', n, kd, ab.data(), ldab, &qdummy, 1, 0.0, 0.0, 1, count,
                          abstol, &found, w.data(), &zdummy, 1, ifail.data());
  } else {
    info = LAPACKE_zhbevx(LAPACK_COL_MAJOR, 'N', 'I', 'U', n, kd, ab.data(), ldab, &qdummy, 1, 0.0, 0.0, 1, count,
                          abstol, &found, w.data(), &zdummy, 1, ifail.data());
  }
  if (info != 0 || found != count)
    throw NumericalError("banded eigensolver failed (info " + std::to_string(info) + ")");
  RealVector out(count);
  for (int i = 0; i < count; ++i) out[i] = w[i];
  return out;
}

template <typename Scalar>
Eigensystem inverse_iteration(const OperatorMatrix& H, const RealVector& eigenvalues) {
  using Mat = Eigen::SparseMatrix<Scalar>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Index n = H.dim();
  const double scale = spectral_scale(H);
  Mat A;
  if constexpr (std::is_same_v<Scalar, double>)
    A = H.matrix().real();
  else
    A = H.matrix();
  Mat I(n, n);
  I.setIdentity();

  Eigensystem out{RealVector(eigenvalues.size()), DenseMatrix(n, eigenvalues.size())};
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> gauss;
  std::vector<Vec> found;
  for (Index k = 0; k < eigenvalues.size(); ++k) {
    const double lam = eigenvalues[k];
    const double eta = 1e-10 * std::max(1.0, std::abs(lam)) + 1e-13 * scale;
    Eigen::SparseLU<Mat> lu;
    lu.compute(Mat(A - Scalar(lam - eta) * I));
    if (lu.info() != Eigen::Success) throw NumericalError("inverse iteration: factorization failed");
    Vec x(n);
    for (Index i = 0; i < n; ++i) x[i] = Scalar(gauss(rng));
    // Vectors of earlier eigenvalues inside the same cluster must be projected out.
    std::vector<const Vec*> cluster;
    for (Index j = 0; j < k; ++j)
      if (std::abs(eigenvalues[j] - lam) < 1e-8 * scale) cluster.push_back(&found[static_cast<std::size_t>(j)]);
    double residual = 0.0;
    for (int iter = 0; iter < 8; ++iter) {
      for (const Vec* c : cluster) x -= c->dot(x) * (*c);
      x.normalize();
      x = lu.solve(x);
      if (lu.info() != Eigen::Success || !x.allFinite()) throw NumericalError("inverse iteration: solve failed");
      for (const Vec* c : cluster) x -= c->dot(x) * (*c);
      x.normalize();
      const Vec Hx = A * x;
      const double rq = std::real(x.dot(Hx));
      residual = (Hx - Scalar(rq) * x).norm();
      if (iter >= 1 && residual < 1e-11 * scale) break;
    }
    if (residual > 1e-8 * scale)
      throw NumericalError("eigensolver non-convergence: residual " + fmt(residual));
    const Vec Hx = A * x;
    out.values[k] = std::real(x.dot(Hx));
    found.push_back(x);
    out.vectors.col(k) = x.template cast<cplx>();
  }
  return out;
}

}  // namespace detail

inline Eigensystem dense_eigensystem(const OperatorMatrix& H) {
  detail::require_hermitian(H, "dense_eigensystem");
  Eigensystem es;
  if (H.is_real()) {
    const Eigen::MatrixXd A = Eigen::MatrixXd(H.matrix().real());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A);
    if (solver.info() != Eigen::Success) throw NumericalError("dense eigensolver did not converge");
    es.values = solver.eigenvalues();
    es.vectors = solver.eigenvectors().cast<cplx>();
  } else {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(H.dense());
    if (solver.info() != Eigen::Success) throw NumericalError("dense eigensolver did not converge");
    es.values = solver.eigenvalues();
    es.vectors = solver.eigenvectors();
  }
  for (Index k = 0; k < es.vectors.cols(); ++k) detail::fix_phase(es.vectors.col(k));
  return es;
}

struct EigenOptions {
  Index dense_limit = 600;  // at or below this dimension always solve densely
};

// Lowest `count` eigenpairs, ascending, phase-fixed.
inline Eigensystem lowest_eigenpairs(const OperatorMatrix& H, int count, const EigenOptions& opts = {}) {
  detail::require_hermitian(H, "lowest_eigenpairs");
  if (count < 1 || count > H.dim()) throw ConfigError("lowest_eigenpairs: bad eigenpair count");
  if (H.dim() > opts.dense_limit) {
    const auto ord = detail::best_band_ordering(H);
    if (ord.kd * 8 <= H.dim()) {
      const bool real = H.is_real();
      const RealVector w = real ? detail::banded_lowest_eigenvalues<double>(H, ord, count)
                                : detail::banded_lowest_eigenvalues<cplx>(H, ord, count);
      Eigensystem es = real ? detail::inverse_iteration<double>(H, w) : detail::inverse_iteration<cplx>(H, w);
      for (Index k = 0; k < es.vectors.cols(); ++k) detail::fix_phase(es.vectors.col(k));
      return es;
    }
  }
  auto full = dense_eigensystem(H);
  return {full.values.head(count), full.vectors.leftCols(count)};
}

struct PropagatorOptions {
  Index dense_limit = 1200;   // spectral decomposition at or below, Krylov above
  int krylov_dim = 40;
  double krylov_tol = 1e-12;  // absolute error budget per unit time
  double norm_tol = 1e-8;     // norm drift that raises a NumericalError
};

// exp(-i H t) for a fixed Hermitian H.
class Propagator {
 public:
  explicit Propagator(OperatorMatrix H, PropagatorOptions opts = {}) : H_(std::move(H)), opts_(opts) {
    detail::require_hermitian(H_, "Propagator");
    if (H_.dim() <= opts_.dense_limit) spectrum_ = dense_eigensystem(H_);
    scale_ = detail::spectral_scale(H_);
  }

  bool is_dense() const noexcept { return spectrum_.has_value(); }
  const OperatorMatrix& hamiltonian() const noexcept { return H_; }

  Vector apply(const Vector& v, double t) const {
    if (v.size() != H_.dim()) throw BasisMismatch("propagator applied to vector of wrong dimension");
    if (t == 0.0) return v;
    Vector out;
    if (spectrum_) {
      const Vector c = spectrum_->vectors.adjoint() * v;
      Vector phased(c.size());
      for (Index k = 0; k < c.size(); ++k) phased[k] = std::exp(cplx(0.0, -spectrum_->values[k] * t)) * c[k];
      out = spectrum_->vectors * phased;
    } else {
      out = krylov(v, t);
    }
    const double drift = std::abs(out.norm() - v.norm());
    if (drift > opts_.norm_tol * std::max(1.0, v.norm()))
      throw NumericalError("propagation-accuracy error: norm drift " + fmt(drift));
    return out;
  }

  StateVector evolve(const StateVector& psi, double t) const {
    require_same_basis(psi.basis(), H_.basis(), "evolve");
    return StateVector::normalized(apply(psi.amplitudes(), t), psi.basis());
  }

  // States at each of `times` (ascending, >= 0), propagating incrementally.
  std::vector<StateVector> trajectory(const StateVector& psi0, const std::vector<double>& times) const {
    require_same_basis(psi0.basis(), H_.basis(), "trajectory");
    std::vector<StateVector> out;
    out.reserve(times.size());
    Vector v = psi0.amplitudes();
    double now = 0.0;
    for (double t : times) {
      if (t < now) throw ConfigError("trajectory times must be ascending and non-negative");
      v = apply(v, t - now);
      now = t;
      out.push_back(StateVector::normalized(v, psi0.basis()));
    }
    return out;
  }

 private:
  Vector krylov(const Vector& v0, double t) const {
    const Index n = H_.dim();
    const int mmax = static_cast<int>(std::min<Index>(opts_.krylov_dim, n));
    const auto& A = H_.matrix();
    Vector w = v0;
    const double sign = t >= 0 ? 1.0 : -1.0;
    double remaining = std::abs(t);
    double dt = std::min(remaining, 10.0 / scale_);
    DenseMatrix V(n, mmax + 1);
    while (remaining > 0.0) {
      const double beta0 = w.norm();
      if (beta0 == 0.0) return w;
      V.col(0) = w / beta0;
      RealVector alpha(mmax), beta(mmax);
      int m = 0;
      double beta_last = 0.0;
      for (; m < mmax; ++m) {
        Vector u = A * V.col(m);
        alpha[m] = std::real(V.col(m).dot(u));
        // full reorthogonalization
        for (int pass = 0; pass < 2; ++pass) u -= V.leftCols(m + 1) * (V.leftCols(m + 1).adjoint() * u);
        const double b = u.norm();
        beta[m] = b;
        beta_last = b;
        if (b < 1e-14 * scale_) {  // invariant subspace
          ++m;
          beta_last = 0.0;
          break;
        }
        V.col(m + 1) = u / b;
      }
      const int k = m;
      RealVector diag = alpha.head(k);
      RealVector sub = beta.head(std::max(0, k - 1));
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
      tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
      const Eigen::MatrixXd& Q = tri.eigenvectors();
      const RealVector& ev = tri.eigenvalues();
      for (;;) {
        const double step = std::min(dt, remaining);
        Vector y = Vector::Zero(k);
        for (int j = 0; j < k; ++j) y += std::exp(cplx(0.0, -sign * ev[j] * step)) * Q(0, j) * Q.col(j).cast<cplx>();
        const double err = beta0 * beta_last * std::abs(y[k - 1]);
        // |y[k-1]| is only resolved to ~k eps, which bounds the estimate from below
        const double floor = 4.0 * k * std::numeric_limits<double>::epsilon() * beta0 * std::max(1.0, beta_last);
        if (err <= std::max(opts_.krylov_tol * step, floor) || beta_last == 0.0) {
          w = beta0 * (V.leftCols(k) * y);
          if (step == dt && err < std::max(0.1 * opts_.krylov_tol * step, floor)) dt = step * 1.5;
          remaining -= step;
          break;
        }
        if (step < 1e-12 / scale_) throw NumericalError("Krylov step size underflow");
        dt = 0.5 * step;
      }
    }
    return w;
  }

  OperatorMatrix H_;
  PropagatorOptions opts_;
  std::optional<Eigensystem> spectrum_;
  double scale_ = 1.0;
};

}  // namespace comet
