#pragma once

// Independent reference computations used only by the tests. Everything here is
// deliberately naive: explicit loops, dense matrices, no shared code paths with
// the library beyond the basic types.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline Mat annihilation(int n_max) {
  Mat a = Mat::Zero(n_max + 1, n_max + 1);
  for (int m = 1; m <= n_max; ++m) a(m - 1, m) = std::sqrt(double(m));
  return a;
}

// Kronecker product by index arithmetic, left factor fastest.
inline Mat kron_left_fastest(const Mat& A, const Mat& B) {
  const auto da = A.rows(), db = B.rows();
  Mat K = Mat::Zero(da * db, da * db);
  for (Eigen::Index i = 0; i < da; ++i)
    for (Eigen::Index j = 0; j < da; ++j)
      for (Eigen::Index k = 0; k < db; ++k)
        for (Eigen::Index l = 0; l < db; ++l) K(i + da * k, j + da * l) = A(i, j) * B(k, l);
  return K;
}

inline double sinh2(double x) { return std::sinh(x) * std::sinh(x); }

// Squeezed vacuum moments for S(xi) = exp((xi/2) a^dag^2 - (xi/2) a^2).
inline double squeezed_x2(double xi) { return std::exp(2.0 * xi) / 2.0; }
inline double squeezed_p2(double xi) { return std::exp(-2.0 * xi) / 2.0; }

// Real symmetric tridiagonal lowest eigenvalues by Eigen dense solve, for
// cross-checking banded routes.
inline Eigen::VectorXd dense_eigenvalues(const Mat& H) {
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  return es.eigenvalues();
}

// Pure-state QFI by the derivative formula 4(<d psi|d psi> - |<psi|d psi>|^2),
// with d psi from a five-point stencil of a state-valued function.
template <typename F>
double derivative_qfi(F&& psi_of, double lambda, double h) {
  const Vec p2 = psi_of(lambda + 2 * h), p1 = psi_of(lambda + h), m1 = psi_of(lambda - h), m2 = psi_of(lambda - 2 * h);
  const Vec psi = psi_of(lambda);
  auto align = [&](Vec v) {
    const cplx ov = psi.dot(v);
    return Vec(v * (std::conj(ov) / std::abs(ov)));
  };
  const Vec d = (-align(p2) + 8.0 * align(p1) - 8.0 * align(m1) + align(m2)) / (12.0 * h);
  const cplx c = psi.dot(d);
  return 4.0 * (d.squaredNorm() - std::norm(c));
}

// Bose-Einstein occupation 1/(e^{x} - 1).
inline double bose(double x) { return 1.0 / std::expm1(x); }

}  // namespace oracle
