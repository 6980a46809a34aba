#pragma once

// Truncated bosonic and collective-spin operator algebra on tensor-product
// bases. The first factor of a basis is the fastest-running index, so for
// a boson (x) spin space the flat index is  n + (n_max + 1) * s.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "comet/errors.hpp"

namespace comet {

using cplx = std::complex<double>;
using Index = Eigen::Index;
using SparseMatrix = Eigen::SparseMatrix<cplx>;
using DenseMatrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

namespace basis {
inline constexpr const char* kFock = "fock";
inline constexpr const char* kSpin = "spin";
}  // namespace basis

struct BasisFactor {
  std::string label;
  Index dim = 0;
  friend bool operator==(const BasisFactor&, const BasisFactor&) = default;
};

// Ordered list of tensor factors; factor 0 runs fastest.
class BasisTag {
 public:
  BasisTag() = default;
  explicit BasisTag(std::vector<BasisFactor> factors) : factors_(std::move(factors)) {
    for (const auto& f : factors_)
      if (f.dim <= 0) throw ConfigError("basis factor '" + f.label + "' must have positive dimension");
  }

  static BasisTag fock(Index dim) { return BasisTag({{basis::kFock, dim}}); }
  static BasisTag spin(Index dim) { return BasisTag({{basis::kSpin, dim}}); }

  const std::vector<BasisFactor>& factors() const noexcept { return factors_; }
  Index dim() const noexcept {
    return std::accumulate(factors_.begin(), factors_.end(), Index{1},
                           [](Index acc, const BasisFactor& f) { return acc * f.dim; });
  }
  bool has_leading_fock() const noexcept {
    return !factors_.empty() && factors_.front().label == basis::kFock;
  }
  Index fock_dim() const {
    if (!has_leading_fock()) throw BasisMismatch("basis " + str() + " has no leading Fock factor");
    return factors_.front().dim;
  }

  std::string str() const {
    std::string s;
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (i) s += "x";
      s += factors_[i].label + "(" + std::to_string(factors_[i].dim) + ")";
    }
    return s;
  }

  friend bool operator==(const BasisTag&, const BasisTag&) = default;

 private:
  std::vector<BasisFactor> factors_;
};

inline void require_same_basis(const BasisTag& a, const BasisTag& b, const char* where) {
  if (!(a == b)) throw BasisMismatch(std::string(where) + ": basis " + a.str() + " vs " + b.str());
}

struct TruncationSpec {
  int n_max = 0;
  double tail_tol = 1e-10;

  TruncationSpec() = default;
  TruncationSpec(int n, double tol) : n_max(n), tail_tol(tol) { validate(); }

  Index fock_dim() const noexcept { return n_max + 1; }

  // Index of the first Fock level counted as "tail" (top 5% of levels, at least one).
  static Index tail_start(Index fock_dim) {
    const auto width = std::max<Index>(1, static_cast<Index>(std::ceil(0.05 * static_cast<double>(fock_dim))));
    return fock_dim - width;
  }

  void validate() const {
    if (n_max < 1) throw ConfigError("truncation n_max must be >= 1, got " + std::to_string(n_max));
    if (!(tail_tol > 0.0 && tail_tol < 1.0)) throw ConfigError("truncation tail_tol must lie in (0, 1)");
  }
};

class OperatorMatrix {
 public:
  OperatorMatrix() = default;
  OperatorMatrix(SparseMatrix m, BasisTag tag) : m_(std::move(m)), tag_(std::move(tag)) {
    if (m_.rows() != m_.cols()) throw ConfigError("operator must be square");
    if (m_.rows() == 0) throw ConfigError("operator must have positive dimension");
    if (m_.rows() != tag_.dim())
      throw BasisMismatch("operator dimension " + std::to_string(m_.rows()) + " does not match basis " + tag_.str());
    m_.makeCompressed();
  }
  OperatorMatrix(const DenseMatrix& m, BasisTag tag, double drop_below = 0.0)
      : OperatorMatrix(sparsify(m, drop_below), std::move(tag)) {}

  static OperatorMatrix identity(const BasisTag& tag) {
    SparseMatrix id(tag.dim(), tag.dim());
    id.setIdentity();
    return {std::move(id), tag};
  }
  static OperatorMatrix zero(const BasisTag& tag) { return {SparseMatrix(tag.dim(), tag.dim()), tag}; }
  static OperatorMatrix diagonal(const RealVector& d, const BasisTag& tag) {
    SparseMatrix m(d.size(), d.size());
    std::vector<Eigen::Triplet<cplx>> trip;
    for (Index i = 0; i < d.size(); ++i)
      if (d[i] != 0.0) trip.emplace_back(i, i, d[i]);
    m.setFromTriplets(trip.begin(), trip.end());
    return {std::move(m), tag};
  }

  Index dim() const noexcept { return m_.rows(); }
  const SparseMatrix& matrix() const noexcept { return m_; }
  const BasisTag& basis() const noexcept { return tag_; }
  DenseMatrix dense() const { return DenseMatrix(m_); }

  OperatorMatrix adjoint() const { return {SparseMatrix(m_.adjoint()), tag_}; }

  double max_abs() const {
    double r = 0.0;
    for (Index k = 0; k < m_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(m_, k); it; ++it) r = std::max(r, std::abs(it.value()));
    return r;
  }
  double hermiticity_defect() const { return OperatorMatrix(SparseMatrix(m_ - SparseMatrix(m_.adjoint())), tag_).max_abs(); }
  bool is_hermitian(double tol = 1e-13) const { return hermiticity_defect() <= tol * std::max(1.0, max_abs()); }
  bool is_real() const {
    for (Index k = 0; k < m_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(m_, k); it; ++it)
        if (it.value().imag() != 0.0) return false;
    return true;
  }
  OperatorMatrix hermitian_part() const { return {SparseMatrix(0.5 * (m_ + SparseMatrix(m_.adjoint()))), tag_}; }

  Vector apply(const Vector& v) const {
    if (v.size() != dim()) throw BasisMismatch("operator applied to vector of wrong dimension");
    return m_ * v;
  }

  friend OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b) {
    require_same_basis(a.tag_, b.tag_, "operator +");
    return {SparseMatrix(a.m_ + b.m_), a.tag_};
  }
  friend OperatorMatrix operator-(const OperatorMatrix& a, const OperatorMatrix& b) {
    require_same_basis(a.tag_, b.tag_, "operator -");
    return {SparseMatrix(a.m_ - b.m_), a.tag_};
  }
  friend OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b) {
    require_same_basis(a.tag_, b.tag_, "operator *");
    return {SparseMatrix(a.m_ * b.m_), a.tag_};
  }
  friend OperatorMatrix operator*(cplx s, const OperatorMatrix& a) { return {SparseMatrix(s * a.m_), a.tag_}; }
  friend OperatorMatrix operator*(double s, const OperatorMatrix& a) { return cplx(s) * a; }
  OperatorMatrix operator-() const { return {SparseMatrix(-m_), tag_}; }

 private:
  static SparseMatrix sparsify(const DenseMatrix& d, double drop_below) {
    SparseMatrix s(d.rows(), d.cols());
    std::vector<Eigen::Triplet<cplx>> trip;
    for (Index j = 0; j < d.cols(); ++j)
      for (Index i = 0; i < d.rows(); ++i)
        if (std::abs(d(i, j)) > drop_below) trip.emplace_back(i, j, d(i, j));
    s.setFromTriplets(trip.begin(), trip.end());
    return s;
  }

  SparseMatrix m_;
  BasisTag tag_;
};

inline OperatorMatrix commutator(const OperatorMatrix& a, const OperatorMatrix& b) { return a * b - b * a; }
inline OperatorMatrix anticommutator(const OperatorMatrix& a, const OperatorMatrix& b) { return a * b + b * a; }

class StateVector {
 public:
  static constexpr double kNormTol = 1e-12;

  StateVector() = default;
  StateVector(Vector amplitudes, BasisTag tag) : amp_(std::move(amplitudes)), tag_(std::move(tag)) {
    if (amp_.size() != tag_.dim()) throw BasisMismatch("state dimension does not match basis " + tag_.str());
    if (std::abs(amp_.norm() - 1.0) > kNormTol)
      throw ConfigError("state vector is not normalized (norm " + fmt(amp_.norm()) + ")");
  }

  // Divides out the norm; rejects the zero vector.
  static StateVector normalized(Vector amplitudes, BasisTag tag) {
    const double nrm = amplitudes.norm();
    if (!(nrm > 0.0) || !std::isfinite(nrm)) throw NumericalError("cannot normalize a zero or non-finite vector");
    return {amplitudes / nrm, std::move(tag)};
  }

  Index dim() const noexcept { return amp_.size(); }
  const Vector& amplitudes() const noexcept { return amp_; }
  const BasisTag& basis() const noexcept { return tag_; }

 private:
  Vector amp_;
  BasisTag tag_;
};

inline cplx inner(const StateVector& a, const StateVector& b) {
  require_same_basis(a.basis(), b.basis(), "inner product");
  return a.amplitudes().dot(b.amplitudes());
}
inline double fidelity(const StateVector& a, const StateVector& b) { return std::norm(inner(a, b)); }

inline cplx expectation(const StateVector& psi, const OperatorMatrix& A) {
  require_same_basis(psi.basis(), A.basis(), "expectation");
  return psi.amplitudes().dot(A.matrix() * psi.amplitudes());
}

// <A^2> - <A>^2 computed as ||A psi||^2 - <A>^2, which is >= 0 up to rounding.
inline double variance(const StateVector& psi, const OperatorMatrix& A) {
  require_same_basis(psi.basis(), A.basis(), "variance");
  if (!A.is_hermitian(1e-10)) throw ConfigError("variance requires a Hermitian operator");
  const Vector Apsi = A.matrix() * psi.amplitudes();
  const double mean = psi.amplitudes().dot(Apsi).real();
  return Apsi.squaredNorm() - mean * mean;
}

struct LadderOperators {
  OperatorMatrix a;
  OperatorMatrix adag;
  OperatorMatrix n;
};

inline LadderOperators fock_operators(const TruncationSpec& trunc) {
  trunc.validate();
  const Index d = trunc.fock_dim();
  const auto tag = BasisTag::fock(d);
  SparseMatrix a(d, d);
  std::vector<Eigen::Triplet<cplx>> trip;
  for (Index m = 1; m < d; ++m) trip.emplace_back(m - 1, m, std::sqrt(static_cast<double>(m)));
  a.setFromTriplets(trip.begin(), trip.end());
  RealVector diag(d);
  for (Index m = 0; m < d; ++m) diag[m] = static_cast<double>(m);
  return {OperatorMatrix(a, tag), OperatorMatrix(SparseMatrix(a.adjoint()), tag), OperatorMatrix::diagonal(diag, tag)};
}

struct Quadratures {
  OperatorMatrix X;
  OperatorMatrix P;
};

// X = (a + a^dag)/sqrt2, P = i(a^dag - a)/sqrt2; vacuum has <X^2> = <P^2> = 1/2.
inline Quadratures quadrature_operators(const TruncationSpec& trunc) {
  const auto ops = fock_operators(trunc);
  const double s = 1.0 / std::sqrt(2.0);
  return {s * (ops.a + ops.adag), cplx(0.0, s) * (ops.adag - ops.a)};
}

struct SpinOperators {
  OperatorMatrix Sx;
  OperatorMatrix Sy;
  OperatorMatrix Sz;
};

// Spin-N/2 irrep, basis ordered m = N/2, N/2 - 1, ..., -N/2.
inline SpinOperators collective_spin(int n_spins) {
  if (n_spins < 1) throw ConfigError("collective spin needs N >= 1, got " + std::to_string(n_spins));
  const Index d = n_spins + 1;
  const double S = 0.5 * n_spins;
  const auto tag = BasisTag::spin(d);
  SparseMatrix splus(d, d);
  std::vector<Eigen::Triplet<cplx>> trip;
  for (Index i = 1; i < d; ++i) {
    const double m = S - static_cast<double>(i);  // S+ |m> = c |m+1>, m+1 sits at row i-1
    trip.emplace_back(i - 1, i, std::sqrt((S - m) * (S + m + 1.0)));
  }
  splus.setFromTriplets(trip.begin(), trip.end());
  const SparseMatrix sminus = splus.adjoint();
  RealVector mz(d);
  for (Index i = 0; i < d; ++i) mz[i] = S - static_cast<double>(i);
  return {OperatorMatrix(SparseMatrix(0.5 * (splus + sminus)), tag),
          OperatorMatrix(SparseMatrix(cplx(0.0, -0.5) * (splus - sminus)), tag),
          OperatorMatrix::diagonal(mz, tag)};
}

struct PauliOperators {
  OperatorMatrix sx;
  OperatorMatrix sy;
  OperatorMatrix sz;
};

inline PauliOperators pauli_operators() {
  const auto s = collective_spin(1);
  return {2.0 * s.Sx, 2.0 * s.Sy, 2.0 * s.Sz};
}

// Kronecker product with the left operand's factors running fastest.
inline OperatorMatrix tensor(const OperatorMatrix& A, const OperatorMatrix& B) {
  std::vector<BasisFactor> factors = A.basis().factors();
  for (const auto& f : B.basis().factors()) {
    for (const auto& g : factors)
      if (g.label == f.label)
        throw BasisMismatch("tensor: factor '" + f.label + "' appears in both " + A.basis().str() + " and " +
                            B.basis().str());
    factors.push_back(f);
  }
  SparseMatrix k = Eigen::kroneckerProduct(B.matrix(), A.matrix());
  return {std::move(k), BasisTag(std::move(factors))};
}

inline StateVector tensor(const StateVector& a, const StateVector& b) {
  std::vector<BasisFactor> factors = a.basis().factors();
  for (const auto& f : b.basis().factors()) factors.push_back(f);
  Vector v(a.dim() * b.dim());
  for (Index j = 0; j < b.dim(); ++j) v.segment(j * a.dim(), a.dim()) = b.amplitudes()[j] * a.amplitudes();
  return StateVector::normalized(std::move(v), BasisTag(std::move(factors)));
}

inline StateVector basis_state(const BasisTag& tag, Index index) {
  if (index < 0 || index >= tag.dim()) throw ConfigError("basis index out of range");
  Vector v = Vector::Zero(tag.dim());
  v[index] = 1.0;
  return {std::move(v), tag};
}

inline StateVector fock_state(const TruncationSpec& trunc, int n) {
  trunc.validate();
  return basis_state(BasisTag::fock(trunc.fock_dim()), n);
}
inline StateVector vacuum(const TruncationSpec& trunc) { return fock_state(trunc, 0); }

// S(xi) = exp((xi/2) a^dag^2 - (xi/2) a^2) applied to |0> by a dense matrix exponential
// of the truncated generator. xi > 0 stretches X: <X^2> = e^{2 xi}/2.
inline StateVector squeezed_vacuum_expm(const TruncationSpec& trunc, double xi) {
  const auto ops = fock_operators(trunc);
  const DenseMatrix gen = 0.5 * xi * DenseMatrix(ops.adag.matrix() * ops.adag.matrix() - ops.a.matrix() * ops.a.matrix());
  const DenseMatrix U = gen.exp();
  return StateVector::normalized(U.col(0), BasisTag::fock(trunc.fock_dim()));
}

// Same state from its closed-form Fock amplitudes (tanh xi)^m sqrt((2m)!)/(2^m m!) / sqrt(cosh xi),
// renormalized on the truncated space.
inline StateVector squeezed_vacuum(const TruncationSpec& trunc, double xi) {
  trunc.validate();
  const Index d = trunc.fock_dim();
  Vector v = Vector::Zero(d);
  const double t = std::tanh(xi);
  double c = 1.0 / std::sqrt(std::cosh(xi));
  v[0] = c;
  for (Index n = 2; n < d; n += 2) {
    // c_{n} = c_{n-2} * t * sqrt((n-1)/n)
    c *= t * std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n));
    v[n] = c;
  }
  return StateVector::normalized(std::move(v), BasisTag::fock(d));
}

// Population in the top 5% of Fock levels of a state whose leading factor is Fock.
inline double fock_tail(const StateVector& psi) {
  const Index nf = psi.basis().fock_dim();
  const Index rest = psi.dim() / nf;
  const Index start = TruncationSpec::tail_start(nf);
  Eigen::Map<const DenseMatrix> M(psi.amplitudes().data(), nf, rest);
  return M.bottomRows(nf - start).squaredNorm();
}

// Reduced density matrix of the leading Fock factor.
inline DenseMatrix boson_reduced_density(const StateVector& psi) {
  const Index nf = psi.basis().fock_dim();
  const Index rest = psi.dim() / nf;
  Eigen::Map<const DenseMatrix> M(psi.amplitudes().data(), nf, rest);
  return M * M.adjoint();
}

// Lift an operator on the leading Fock factor into the full basis (identity on the rest).
inline OperatorMatrix lift_fock(const OperatorMatrix& boson_op, const BasisTag& full) {
  const Index nf = full.fock_dim();
  if (boson_op.dim() != nf || !boson_op.basis().has_leading_fock())
    throw BasisMismatch("lift_fock: operator on " + boson_op.basis().str() + " vs " + full.str());
  if (full.factors().size() == 1) return boson_op;
  std::vector<BasisFactor> rest(full.factors().begin() + 1, full.factors().end());
  return tensor(boson_op, OperatorMatrix::identity(BasisTag(std::move(rest))));
}

}  // namespace comet
