#include <gtest/gtest.h>

#include "comet/operators.hpp"
#include "oracles.hpp"

using namespace comet;

namespace {

double max_abs(const DenseMatrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Fock, SmallestLadder) {
  const auto ops = fock_operators({1, 1e-6});
  DenseMatrix expected(2, 2);
  expected << 0, 1, 0, 0;
  EXPECT_EQ(ops.a.dense(), expected);
  EXPECT_EQ(ops.adag.dense(), expected.adjoint());
}

TEST(Fock, NumberOperatorDiagonal) {
  const auto ops = fock_operators({7, 1e-6});
  for (int n = 0; n <= 7; ++n) EXPECT_EQ(ops.n.dense()(n, n), cplx(n));
  EXPECT_LT(max_abs((ops.adag * ops.a).dense() - ops.n.dense()), 1e-14);
}

TEST(Fock, CommutatorBoundaryDefect) {
  const auto ops = fock_operators({50, 1e-6});
  const DenseMatrix c = commutator(ops.a, ops.adag).dense();
  const DenseMatrix ref = oracle::annihilation(50) * oracle::annihilation(50).adjoint() -
                          oracle::annihilation(50).adjoint() * oracle::annihilation(50);
  EXPECT_LT(max_abs(c - ref), 1e-14);
  // sqrt(m)^2 rounds, so "exactly" means to a few ulps of m
  for (int n = 0; n < 50; ++n) EXPECT_NEAR(c(n, n).real(), 1.0, 1e-13);
  EXPECT_NEAR(c(50, 50).real(), -50.0, 1e-12);
  EXPECT_LT(max_abs(c.topLeftCorner(50, 50) - DenseMatrix::Identity(50, 50)), 1e-13);
}

TEST(Fock, TruncationValidation) {
  EXPECT_THROW(TruncationSpec(0, 1e-6), ConfigError);
  EXPECT_THROW(TruncationSpec(5, 0.0), ConfigError);
  EXPECT_THROW(TruncationSpec(5, 1.0), ConfigError);
  EXPECT_EQ(TruncationSpec::tail_start(100), 95);
  EXPECT_EQ(TruncationSpec::tail_start(2), 1);
}

TEST(Quadratures, VacuumMoments) {
  const TruncationSpec t{10, 1e-6};
  const auto q = quadrature_operators(t);
  const auto vac = vacuum(t);
  EXPECT_NEAR(expectation(vac, q.X * q.X).real(), 0.5, 1e-15);
  EXPECT_NEAR(expectation(vac, q.P * q.P).real(), 0.5, 1e-15);
  EXPECT_NEAR(std::abs(expectation(vac, anticommutator(q.X, q.P))), 0.0, 1e-15);
  EXPECT_TRUE(q.X.is_hermitian());
  EXPECT_TRUE(q.P.is_hermitian());
}

TEST(Quadratures, SqueezedVacuumByMatrixExponential) {
  const TruncationSpec t{60, 1e-6};
  const auto q = quadrature_operators(t);
  const auto psi = squeezed_vacuum_expm(t, 0.5);
  EXPECT_NEAR(expectation(psi, q.X * q.X).real(), oracle::squeezed_x2(0.5), 1e-8);
  EXPECT_NEAR(expectation(psi, q.X * q.X).real(), 1.3591, 1e-4);
  EXPECT_NEAR(expectation(psi, q.P * q.P).real(), oracle::squeezed_p2(0.5), 1e-8);
}

TEST(Quadratures, ClosedFormSqueezedAmplitudesMatchExpm) {
  const TruncationSpec t{80, 1e-6};
  const auto a = squeezed_vacuum_expm(t, 0.7);
  const auto b = squeezed_vacuum(t, 0.7);
  EXPECT_NEAR(fidelity(a, b), 1.0, 1e-12);
  const auto ops = fock_operators(t);
  EXPECT_NEAR(expectation(b, ops.n).real(), oracle::sinh2(0.7), 1e-10);
}

TEST(Spin, PauliCase) {
  const auto s = collective_spin(1);
  DenseMatrix sz(2, 2);
  sz << 0.5, 0, 0, -0.5;
  EXPECT_EQ(s.Sz.dense(), sz);
}

TEST(Spin, CasimirSpinOne) {
  const auto s = collective_spin(2);
  const DenseMatrix c = (s.Sx * s.Sx + s.Sy * s.Sy + s.Sz * s.Sz).dense();
  EXPECT_LT(max_abs(c - 2.0 * DenseMatrix::Identity(3, 3)), 1e-14);
}

TEST(Spin, CyclicCommutators) {
  for (int N : {1, 2, 7, 20, 50}) {
    const auto s = collective_spin(N);
    const cplx i(0, 1);
    // products of sqrt-valued entries of size ~S^2 round at one ulp of S^2
    const double tol = 1e-13 * std::max(1.0, 0.25 * N * N / 100.0);
    EXPECT_LT(max_abs((commutator(s.Sx, s.Sy) - i * s.Sz).dense()), tol) << N;
    EXPECT_LT(max_abs((commutator(s.Sy, s.Sz) - i * s.Sx).dense()), tol) << N;
    EXPECT_LT(max_abs((commutator(s.Sz, s.Sx) - i * s.Sy).dense()), tol) << N;
    EXPECT_TRUE(s.Sx.is_hermitian() && s.Sy.is_hermitian() && s.Sz.is_hermitian());
  }
}

TEST(Spin, RejectsNonPositive) {
  EXPECT_THROW(collective_spin(0), ConfigError);
  EXPECT_THROW(collective_spin(-3), ConfigError);
}

TEST(Tensor, IdentityProduct) {
  const auto id = tensor(OperatorMatrix::identity(BasisTag::fock(4)), OperatorMatrix::identity(BasisTag::spin(3)));
  EXPECT_EQ(id.dim(), 12);
  EXPECT_EQ(id.dense(), DenseMatrix::Identity(12, 12));
}

TEST(Tensor, MixedProductRule) {
  const TruncationSpec t{4, 1e-6};
  const auto b = fock_operators(t);
  const auto s = collective_spin(1);
  const auto id_b = OperatorMatrix::identity(b.a.basis());
  const auto id_s = OperatorMatrix::identity(s.Sz.basis());
  EXPECT_LT(max_abs((tensor(b.a, id_s) * tensor(id_b, s.Sz) - tensor(b.a, s.Sz)).dense()), 1e-15);
}

TEST(Tensor, BlockStructureByIndexArithmetic) {
  DenseMatrix A(3, 3), B(2, 2);
  A << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  B << cplx(0, 1), 2, -1, 0.5;
  const auto T = tensor(OperatorMatrix(A, BasisTag::fock(3)), OperatorMatrix(B, BasisTag::spin(2)));
  EXPECT_EQ(T.dim(), 6);
  EXPECT_EQ(T.dense(), oracle::kron_left_fastest(A, B));
  EXPECT_EQ(T.basis().str(), "fock(3)xspin(2)");
}

TEST(Tensor, BasisMismatchRejected) {
  const auto a = OperatorMatrix::identity(BasisTag::fock(3));
  const auto b = OperatorMatrix::identity(BasisTag::fock(4));
  EXPECT_THROW(a + b, BasisMismatch);
  EXPECT_THROW(a * b, BasisMismatch);
  EXPECT_THROW(tensor(a, a), BasisMismatch);
  EXPECT_THROW(expectation(vacuum({4, 1e-6}), a), BasisMismatch);
}

TEST(Expectation, FockAndVacuum) {
  const TruncationSpec t{6, 1e-6};
  const auto ops = fock_operators(t);
  const auto q = quadrature_operators(t);
  EXPECT_NEAR(expectation(fock_state(t, 3), ops.n).real(), 3.0, 1e-15);
  EXPECT_NEAR(std::abs(expectation(vacuum(t), q.X)), 0.0, 1e-15);
  const Vector v = (ops.adag * ops.adag).apply(vacuum(t).amplitudes());
  const auto two = StateVector::normalized(v, ops.n.basis());
  EXPECT_NEAR(expectation(two, ops.n).real(), 2.0, 1e-14);
  EXPECT_NEAR(variance(two, ops.n), 0.0, 1e-13);
  EXPECT_NEAR(variance(vacuum(t), q.X), 0.5, 1e-15);
}

TEST(Expectation, VarianceRequiresHermitian) {
  const TruncationSpec t{6, 1e-6};
  EXPECT_THROW(variance(vacuum(t), fock_operators(t).a), ConfigError);
}

TEST(StateVectorInvariants, NormAndIdentity) {
  const TruncationSpec t{30, 1e-6};
  EXPECT_THROW(StateVector(Vector::Ones(31), BasisTag::fock(31)), ConfigError);
  for (const auto& psi : {vacuum(t), fock_state(t, 5), squeezed_vacuum(t, 0.3)})
    EXPECT_NEAR(expectation(psi, OperatorMatrix::identity(psi.basis())).real(), 1.0, 1e-12);
}

TEST(Hermiticity, BuiltOperators) {
  const TruncationSpec t{40, 1e-6};
  const auto b = fock_operators(t);
  const auto q = quadrature_operators(t);
  for (const auto& op : {b.n, q.X, q.P, OperatorMatrix(q.X * q.X), OperatorMatrix(anticommutator(q.X, q.P))})
    EXPECT_LT(op.hermiticity_defect(), 1e-13);
}

TEST(BosonFactor, TailAndLift) {
  const TruncationSpec t{19, 1e-6};
  const auto psi = tensor(fock_state(t, 19), basis_state(BasisTag::spin(2), 1));
  EXPECT_NEAR(fock_tail(psi), 1.0, 1e-15);
  const auto n_full = lift_fock(fock_operators(t).n, psi.basis());
  EXPECT_NEAR(expectation(psi, n_full).real(), 19.0, 1e-13);
  EXPECT_NEAR(boson_reduced_density(psi)(19, 19).real(), 1.0, 1e-15);
}
