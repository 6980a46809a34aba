#include <gtest/gtest.h>

#include "comet/analytic.hpp"
#include "comet/models.hpp"
#include "comet/spectral.hpp"
#include "oracles.hpp"

using namespace comet;

TEST(SocRabi, DecoupledGroundEnergy) {
  const auto p = SocParams::from_ratios(10.0, 0.0);
  const TruncationSpec t{20, 1e-6};
  const auto H = soc_rabi_hamiltonian(p, t);
  EXPECT_TRUE(H.is_hermitian());
  const auto gs = ground_state(H);
  EXPECT_NEAR(gs.energy, -5.0, 1e-12);
  const auto sigma_z = tensor(OperatorMatrix::identity(BasisTag::fock(21)), pauli_operators().sz);
  EXPECT_NEAR(expectation(gs.psi, sigma_z).real(), -1.0, 1e-12);
}

TEST(SocRabi, BlockDiagonalAtZeroCoupling) {
  const auto H = soc_rabi_hamiltonian(SocParams::from_ratios(10.0, 0.0), {15, 1e-6}).dense();
  EXPECT_EQ(H.block(0, 16, 16, 16).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SocRabi, GroundExcitationsApproachEffectivePrediction) {
  // k/k_c = 0.5. At Omega/omega = 10 the spin dressing still adds O(omega/Omega)
  // excitations (full 0.00975 vs sinh^2 xi = 0.00518); the gap closes as Omega/omega grows.
  const double predicted = oracle::sinh2(-0.25 * std::log(0.75));
  EXPECT_NEAR(predicted, 0.005181, 1e-6);
  const TruncationSpec t{60, 1e-8};
  double last = 1e300;
  for (double Omega : {10.0, 100.0, 1000.0}) {
    const auto m = ground_moments(soc_rabi_hamiltonian(SocParams::from_ratios(Omega, 0.25), t), t);
    const double dev = std::abs(m.n_mean / predicted - 1.0);
    EXPECT_LT(dev, last) << Omega;
    last = dev;
    if (Omega == 10.0) {
      EXPECT_NEAR(m.n_mean, 0.009746, 1e-6);
    }
  }
  EXPECT_LT(last, 0.05);
}

TEST(SocEffective, ZeroCouplingIsNumberOperator) {
  const TruncationSpec t{12, 1e-6};
  const auto H = soc_effective_hamiltonian(SocParams::from_ratios(7.0, 0.0), t);
  EXPECT_LT((H.dense() - fock_operators(t).n.dense()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SocEffective, CriticalityRemovesXSquare) {
  const TruncationSpec t{12, 1e-6};
  const auto p = SocParams::from_ratios(7.0, 1.0);
  const auto H = soc_effective_hamiltonian_physical(p, t);
  const auto q = quadrature_operators(t);
  EXPECT_LT((H.dense() - 0.5 * (q.P * q.P).dense()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SocEffective, GapAtQuarter) {
  const TruncationSpec t{200, 1e-6};
  const auto H = soc_effective_hamiltonian(SocParams::from_ratios(7.0, 0.75), t);
  EXPECT_NEAR(energy_gap(H), 0.5, 1e-8);
}

TEST(SocEffective, NormalOrderedAndPhysicalFormsAgree) {
  const TruncationSpec t{80, 1e-6};
  const auto p = SocParams::from_ratios(30.0, 0.6);
  const DenseMatrix a = soc_effective_hamiltonian(p, t).dense();
  const DenseMatrix b = soc_effective_hamiltonian_physical(p, t).dense() - 0.5 * DenseMatrix::Identity(81, 81);
  // identical except on the top Fock level, where truncated products differ
  EXPECT_LT((a - b).topLeftCorner(80, 80).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Validity, Margin) {
  EXPECT_NEAR(validity_margin_soc(SocParams::from_ratios(1e4, 0.0)), std::pow(1e4, 2.0 / 3.0), 1e-9);
  EXPECT_NEAR(validity_margin_soc(SocParams::from_ratios(1e6, 1.0 - 1e-4)), 1.0, 1e-9);
  EXPECT_NEAR(validity_margin_soc(SocParams::from_ratios(1e4, 1.0 - 1e-2)), 1e-2 / std::pow(1e-4, 2.0 / 3.0), 1e-9);
  EXPECT_NEAR(validity_margin_soc(SocParams::from_ratios(1e4, 1.0 - 1e-2)), 4.6416, 1e-4);
}

TEST(Dicke, DecoupledGround) {
  const auto p = CrystalParams{1.0, 1e-300, 3.0, 4};
  const TruncationSpec t{10, 1e-6};
  auto H = dicke_hamiltonian(p, t);
  EXPECT_TRUE(H.is_hermitian());
  const auto gs = ground_state(H);
  EXPECT_NEAR(gs.energy, -3.0 * 4 / 2.0, 1e-12);
  EXPECT_NEAR(fidelity(gs.psi, crystal_initial_state(p, t)), 1.0, 1e-12);
}

TEST(Dicke, SingleIonIsRabiWithHalvedPaulis) {
  const auto p = CrystalParams::from_ratios(3.0, 5.0, 1);
  const TruncationSpec t{8, 1e-6};
  const auto b = fock_operators(t);
  const auto s = pauli_operators();
  const auto id_s = OperatorMatrix::identity(s.sz.basis());
  const auto ref = tensor(b.n, id_s) + 2.5 * tensor(OperatorMatrix::identity(b.n.basis()), s.sx) -
                   1.5 * tensor(b.a + b.adag, s.sz);
  EXPECT_LT((dicke_hamiltonian(p, t).dense() - ref.dense()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Dicke, NegativeDetuningOption) {
  const auto p = CrystalParams::from_ratios(3.0, 5.0, 2);
  const TruncationSpec t{8, 1e-6};
  const DenseMatrix diff =
      dicke_hamiltonian(p, t).dense() - dicke_hamiltonian(p, t, DetuningSign::Negative).dense();
  const auto n_full = tensor(fock_operators(t).n, OperatorMatrix::identity(BasisTag::spin(3)));
  EXPECT_LT((diff - 2.0 * n_full.dense()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Dicke, LiteralFigureParameters) {
  const auto p = CrystalParams::from_ratios(80.0, 3200.0, 1);
  EXPECT_DOUBLE_EQ(p.B_c(), 6400.0);
  EXPECT_DOUBLE_EQ(p.B, p.B_c() / 2.0);
}

TEST(Dicke, FarNormalPhaseGroundIsDecoupled) {
  for (int N : {1, 3}) {
    const auto p = CrystalParams::from_ratios(2.0, 10.0 * 4.0, N);  // B = 10 B_c
    const TruncationSpec t{30, 1e-10};
    EXPECT_GT(fidelity(ground_state(dicke_hamiltonian(p, t)).psi, crystal_initial_state(p, t)), 0.999);
  }
}

TEST(CrystalEffective, Limits) {
  const TruncationSpec t{30, 1e-6};
  const auto q = quadrature_operators(t);
  const auto far = crystal_effective_hamiltonian(CrystalParams{1.0, 1e-6, 1e12, 1}, t);
  EXPECT_LT((far.dense() - 0.5 * (q.X * q.X + q.P * q.P).dense()).cwiseAbs().maxCoeff(), 1e-14);
  const auto crit = crystal_effective_hamiltonian(CrystalParams{1.0, 2.0, 4.0, 1}, t);
  EXPECT_LT((crit.dense() - 0.5 * (q.P * q.P).dense()).cwiseAbs().maxCoeff(), 1e-14);
  const auto inv = crystal_effective_hamiltonian(CrystalParams{1.0, 2.0, 2.0, 1}, t);
  EXPECT_LT((inv.dense() - 0.5 * (q.P * q.P).dense() + 0.5 * (q.X * q.X).dense()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ExcitationCap, Values) {
  EXPECT_DOUBLE_EQ(gs_excitation_cap(CrystalParams{1.0, 2.0, 4.0, 1}), 0.0);
  EXPECT_NEAR(gs_excitation_cap(CrystalParams::from_ratios(80.0, 3200.0, 1)), 1200.0, 1e-9);
  // N = 10, B/delta = 18.75 at B = B_c/2
  const double B = 18.75;
  EXPECT_NEAR(gs_excitation_cap(CrystalParams{1.0, std::sqrt(2.0 * B), B, 10}), 10 * (18.75 / 4) * 1.5, 1e-9);
  EXPECT_NEAR(gs_excitation_cap(CrystalParams{1.0, std::sqrt(2.0 * B), B, 10}), 70.3, 0.05);
  EXPECT_THROW(gs_excitation_cap(CrystalParams{1.0, 2.0, 5.0, 1}), ConfigError);
}

TEST(FreeOscillator, Basics) {
  const TruncationSpec t{40, 1e-6};
  const auto H = free_oscillator(2.0, t);
  EXPECT_LT((H.apply(vacuum(t).amplitudes())).norm(), 1e-15);
  const Propagator prop(H);
  const auto sq = squeezed_vacuum(t, 0.4);
  EXPECT_NEAR(fidelity(prop.evolve(sq, 2.0 * kPi / 2.0), sq), 1.0, 1e-12);
  const auto q = quadrature_operators(t);
  const auto rotated = prop.evolve(sq, kPi / (2.0 * 2.0));
  EXPECT_NEAR(expectation(rotated, q.X * q.X).real(), expectation(sq, q.P * q.P).real(), 1e-10);
  EXPECT_NEAR(expectation(rotated, q.P * q.P).real(), expectation(sq, q.X * q.X).real(), 1e-10);
  EXPECT_THROW(free_oscillator(0.0, t), ConfigError);
}

TEST(SocInvariants, EffectiveAgreementInValidityRegion) {
  // margin >= 10 at Omega/omega = 1e4: 1 - u >= 10 * 1e-8^(1/3) ~ 0.0464
  const double Omega = 1e4;
  for (double w : {0.5, 0.2, 0.08, 0.05}) {
    const auto p = SocParams::from_ratios(Omega, 1.0 - w);
    ASSERT_GE(validity_margin_soc(p), 10.0);
    const TruncationSpec t{120, 1e-10};
    const auto Hf = soc_rabi_hamiltonian(p, t);
    const auto He = soc_effective_hamiltonian(p, t);
    const auto mf = ground_moments(Hf, t), me = ground_moments(He, t);
    EXPECT_NEAR(mf.n_mean / me.n_mean, 1.0, 0.05) << w;
    EXPECT_NEAR(mf.x2 / me.x2, 1.0, 0.05) << w;
    EXPECT_NEAR(energy_gap(Hf) / energy_gap(He), 1.0, 0.05) << w;
  }
}

TEST(Hermiticity, AllBuilders) {
  const TruncationSpec t{30, 1e-6};
  const auto sp = SocParams::from_ratios(100.0, 0.9);
  const auto cp = CrystalParams::from_ratios(20.0, 200.0, 3);
  for (const auto& H : {soc_rabi_hamiltonian(sp, t), soc_effective_hamiltonian(sp, t),
                        soc_effective_hamiltonian_physical(sp, t), dicke_hamiltonian(cp, t),
                        crystal_effective_hamiltonian(cp, t)})
    EXPECT_LT(H.hermiticity_defect(), 1e-13 * std::max(1.0, H.max_abs()));
}
