#include <gtest/gtest.h>

#include <random>

#include "comet/analytic.hpp"
#include "comet/models.hpp"
#include "comet/spectral.hpp"
#include "oracles.hpp"

using namespace comet;

namespace {

// Fock truncation that holds the squeezed vacuum at 1 - u to better than 1e-12.
int squeeze_n_max(double w) {
  const double tanh_xi = std::tanh(-0.25 * std::log(w));
  return std::max(60, static_cast<int>(2.0 * std::log(1e-14) / std::log(tanh_xi)) + 40);
}

}  // namespace

TEST(GroundState, FreeOscillatorIsVacuum) {
  const TruncationSpec t{30, 1e-10};
  const auto gs = ground_state(free_oscillator(1.0, t));
  EXPECT_NEAR(gs.energy, 0.0, 1e-14);
  EXPECT_NEAR(fidelity(gs.psi, vacuum(t)), 1.0, 1e-14);
  EXPECT_NEAR(energy_gap(free_oscillator(1.0, t)), 1.0, 1e-13);
  EXPECT_NEAR(energy_gap(free_oscillator(2.5, t)), 2.5, 1e-13);
}

TEST(GroundState, EffectiveSocEnergy) {
  // normal-ordered form = physical form - 1/2; physical ground energy (1/2) sqrt(1 - u)
  const TruncationSpec t{120, 1e-10};
  const auto gs = ground_state(soc_effective_hamiltonian(SocParams::from_ratios(5.0, 0.75), t));
  EXPECT_NEAR(gs.energy, 0.5 * (std::sqrt(0.25) - 1.0), 1e-10);
}

TEST(GroundState, PhaseFixed) {
  const TruncationSpec t{40, 1e-10};
  const auto gs = ground_state(soc_rabi_hamiltonian(SocParams::from_ratios(20.0, 0.6), t));
  Index imax = 0;
  gs.psi.amplitudes().cwiseAbs().maxCoeff(&imax);
  EXPECT_GT(gs.psi.amplitudes()[imax].real(), 0.0);
  EXPECT_EQ(gs.psi.amplitudes()[imax].imag(), 0.0);
}

TEST(EnergyGap, EffectiveNearCriticality) {
  const double w = 1e-4;
  const TruncationSpec t{squeeze_n_max(w), 1e-10};
  const double gap = energy_gap(soc_effective_hamiltonian(SocParams::from_ratios(1e3, 1.0 - w), t));
  EXPECT_NEAR(gap / 1e-2, 1.0, 1e-6);
}

TEST(EnergyGap, ConnectedSectorOnRabi) {
  const TruncationSpec t{40, 1e-10};
  const auto p = SocParams::from_ratios(3.5, 0.0);
  const auto H = soc_rabi_hamiltonian(p, t);
  const auto b = fock_operators(t);
  const auto s = pauli_operators();
  const auto x_only = tensor(b.a + b.adag, OperatorMatrix::identity(s.sx.basis()));
  const auto x_sx = tensor(b.a + b.adag, s.sx);
  // k = 0: |0,down> -> |1,down> costs omega, |1,up> costs omega + Omega
  EXPECT_NEAR(energy_gap_connected(H, x_only), energy_gap(H), 1e-12);
  EXPECT_NEAR(energy_gap_connected(H, x_sx, 8), 1.0 + 3.5, 1e-10);
}

TEST(Moments, Vacuum) {
  const TruncationSpec t{10, 1e-12};
  const auto m = boson_moments(vacuum(t), t);
  EXPECT_DOUBLE_EQ(m.n_mean, 0.0);
  EXPECT_NEAR(m.x2, 0.5, 1e-15);
  EXPECT_NEAR(m.p2, 0.5, 1e-15);
  EXPECT_EQ(m.tail, 0.0);
}

TEST(Moments, SqueezingOracle) {
  for (double w : {0.75, 0.5, 0.25, 1e-2, 1e-4}) {
    const TruncationSpec t{squeeze_n_max(w), 1e-10};
    const auto m = ground_moments(soc_effective_hamiltonian(SocParams::from_ratios(50.0, 1.0 - w), t), t);
    const double xi = -0.25 * std::log(w);
    EXPECT_NEAR(m.n_mean / oracle::sinh2(xi), 1.0, 1e-6) << w;
    EXPECT_NEAR(m.x2 / oracle::squeezed_x2(xi), 1.0, 1e-6) << w;
    EXPECT_NEAR(m.p2 / oracle::squeezed_p2(xi), 1.0, 1e-6) << w;
  }
}

TEST(Moments, QuarterValue) {
  const TruncationSpec t{120, 1e-12};
  const auto m = ground_moments(soc_effective_hamiltonian(SocParams::from_ratios(3.0, 0.75), t), t);
  EXPECT_NEAR(m.n_mean, 0.125, 1e-8);
}

TEST(Moments, TruncationErrorNamesNMax) {
  const TruncationSpec t{20, 1e-10};
  try {
    ground_moments(soc_effective_hamiltonian(SocParams::from_ratios(50.0, 1.0 - 1e-3), t), t);
    FAIL() << "expected TruncationError";
  } catch (const TruncationError& e) {
    EXPECT_EQ(e.n_max(), 20);
    EXPECT_GT(e.tail(), 1e-10);
    EXPECT_NE(std::string(e.what()).find("20"), std::string::npos);
  }
}

TEST(Qfi, EffectiveSocAtHalf) {
  const TruncationSpec t{80, 1e-12};
  const auto p = SocParams::from_ratios(1.0, 0.5);
  const auto q = qfi_fidelity(soc_effective_family(p, t), p.Omega);
  EXPECT_NEAR(q.value / 0.125, 1.0, 1e-3);
  EXPECT_LT(q.error, 1e-3 * q.value);
}

TEST(Qfi, EffectiveSocOracleAgreement) {
  for (double u : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    const TruncationSpec t{squeeze_n_max(1.0 - u), 1e-10};
    const auto p = SocParams::from_ratios(4.0, u);
    const double dxi = -u / (4.0 * p.Omega * (1.0 - u));
    const double expected = 2.0 * dxi * dxi;
    EXPECT_NEAR(qfi_fidelity(soc_effective_family(p, t), p.Omega).value / expected, 1.0, 1e-3) << u;
    EXPECT_NEAR(qfi_omega_adiabatic(p) / expected, 1.0, 1e-12) << u;
  }
}

TEST(Qfi, FullRabiMatchesDerivativeOracle) {
  const TruncationSpec t{40, 1e-10};
  const auto p = SocParams::from_ratios(30.0, 0.7);
  const auto family = soc_rabi_family(p, t);
  const double ref = oracle::derivative_qfi(
      [&](double Omega) {
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(family(Omega).dense());
        return Vector(es.eigenvectors().col(0));
      },
      p.Omega, 1e-3 * p.Omega);
  EXPECT_NEAR(qfi_fidelity(family, p.Omega).value / ref, 1.0, 1e-4);
}

TEST(Qfi, ParameterIndependentStateIsZero) {
  const TruncationSpec t{10, 1e-10};
  const HamiltonianFamily fam = [&](double lambda) { return lambda * free_oscillator(1.0, t); };
  EXPECT_EQ(qfi_fidelity(fam, 2.0).value, 0.0);
}

TEST(Qfi, GaugeInvariance) {
  const TruncationSpec t{60, 1e-10};
  const auto p = SocParams::from_ratios(2.0, 0.6);
  const auto family = soc_effective_family(p, t);
  const auto plain = [&](double h) {
    return std::make_pair(ground_state(family(p.Omega + h)).psi.amplitudes(),
                          ground_state(family(p.Omega - h)).psi.amplitudes());
  };
  const double h0 = default_step(p.Omega);
  const double a = refine_fidelity_qfi(plain, h0).value;
  // sign flips are exact in floating point
  const auto flipped = [&](double h) {
    auto [x, y] = plain(h);
    return std::make_pair(Vector(-x), y);
  };
  EXPECT_NEAR(refine_fidelity_qfi(flipped, h0).value, a, 1e-12 * a);
  // complex phases round each amplitude, so the smallest-step distances carry ~1e-16/||dpsi|| relative noise
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  const auto rephased = [&](double h) {
    auto [x, y] = plain(h);
    return std::make_pair(Vector(x * std::polar(1.0, phase(rng))), Vector(y * std::polar(1.0, phase(rng))));
  };
  EXPECT_NEAR(refine_fidelity_qfi(rephased, h0).value, a, 1e-10 * a);
}

TEST(Qfi, LevelCrossingDetected) {
  const BranchPair swap = [](double) {
    Vector a = Vector::Zero(2), b = Vector::Zero(2);
    a[0] = 1.0;
    b[1] = 1.0;
    return std::make_pair(a, b);
  };
  EXPECT_THROW(refine_fidelity_qfi(swap, 1e-3), NumericalError);
  EXPECT_THROW(refine_fidelity_qfi(swap, 0.0), ConfigError);
}
