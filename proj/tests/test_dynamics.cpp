#include <gtest/gtest.h>

#include "comet/analytic.hpp"
#include "comet/dynamics.hpp"
#include "oracles.hpp"

using namespace comet;

namespace {

std::vector<double> grid(double t_end, int steps) {
  std::vector<double> out;
  for (int i = 0; i <= steps; ++i) out.push_back(t_end * i / steps);
  return out;
}

CrystalParams effective_at(double B_over_Bc) {
  // delta = 1, g = 2: B_c = 4
  return CrystalParams{1.0, 2.0, 4.0 * B_over_Bc, 1};
}

double block_max_diff(const OperatorMatrix& a, const OperatorMatrix& b, double fraction) {
  const Index n = static_cast<Index>(fraction * static_cast<double>(a.dim()));
  return (a.dense() - b.dense()).topLeftCorner(n, n).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Evolve, ZeroTimeAndEigenstates) {
  const TruncationSpec t{30, 1e-10};
  const auto H = soc_rabi_hamiltonian(SocParams::from_ratios(6.0, 0.5), t);
  const auto psi = squeezed_vacuum(t, 0.3);
  const auto lifted = tensor(psi, basis_state(BasisTag::spin(2), 1));
  EXPECT_LT((evolve(H, lifted, 0.0).amplitudes() - lifted.amplitudes()).norm(), 1e-14);
  const auto gs = ground_state(H);
  const auto later = evolve(H, gs.psi, 3.7);
  EXPECT_NEAR(fidelity(later, gs.psi), 1.0, 1e-12);
  const auto n = lift_fock(fock_operators(t).n, H.basis());
  EXPECT_NEAR(expectation(later, n).real(), expectation(gs.psi, n).real(), 1e-12);
}

TEST(Evolve, FreeOscillatorPeriodAndNorm) {
  const TruncationSpec t{40, 1e-10};
  const double w = 1.7;
  const auto psi = squeezed_vacuum(t, 0.5);
  const auto back = evolve(free_oscillator(w, t), psi, 2.0 * kPi / w);
  EXPECT_NEAR(fidelity(back, psi), 1.0, 1e-12);
  EXPECT_NEAR(back.amplitudes().norm(), 1.0, 1e-10);
}

TEST(Quench, EffectiveMatchesCovarianceOracle) {
  const TruncationSpec t{600, 1e-10};
  for (double ratio : {0.5, 2.0, 0.9}) {
    const auto p = effective_at(ratio);
    const auto times = grid(2.0, 8);
    const auto traj = quench_trajectory(p, times, t, ModelKind::Effective);
    for (const auto& pt : traj.points) {
      const auto cov = effective_covariance_evolution(p, pt.t);
      EXPECT_NEAR(pt.x2, cov.xx, 1e-8 * std::max(1.0, cov.xx)) << ratio << " " << pt.t;
      EXPECT_NEAR(pt.n_mean, cov.n_mean(), 1e-8 * std::max(1.0, cov.n_mean())) << ratio << " " << pt.t;
    }
  }
  // B = B_c/2: <n> = sinh^2(delta t)
  const auto traj = quench_trajectory(effective_at(0.5), {1.0, 2.0}, t, ModelKind::Effective);
  EXPECT_NEAR(traj.points[1].n_mean, oracle::sinh2(2.0), 1e-8 * oracle::sinh2(2.0));
}

TEST(Quench, NormalPhaseBarelyExcites) {
  const auto p = CrystalParams::from_ratios(5.0, 250.0, 1);  // B = 10 B_c
  const TruncationSpec t{20, 1e-10};
  const auto traj = quench_trajectory(p, grid(20.0, 80), t);
  for (const auto& pt : traj.points) EXPECT_LT(pt.n_mean, 0.05) << pt.t;
  EXPECT_EQ(traj.cap, 0.0);
  EXPECT_FALSE(traj.breakdown_time.has_value());
}

TEST(Quench, FinalFieldOverload) {
  const auto p = CrystalParams::from_ratios(5.0, 250.0, 1);
  const TruncationSpec t{40, 1e-10};
  const auto a = quench_trajectory(p, 12.5, {0.5, 1.0}, t);
  const auto b = quench_trajectory(p.with_B(12.5), {0.5, 1.0}, t);
  EXPECT_EQ(a.points[1].n_mean, b.points[1].n_mean);
}

TEST(Quench, LiteralFigureSetFollowsInvertedOscillator) {
  // N = 1, g/delta = 80, B/delta = 3200 = B_c/2, cap 1200
  const auto p = CrystalParams::from_ratios(80.0, 3200.0, 1);
  const TruncationSpec t{550, 1e-8};
  const auto traj = quench_trajectory(p, grid(2.0, 8), t);
  EXPECT_NEAR(traj.cap, 1200.0, 1e-9);
  for (const auto& pt : traj.points) {
    if (pt.t == 0.0) continue;
    EXPECT_NEAR(pt.n_mean / oracle::sinh2(pt.t), 1.0, 0.1) << pt.t;
  }
}

TEST(Quench, BreakdownFlagMarksHalfCap) {
  // N = 1, NB/delta = 18.75 at B = B_c/2: cap 7.03
  const double B = 18.75;
  const CrystalParams p{1.0, std::sqrt(2.0 * B), B, 1};
  const TruncationSpec t{120, 1e-8};
  const auto traj = quench_trajectory(p, grid(4.0, 40), t);
  ASSERT_TRUE(traj.breakdown_time.has_value());
  for (const auto& pt : traj.points) {
    EXPECT_EQ(pt.beyond_cap, pt.n_mean > 0.5 * traj.cap);
    if (pt.t < *traj.breakdown_time) {
      EXPECT_FALSE(pt.beyond_cap);
    }
  }
}

TEST(Quench, TruncationFailureNamesTime) {
  const TruncationSpec t{10, 1e-10};
  try {
    quench_trajectory(effective_at(0.5), {0.1, 3.0}, t, ModelKind::Effective);
    FAIL() << "expected TruncationError";
  } catch (const TruncationError& e) {
    EXPECT_EQ(e.n_max(), 10);
    EXPECT_NE(std::string(e.what()).find("t = 3"), std::string::npos);
  }
}

TEST(EvolvedQfi, ZeroAtStart) {
  const TruncationSpec t{60, 1e-10};
  const auto p = effective_at(0.5);
  EXPECT_EQ(crystal_evolved_qfi(p, 0.0, t, ModelKind::Effective).value, 0.0);
}

TEST(EvolvedQfi, EffectiveSpecialQuench) {
  const TruncationSpec t{200, 1e-10};
  const auto p = effective_at(0.5);
  const auto q = crystal_evolved_qfi(p, 1.0, t, ModelKind::Effective);
  EXPECT_NEAR(q.value, 3.8147, 1e-3 * 3.8147);
  EXPECT_NEAR(q.value / quench_qfi_special(p, 1.0).qfi, 1.0, 1e-3);
}

TEST(EvolvedQfi, SeriesMatchesSingleTimes) {
  const TruncationSpec t{200, 1e-10};
  const auto p = effective_at(0.5);
  const std::vector<double> times{0.25, 0.75, 1.5};
  const auto family = crystal_effective_family(p, t);
  const auto series = evolved_qfi_series(family, vacuum(t), p.delta, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    EXPECT_NEAR(series[i].value / evolved_qfi(family, vacuum(t), p.delta, times[i]).value, 1.0, 1e-8);
    EXPECT_NEAR(series[i].value / quench_qfi_special(p, times[i]).qfi, 1.0, 1e-3) << times[i];
  }
}

TEST(GeneratorSeries, LeadingTermAndCommutingCase) {
  const TruncationSpec t{20, 1e-10};
  const auto H = crystal_effective_hamiltonian(effective_at(0.5), t);
  const auto Hl = quadrature_operators(t).X * quadrature_operators(t).X;
  const auto first = generator_series(H, Hl, 0.7, 1);
  EXPECT_LT((first.dense() - 0.7 * Hl.dense()).cwiseAbs().maxCoeff(), 1e-14);
  const auto n = fock_operators(t).n;
  const auto H2 = 2.0 * n;
  for (int order : {1, 5, 12})
    EXPECT_LT((generator_series(H2, n, 1.3, order).dense() - 1.3 * n.dense()).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(GeneratorSeries, AlgebraMatchesClosedForm) {
  const TruncationSpec t{200, 1e-10};
  const auto dH = crystal_effective_delta_derivative();
  for (double ratio : {0.5, 2.0, 1.0}) {
    const auto p = effective_at(ratio);
    for (double tt : {0.1, 0.5, 1.0}) {
      const auto series = generator_series(crystal_effective_form(p), dH, tt, 30).on(t);
      EXPECT_LT(block_max_diff(series, local_generator_closed_form(p, tt, t), 0.8), 1e-8) << ratio << " " << tt;
    }
  }
  // forms and matrices describe the same operators
  const auto p = effective_at(0.5);
  EXPECT_LT((crystal_effective_form(p).on(t).dense() - crystal_effective_hamiltonian(p, t).dense()).cwiseAbs().maxCoeff(),
            1e-12);
  EXPECT_LT((dH.on(t).dense() - 0.5 * (quadrature_operators(t).X * quadrature_operators(t).X +
                                        quadrature_operators(t).P * quadrature_operators(t).P).dense())
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(GeneratorSeries, MatrixRouteOnSmallTruncation) {
  // the matrix route loses ~n_max digits per nested commutator in cancellation, so it is
  // only usable on small truncations; 100 levels keeps it below 1e-8 here
  const TruncationSpec t{100, 1e-10};
  const auto p = effective_at(2.0);
  const auto series = generator_series(crystal_effective_hamiltonian(p, t), crystal_effective_delta_derivative().on(t), 0.5, 15);
  EXPECT_TRUE(series.is_hermitian(1e-10));
  EXPECT_LT(block_max_diff(series, local_generator_closed_form(p, 0.5, t), 0.8), 1e-8);
}

TEST(GeneratorSeries, DivergenceReported) {
  const TruncationSpec t{400, 1e-10};
  const auto q = quadrature_operators(t);
  const auto H = crystal_effective_hamiltonian(effective_at(0.5), t);
  EXPECT_THROW(generator_series(H, 0.5 * (q.X * q.X + q.P * q.P), 20.0, 30), NumericalError);
  EXPECT_THROW(generator_series(crystal_effective_form(effective_at(0.5)), crystal_effective_delta_derivative(), 20.0, 30),
               NumericalError);
  EXPECT_THROW(generator_series(H, H, 1.0, 0), ConfigError);
}

TEST(GeneratorExact, ZeroTime) {
  const TruncationSpec t{30, 1e-10};
  const auto g = generator_exact(crystal_effective_family(effective_at(0.5), t), 1.0, 0.0);
  EXPECT_EQ(g.max_abs(), 0.0);
}

TEST(GeneratorExact, VarianceMatchesEvolvedQfi) {
  const TruncationSpec t{200, 1e-10};
  for (double ratio : {0.5, 2.0}) {
    const auto p = effective_at(ratio);
    const auto family = crystal_effective_family(p, t);
    for (double tt : {0.5, 1.0}) {
      const auto g = generator_exact(family, p.delta, tt);
      EXPECT_TRUE(g.is_hermitian(1e-10));
      const double var4 = 4.0 * variance(vacuum(t), g);
      const double qfi = crystal_evolved_qfi(p, tt, t, ModelKind::Effective).value;
      EXPECT_NEAR(var4 / qfi, 1.0, 1e-3) << ratio << " " << tt;
      EXPECT_NEAR(var4 / (4.0 * variance(vacuum(t), local_generator_closed_form(p, tt, t))), 1.0, 1e-3);
    }
  }
  const auto g = generator_exact(crystal_effective_family(effective_at(0.5), t), 1.0, 1.0);
  EXPECT_NEAR(4.0 * variance(vacuum(t), g), 3.8147, 1e-3 * 3.8147);
}

TEST(GeneratorExact, TrigRegimeOscillatory) {
  // B = 2 B_c: no exponential growth. The delta-dependent frequency makes 4 Var grow
  // like t^2, modulated by the breathing of the vacuum in the stiffer trap.
  const TruncationSpec t{80, 1e-10};
  const auto p = effective_at(2.0);
  std::vector<double> v;
  for (double tt = 0.25; tt <= 30.0; tt += 0.25)
    v.push_back(4.0 * variance(vacuum(t), local_generator_closed_form(p, tt, t)) / (tt * tt));
  int turns = 0;
  for (std::size_t i = 1; i + 1 < v.size(); ++i)
    if ((v[i] - v[i - 1]) * (v[i + 1] - v[i]) < 0.0) ++turns;
  EXPECT_GE(turns, 4);
  EXPECT_LT(*std::max_element(v.begin(), v.end()), 10.0);
  const auto g = generator_exact(crystal_effective_family(p, t), p.delta, 7.0);
  EXPECT_NEAR(4.0 * variance(vacuum(t), g) / (49.0 * v[27]), 1.0, 1e-3);
}
