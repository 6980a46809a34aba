#pragma once

// Hamiltonians for the spin-orbit-coupled condensate (quantum Rabi form) and the
// Coulomb crystal (Dicke form), plus their quadratic effective oscillators.

#include <cmath>
#include <functional>
#include <string>

#include "comet/errors.hpp"
#include "comet/linalg.hpp"
#include "comet/operators.hpp"

namespace comet {

// A Hamiltonian as a function of one estimated parameter.
using HamiltonianFamily = std::function<OperatorMatrix(double)>;

struct SocParams {
  double omega = 1.0;  // trap frequency
  double mass = 1.0;
  double Omega = 1.0;  // atomic frequency
  double k = 0.0;      // spin-orbit coupling

  double k_c() const { return std::sqrt(Omega * mass / 2.0); }
  double u() const { return k * k / (k_c() * k_c()); }  // (k/k_c)^2

  void validate() const {
    if (!(omega > 0.0) || !(mass > 0.0) || !(Omega > 0.0) || !(k >= 0.0) || !std::isfinite(k))
      throw ConfigError("SocParams: need omega > 0, mass > 0, Omega > 0, k >= 0");
  }

  // Internal units omega = m = 1; u = (k/k_c)^2.
  static SocParams from_ratios(double Omega_over_omega, double u) {
    if (!(u >= 0.0)) throw ConfigError("SocParams: (k/k_c)^2 must be >= 0");
    SocParams p{1.0, 1.0, Omega_over_omega, 0.0};
    p.validate();
    p.k = std::sqrt(u) * p.k_c();
    return p;
  }

  SocParams with_Omega(double value) const {
    SocParams p = *this;
    p.Omega = value;
    return p;
  }
};

struct CrystalParams {
  double delta = 1.0;  // detuning magnitude
  double g = 0.0;      // ion-mode coupling
  double B = 1.0;      // transverse field
  int n_ions = 1;

  double B_c() const { return g * g / delta; }

  void validate() const {
    if (!(delta > 0.0) || !(g > 0.0) || !(B > 0.0) || n_ions < 1)
      throw ConfigError("CrystalParams: need delta > 0, g > 0, B > 0, n_ions >= 1");
  }

  // Internal units delta = 1.
  static CrystalParams from_ratios(double g_over_delta, double B_over_delta, int n_ions) {
    CrystalParams p{1.0, g_over_delta, B_over_delta, n_ions};
    p.validate();
    return p;
  }

  CrystalParams with_delta(double value) const {
    CrystalParams p = *this;
    p.delta = value;
    return p;
  }
  CrystalParams with_B(double value) const {
    CrystalParams p = *this;
    p.B = value;
    return p;
  }
};

inline BasisTag boson_spin_basis(const TruncationSpec& trunc, Index spin_dim) {
  return BasisTag({{basis::kFock, trunc.fock_dim()}, {basis::kSpin, spin_dim}});
}

// omega a^dag a + (Omega/2) sz + k sqrt(omega/2m) (a + a^dag) sx on fock x spin(2).
inline OperatorMatrix soc_rabi_hamiltonian(const SocParams& p, const TruncationSpec& trunc) {
  p.validate();
  const auto b = fock_operators(trunc);
  const auto s = pauli_operators();
  const auto id_b = OperatorMatrix::identity(b.n.basis());
  const auto id_s = OperatorMatrix::identity(s.sz.basis());
  const double coupling = p.k * std::sqrt(p.omega / (2.0 * p.mass));
  return p.omega * tensor(b.n, id_s) + (0.5 * p.Omega) * tensor(id_b, s.sz) + coupling * tensor(b.a + b.adag, s.sx);
}

// Normal-ordered projected form: omega a^dag a - (k^2 omega / 2 m Omega) (a + a^dag)^2.
inline OperatorMatrix soc_effective_hamiltonian(const SocParams& p, const TruncationSpec& trunc) {
  p.validate();
  const auto b = fock_operators(trunc);
  const auto q = b.a + b.adag;
  return p.omega * b.n - (p.k * p.k * p.omega / (2.0 * p.mass * p.Omega)) * (q * q);
}

// Physical form p^2/2m + (m omega^2/2)(1 - u) x^2 in dimensionless quadratures:
// (omega/2) P^2 + (omega/2)(1 - u) X^2. Equals the normal-ordered form plus omega/2,
// except on the top Fock level where the truncated products differ.
inline OperatorMatrix soc_effective_hamiltonian_physical(const SocParams& p, const TruncationSpec& trunc) {
  p.validate();
  const auto q = quadrature_operators(trunc);
  return (0.5 * p.omega) * (q.P * q.P) + (0.5 * p.omega * (1.0 - p.u())) * (q.X * q.X);
}

// (1 - u) / (omega/Omega)^{2/3}; the effective model needs this >> 1.
inline double validity_margin_soc(const SocParams& p) {
  p.validate();
  return (1.0 - p.u()) / std::pow(p.omega / p.Omega, 2.0 / 3.0);
}

enum class DetuningSign { Positive, Negative };

// s delta a^dag a + B Sx - (g/sqrt N)(a + a^dag) Sz on fock x spin(N+1).
inline OperatorMatrix dicke_hamiltonian(const CrystalParams& p, const TruncationSpec& trunc,
                                        DetuningSign sign = DetuningSign::Positive) {
  p.validate();
  const auto b = fock_operators(trunc);
  const auto s = collective_spin(p.n_ions);
  const auto id_b = OperatorMatrix::identity(b.n.basis());
  const auto id_s = OperatorMatrix::identity(s.Sz.basis());
  const double sgn = sign == DetuningSign::Positive ? 1.0 : -1.0;
  return (sgn * p.delta) * tensor(b.n, id_s) + p.B * tensor(id_b, s.Sx) -
         (p.g / std::sqrt(static_cast<double>(p.n_ions))) * tensor(b.a + b.adag, s.Sz);
}

// (delta/2) P^2 + (delta/2)(1 - B_c/B) X^2.
inline OperatorMatrix crystal_effective_hamiltonian(const CrystalParams& p, const TruncationSpec& trunc) {
  p.validate();
  const auto q = quadrature_operators(trunc);
  return (0.5 * p.delta) * (q.P * q.P) + (0.5 * p.delta * (1.0 - p.B_c() / p.B)) * (q.X * q.X);
}

// Ground-state excitation number of the superradiant phase at field B:
// (N B / 4 delta)(B_c/B - B/B_c). Zero at B = B_c.
inline double gs_excitation_cap(const CrystalParams& p) {
  p.validate();
  const double Bc = p.B_c();
  if (p.B > Bc) throw ConfigError("gs_excitation_cap: defined only for B <= B_c");
  return p.n_ions * p.B / (4.0 * p.delta) * (Bc / p.B - p.B / Bc);
}

inline OperatorMatrix free_oscillator(double freq, const TruncationSpec& trunc) {
  if (!(freq > 0.0)) throw ConfigError("free_oscillator: frequency must be positive");
  return freq * fock_operators(trunc).n;
}

// Lowest eigenvector of Sx in the spin-N/2 irrep.
inline StateVector lowest_sx_state(int n_ions) {
  const auto s = collective_spin(n_ions);
  const auto es = dense_eigensystem(s.Sx);
  return StateVector::normalized(es.vectors.col(0), s.Sx.basis());
}

// Vacuum x lowest-Sx state: the decoupled ground state for B >> B_c.
inline StateVector crystal_initial_state(const CrystalParams& p, const TruncationSpec& trunc) {
  return tensor(vacuum(trunc), lowest_sx_state(p.n_ions));
}

// Families used for QFI estimates. SOC: Omega varies at fixed k; crystal: delta varies.
inline HamiltonianFamily soc_rabi_family(const SocParams& p, const TruncationSpec& trunc) {
  return [p, trunc](double Omega) { return soc_rabi_hamiltonian(p.with_Omega(Omega), trunc); };
}
inline HamiltonianFamily soc_effective_family(const SocParams& p, const TruncationSpec& trunc) {
  return [p, trunc](double Omega) { return soc_effective_hamiltonian(p.with_Omega(Omega), trunc); };
}
inline HamiltonianFamily dicke_family(const CrystalParams& p, const TruncationSpec& trunc,
                                      DetuningSign sign = DetuningSign::Positive) {
  return [p, trunc, sign](double delta) { return dicke_hamiltonian(p.with_delta(delta), trunc, sign); };
}
inline HamiltonianFamily crystal_effective_family(const CrystalParams& p, const TruncationSpec& trunc) {
  return [p, trunc](double delta) { return crystal_effective_hamiltonian(p.with_delta(delta), trunc); };
}

}  // namespace comet
