// Effective SOC ground state against the closed-form squeezing results.
//   sample_squeezing_oracle [Omega_over_omega]

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "comet/analytic.hpp"
#include "comet/experiments.hpp"

using namespace comet;

int main(int argc, char** argv) {
  const double ratio = argc > 1 ? std::atof(argv[1]) : 50.0;
  std::printf("%10s %6s %14s %14s %14s %14s\n", "1-u", "n_max", "<n>", "sinh^2 xi", "QFI", "u^2/8W^2(1-u)^2");
  for (double w : {0.75, 0.5, 0.25, 1e-2, 1e-4}) {
    const auto p = SocParams::from_ratios(ratio, 1.0 - w);
    const double xi = squeeze_parameter(p);
    const TruncationSpec t{squeezed_vacuum_n_max(xi, 1e-12), 1e-10};
    const auto m = ground_moments(soc_effective_hamiltonian(p, t), t);
    const auto q = qfi_fidelity(soc_effective_family(p, t), p.Omega);
    std::printf("%10.3g %6d %14.8g %14.8g %14.8g %14.8g\n", w, t.n_max, m.n_mean, mean_excitations_adiabatic(p).exact,
                q.value, qfi_omega_adiabatic(p));
  }
}
