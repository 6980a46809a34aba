// Crystal quench to B = B_c/2: full Dicke model against the inverted oscillator.
//   sample_quench_dynamics [g_over_delta B_over_delta n_max]

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "comet/analytic.hpp"
#include "comet/dynamics.hpp"

using namespace comet;

int main(int argc, char** argv) {
  const double g = argc > 2 ? std::atof(argv[1]) : 20.0;
  const double B = argc > 2 ? std::atof(argv[2]) : 200.0;
  const int n_max = argc > 3 ? std::atoi(argv[3]) : 300;
  const auto p = CrystalParams::from_ratios(g, B, 1);
  std::vector<double> times;
  for (int i = 0; i <= 12; ++i) times.push_back(0.25 * i);
  const auto full = quench_trajectory(p, times, TruncationSpec{n_max, 1e-10}, ModelKind::Full);
  std::printf("B/B_c = %g, cap = %g\n", p.B / p.B_c(), full.cap);
  std::printf("%6s %14s %14s %10s\n", "dt", "<n> full", "<n> effective", "ratio");
  for (const auto& pt : full.points) {
    const double eff = effective_covariance_evolution(p, pt.t).n_mean();
    std::printf("%6.2f %14.6g %14.6g %10.4f%s\n", pt.t, pt.n_mean, eff, eff > 0 ? pt.n_mean / eff : 1.0,
                pt.beyond_cap ? "  beyond cap/2" : "");
  }
}
