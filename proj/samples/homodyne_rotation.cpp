// Homodyne readout of a squeezed vacuum: Var Q(theta) by free rotation, best angle, Husimi peak.

#include <cstdio>

#include "comet/homodyne.hpp"

using namespace comet;

int main() {
  const TruncationSpec t{200, 1e-10};
  const auto psi = rotate_state(squeezed_vacuum(t, 0.8), 0.6);
  for (int k = 0; k < 8; ++k) {
    const double th = kPi * k / 8.0;
    std::printf("theta %6.4f  Var Q %10.6f\n", th, x_moments(rotate_state(psi, th)).variance());
  }
  const auto best = optimal_rotation_angle(psi);
  std::printf("optimal theta %.6f, variance %.6f (vacuum 0.5), wait %.6f at freq 1\n", best.theta, best.variance,
              wait_time(best.theta, 1.0));
  std::printf("Q(0) = %.8f\n", husimi_grid(psi, {cplx(0.0, 0.0)})[0]);
}
