#pragma once

#include <cmath>
#include <utility>

#include "keycap/errors.hpp"

namespace keycap::detail {

// Solves value_at(mu) = target for a continuous function that is strictly
// decreasing in mu and vanishes at mu_hi. The lower bracket end is shrunk
// geometrically until it encloses the target, then plain bisection runs to
// an absolute width of abs_tol on mu (200-iteration cap).
template <class F>
inline double invert_decreasing(F&& value_at, double mu_hi, double target,
                                double abs_tol = 1e-12, int max_iter = 200) {
  double lo = 0.5 * mu_hi;
  int guard = 0;
  while (value_at(lo) < target) {
    lo *= 0.1;
    if (++guard > 320 || lo < 1e-300)
      throw ToleranceNotMet("failed to bracket the water level for the requested rate");
  }
  double hi = mu_hi;
  for (int it = 0; it < max_iter && (hi - lo) > abs_tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = value_at(mid);
    if (v == target) return mid;
    if (v > target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Golden-section maximization of a unimodal-ish f on [a, b].
// Returns (argmax, max). Robust to flat stretches; used where a cheap
// scalar line search is enough.
template <class F>
inline std::pair<double, double> golden_max(F&& f, double a, double b, int iters = 80) {
  constexpr double invphi = 0.6180339887498949;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters && (b - a) > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++i) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    }
  }
  return f1 > f2 ? std::make_pair(x1, f1) : std::make_pair(x2, f2);
}

}  // namespace keycap::detail
