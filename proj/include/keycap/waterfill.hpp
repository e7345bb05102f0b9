#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "keycap/detail/root_find.hpp"
#include "keycap/errors.hpp"
#include "keycap/scalar_gaussian.hpp"

namespace keycap {

/// Per-component SNR-like parameters of a product Gaussian source.
struct BetaProfile {
  std::vector<Beta> betas;

  static BetaProfile from_values(std::span<const double> beta_values) {
    if (beta_values.empty()) throw ValidationError("beta profile must be nonempty");
    BetaProfile p;
    p.betas.reserve(beta_values.size());
    for (double b : beta_values) {
      if (!std::isfinite(b)) throw ValidationError("beta values must be finite");
      p.betas.push_back(Beta{b, std::max(b, 0.0)});
    }
    return p;
  }

  static BetaProfile from_triples(std::span<const GaussTriple> triples) {
    if (triples.empty()) throw ValidationError("beta profile must be nonempty");
    BetaProfile p;
    p.betas.reserve(triples.size());
    for (const GaussTriple& t : triples) p.betas.push_back(beta_of(t));
    return p;
  }

  std::size_t size() const { return betas.size(); }

  double max_beta_plus() const {
    double m = 0.0;
    for (const Beta& b : betas) m = std::max(m, b.beta_plus);
    return m;
  }
};

/// One point of the communication-rate--key-rate frontier. mu is the common
/// marginal slope (water level); components with beta_plus <= mu receive no
/// communication. r always equals the sum of the per-component allocations.
struct RatePoint {
  double mu = 0.0;
  double r = 0.0;
  double R = 0.0;
  std::vector<double> allocations;
};

/// Frontier samples ordered by strictly decreasing mu (hence increasing r).
struct RateCurve {
  std::vector<RatePoint> points;

  // Returns human-readable violations of the curve invariants, empty if ok.
  // The all-zero curve (every beta_plus = 0) is exempt from strict growth.
  std::vector<std::string> check() const {
    std::vector<std::string> out;
    bool all_zero = true;
    for (const auto& p : points)
      if (p.r != 0.0 || p.R != 0.0) all_zero = false;
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (!(points[i].mu < points[i - 1].mu)) out.push_back("mu not strictly decreasing");
      if (!all_zero && !(points[i].r > points[i - 1].r)) out.push_back("r not strictly increasing");
      if (points[i].R < points[i - 1].R - 1e-12) out.push_back("R decreasing");
    }
    // concavity of the piecewise-linear interpolation: chord slopes must fall
    for (std::size_t i = 2; i < points.size(); ++i) {
      const double dr1 = points[i - 1].r - points[i - 2].r;
      const double dr2 = points[i].r - points[i - 1].r;
      if (dr1 <= 0.0 || dr2 <= 0.0) continue;
      const double s1 = (points[i - 1].R - points[i - 2].R) / dr1;
      const double s2 = (points[i].R - points[i - 1].R) / dr2;
      if (s2 > s1 + 1e-9) out.push_back("piecewise-linear interpolation not concave");
    }
    return out;
  }
};

namespace detail {
inline double log2_ratio(double num, double den) { return std::log2(num) - std::log2(den); }
}  // namespace detail

/// Evaluates the parametric frontier at water level mu > 0:
///   r  = 1/2 sum_{beta_i^+ > mu} log2( beta_i^+ (mu+1) / ((beta_i^+ + 1) mu) )
///   R  = 1/2 sum_{beta_i^+ > mu} log2( (beta_i^+ + 1) / (mu+1) )
/// with the per-component allocation r_i = max{0, 1/2 log2((1+mu) b / (mu (1+b)))}.
/// Components with beta_plus exactly equal to mu are excluded from the active
/// set; their contribution is zero either way. Summation is left-to-right so
/// results are bit-reproducible.
inline RatePoint frontier_at(const BetaProfile& profile, double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu))
    throw InvalidMu("water level mu must be finite and > 0, got " + std::to_string(mu));
  RatePoint pt;
  pt.mu = mu;
  pt.allocations.assign(profile.size(), 0.0);
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const double b = profile.betas[i].beta_plus;
    if (b > mu) {
      const double ri = 0.5 * detail::log2_ratio(b * (mu + 1.0), (b + 1.0) * mu);
      pt.allocations[i] = ri;
      pt.r += ri;
      pt.R += 0.5 * detail::log2_ratio(b + 1.0, mu + 1.0);
    }
  }
  return pt;
}

/// lim_{r -> inf} R(r) = 1/2 sum_i log2(1 + beta_i^+).
inline double asymptote(const BetaProfile& profile) {
  double s = 0.0;
  for (const Beta& b : profile.betas) s += 0.5 * std::log1p(b.beta_plus) / std::numbers::ln2;
  return s;
}

/// Initial key-per-communication slope: max_i beta_i^+.
inline double initial_efficiency(const BetaProfile& profile) { return profile.max_beta_plus(); }

/// Inverts the frontier: finds mu* with r(mu*) = r_budget by bisection
/// (r(mu) is continuous and strictly decreasing on (0, max beta_plus)) and
/// returns the key rate together with the achieving allocation. When every
/// beta_plus is zero the zero point is returned with mu = 0, the one place a
/// RatePoint carries a non-positive mu.
inline std::pair<double, RatePoint> key_rate(const BetaProfile& profile, double r_budget) {
  detail::require_rate(r_budget);
  const double mu_max = profile.max_beta_plus();
  if (mu_max <= 0.0) {
    RatePoint zero;
    zero.allocations.assign(profile.size(), 0.0);
    return {0.0, zero};
  }
  if (r_budget == 0.0) return {0.0, frontier_at(profile, mu_max)};
  const double mu_star = detail::invert_decreasing(
      [&](double mu) { return frontier_at(profile, mu).r; }, mu_max, r_budget);
  RatePoint pt = frontier_at(profile, mu_star);
  return {pt.R, std::move(pt)};
}

/// Result of the generic equal-slope allocator.
struct GenericAllocation {
  double total = 0.0;
  std::vector<double> allocations;
  double mu = 0.0;
};

/// Maximizes sum_i R_i(r_i) subject to sum_i r_i <= r_budget, r_i >= 0, for
/// concave nondecreasing curves with R_i(0) = 0, by equalizing numeric slopes:
/// bisect on the common slope mu and set r_i(mu) = sup{ r : R_i'(r) >= mu }.
/// Slopes use central finite differences with step 1e-6 bits, so curves must
/// be smooth at that scale. Each curve is checked for concavity on a sample
/// grid first; failure raises NonConcaveInput since the equal-slope condition
/// is meaningless for non-concave inputs.
template <class CurveFn>
inline GenericAllocation allocate_generic(const std::vector<CurveFn>& curves, double r_budget) {
  detail::require_rate(r_budget);
  if (curves.empty()) throw ValidationError("allocate_generic requires at least one curve");
  const std::size_t n = curves.size();

  if (r_budget == 0.0) {
    GenericAllocation out;
    out.allocations.assign(n, 0.0);
    return out;
  }

  // concavity / shape check on a coarse grid
  constexpr int kCheck = 32;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(kCheck + 1);
    for (int j = 0; j <= kCheck; ++j) v[j] = curves[i](r_budget * j / kCheck);
    const double scale = 1e-9 * std::max(1.0, std::abs(v[kCheck]));
    if (std::abs(v[0]) > scale)
      throw NonConcaveInput("curve " + std::to_string(i) + " does not satisfy R(0) = 0");
    for (int j = 1; j <= kCheck; ++j)
      if (v[j] < v[j - 1] - scale)
        throw NonConcaveInput("curve " + std::to_string(i) + " is not nondecreasing");
    for (int j = 1; j < kCheck; ++j)
      if (v[j - 1] + v[j + 1] - 2.0 * v[j] > scale)
        throw NonConcaveInput("curve " + std::to_string(i) + " failed the concavity sample check");
  }

  constexpr double kStep = 1e-6;  // finite-difference step in bits
  auto slope = [&](std::size_t i, double r) {
    const double lo = std::max(r - kStep, 0.0);
    const double hi = r + kStep;
    return (curves[i](hi) - curves[i](lo)) / (hi - lo);
  };

  if (n == 1) {
    GenericAllocation out;
    out.allocations = {r_budget};
    out.total = curves[0](r_budget);
    out.mu = slope(0, r_budget);
    return out;
  }

  // r_i(mu): largest r in [0, budget] whose slope still reaches mu
  auto alloc_at = [&](std::size_t i, double mu) {
    if (slope(i, 0.0) <= mu) return 0.0;
    if (slope(i, r_budget) >= mu) return r_budget;
    double lo = 0.0, hi = r_budget;
    for (int it = 0; it < 100 && (hi - lo) > 1e-14 * std::max(1.0, r_budget); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (slope(i, mid) >= mu)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  };

  double mu_hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) mu_hi = std::max(mu_hi, slope(i, 0.0));
  GenericAllocation out;
  out.allocations.assign(n, 0.0);
  if (mu_hi <= 0.0) return out;  // every curve is flat

  const double mu_star = detail::invert_decreasing(
      [&](double mu) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += alloc_at(i, mu);
        return total;
      },
      mu_hi, r_budget);

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.allocations[i] = alloc_at(i, mu_star);
    sum += out.allocations[i];
  }
  if (sum > r_budget && sum > 0.0)
    for (double& a : out.allocations) a *= r_budget / sum;
  for (std::size_t i = 0; i < n; ++i) out.total += curves[i](out.allocations[i]);
  out.mu = mu_star;
  return out;
}

/// mu values for curve emission: a geometric grid of exactly n values from
/// max beta_plus down to max beta_plus * 1e-6, with the breakpoints mu =
/// beta_i^+ snapped onto the grid (each breakpoint replaces the log-nearest
/// non-breakpoint grid value). Breakpoints are where the active set changes
/// and the curvature of R(r) jumps. For an all-zero profile the reference
/// level 1.0 is used and the curve is identically zero.
inline std::vector<double> mu_grid(const BetaProfile& profile, std::size_t n) {
  if (n < 2) throw ValidationError("a curve needs at least 2 points");
  double mu_max = profile.max_beta_plus();
  if (mu_max <= 0.0) mu_max = 1.0;
  const double kSpan = 1e-6;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i)
    grid[i] = mu_max * std::pow(kSpan, static_cast<double>(i) / static_cast<double>(n - 1));
  grid.front() = mu_max;

  std::vector<bool> pinned(n, false);
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(a, b); };

  std::vector<double> breakpoints;
  for (const Beta& b : profile.betas)
    if (b.beta_plus >= mu_max * kSpan && b.beta_plus <= mu_max) breakpoints.push_back(b.beta_plus);
  std::sort(breakpoints.rbegin(), breakpoints.rend());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end(),
                                [&](double a, double b) { return near(a, b); }),
                    breakpoints.end());

  for (double bp : breakpoints) {
    bool present = false;
    for (std::size_t i = 0; i < n; ++i)
      if (near(grid[i], bp)) {
        pinned[i] = true;
        present = true;
        break;
      }
    if (present) continue;
    std::size_t best = n;
    double best_dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pinned[i]) continue;
      const double dist = std::abs(std::log(bp) - std::log(grid[i]));
      if (best == n || dist < best_dist) {
        best = i;
        best_dist = dist;
      }
    }
    if (best < n) {
      grid[best] = bp;
      pinned[best] = true;
    }
  }
  std::sort(grid.rbegin(), grid.rend());
  return grid;
}

/// Samples the frontier on mu_grid(profile, n).
inline RateCurve sample_curve(const BetaProfile& profile, std::size_t n) {
  RateCurve curve;
  for (double mu : mu_grid(profile, n)) curve.points.push_back(frontier_at(profile, mu));
  return curve;
}

}  // namespace keycap
