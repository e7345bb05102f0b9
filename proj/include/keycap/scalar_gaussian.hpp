#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "keycap/errors.hpp"

namespace keycap {

/// Correlation parameters of one scalar Gaussian source component.
/// Only the squared correlations enter any rate formula, so signs are
/// accepted on input and otherwise ignored. |rho_xy| = 1 is rejected:
/// the SNR-like parameter beta is undefined there (zero denominator)
/// and the key rate would be infinite at any positive communication rate.
struct GaussTriple {
  double rho_xy = 0.0;
  double rho_xz = 0.0;  // 0 when there is no eavesdropper

  GaussTriple() = default;
  GaussTriple(double xy, double xz) : rho_xy(xy), rho_xz(xz) {
    if (!(std::abs(xy) <= 1.0) || !(std::abs(xz) <= 1.0))
      throw ValidationError("correlation coefficients must lie in [-1, 1], got rho_xy=" +
                            std::to_string(xy) + " rho_xz=" + std::to_string(xz));
    if (std::abs(xy) == 1.0)
      throw DegenerateCorrelation("|rho_xy| = 1: beta is undefined (1 - rho_xy^2 = 0)");
  }
};

/// beta = (rho_xy^2 - rho_xz^2) / (1 - rho_xy^2) and its positive part.
/// beta_plus is the initial key-per-communication slope of the component.
struct Beta {
  double beta = 0.0;
  double beta_plus = 0.0;
};

inline Beta beta_of(const GaussTriple& t) {
  if (std::abs(t.rho_xy) >= 1.0)
    throw DegenerateCorrelation("|rho_xy| = 1: beta is undefined (1 - rho_xy^2 = 0)");
  const double a = t.rho_xy * t.rho_xy;
  const double c = t.rho_xz * t.rho_xz;
  const double beta = (a - c) / (1.0 - a);
  return Beta{beta, std::max(beta, 0.0)};
}

namespace detail {
inline void require_rate(double r) {
  if (!(r >= 0.0) || !std::isfinite(r))
    throw NegativeRate("communication rate must be finite and >= 0, got " + std::to_string(r));
}
}  // namespace detail

/// Key rate of a single component given r bits of one-way communication:
///   R(r) = 1/2 log2(1 + beta_plus * (1 - 2^{-2r})).
/// expm1/log1p keep full precision near r = 0, where R(r) ~ beta_plus * r.
inline double scalar_key_rate(const Beta& b, double r) {
  detail::require_rate(r);
  const double one_minus_pow = -std::expm1(-2.0 * r * std::numbers::ln2);
  return 0.5 * std::log1p(b.beta_plus * one_minus_pow) / std::numbers::ln2;
}

/// r -> infinity limit of scalar_key_rate: 1/2 log2(1 + beta_plus).
/// Exposed separately; infinite r is never accepted as a curve input.
inline double scalar_key_rate_limit(const Beta& b) {
  return 0.5 * std::log1p(b.beta_plus) / std::numbers::ln2;
}

/// Conditional-variance form of the same rate for degraded sources:
///   R(r) = 1/2 log2( (S_y|xz 2^{-2r} + S_y|z (1 - 2^{-2r})) / S_y|xz ).
/// Requires 0 < sigma_y_given_xz <= sigma_y_given_z.
inline double scalar_key_rate_degraded_form(double sigma_y_given_xz, double sigma_y_given_z,
                                            double r) {
  if (!(sigma_y_given_xz > 0.0) || !(sigma_y_given_z >= sigma_y_given_xz) ||
      !std::isfinite(sigma_y_given_z))
    throw InvalidVariance("require 0 < sigma_y_given_xz <= sigma_y_given_z, got " +
                          std::to_string(sigma_y_given_xz) + " and " +
                          std::to_string(sigma_y_given_z));
  detail::require_rate(r);
  const double one_minus_pow = -std::expm1(-2.0 * r * std::numbers::ln2);
  return 0.5 * std::log1p((sigma_y_given_z / sigma_y_given_xz - 1.0) * one_minus_pow) /
         std::numbers::ln2;
}

}  // namespace keycap
