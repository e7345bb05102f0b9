#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "keycap/detail/root_find.hpp"
#include "keycap/errors.hpp"

namespace keycap {

/// Sampled (joint) spectral densities on a frequency grid over [-pi, pi].
struct SpectrumGrid {
  std::vector<double> omegas;  // strictly increasing
  std::vector<double> s_x, s_y, s_z;
  std::vector<std::complex<double>> s_xy, s_xz;

  std::size_t size() const { return omegas.size(); }

  // Invariant violations in human-readable form; empty when the grid is valid.
  std::vector<std::string> check() const {
    std::vector<std::string> out;
    const std::size_t n = omegas.size();
    if (n < 2) out.push_back("grid needs at least 2 frequencies");
    if (s_x.size() != n || s_y.size() != n || s_z.size() != n || s_xy.size() != n ||
        s_xz.size() != n)
      out.push_back("spectral columns must all have the grid length");
    if (!out.empty()) return out;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(omegas[i] >= -std::numbers::pi - 1e-12 && omegas[i] <= std::numbers::pi + 1e-12))
        out.push_back("omega[" + std::to_string(i) + "] outside [-pi, pi]");
      if (i > 0 && !(omegas[i] > omegas[i - 1]))
        out.push_back("omega grid not strictly increasing at index " + std::to_string(i));
      if (s_x[i] < 0.0 || s_y[i] < 0.0 || s_z[i] < 0.0)
        out.push_back("negative power spectral density at index " + std::to_string(i));
      if (std::norm(s_xy[i]) > s_x[i] * s_y[i] + 1e-9)
        out.push_back("|S_XY|^2 > S_X S_Y at index " + std::to_string(i) +
                      " (Cauchy-Schwarz violated by " +
                      std::to_string(std::norm(s_xy[i]) - s_x[i] * s_y[i]) + ")");
      if (std::norm(s_xz[i]) > s_x[i] * s_z[i] + 1e-9)
        out.push_back("|S_XZ|^2 > S_X S_Z at index " + std::to_string(i) +
                      " (Cauchy-Schwarz violated)");
    }
    // real-process symmetry, checked only when the grid itself is symmetric
    bool symmetric = true;
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(omegas[i] + omegas[n - 1 - i]) > 1e-12) symmetric = false;
    if (symmetric) {
      for (std::size_t i = 0; i < n / 2; ++i) {
        const std::size_t j = n - 1 - i;
        if (std::abs(s_x[i] - s_x[j]) > 1e-9 || std::abs(s_y[i] - s_y[j]) > 1e-9 ||
            std::abs(s_z[i] - s_z[j]) > 1e-9)
          out.push_back("autospectrum not even at +/-omega index " + std::to_string(i));
        if (std::abs(s_xy[i] - std::conj(s_xy[j])) > 1e-9 ||
            std::abs(s_xz[i] - std::conj(s_xz[j])) > 1e-9)
          out.push_back("cross-spectrum not conjugate-symmetric at index " + std::to_string(i));
      }
    }
    return out;
  }

  void validate() const {
    const auto violations = check();
    if (!violations.empty()) throw ValidationError("invalid spectrum grid: " + violations.front());
  }
};

/// Auto- and cross-correlation sequences on the symmetric lag window [-K, K];
/// index k + K. Autocorrelations must be even in the lag.
struct CorrelationFunctions {
  std::vector<double> r_x, r_y, r_z, r_xy, r_xz;

  int max_lag() const {
    if (r_x.empty() || r_x.size() % 2 == 0)
      throw ValidationError("correlation windows must have odd length 2K+1");
    return static_cast<int>(r_x.size() / 2);
  }
};

/// Evaluates S(omega) = sum_k r[k] e^{-ik omega} on a uniform grid over
/// [-pi, pi]. Autospectra must come out real (imaginary residue above
/// 1e-10 of the sequence mass is rejected) and are clamped at zero.
/// A Wiener-class guard rejects windows whose endpoints have not decayed
/// below 1e-6 of the lag-zero value.
inline SpectrumGrid spectrum_from_correlation(const CorrelationFunctions& corr,
                                              std::size_t grid_size) {
  const int lag = corr.max_lag();
  const std::size_t window = corr.r_x.size();
  if (corr.r_y.size() != window || corr.r_z.size() != window || corr.r_xy.size() != window ||
      corr.r_xz.size() != window)
    throw ValidationError("all correlation windows must share one lag range");
  if (grid_size < 2 * window)
    throw ValidationError("grid_size must be at least twice the window length");

  for (const auto* seq : {&corr.r_x, &corr.r_y, &corr.r_z}) {
    const double r0 = (*seq)[static_cast<std::size_t>(lag)];
    if (!(r0 > 0.0)) throw ValidationError("autocorrelation must be positive at lag zero");
    for (double v : *seq)
      if (std::abs(v) > r0 * (1.0 + 1e-12))
        throw ValidationError("autocorrelation exceeds its lag-zero value");
  }

  if (lag > 0) {
    auto decayed = [&](const std::vector<double>& seq, double scale, const char* name) {
      const double bound = 1e-6 * scale;
      if (std::abs(seq.front()) > bound || std::abs(seq.back()) > bound)
        throw NotSummable(std::string(name) +
                          " has not decayed at the window edge; enlarge the lag window");
    };
    const double rx0 = std::abs(corr.r_x[static_cast<std::size_t>(lag)]);
    const double ry0 = std::abs(corr.r_y[static_cast<std::size_t>(lag)]);
    const double rz0 = std::abs(corr.r_z[static_cast<std::size_t>(lag)]);
    decayed(corr.r_x, rx0, "r_x");
    decayed(corr.r_y, ry0, "r_y");
    decayed(corr.r_z, rz0, "r_z");
    decayed(corr.r_xy, std::sqrt(rx0 * ry0), "r_xy");
    decayed(corr.r_xz, std::sqrt(rx0 * rz0), "r_xz");
  }

  SpectrumGrid grid;
  grid.omegas.resize(grid_size);
  grid.s_x.resize(grid_size);
  grid.s_y.resize(grid_size);
  grid.s_z.resize(grid_size);
  grid.s_xy.resize(grid_size);
  grid.s_xz.resize(grid_size);

  auto dtft = [&](const std::vector<double>& seq, double omega) {
    std::complex<double> s{0.0, 0.0};
    for (int k = -lag; k <= lag; ++k)
      s += seq[static_cast<std::size_t>(k + lag)] *
           std::complex<double>(std::cos(k * omega), -std::sin(k * omega));
    return s;
  };
  auto mass = [](const std::vector<double>& seq) {
    double m = 0.0;
    for (double v : seq) m += std::abs(v);
    return m;
  };
  const double mx = mass(corr.r_x), my = mass(corr.r_y), mz = mass(corr.r_z);

  auto real_spectrum = [&](const std::vector<double>& seq, double omega, double scale,
                           const char* name) {
    const std::complex<double> s = dtft(seq, omega);
    if (std::abs(s.imag()) > 1e-10 * std::max(1.0, scale))
      throw ValidationError(std::string(name) +
                            ": autospectrum has an imaginary residue; the autocorrelation "
                            "window is not even in the lag");
    return std::max(s.real(), 0.0);
  };

  for (std::size_t j = 0; j < grid_size; ++j) {
    const double omega =
        -std::numbers::pi +
        2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(grid_size - 1);
    grid.omegas[j] = omega;
    grid.s_x[j] = real_spectrum(corr.r_x, omega, mx, "r_x");
    grid.s_y[j] = real_spectrum(corr.r_y, omega, my, "r_y");
    grid.s_z[j] = real_spectrum(corr.r_z, omega, mz, "r_z");
    grid.s_xy[j] = dtft(corr.r_xy, omega);
    grid.s_xz[j] = dtft(corr.r_xz, omega);
  }
  return grid;
}

/// Per-frequency SNR-like parameter
///   beta(w) = (|S_XY|^2 S_Z - |S_XZ|^2 S_Y) / (S_X S_Y S_Z - |S_XY|^2 S_Z),
/// which equals (rho_xy^2 - rho_xz^2)/(1 - rho_xy^2) for the per-frequency
/// correlation coefficients. Frequencies where any autospectrum vanishes
/// carry no key and get beta = 0. Perfect coherence |S_XY|^2 = S_X S_Y is
/// rejected: beta would be infinite there and every rate integral diverges.
inline std::vector<double> beta_omega(const SpectrumGrid& grid) {
  grid.validate();
  std::vector<double> beta(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double sx = grid.s_x[i], sy = grid.s_y[i], sz = grid.s_z[i];
    if (sx <= 0.0 || sy <= 0.0 || sz <= 0.0) {
      beta[i] = 0.0;
      continue;
    }
    const double axy = std::norm(grid.s_xy[i]);
    if (axy >= sx * sy * (1.0 - 1e-9))
      throw DegenerateSpectrum("perfect coherence |S_XY|^2 = S_X S_Y at omega = " +
                               std::to_string(grid.omegas[i]));
    const double axz = std::norm(grid.s_xz[i]);
    beta[i] = (axy * sz - axz * sy) / (sz * (sx * sy - axy));
  }
  return beta;
}

struct ProcessPoint {
  double r = 0.0;
  double R = 0.0;
};

namespace detail {

// Trapezoidal frequency-domain water-filling integrals at water level mu.
// A cell is active when the midpoint (linearly interpolated) beta exceeds mu;
// endpoint betas of active cells are clamped from below at mu, where both
// integrands vanish, so the active-set boundary contributes continuously.
inline ProcessPoint integrate_frontier(const std::vector<double>& omegas,
                                       const std::vector<double>& beta, double mu) {
  auto f_r = [mu](double b) {
    return std::log2(b * (mu + 1.0)) - std::log2((b + 1.0) * mu);
  };
  auto f_k = [mu](double b) { return std::log2(b + 1.0) - std::log2(mu + 1.0); };
  double acc_r = 0.0, acc_k = 0.0;
  for (std::size_t i = 0; i + 1 < omegas.size(); ++i) {
    if (0.5 * (beta[i] + beta[i + 1]) <= mu) continue;
    const double h = omegas[i + 1] - omegas[i];
    const double b0 = std::max(beta[i], mu);
    const double b1 = std::max(beta[i + 1], mu);
    acc_r += 0.5 * h * (f_r(b0) + f_r(b1));
    acc_k += 0.5 * h * (f_k(b0) + f_k(b1));
  }
  const double scale = 1.0 / (4.0 * std::numbers::pi);
  return {scale * acc_r, scale * acc_k};
}

}  // namespace detail

/// (r, R) of the stationary-process frontier at water level mu > 0:
///   r = (1/4pi) Int_{beta(w) > mu} log2( beta(w)(mu+1) / ((beta(w)+1) mu) ) dw
///   R = (1/4pi) Int_{beta(w) > mu} log2( (beta(w)+1) / (mu+1) ) dw
/// by composite trapezoid on the grid. No adaptive subdivision: refine the
/// grid to refine the answer, so output stays reproducible.
inline ProcessPoint process_frontier(const SpectrumGrid& grid, double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu))
    throw InvalidMu("water level mu must be finite and > 0, got " + std::to_string(mu));
  return detail::integrate_frontier(grid.omegas, beta_omega(grid), mu);
}

/// Inverts r(mu) = r_budget by bisection, as in the product solver.
/// Returns (R, mu); a grid whose beta never goes positive yields (0, 0).
inline std::pair<double, double> process_key_rate(const SpectrumGrid& grid, double r_budget) {
  if (!(r_budget >= 0.0) || !std::isfinite(r_budget))
    throw NegativeRate("communication budget must be finite and >= 0");
  const std::vector<double> beta = beta_omega(grid);
  double mu_max = 0.0;
  for (double b : beta) mu_max = std::max(mu_max, b);
  if (mu_max <= 0.0) return {0.0, 0.0};
  if (r_budget == 0.0) return {0.0, mu_max};
  const double mu_star = detail::invert_decreasing(
      [&](double mu) { return detail::integrate_frontier(grid.omegas, beta, mu).r; }, mu_max,
      r_budget);
  return {detail::integrate_frontier(grid.omegas, beta, mu_star).R, mu_star};
}

}  // namespace keycap
