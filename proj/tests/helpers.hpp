#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "keycap/scalar_gaussian.hpp"

namespace keycap::test {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Conditional-variance parameterization of a degraded triple with unit
// marginal variances and Markov chain X - Y - Z: rho_yz = rho_xz / rho_xy.
inline std::pair<double, double> degraded_variances(double rho_xy, double rho_xz) {
  const double a = rho_xy * rho_xy;
  const double b = (rho_xz * rho_xz) / a;
  const double s_y_given_xz = (1.0 - a) * (1.0 - b) / (1.0 - a * b);
  const double s_y_given_z = 1.0 - b;
  return {s_y_given_xz, s_y_given_z};
}

template <class Curve>
inline double numeric_slope(Curve&& f, double r, double h = 1e-6) {
  const double lo = std::max(r - h, 0.0);
  const double hi = r + h;
  return (f(hi) - f(lo)) / (hi - lo);
}

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n,
                                          double floor_mass = 0.0) {
  std::vector<double> v(n);
  double sum = 0.0;
  for (double& x : v) {
    x = -std::log(std::max(uniform(rng, 0.0, 1.0), 1e-12));
    sum += x;
  }
  for (double& x : v) x = (1.0 - floor_mass * static_cast<double>(n)) * x / sum + floor_mass;
  return v;
}

inline std::vector<std::vector<double>> random_pmf_matrix(std::mt19937_64& rng, std::size_t nx,
                                                          std::size_t ny,
                                                          double floor_mass = 0.0) {
  const std::vector<double> flat = random_simplex(rng, nx * ny, floor_mass);
  std::vector<std::vector<double>> m(nx, std::vector<double>(ny));
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y) m[x][y] = flat[x * ny + y];
  return m;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows,
                                     Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(rng, -1.0, 1.0);
  return m;
}

inline Eigen::MatrixXd random_invertible(std::mt19937_64& rng, Eigen::Index n) {
  for (;;) {
    Eigen::MatrixXd m = random_matrix(rng, n, n);
    if (std::abs(m.determinant()) > 0.1) return m;
  }
}

// Joint (X, Y) covariance from a random Gram matrix; the cross block is
// shrunk to keep canonical correlations away from 1.
struct JointCov {
  Eigen::MatrixXd sx, sy, sxy;
};

inline JointCov random_joint_cov(std::mt19937_64& rng, Eigen::Index n, double shrink = 0.8) {
  const Eigen::MatrixXd g = random_matrix(rng, 2 * n, 2 * n);
  Eigen::MatrixXd j = g * g.transpose() + 0.05 * Eigen::MatrixXd::Identity(2 * n, 2 * n);
  JointCov out;
  out.sx = j.topLeftCorner(n, n);
  out.sy = j.bottomRightCorner(n, n);
  out.sxy = shrink * j.topRightCorner(n, n);
  return out;
}

}  // namespace keycap::test
