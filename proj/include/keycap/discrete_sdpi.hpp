#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "keycap/detail/root_find.hpp"
#include "keycap/errors.hpp"

namespace keycap {

/// Finite joint distribution P_XY or P_XYZ on small alphabets, stored
/// row-major over [x][y][z] with nz = 1 when there is no Z axis.
struct JointPmf {
  std::vector<double> p;
  int nx = 0, ny = 0, nz = 1;
  bool has_z = false;

  double at(int x, int y, int z = 0) const {
    return p[static_cast<std::size_t>((x * ny + y) * nz + z)];
  }
  double& at(int x, int y, int z = 0) {
    return p[static_cast<std::size_t>((x * ny + y) * nz + z)];
  }

  static constexpr int kDefaultCap = 6;

  std::vector<std::string> check() const {
    std::vector<std::string> out;
    double sum = 0.0;
    for (double v : p) {
      if (v < 0.0) out.push_back("negative probability entry " + std::to_string(v));
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      out.push_back("probabilities sum to " + std::to_string(sum) + " (deficit " +
                    std::to_string(1.0 - sum) + ")");
    return out;
  }

  void validate() const {
    const auto violations = check();
    if (!violations.empty()) throw ValidationError("invalid pmf: " + violations.front());
  }

  // *_raw builds check only the shape and the alphabet cap, so callers can
  // report probability-mass violations via check() instead of throwing.
  static JointPmf xy_raw(const std::vector<std::vector<double>>& m, int cap = kDefaultCap) {
    JointPmf pmf;
    pmf.nx = static_cast<int>(m.size());
    pmf.ny = pmf.nx ? static_cast<int>(m[0].size()) : 0;
    if (pmf.nx < 1 || pmf.ny < 1) throw ValidationError("pmf_xy must be a nonempty matrix");
    if (pmf.nx > cap || pmf.ny > cap)
      throw AlphabetTooLarge("alphabet sizes " + std::to_string(pmf.nx) + "x" +
                             std::to_string(pmf.ny) + " exceed the cap " + std::to_string(cap));
    pmf.p.reserve(static_cast<std::size_t>(pmf.nx * pmf.ny));
    for (const auto& row : m) {
      if (static_cast<int>(row.size()) != pmf.ny)
        throw ValidationError("pmf_xy rows must have equal length");
      for (double v : row) pmf.p.push_back(v);
    }
    return pmf;
  }

  static JointPmf xy(const std::vector<std::vector<double>>& m, int cap = kDefaultCap) {
    JointPmf pmf = xy_raw(m, cap);
    pmf.validate();
    return pmf;
  }

  static JointPmf xyz_raw(const std::vector<std::vector<std::vector<double>>>& m,
                          int cap = kDefaultCap) {
    JointPmf pmf;
    pmf.has_z = true;
    pmf.nx = static_cast<int>(m.size());
    pmf.ny = pmf.nx ? static_cast<int>(m[0].size()) : 0;
    pmf.nz = (pmf.ny && pmf.nx) ? static_cast<int>(m[0][0].size()) : 0;
    if (pmf.nx < 1 || pmf.ny < 1 || pmf.nz < 1)
      throw ValidationError("pmf_xyz must be a nonempty cube");
    if (pmf.nx > cap || pmf.ny > cap || pmf.nz > cap)
      throw AlphabetTooLarge("alphabet sizes exceed the cap " + std::to_string(cap));
    for (const auto& plane : m) {
      if (static_cast<int>(plane.size()) != pmf.ny)
        throw ValidationError("pmf_xyz planes must have equal shape");
      for (const auto& row : plane) {
        if (static_cast<int>(row.size()) != pmf.nz)
          throw ValidationError("pmf_xyz rows must have equal length");
        for (double v : row) pmf.p.push_back(v);
      }
    }
    return pmf;
  }

  static JointPmf xyz(const std::vector<std::vector<std::vector<double>>>& m,
                      int cap = kDefaultCap) {
    JointPmf pmf = xyz_raw(m, cap);
    pmf.validate();
    return pmf;
  }

  std::vector<double> marginal_x() const {
    std::vector<double> out(static_cast<std::size_t>(nx), 0.0);
    for (int x = 0; x < nx; ++x)
      for (int y = 0; y < ny; ++y)
        for (int z = 0; z < nz; ++z) out[static_cast<std::size_t>(x)] += at(x, y, z);
    return out;
  }

  JointPmf xy_marginal() const {
    JointPmf out;
    out.nx = nx;
    out.ny = ny;
    out.nz = 1;
    out.p.assign(static_cast<std::size_t>(nx * ny), 0.0);
    for (int x = 0; x < nx; ++x)
      for (int y = 0; y < ny; ++y)
        for (int z = 0; z < nz; ++z) out.at(x, y) += at(x, y, z);
    return out;
  }
};

/// Result of a strong-data-processing-constant computation. value is clamped
/// to [0, 1]. method records how the optimum was located: "grid" when the
/// dense simplex grid already held the best point, "refined" when local
/// refinement improved on it, "lower-bound-random-search" for the randomized
/// auxiliary-variable ascent (which certifies only a lower bound).
struct SdpiResult {
  double value = 0.0;
  std::vector<double> argmax_qx;
  std::string method = "grid";
  long evaluations = 0;
  bool degradedness_warning = false;
};

namespace detail {

// KL divergence of q/||q||_1 against p, in bits. Self-normalizing: KL
// vanishes quadratically near q = p while a normalization residue epsilon
// shifts the raw sum by epsilon/ln 2, which would swamp the value near the
// simplex center; dividing by the long-double mass removes that shift
// exactly. Accumulation is in long double for the same cancellation reason.
inline long double kl2(const std::vector<double>& q, const std::vector<long double>& log2_p) {
  long double d = 0.0L, s = 0.0L;
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] > 0.0) {
      d += q[i] * (std::log2(static_cast<long double>(q[i])) - log2_p[i]);
      s += q[i];
    }
  if (s <= 0.0L) return 0.0L;
  return d / s - std::log2(s);
}

inline std::vector<long double> log2_of(const std::vector<double>& p) {
  std::vector<long double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    out[i] = p[i] > 0.0 ? std::log2(static_cast<long double>(p[i])) : 0.0L;
  return out;
}

template <class Visit>
inline void for_each_composition(int total, int parts, Visit&& visit) {
  std::vector<int> c(static_cast<std::size_t>(parts), 0);
  const auto rec = [&](auto&& self, int level, int remaining) -> void {
    if (level == parts - 1) {
      c[static_cast<std::size_t>(level)] = remaining;
      visit(c);
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      c[static_cast<std::size_t>(level)] = v;
      self(self, level + 1, remaining - v);
    }
  };
  rec(rec, 0, total);
}

struct SimplexSearch {
  double value = -1.0;
  std::vector<double> argmax;
  long evaluations = 0;
  bool refined = false;
  bool any_valid = false;
};

// Maximizes a ratio-type objective over the probability simplex around p:
// dense simplex grid, near-p probes along coordinate-difference directions
// (the supremum may live in the Q -> P limit), rays from p through the best
// grid points with a golden-section pass in log-radius, and coordinate-wise
// golden-section around the incumbent. The grid excludes points where the
// objective reports nullopt (in particular p itself).
template <class Objective>
inline SimplexSearch simplex_ratio_search(Objective&& objective, const std::vector<double>& p,
                                          int grid_resolution, long refine_budget = 10000) {
  SimplexSearch out;
  const int k = static_cast<int>(p.size());
  out.argmax = p;
  if (k < 2) return out;

  const int m = grid_resolution > 0 ? grid_resolution : (k == 2 ? 60 : (k == 3 ? 24 : 12));

  long refine_evals = 0;
  bool in_refinement = false;
  auto eval = [&](const std::vector<double>& q_raw) -> std::optional<double> {
    std::vector<double> q = q_raw;
    double sum = 0.0;
    for (double& v : q) {
      if (v < -1e-12) return std::nullopt;  // infeasible probe
      if (v < 0.0) v = 0.0;
      sum += v;
    }
    if (sum <= 0.0) return std::nullopt;
    for (double& v : q) v /= sum;
    ++out.evaluations;
    if (in_refinement) ++refine_evals;
    const std::optional<double> v = objective(q);
    if (!v) return std::nullopt;
    out.any_valid = true;
    if (*v > out.value) {
      out.value = *v;
      out.argmax = q;
      out.refined = in_refinement;
    }
    return v;
  };

  // stage 1: dense grid
  std::vector<std::pair<double, std::vector<double>>> grid_hits;
  for_each_composition(m, k, [&](const std::vector<int>& c) {
    std::vector<double> q(p.size());
    for (int i = 0; i < k; ++i)
      q[static_cast<std::size_t>(i)] = static_cast<double>(c[static_cast<std::size_t>(i)]) / m;
    ++out.evaluations;
    const std::optional<double> v = objective(q);
    if (!v) return;
    out.any_valid = true;
    grid_hits.emplace_back(*v, q);
    if (*v > out.value) {
      out.value = *v;
      out.argmax = q;
    }
  });

  in_refinement = true;
  auto budget_left = [&] { return refine_evals < refine_budget; };

  // stage 2: near-p probes along coordinate-difference directions
  for (int i = 0; i < k && budget_left(); ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      for (double t : {1e-2, 1e-3, 1e-4}) {
        if (p[static_cast<std::size_t>(j)] < t) continue;
        std::vector<double> q = p;
        q[static_cast<std::size_t>(i)] += t;
        q[static_cast<std::size_t>(j)] -= t;
        eval(q);
      }
    }

  // stage 3: rays from p through the strongest grid points
  std::sort(grid_hits.begin(), grid_hits.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  const std::size_t top = std::min<std::size_t>(grid_hits.size(), 32);
  auto ray_edge = [&](const std::vector<double>& d) {
    double edge = 1e300;
    for (int i = 0; i < k; ++i)
      if (d[static_cast<std::size_t>(i)] < 0.0)
        edge = std::min(edge, -p[static_cast<std::size_t>(i)] / d[static_cast<std::size_t>(i)]);
    return edge;
  };
  auto along = [&](const std::vector<double>& d, double t) {
    std::vector<double> q = p;
    for (int i = 0; i < k; ++i) q[static_cast<std::size_t>(i)] += t * d[static_cast<std::size_t>(i)];
    return q;
  };
  static constexpr double kRayScales[] = {1.0,  0.5,  0.25, 0.1, 0.03,
                                          0.01, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5};
  std::vector<std::vector<double>> ray_dirs;
  for (std::size_t g = 0; g < top; ++g) {
    std::vector<double> d(p.size());
    double l1 = 0.0;
    for (int i = 0; i < k; ++i) {
      d[static_cast<std::size_t>(i)] =
          grid_hits[g].second[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(i)];
      l1 += std::abs(d[static_cast<std::size_t>(i)]);
    }
    if (l1 < 1e-14) continue;
    ray_dirs.push_back(d);
  }
  for (const auto& d : ray_dirs) {
    if (!budget_left()) break;
    const double edge = ray_edge(d);
    for (double s : kRayScales) eval(along(d, s * edge));
  }

  // stage 4: golden-section in log-radius along the best rays; the radius is
  // floored around 1e-5 * edge, below which the divergences hit the noise of
  // long double accumulation
  for (std::size_t g = 0; g < std::min<std::size_t>(ray_dirs.size(), 4) && budget_left(); ++g) {
    const auto& d = ray_dirs[g];
    const double edge = ray_edge(d);
    golden_max(
        [&](double s) { return eval(along(d, std::exp(s))).value_or(-1e30); },
        std::log(edge) - 11.5, std::log(edge), 60);
  }

  // stage 5: coordinate-wise golden-section around the incumbent, run to
  // convergence so the final value does not depend on symbol labeling
  bool improved = true;
  for (int pass = 0; pass < 12 && improved && budget_left(); ++pass) {
    improved = false;
    for (int i = 0; i < k && budget_left(); ++i)
      for (int j = i + 1; j < k && budget_left(); ++j) {
        const std::vector<double> base = out.argmax;
        const double before = out.value;
        golden_max(
            [&](double s) {
              std::vector<double> q = base;
              q[static_cast<std::size_t>(i)] += s;
              q[static_cast<std::size_t>(j)] -= s;
              return eval(q).value_or(-1e30);
            },
            -base[static_cast<std::size_t>(i)], base[static_cast<std::size_t>(j)], 64);
        if (out.value > before + 1e-15) improved = true;
      }
  }

  return out;
}

// support indices of a marginal
inline std::vector<int> support_of(const std::vector<double>& p) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) idx.push_back(static_cast<int>(i));
  return idx;
}

struct RestrictedChannels {
  std::vector<int> x_support;
  std::vector<double> p_x;                // restricted, renormalized (sums to 1)
  std::vector<double> p_y, p_z;           // restricted output marginals
  std::vector<std::vector<double>> w_y;   // P_{Y|X} on supports, [x][y]
  std::vector<std::vector<double>> w_z;   // P_{Z|X} on supports, [x][z]
};

inline RestrictedChannels restrict_channels(const JointPmf& pmf) {
  RestrictedChannels rc;
  const std::vector<double> px_full = pmf.marginal_x();
  rc.x_support = support_of(px_full);
  for (int x : rc.x_support) rc.p_x.push_back(px_full[static_cast<std::size_t>(x)]);

  std::vector<double> py_full(static_cast<std::size_t>(pmf.ny), 0.0);
  std::vector<double> pz_full(static_cast<std::size_t>(pmf.nz), 0.0);
  for (int x = 0; x < pmf.nx; ++x)
    for (int y = 0; y < pmf.ny; ++y)
      for (int z = 0; z < pmf.nz; ++z) {
        py_full[static_cast<std::size_t>(y)] += pmf.at(x, y, z);
        pz_full[static_cast<std::size_t>(z)] += pmf.at(x, y, z);
      }
  const std::vector<int> y_support = support_of(py_full);
  const std::vector<int> z_support = support_of(pz_full);
  for (int y : y_support) rc.p_y.push_back(py_full[static_cast<std::size_t>(y)]);
  for (int z : z_support) rc.p_z.push_back(pz_full[static_cast<std::size_t>(z)]);

  for (int x : rc.x_support) {
    std::vector<double> wy(y_support.size(), 0.0), wz(z_support.size(), 0.0);
    const double px = px_full[static_cast<std::size_t>(x)];
    for (std::size_t yi = 0; yi < y_support.size(); ++yi)
      for (int z = 0; z < pmf.nz; ++z) wy[yi] += pmf.at(x, y_support[yi], z) / px;
    for (std::size_t zi = 0; zi < z_support.size(); ++zi)
      for (int y = 0; y < pmf.ny; ++y) wz[zi] += pmf.at(x, y, z_support[zi]) / px;
    rc.w_y.push_back(std::move(wy));
    rc.w_z.push_back(std::move(wz));
  }
  return rc;
}

inline std::vector<double> push_forward(const std::vector<double>& q,
                                        const std::vector<std::vector<double>>& w,
                                        std::size_t out_dim) {
  std::vector<double> out(out_dim, 0.0);
  for (std::size_t x = 0; x < q.size(); ++x)
    for (std::size_t o = 0; o < out_dim; ++o) out[o] += q[x] * w[x][o];
  return out;
}

inline std::vector<double> embed_full(const std::vector<double>& q,
                                      const std::vector<int>& support, int full_dim) {
  std::vector<double> out(static_cast<std::size_t>(full_dim), 0.0);
  for (std::size_t i = 0; i < support.size(); ++i)
    out[static_cast<std::size_t>(support[i])] = q[i];
  return out;
}

// Euclidean projection of v onto the probability simplex (Duchi et al.).
inline std::vector<double> project_simplex(std::vector<double> v) {
  std::vector<double> u = v;
  std::sort(u.rbegin(), u.rend());
  double css = 0.0, tau = 0.0;
  int rho = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    css += u[j];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) {
      rho = static_cast<int>(j + 1);
      tau = t;
    }
  }
  (void)rho;
  for (double& x : v) x = std::max(x - tau, 0.0);
  return v;
}

// Least-squares check that some channel Y -> Z reproduces P_{Z|X}; returns
// the residual max|A K - B| after a projected-gradient solve.
inline double degradedness_residual(const std::vector<std::vector<double>>& w_y,
                                    const std::vector<std::vector<double>>& w_z) {
  const std::size_t kx = w_y.size();
  const std::size_t ky = kx ? w_y[0].size() : 0;
  const std::size_t kz = kx ? w_z[0].size() : 0;
  if (ky == 0 || kz == 0) return 0.0;
  Eigen::MatrixXd a(kx, ky), b(kx, kz);
  for (std::size_t x = 0; x < kx; ++x) {
    for (std::size_t y = 0; y < ky; ++y) a(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = w_y[x][y];
    for (std::size_t z = 0; z < kz; ++z) b(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(z)) = w_z[x][z];
  }
  Eigen::MatrixXd kmat = Eigen::MatrixXd::Constant(ky, kz, 1.0 / static_cast<double>(kz));
  const double step = 1.0 / (2.0 * a.squaredNorm() + 1e-12);
  double best = 1e300;
  int stalled = 0;
  for (int it = 0; it < 5000 && stalled < 100; ++it) {
    const Eigen::MatrixXd grad = 2.0 * a.transpose() * (a * kmat - b);
    Eigen::MatrixXd next = kmat - step * grad;
    for (Eigen::Index row = 0; row < next.rows(); ++row) {
      std::vector<double> r(static_cast<std::size_t>(next.cols()));
      for (Eigen::Index c = 0; c < next.cols(); ++c) r[static_cast<std::size_t>(c)] = next(row, c);
      r = project_simplex(std::move(r));
      for (Eigen::Index c = 0; c < next.cols(); ++c) next(row, c) = r[static_cast<std::size_t>(c)];
    }
    kmat = next;
    const double resid = (a * kmat - b).squaredNorm();
    if (resid < best - 1e-16) {
      best = resid;
      stalled = 0;
    } else {
      ++stalled;
    }
  }
  return (a * kmat - b).cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Approximates s*(X;Y) = sup_{Q_X != P_X} D(Q_Y || P_Y) / D(Q_X || P_X)
/// with Q_Y = Q_X P_{Y|X}, by dense simplex search plus local refinement.
/// The search restricts Q to the support of P_X (points outside have
/// infinite input divergence and contribute 0) and explicitly probes the
/// Q_X -> P_X limit, where the supremum may live. KL divergences use
/// base-2 logs with 0 log 0 = 0. A constant X yields 0.
inline SdpiResult s_star(const JointPmf& pmf, int grid_resolution = 0) {
  if (pmf.nx > JointPmf::kDefaultCap)
    throw AlphabetTooLarge("|X| = " + std::to_string(pmf.nx) + " exceeds the search cap");
  pmf.validate();
  const detail::RestrictedChannels rc = detail::restrict_channels(pmf);
  SdpiResult res;
  res.argmax_qx = detail::embed_full(rc.p_x, rc.x_support, pmf.nx);
  if (rc.p_x.size() < 2) return res;

  const std::vector<long double> log2_px = detail::log2_of(rc.p_x);
  const std::vector<long double> log2_py = detail::log2_of(rc.p_y);
  auto objective = [&](const std::vector<double>& q) -> std::optional<double> {
    const long double dx = detail::kl2(q, log2_px);
    if (dx <= 1e-15L) return std::nullopt;
    const std::vector<double> qy = detail::push_forward(q, rc.w_y, rc.p_y.size());
    return static_cast<double>(detail::kl2(qy, log2_py) / dx);
  };

  const detail::SimplexSearch search =
      detail::simplex_ratio_search(objective, rc.p_x, grid_resolution);
  res.value = std::clamp(search.value, 0.0, 1.0);
  res.argmax_qx = detail::embed_full(search.argmax, rc.x_support, pmf.nx);
  res.method = search.refined ? "refined" : "grid";
  res.evaluations = search.evaluations;
  return res;
}

/// Degraded-source form
///   s*_Z(X;Y) = sup_{Q_X} (D(Q_Y||P_Y) - D(Q_Z||P_Z)) / (D(Q_X||P_X) - D(Q_Z||P_Z))
/// with Q_XYZ = Q_X P_{YZ|X}. Candidates whose denominator is <= 1e-12 are
/// excluded; if every searched point is excluded the constant is undefined
/// and DenominatorVanishes is raised. Degradedness is declared by the
/// caller; a least-squares feasibility heuristic for a channel Y -> Z only
/// sets degradedness_warning on failure, it never rejects.
inline SdpiResult s_star_degraded(const JointPmf& pmf, int grid_resolution = 0) {
  if (!pmf.has_z) throw MissingEavesdropper("s_star_degraded requires a P_XYZ distribution");
  if (pmf.nx > JointPmf::kDefaultCap)
    throw AlphabetTooLarge("|X| = " + std::to_string(pmf.nx) + " exceeds the search cap");
  pmf.validate();
  const detail::RestrictedChannels rc = detail::restrict_channels(pmf);
  SdpiResult res;
  res.degradedness_warning = detail::degradedness_residual(rc.w_y, rc.w_z) > 1e-6;
  res.argmax_qx = detail::embed_full(rc.p_x, rc.x_support, pmf.nx);
  if (rc.p_x.size() < 2) return res;

  const std::vector<long double> log2_px = detail::log2_of(rc.p_x);
  const std::vector<long double> log2_py = detail::log2_of(rc.p_y);
  const std::vector<long double> log2_pz = detail::log2_of(rc.p_z);
  auto objective = [&](const std::vector<double>& q) -> std::optional<double> {
    const long double dx = detail::kl2(q, log2_px);
    const std::vector<double> qz = detail::push_forward(q, rc.w_z, rc.p_z.size());
    const long double dz = detail::kl2(qz, log2_pz);
    const long double den = dx - dz;
    if (den <= 1e-12L) return std::nullopt;
    const std::vector<double> qy = detail::push_forward(q, rc.w_y, rc.p_y.size());
    return static_cast<double>((detail::kl2(qy, log2_py) - dz) / den);
  };

  const detail::SimplexSearch search =
      detail::simplex_ratio_search(objective, rc.p_x, grid_resolution);
  if (!search.any_valid)
    throw DenominatorVanishes(
        "D(Q_X||P_X) - D(Q_Z||P_Z) <= 1e-12 for every searched Q_X; s*_Z is undefined here");
  res.value = std::clamp(search.value, 0.0, 1.0);
  res.argmax_qx = detail::embed_full(search.argmax, rc.x_support, pmf.nx);
  res.method = search.refined ? "refined" : "grid";
  res.evaluations = search.evaluations;
  return res;
}

/// Randomized multi-start exponentiated-gradient ascent over Q_VX with
/// |V| = v_cardinality, maximizing
///   (I(V;Y) - I(V;Z)) / (I(V;X) - I(V;Z) + D(Q_X||P_X) - D(Q_Y||P_Y))
/// under the tilted joint Q_VX P_{YZ|X}. The best value found is reported as
/// a LOWER bound: no finite search certifies the supremum over unbounded
/// auxiliary alphabets. Deterministic for a fixed seed; restarts = 0 returns
/// the trivial bound 0. Candidates with a vanishing denominator are skipped.
inline SdpiResult s_star_lower_bound(const JointPmf& pmf, int v_cardinality, int restarts,
                                     std::uint64_t seed) {
  if (!pmf.has_z) throw MissingEavesdropper("s_star_lower_bound requires a P_XYZ distribution");
  if (v_cardinality < 2) throw ValidationError("v_cardinality must be at least 2");
  if (restarts < 0) throw ValidationError("restarts must be nonnegative");
  pmf.validate();
  const detail::RestrictedChannels rc = detail::restrict_channels(pmf);
  SdpiResult res;
  res.method = "lower-bound-random-search";
  res.argmax_qx = detail::embed_full(rc.p_x, rc.x_support, pmf.nx);
  const int k = static_cast<int>(rc.p_x.size());
  if (k < 2 || restarts == 0) return res;
  const int nv = v_cardinality;

  const std::vector<long double> log2_px = detail::log2_of(rc.p_x);
  const std::vector<long double> log2_py = detail::log2_of(rc.p_y);
  const std::size_t ky = rc.p_y.size(), kz = rc.p_z.size();

  long evals = 0;
  // q is an nv x k joint over (V, X), flattened v-major; all information
  // terms are accumulated in long double (same cancellation issue as kl2)
  auto objective = [&](const std::vector<double>& q) -> std::optional<double> {
    ++evals;
    std::vector<double> qv(static_cast<std::size_t>(nv), 0.0);
    std::vector<double> qx(static_cast<std::size_t>(k), 0.0);
    for (int v = 0; v < nv; ++v)
      for (int x = 0; x < k; ++x) {
        const double w = q[static_cast<std::size_t>(v * k + x)];
        qv[static_cast<std::size_t>(v)] += w;
        qx[static_cast<std::size_t>(x)] += w;
      }
    auto lg = [](double v) { return std::log2(static_cast<long double>(v)); };
    long double mass = 0.0L;
    for (double w : q) mass += w;
    if (mass <= 0.0L) return std::nullopt;
    const long double log2_mass = std::log2(mass);
    // I for the joint normalized by its true long-double mass:
    //   I = raw / mass + log2(mass), raw = sum w (lg w - lg row - lg col)
    long double i_vx = 0.0L;
    for (int v = 0; v < nv; ++v)
      for (int x = 0; x < k; ++x) {
        const double w = q[static_cast<std::size_t>(v * k + x)];
        if (w > 0.0)
          i_vx += w * (lg(w) - lg(qv[static_cast<std::size_t>(v)]) -
                       lg(qx[static_cast<std::size_t>(x)]));
      }
    i_vx = i_vx / mass + log2_mass;
    auto mutual_with = [&](const std::vector<std::vector<double>>& w_chan, std::size_t dim,
                           std::vector<double>& out_marginal) {
      std::vector<double> joint(static_cast<std::size_t>(nv) * dim, 0.0);
      out_marginal.assign(dim, 0.0);
      for (int v = 0; v < nv; ++v)
        for (int x = 0; x < k; ++x) {
          const double w = q[static_cast<std::size_t>(v * k + x)];
          if (w <= 0.0) continue;
          for (std::size_t o = 0; o < dim; ++o)
            joint[static_cast<std::size_t>(v) * dim + o] +=
                w * w_chan[static_cast<std::size_t>(x)][o];
        }
      for (int v = 0; v < nv; ++v)
        for (std::size_t o = 0; o < dim; ++o)
          out_marginal[o] += joint[static_cast<std::size_t>(v) * dim + o];
      long double info = 0.0L;
      for (int v = 0; v < nv; ++v)
        for (std::size_t o = 0; o < dim; ++o) {
          const double w = joint[static_cast<std::size_t>(v) * dim + o];
          if (w > 0.0)
            info += w * (lg(w) - lg(qv[static_cast<std::size_t>(v)]) - lg(out_marginal[o]));
        }
      return info / mass + log2_mass;
    };
    std::vector<double> qy, qz;
    const long double i_vy = mutual_with(rc.w_y, ky, qy);
    const long double i_vz = mutual_with(rc.w_z, kz, qz);
    const long double dx = detail::kl2(qx, log2_px);
    const long double dy = detail::kl2(qy, log2_py);
    const long double den = i_vx - i_vz + dx - dy;
    if (den <= 1e-12L) return std::nullopt;
    return static_cast<double>((i_vy - i_vz) / den);
  };

  auto normalize = [](std::vector<double>& q) {
    double sum = 0.0;
    for (double& v : q) {
      if (v < 1e-300) v = 1e-300;
      sum += v;
    }
    for (double& v : q) v /= sum;
  };

  std::mt19937_64 engine(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t dim = static_cast<std::size_t>(nv * k);

  double best_val = -1.0;
  std::vector<double> best_q;

  for (int restart = 0; restart < restarts; ++restart) {
    std::vector<double> q(dim);
    if (restart % 2 == 0) {
      for (double& v : q) v = -std::log(std::max(unif(engine), 1e-12));
    } else {
      // pair of opposite small tilts of P_X: the optimum often sits in the
      // near-degenerate corner where Q_{X|V=v} -> P_X
      std::vector<double> dir(static_cast<std::size_t>(k));
      double mean = 0.0;
      for (double& v : dir) {
        v = 2.0 * unif(engine) - 1.0;
        mean += v;
      }
      for (double& v : dir) v -= mean / k;
      static constexpr double kTilts[] = {0.2, 0.05, 0.01};
      const double t = kTilts[(restart / 2) % 3];
      for (int v = 0; v < nv; ++v) {
        const double sign = (v % 2 == 0) ? 1.0 : -1.0;
        for (int x = 0; x < k; ++x) {
          const double px = rc.p_x[static_cast<std::size_t>(x)];
          q[static_cast<std::size_t>(v * k + x)] =
              std::max(px * (1.0 + sign * t * dir[static_cast<std::size_t>(x)]), 1e-9) / nv;
        }
      }
    }
    normalize(q);
    std::optional<double> cur = objective(q);
    if (!cur) continue;
    if (*cur > best_val) {
      best_val = *cur;
      best_q = q;
    }

    double eta = 1.0;
    int stalls = 0;
    for (int iter = 0; iter < 150 && stalls < 3; ++iter) {
      std::vector<double> grad(dim, 0.0);
      double max_abs_g = 0.0;
      constexpr double kH = 1e-4;
      for (std::size_t i = 0; i < dim; ++i) {
        std::vector<double> qp = q, qm = q;
        qp[i] *= (1.0 + kH);
        qm[i] *= (1.0 - kH);
        normalize(qp);
        normalize(qm);
        const std::optional<double> fp = objective(qp);
        const std::optional<double> fm = objective(qm);
        if (fp && fm) grad[i] = (*fp - *fm) / (2.0 * q[i] * kH);
        max_abs_g = std::max(max_abs_g, std::abs(grad[i]));
      }
      if (max_abs_g <= 0.0) break;

      bool accepted = false;
      for (double scale : {1.0, 0.25, 0.0625}) {
        std::vector<double> cand = q;
        for (std::size_t i = 0; i < dim; ++i)
          cand[i] = q[i] * std::exp(eta * scale * grad[i] / max_abs_g);
        normalize(cand);
        const std::optional<double> fc = objective(cand);
        if (fc && *fc > *cur + 1e-13) {
          q = std::move(cand);
          cur = fc;
          eta = std::min(eta * scale * 2.0, 64.0);
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        eta /= 8.0;
        ++stalls;
      } else {
        stalls = 0;
        if (*cur > best_val) {
          best_val = *cur;
          best_q = q;
        }
      }
    }
  }

  res.evaluations = evals;
  if (best_val < 0.0) return res;  // every candidate skipped: trivial bound
  res.value = std::clamp(best_val, 0.0, 1.0);
  std::vector<double> qx(static_cast<std::size_t>(k), 0.0);
  for (int v = 0; v < nv; ++v)
    for (int x = 0; x < k; ++x) qx[static_cast<std::size_t>(x)] += best_q[static_cast<std::size_t>(v * k + x)];
  res.argmax_qx = detail::embed_full(qx, rc.x_support, pmf.nx);
  return res;
}

/// rho_m^2(X;Y): squared second-largest singular value of
/// Q(x,y) = P(x,y) / sqrt(P_X(x) P_Y(y)), on the marginal supports.
inline double maximal_correlation(const JointPmf& pmf) {
  pmf.validate();
  const JointPmf m = pmf.has_z ? pmf.xy_marginal() : pmf;
  std::vector<double> px(static_cast<std::size_t>(m.nx), 0.0);
  std::vector<double> py(static_cast<std::size_t>(m.ny), 0.0);
  for (int x = 0; x < m.nx; ++x)
    for (int y = 0; y < m.ny; ++y) {
      px[static_cast<std::size_t>(x)] += m.at(x, y);
      py[static_cast<std::size_t>(y)] += m.at(x, y);
    }
  const std::vector<int> sx = detail::support_of(px);
  const std::vector<int> sy = detail::support_of(py);
  if (sx.size() < 2 || sy.size() < 2)
    throw DegenerateMarginal("maximal correlation needs at least two symbols of positive "
                             "probability on each axis");
  Eigen::MatrixXd q(sx.size(), sy.size());
  for (std::size_t i = 0; i < sx.size(); ++i)
    for (std::size_t j = 0; j < sy.size(); ++j)
      q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          m.at(sx[i], sy[j]) / std::sqrt(px[static_cast<std::size_t>(sx[i])] *
                                         py[static_cast<std::size_t>(sy[j])]);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(q);
  const double second = svd.singularValues()(1);
  return std::clamp(second * second, 0.0, 1.0);
}

/// Independent product of two sources on the paired alphabets.
inline JointPmf tensor_product(const JointPmf& a, const JointPmf& b) {
  constexpr int guard = JointPmf::kDefaultCap * JointPmf::kDefaultCap;
  JointPmf out;
  out.nx = a.nx * b.nx;
  out.ny = a.ny * b.ny;
  out.nz = a.nz * b.nz;
  out.has_z = a.has_z || b.has_z;
  if (out.nx > guard || out.ny > guard || out.nz > guard)
    throw AlphabetTooLarge("product alphabet exceeds the cap^2 guard of " + std::to_string(guard));
  out.p.assign(static_cast<std::size_t>(out.nx) * static_cast<std::size_t>(out.ny) *
                   static_cast<std::size_t>(out.nz),
               0.0);
  for (int xa = 0; xa < a.nx; ++xa)
    for (int xb = 0; xb < b.nx; ++xb)
      for (int ya = 0; ya < a.ny; ++ya)
        for (int yb = 0; yb < b.ny; ++yb)
          for (int za = 0; za < a.nz; ++za)
            for (int zb = 0; zb < b.nz; ++zb)
              out.at(xa * b.nx + xb, ya * b.ny + yb, za * b.nz + zb) =
                  a.at(xa, ya, za) * b.at(xb, yb, zb);
  return out;
}

/// Initial key-per-communication efficiency s*/(1 - s*), the r -> 0 slope of
/// R(r)/r. Unbounded (SaturatedConstant) when s* = 1.
inline double initial_efficiency_discrete(const SdpiResult& s) {
  if (s.value >= 1.0)
    throw SaturatedConstant("s* = 1: the initial efficiency is unbounded");
  return s.value / (1.0 - s.value);
}

}  // namespace keycap
