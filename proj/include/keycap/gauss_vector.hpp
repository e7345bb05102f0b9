#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "keycap/errors.hpp"
#include "keycap/scalar_gaussian.hpp"
#include "keycap/waterfill.hpp"

namespace keycap {

namespace detail {

inline double max_abs(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline void require_symmetric(const Eigen::MatrixXd& m, const char* name) {
  if (m.rows() != m.cols())
    throw NotSymmetric(std::string(name) + " must be square, got " + std::to_string(m.rows()) +
                       "x" + std::to_string(m.cols()));
  const double tol = 1e-10 * std::max(1.0, max_abs(m));
  if (max_abs(m - m.transpose()) > tol)
    throw NotSymmetric(std::string(name) + " is not symmetric within tolerance");
}

struct PsdEigs {
  Eigen::MatrixXd vectors;  // n x r, retained eigenvectors
  Eigen::VectorXd values;   // r, retained eigenvalues (> rank_tol * lambda_max)
};

inline PsdEigs psd_eigs(const Eigen::MatrixXd& m, double rank_tol, const char* name) {
  require_symmetric(m, name);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success)
    throw NotPSD(std::string(name) + ": eigendecomposition did not converge");
  const Eigen::VectorXd& vals = es.eigenvalues();  // ascending
  const double lam_max = vals.size() ? vals(vals.size() - 1) : 0.0;
  const double psd_tol = 1e-10 * std::max(1.0, std::abs(lam_max));
  if (vals.size() && vals(0) < -psd_tol)
    throw NotPSD(std::string(name) + " has eigenvalue " + std::to_string(vals(0)));
  const double keep = rank_tol * std::max(lam_max, 0.0);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < vals.size(); ++i)
    if (vals(i) > keep && vals(i) > 0.0) idx.push_back(i);
  PsdEigs out;
  out.vectors.resize(m.rows(), static_cast<Eigen::Index>(idx.size()));
  out.values.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.vectors.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(idx[k]);
    out.values(static_cast<Eigen::Index>(k)) = vals(idx[k]);
  }
  return out;
}

// d^{-1/2} U^T restricted to the retained subspace (r x n).
inline Eigen::MatrixXd whitener_thin(const PsdEigs& e) {
  return e.values.array().rsqrt().matrix().asDiagonal() * e.vectors.transpose();
}

inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double rank_tol,
                                      const char* name) {
  const PsdEigs e = psd_eigs(m, rank_tol, name);
  return e.vectors * e.values.array().inverse().matrix().asDiagonal() * e.vectors.transpose();
}

// Builds an orthogonal d x d matrix whose column i equals row i of F
// normalized (for nonzero rows); remaining columns are an orthonormal
// completion. Rows of F must be mutually orthogonal where nonzero.
inline Eigen::MatrixXd orthonormal_from_rows(const Eigen::MatrixXd& f) {
  const Eigen::Index d = f.cols();
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(d, d);
  std::vector<bool> assigned(static_cast<std::size_t>(d), false);
  const Eigen::Index usable = std::min(f.rows(), d);
  for (Eigen::Index i = 0; i < usable; ++i) {
    const double norm = f.row(i).norm();
    if (norm > 1e-8) {
      v.col(i) = f.row(i).transpose() / norm;
      assigned[static_cast<std::size_t>(i)] = true;
    }
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    if (assigned[static_cast<std::size_t>(j)]) continue;
    Eigen::VectorXd best;
    double best_norm = -1.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      Eigen::VectorXd cand = Eigen::VectorXd::Unit(d, k);
      for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index c = 0; c < d; ++c)
          if (c != j && (assigned[static_cast<std::size_t>(c)] || c < j))
            cand -= v.col(c).dot(cand) * v.col(c);
      const double norm = cand.norm();
      if (norm > best_norm) {
        best_norm = norm;
        best = cand;
      }
    }
    v.col(j) = best / best_norm;
    assigned[static_cast<std::size_t>(j)] = true;
  }
  return v;
}

}  // namespace detail

/// The five covariance matrices of a jointly Gaussian triple (X, Y, Z).
/// Z blocks are optional; their absence means "no eavesdropper". Validation
/// covers symmetry, positive semidefiniteness, consistent dimensions and
/// positive semidefiniteness of the stacked (X,Y) and (X,Z) joints.
struct CovarianceSet {
  Eigen::MatrixXd sigma_x, sigma_y, sigma_xy;
  std::optional<Eigen::MatrixXd> sigma_z, sigma_xz;

  bool has_eavesdropper() const { return sigma_z.has_value(); }

  static CovarianceSet make(Eigen::MatrixXd sx, Eigen::MatrixXd sy, Eigen::MatrixXd sxy,
                            std::optional<Eigen::MatrixXd> sz = std::nullopt,
                            std::optional<Eigen::MatrixXd> sxz = std::nullopt) {
    if (sx.rows() != sx.cols() || sy.rows() != sy.cols())
      throw DimensionMismatch("sigma_x and sigma_y must be square");
    if (sxy.rows() != sx.rows() || sxy.cols() != sy.rows())
      throw DimensionMismatch("sigma_xy must be dim(X) x dim(Y)");
    detail::require_symmetric(sx, "sigma_x");
    detail::require_symmetric(sy, "sigma_y");
    (void)detail::psd_eigs(sx, 0.0, "sigma_x");
    (void)detail::psd_eigs(sy, 0.0, "sigma_y");
    if (sxz && !sz) throw DimensionMismatch("sigma_xz requires sigma_z");
    if (sz) {
      if (sz->rows() != sz->cols()) throw DimensionMismatch("sigma_z must be square");
      detail::require_symmetric(*sz, "sigma_z");
      (void)detail::psd_eigs(*sz, 0.0, "sigma_z");
      if (!sxz) sxz = Eigen::MatrixXd::Zero(sx.rows(), sz->rows());
      if (sxz->rows() != sx.rows() || sxz->cols() != sz->rows())
        throw DimensionMismatch("sigma_xz must be dim(X) x dim(Z)");
    }

    auto joint_psd = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& cross,
                        const Eigen::MatrixXd& b, const char* name) {
      Eigen::MatrixXd j(a.rows() + b.rows(), a.rows() + b.rows());
      j.topLeftCorner(a.rows(), a.rows()) = a;
      j.topRightCorner(a.rows(), b.rows()) = cross;
      j.bottomLeftCorner(b.rows(), a.rows()) = cross.transpose();
      j.bottomRightCorner(b.rows(), b.rows()) = b;
      (void)detail::psd_eigs(j, 0.0, name);
    };
    joint_psd(sx, sxy, sy, "joint (X,Y) covariance");
    if (sz) joint_psd(sx, *sxz, *sz, "joint (X,Z) covariance");

    CovarianceSet cov;
    cov.sigma_x = std::move(sx);
    cov.sigma_y = std::move(sy);
    cov.sigma_xy = std::move(sxy);
    cov.sigma_z = std::move(sz);
    cov.sigma_xz = std::move(sxz);
    return cov;
  }
};

inline constexpr double kDefaultRankTol = 1e-12;
inline constexpr double kDefaultCommuteTol = 1e-8;

/// Sigma^{-1/2} from the eigendecomposition, inverting only eigenvalues above
/// rank_tol * lambda_max; on the retained subspace W Sigma W = I_r.
inline Eigen::MatrixXd inv_sqrt(const Eigen::MatrixXd& sigma, double rank_tol = kDefaultRankTol) {
  const detail::PsdEigs e = detail::psd_eigs(sigma, rank_tol, "sigma");
  return e.vectors * e.values.array().rsqrt().matrix().asDiagonal() * e.vectors.transpose();
}

struct CommutativityReport {
  bool commutes = false;
  double commutator_norm = 0.0;
};

/// Forms the whitened Gram operators
///   A = Sx^{-1/2} Sxz Sz^{-1} Szx Sx^{-1/2},  B = Sx^{-1/2} Sxy Sy^{-1} Syx Sx^{-1/2}
/// and measures ||AB - BA||_F. The product reduction with an eavesdropper is
/// valid exactly when these commute.
inline CommutativityReport commutativity_check(const CovarianceSet& cov,
                                               double tol = kDefaultCommuteTol) {
  if (!cov.has_eavesdropper())
    throw MissingEavesdropper("commutativity_check requires sigma_z and sigma_xz");
  const detail::PsdEigs ex = detail::psd_eigs(cov.sigma_x, kDefaultRankTol, "sigma_x");
  const Eigen::MatrixXd wx = detail::whitener_thin(ex);
  const Eigen::MatrixXd cy = wx * cov.sigma_xy;
  const Eigen::MatrixXd cz = wx * (*cov.sigma_xz);
  Eigen::MatrixXd b = cy * detail::pseudo_inverse(cov.sigma_y, kDefaultRankTol, "sigma_y") *
                      cy.transpose();
  Eigen::MatrixXd a = cz * detail::pseudo_inverse(*cov.sigma_z, kDefaultRankTol, "sigma_z") *
                      cz.transpose();
  a = 0.5 * (a + a.transpose());
  b = 0.5 * (b + b.transpose());
  const double norm = (a * b - b * a).norm();
  return {norm <= tol * (a.norm() * b.norm() + 1.0), norm};
}

/// Result of reducing a vector Gaussian triple to independent scalar pairs.
/// The transforms map original coordinates to product coordinates; applying
/// them to the input covariances diagonalizes all five matrices. Components
/// are sorted by decreasing rho_xy and reported with nonnegative rho.
struct ProductReduction {
  std::vector<GaussTriple> pairs;
  Eigen::MatrixXd transform_x, transform_y, transform_z;
  double commutator_norm = 0.0;
};

/// Whitens X, jointly diagonalizes the two whitened Gram operators and
/// extracts per-component correlation pairs (squared canonical correlations).
/// Repeated eigenvalues of B are handled by a second diagonalization of A
/// restricted to each eigenspace. Requires the commutativity condition when
/// Z is present; a norm above tolerance is a hard error since the product
/// reduction is simply invalid there. Components outside the retained
/// subspace of a rank-deficient sigma_x are dropped (zero correlation).
inline ProductReduction reduce_to_product(const CovarianceSet& cov,
                                          double tol = kDefaultCommuteTol) {
  ProductReduction red;
  if (cov.has_eavesdropper()) {
    const CommutativityReport rep = commutativity_check(cov, tol);
    red.commutator_norm = rep.commutator_norm;
    if (!rep.commutes)
      throw NotCommuting(
          "whitened Gram operators do not commute (||AB-BA||_F = " +
          std::to_string(rep.commutator_norm) + "); the product reduction does not apply");
  }

  const detail::PsdEigs ex = detail::psd_eigs(cov.sigma_x, kDefaultRankTol, "sigma_x");
  const Eigen::MatrixXd wx = detail::whitener_thin(ex);  // r x n
  const Eigen::Index r = wx.rows();

  const detail::PsdEigs ey = detail::psd_eigs(cov.sigma_y, kDefaultRankTol, "sigma_y");
  const Eigen::MatrixXd wy = detail::whitener_thin(ey);  // ry x m

  const Eigen::MatrixXd cy = wx * cov.sigma_xy * wy.transpose();  // r x ry
  Eigen::MatrixXd b = cy * cy.transpose();
  b = 0.5 * (b + b.transpose());

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(r, r);
  Eigen::MatrixXd wz, cz;
  if (cov.has_eavesdropper()) {
    const detail::PsdEigs ez = detail::psd_eigs(*cov.sigma_z, kDefaultRankTol, "sigma_z");
    wz = detail::whitener_thin(ez);  // rz x p
    cz = wx * (*cov.sigma_xz) * wz.transpose();
    a = cz * cz.transpose();
    a = 0.5 * (a + a.transpose());
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
  if (es.info() != Eigen::Success) throw NotPSD("eigendecomposition of the whitened Gram failed");
  Eigen::MatrixXd u = es.eigenvectors();
  Eigen::VectorXd lam = es.eigenvalues();  // ascending

  // resolve freedom inside (near-)repeated eigenspaces of B by diagonalizing
  // the restriction of A there
  if (cov.has_eavesdropper() && r > 1) {
    const double cluster_tol = 1e-7 * std::max(1.0, lam.cwiseAbs().maxCoeff());
    Eigen::Index start = 0;
    while (start < r) {
      Eigen::Index end = start + 1;
      while (end < r && lam(end) - lam(end - 1) <= cluster_tol) ++end;
      if (end - start > 1) {
        const Eigen::MatrixXd block = u.middleCols(start, end - start);
        Eigen::MatrixXd sub = block.transpose() * a * block;
        sub = 0.5 * (sub + sub.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sub_es(sub);
        u.middleCols(start, end - start) = block * sub_es.eigenvectors();
      }
      start = end;
    }
  }

  Eigen::VectorXd dxy(r), dxz(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    dxy(i) = u.col(i).dot(b * u.col(i));
    dxz(i) = u.col(i).dot(a * u.col(i));
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index lhs, Eigen::Index rhs) {
    if (dxy(lhs) != dxy(rhs)) return dxy(lhs) > dxy(rhs);
    return dxz(lhs) > dxz(rhs);
  });
  Eigen::MatrixXd u_sorted(r, r);
  Eigen::VectorXd dxy_s(r), dxz_s(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    u_sorted.col(i) = u.col(order[static_cast<std::size_t>(i)]);
    dxy_s(i) = dxy(order[static_cast<std::size_t>(i)]);
    dxz_s(i) = dxz(order[static_cast<std::size_t>(i)]);
  }

  red.transform_x = u_sorted.transpose() * wx;  // r x n

  const Eigen::MatrixXd fy = red.transform_x * cov.sigma_xy * wy.transpose();  // r x ry
  red.transform_y = detail::orthonormal_from_rows(fy).transpose() * wy;        // ry x m

  if (cov.has_eavesdropper()) {
    const Eigen::MatrixXd fz = red.transform_x * (*cov.sigma_xz) * wz.transpose();
    red.transform_z = detail::orthonormal_from_rows(fz).transpose() * wz;
  }

  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  red.pairs.reserve(static_cast<std::size_t>(r));
  for (Eigen::Index i = 0; i < r; ++i)
    red.pairs.emplace_back(std::sqrt(clamp01(dxy_s(i))), std::sqrt(clamp01(dxz_s(i))));
  return red;
}

struct VectorKeyRateResult {
  double key_rate = 0.0;
  RatePoint point;
  ProductReduction reduction;
};

/// reduce_to_product then the product water-filling solver.
inline VectorKeyRateResult vector_key_rate(const CovarianceSet& cov, double r_budget,
                                           double tol = kDefaultCommuteTol) {
  VectorKeyRateResult out;
  out.reduction = reduce_to_product(cov, tol);
  if (out.reduction.pairs.empty()) return out;  // rank-zero sigma_x
  const BetaProfile profile = BetaProfile::from_triples(out.reduction.pairs);
  auto [rate, point] = key_rate(profile, r_budget);
  out.key_rate = rate;
  out.point = std::move(point);
  return out;
}

}  // namespace keycap
