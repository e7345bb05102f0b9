#pragma once

#include <cerrno>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "keycap/discrete_sdpi.hpp"
#include "keycap/errors.hpp"
#include "keycap/gauss_vector.hpp"
#include "keycap/scalar_gaussian.hpp"
#include "keycap/spectral.hpp"
#include "keycap/waterfill.hpp"

namespace keycap::io {

enum class Mode { scalar, product, vector_cov, spectral, discrete };
enum class RateUnit { bits, nats };

inline Mode mode_from_string(const std::string& s) {
  if (s == "scalar") return Mode::scalar;
  if (s == "product") return Mode::product;
  if (s == "vector") return Mode::vector_cov;
  if (s == "spectral") return Mode::spectral;
  if (s == "discrete") return Mode::discrete;
  throw ParseError("unknown mode '" + s + "' (expected scalar|product|vector|spectral|discrete)");
}

inline RateUnit unit_from_string(const std::string& s) {
  if (s == "bits") return RateUnit::bits;
  if (s == "nats") return RateUnit::nats;
  throw ParseError("unknown rate unit '" + s + "' (expected bits|nats)");
}

/// One CLI invocation. curve_points applies to the curve-emitting modes,
/// seed and grid_resolution to discrete mode, tol_commute to vector mode.
struct JobSpec {
  Mode mode = Mode::scalar;
  std::string input_path;
  std::string output_path = "-";  // "-" means standard output
  std::size_t curve_points = 64;
  RateUnit unit = RateUnit::bits;
  std::uint64_t seed = 0;
  double tol_commute = kDefaultCommuteTol;
  int grid_resolution = 0;  // 0 = per-alphabet default
};

// ---------------------------------------------------------------------------
// formatting
// ---------------------------------------------------------------------------

/// Floats are emitted with 17 significant digits so output is reproducible
/// and round-trips to the identical double.
inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double rate_scale(RateUnit unit) {
  return unit == RateUnit::nats ? std::numbers::ln2 : 1.0;
}

// ---------------------------------------------------------------------------
// input parsing
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open input file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json load_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline double number_field(const nlohmann::json& j, const std::string& field) {
  if (!j.contains(field)) throw ParseError("missing field '" + field + "'");
  if (!j[field].is_number()) throw ParseError("field '" + field + "' must be a number");
  return j[field].get<double>();
}

inline Eigen::MatrixXd matrix_field(const nlohmann::json& j, const std::string& field) {
  if (!j.contains(field)) throw ParseError("missing field '" + field + "'");
  const auto& rows = j[field];
  if (!rows.is_array() || rows.empty())
    throw ParseError("field '" + field + "' must be a nonempty array of rows");
  const std::size_t ncols = rows[0].is_array() ? rows[0].size() : 0;
  if (ncols == 0) throw ParseError("field '" + field + "' rows must be nonempty arrays");
  Eigen::MatrixXd m(rows.size(), ncols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!rows[r].is_array() || rows[r].size() != ncols)
      throw ParseError("field '" + field + "' is ragged at row " + std::to_string(r));
    for (std::size_t c = 0; c < ncols; ++c) {
      if (!rows[r][c].is_number())
        throw ParseError("field '" + field + "' has a non-numeric entry");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
    }
  }
  return m;
}

inline GaussTriple parse_scalar_input(const nlohmann::json& j) {
  const double xy = number_field(j, "rho_xy");
  const double xz = j.contains("rho_xz") ? number_field(j, "rho_xz") : 0.0;
  return GaussTriple(xy, xz);
}

inline BetaProfile parse_product_input(const nlohmann::json& j) {
  if (j.contains("betas")) {
    std::vector<double> betas;
    for (const auto& v : j["betas"]) {
      if (!v.is_number()) throw ParseError("'betas' must be an array of numbers");
      betas.push_back(v.get<double>());
    }
    return BetaProfile::from_values(betas);
  }
  if (j.contains("pairs")) {
    std::vector<GaussTriple> triples;
    for (const auto& pair : j["pairs"]) triples.push_back(parse_scalar_input(pair));
    return BetaProfile::from_triples(triples);
  }
  throw ParseError("product input needs either 'betas' or 'pairs'");
}

/// Missing Z blocks mean "no eavesdropper" uniformly across modes.
inline CovarianceSet parse_vector_input(const nlohmann::json& j) {
  Eigen::MatrixXd sx = matrix_field(j, "sigma_x");
  Eigen::MatrixXd sy = matrix_field(j, "sigma_y");
  Eigen::MatrixXd sxy = matrix_field(j, "sigma_xy");
  std::optional<Eigen::MatrixXd> sz, sxz;
  if (j.contains("sigma_z")) sz = matrix_field(j, "sigma_z");
  if (j.contains("sigma_xz")) sxz = matrix_field(j, "sigma_xz");
  return CovarianceSet::make(std::move(sx), std::move(sy), std::move(sxy), std::move(sz),
                             std::move(sxz));
}

namespace detail_io {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream ss(line);
  while (std::getline(ss, tok, ',')) {
    const auto a = tok.find_first_not_of(" \t\r");
    const auto b = tok.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : tok.substr(a, b - a + 1));
  }
  return out;
}

inline double parse_double(const std::string& tok, std::size_t line_no) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0' || errno == ERANGE)
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse number '" + tok + "'");
  return v;
}

}  // namespace detail_io

/// Delimited spectral table. Full header
///   omega,s_x,s_y,s_z,re_s_xy,im_s_xy,re_s_xz,im_s_xz
/// or the no-eavesdropper short form
///   omega,s_x,s_y,re_s_xy,im_s_xy
/// where S_Z defaults to 1 and S_XZ to 0.
inline SpectrumGrid parse_spectral_input(const std::string& text) {
  static const std::vector<std::string> kFull = {"omega",    "s_x",      "s_y",      "s_z",
                                                 "re_s_xy",  "im_s_xy",  "re_s_xz",  "im_s_xz"};
  static const std::vector<std::string> kShort = {"omega", "s_x", "s_y", "re_s_xy", "im_s_xy"};
  std::istringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  bool full = true;
  bool header_seen = false;
  SpectrumGrid grid;
  while (std::getline(ss, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto tokens = detail_io::split_csv_line(line);
    if (!header_seen) {
      header_seen = true;
      if (tokens == kFull) {
        full = true;
        continue;
      }
      if (tokens == kShort) {
        full = false;
        continue;
      }
      throw ParseError("line " + std::to_string(line_no) + ": unrecognized spectral header");
    }
    const std::size_t want = full ? 8 : 5;
    if (tokens.size() != want)
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(want) +
                       " columns, got " + std::to_string(tokens.size()));
    std::vector<double> v;
    v.reserve(want);
    for (const auto& t : tokens) v.push_back(detail_io::parse_double(t, line_no));
    grid.omegas.push_back(v[0]);
    grid.s_x.push_back(v[1]);
    grid.s_y.push_back(v[2]);
    if (full) {
      grid.s_z.push_back(v[3]);
      grid.s_xy.emplace_back(v[4], v[5]);
      grid.s_xz.emplace_back(v[6], v[7]);
    } else {
      grid.s_z.push_back(1.0);
      grid.s_xy.emplace_back(v[3], v[4]);
      grid.s_xz.emplace_back(0.0, 0.0);
    }
  }
  if (grid.omegas.empty()) throw ParseError("spectral input has no data rows");
  return grid;
}

inline JointPmf parse_discrete_input(const nlohmann::json& j, bool validate = true) {
  if (j.contains("pmf_xy")) {
    std::vector<std::vector<double>> m;
    for (const auto& row : j["pmf_xy"]) {
      std::vector<double> r;
      for (const auto& v : row) {
        if (!v.is_number()) throw ParseError("'pmf_xy' has a non-numeric entry");
        r.push_back(v.get<double>());
      }
      m.push_back(std::move(r));
    }
    return validate ? JointPmf::xy(m) : JointPmf::xy_raw(m);
  }
  if (j.contains("pmf_xyz")) {
    std::vector<std::vector<std::vector<double>>> m;
    for (const auto& plane : j["pmf_xyz"]) {
      std::vector<std::vector<double>> pl;
      for (const auto& row : plane) {
        std::vector<double> r;
        for (const auto& v : row) {
          if (!v.is_number()) throw ParseError("'pmf_xyz' has a non-numeric entry");
          r.push_back(v.get<double>());
        }
        pl.push_back(std::move(r));
      }
      m.push_back(std::move(pl));
    }
    return validate ? JointPmf::xyz(m) : JointPmf::xyz_raw(m);
  }
  throw ParseError("discrete input needs either 'pmf_xy' or 'pmf_xyz'");
}

// ---------------------------------------------------------------------------
// output rendering
// ---------------------------------------------------------------------------

/// Curve CSV: header mu,r,R[,r_1..r_n]; rows ordered by decreasing mu.
/// Rate columns (r, R, r_i) are scaled by ln 2 for nats; mu is a
/// dimensionless slope and is never converted.
inline std::string render_curve_csv(const RateCurve& curve, RateUnit unit, bool allocations) {
  const double scale = rate_scale(unit);
  std::ostringstream out;
  out << "mu,r,R";
  if (allocations && !curve.points.empty())
    for (std::size_t i = 0; i < curve.points.front().allocations.size(); ++i)
      out << ",r_" << (i + 1);
  out << "\n";
  for (const RatePoint& p : curve.points) {
    out << fmt17(p.mu) << "," << fmt17(p.r * scale) << "," << fmt17(p.R * scale);
    if (allocations)
      for (double a : p.allocations) out << "," << fmt17(a * scale);
    out << "\n";
  }
  return out.str();
}

struct SpectralCurveRow {
  double mu = 0.0;
  ProcessPoint point;
};

inline std::string render_spectral_csv(const std::vector<SpectralCurveRow>& rows, RateUnit unit) {
  const double scale = rate_scale(unit);
  std::ostringstream out;
  out << "mu,r,R\n";
  for (const auto& row : rows)
    out << fmt17(row.mu) << "," << fmt17(row.point.r * scale) << "," << fmt17(row.point.R * scale)
        << "\n";
  return out.str();
}

/// Parses a curve CSV produced by render_curve_csv (used by round-trip
/// checks and by anyone replaying emitted frontiers).
inline RateCurve parse_curve_csv(const std::string& text) {
  std::istringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  RateCurve curve;
  std::size_t ncols = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tokens = detail_io::split_csv_line(line);
    if (line_no == 1) {
      if (tokens.size() < 3 || tokens[0] != "mu" || tokens[1] != "r" || tokens[2] != "R")
        throw ParseError("line 1: not a curve CSV header");
      ncols = tokens.size();
      continue;
    }
    if (tokens.size() != ncols)
      throw ParseError("line " + std::to_string(line_no) + ": ragged curve CSV");
    RatePoint p;
    p.mu = detail_io::parse_double(tokens[0], line_no);
    p.r = detail_io::parse_double(tokens[1], line_no);
    p.R = detail_io::parse_double(tokens[2], line_no);
    for (std::size_t c = 3; c < ncols; ++c)
      p.allocations.push_back(detail_io::parse_double(tokens[c], line_no));
    curve.points.push_back(std::move(p));
  }
  return curve;
}

// ---------------------------------------------------------------------------
// job execution
// ---------------------------------------------------------------------------

inline void atomic_write(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(errc::internal, "cannot open '" + tmp + "' for writing");
    out << content;
    if (!out) throw Error(errc::internal, "failed writing '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error(errc::internal, "failed to move output into place at '" + path + "'");
  }
}

inline std::vector<double> geometric_mu_grid(double mu_max, std::size_t n) {
  if (n < 2) throw ValidationError("a curve needs at least 2 points");
  if (mu_max <= 0.0) mu_max = 1.0;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i)
    grid[i] = mu_max * std::pow(1e-6, static_cast<double>(i) / static_cast<double>(n - 1));
  grid.front() = mu_max;
  return grid;
}

inline std::string run_job_to_string(const JobSpec& job) {
  switch (job.mode) {
    case Mode::scalar: {
      const GaussTriple t = parse_scalar_input(load_json(job.input_path));
      const BetaProfile profile = BetaProfile::from_triples(std::vector<GaussTriple>{t});
      return render_curve_csv(sample_curve(profile, job.curve_points), job.unit, true);
    }
    case Mode::product: {
      const BetaProfile profile = parse_product_input(load_json(job.input_path));
      return render_curve_csv(sample_curve(profile, job.curve_points), job.unit, true);
    }
    case Mode::vector_cov: {
      const CovarianceSet cov = parse_vector_input(load_json(job.input_path));
      const ProductReduction red = reduce_to_product(cov, job.tol_commute);
      if (red.pairs.empty()) throw DimensionMismatch("sigma_x has rank zero");
      const BetaProfile profile = BetaProfile::from_triples(red.pairs);
      return render_curve_csv(sample_curve(profile, job.curve_points), job.unit, true);
    }
    case Mode::spectral: {
      const SpectrumGrid grid = parse_spectral_input(read_file(job.input_path));
      const std::vector<double> beta = beta_omega(grid);
      double mu_max = 0.0;
      for (double b : beta) mu_max = std::max(mu_max, b);
      std::vector<SpectralCurveRow> rows;
      for (double mu : geometric_mu_grid(mu_max, job.curve_points))
        rows.push_back({mu, process_frontier(grid, mu)});
      return render_spectral_csv(rows, job.unit);
    }
    case Mode::discrete: {
      const JointPmf pmf = parse_discrete_input(load_json(job.input_path));
      std::ostringstream out;
      if (!pmf.has_z) {
        const SdpiResult s = s_star(pmf, job.grid_resolution);
        out << "s_star " << fmt17(s.value) << "\n";
        out << "rho_m_sq " << fmt17(maximal_correlation(pmf)) << "\n";
        out << "efficiency "
            << fmt17(s.value >= 1.0 ? std::numeric_limits<double>::infinity()
                                    : initial_efficiency_discrete(s))
            << "\n";
        out << "method " << s.method << "\n";
        out << "evaluations " << s.evaluations << "\n";
      } else {
        const SdpiResult s = s_star_degraded(pmf, job.grid_resolution);
        out << "s_star " << fmt17(s.value) << "\n";
        out << "rho_m_sq " << fmt17(maximal_correlation(pmf)) << "\n";
        out << "efficiency "
            << fmt17(s.value >= 1.0 ? std::numeric_limits<double>::infinity()
                                    : initial_efficiency_discrete(s))
            << "\n";
        out << "method " << s.method << "\n";
        out << "evaluations " << s.evaluations << "\n";
        out << "degradedness_warning " << (s.degradedness_warning ? 1 : 0) << "\n";
        const int v_card = std::max(2, std::min(pmf.nx, 4));
        const SdpiResult lb = s_star_lower_bound(pmf, v_card, 32, job.seed);
        out << "lower_bound " << fmt17(lb.value) << "\n";
        out << "lower_bound_evaluations " << lb.evaluations << "\n";
      }
      return out.str();
    }
  }
  throw Error(errc::internal, "unreachable mode");
}

inline void run_job(const JobSpec& job) { atomic_write(job.output_path, run_job_to_string(job)); }

// ---------------------------------------------------------------------------
// validation (reports violations without computing)
// ---------------------------------------------------------------------------

namespace detail_io {

inline void check_correlation(const nlohmann::json& j, const std::string& prefix,
                              std::vector<std::string>& out) {
  for (const char* field : {"rho_xy", "rho_xz"}) {
    if (!j.contains(field)) {
      if (std::string(field) == "rho_xy") out.push_back(prefix + "missing rho_xy");
      continue;
    }
    if (!j[field].is_number()) {
      out.push_back(prefix + std::string(field) + " is not a number");
      continue;
    }
    const double v = j[field].get<double>();
    if (!(std::abs(v) <= 1.0))
      out.push_back(prefix + std::string(field) + " = " + fmt17(v) + " outside [-1, 1]");
  }
  if (j.contains("rho_xy") && j["rho_xy"].is_number() &&
      std::abs(j["rho_xy"].get<double>()) == 1.0)
    out.push_back(prefix + "|rho_xy| = 1 (beta undefined)");
}

inline void check_covariance_block(const Eigen::MatrixXd& m, const std::string& name,
                                   std::vector<std::string>& out) {
  if (m.rows() != m.cols()) {
    out.push_back(name + " is not square");
    return;
  }
  const double tol = 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol)
    out.push_back(name + " is not symmetric within 1e-10");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const double lam_min = es.eigenvalues().minCoeff();
  const double lam_max = es.eigenvalues().maxCoeff();
  if (lam_min < -1e-10 * std::max(1.0, std::abs(lam_max)))
    out.push_back(name + " is not PSD (eigenvalue " + fmt17(lam_min) + ")");
}

inline void check_joint_psd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& cross,
                            const Eigen::MatrixXd& b, const std::string& name,
                            std::vector<std::string>& out) {
  if (a.rows() != cross.rows() || b.rows() != cross.cols()) {
    out.push_back(name + " has inconsistent dimensions");
    return;
  }
  Eigen::MatrixXd j(a.rows() + b.rows(), a.rows() + b.rows());
  j.topLeftCorner(a.rows(), a.rows()) = a;
  j.topRightCorner(a.rows(), b.rows()) = cross;
  j.bottomLeftCorner(b.rows(), a.rows()) = cross.transpose();
  j.bottomRightCorner(b.rows(), b.rows()) = b;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (j + j.transpose()));
  const double lam_min = es.eigenvalues().minCoeff();
  const double lam_max = es.eigenvalues().maxCoeff();
  if (lam_min < -1e-10 * std::max(1.0, std::abs(lam_max)))
    out.push_back(name + " is not PSD (eigenvalue " + fmt17(lam_min) + ")");
}

}  // namespace detail_io

inline std::vector<std::string> validate_job(const JobSpec& job) {
  std::vector<std::string> out;
  switch (job.mode) {
    case Mode::scalar: {
      detail_io::check_correlation(load_json(job.input_path), "", out);
      break;
    }
    case Mode::product: {
      const nlohmann::json j = load_json(job.input_path);
      if (j.contains("betas")) {
        std::size_t i = 0;
        for (const auto& v : j["betas"]) {
          if (!v.is_number() || !std::isfinite(v.get<double>()))
            out.push_back("betas[" + std::to_string(i) + "] is not a finite number");
          ++i;
        }
        if (i == 0) out.push_back("betas is empty");
      } else if (j.contains("pairs")) {
        std::size_t i = 0;
        for (const auto& pair : j["pairs"]) {
          detail_io::check_correlation(pair, "pairs[" + std::to_string(i) + "]: ", out);
          ++i;
        }
        if (i == 0) out.push_back("pairs is empty");
      } else {
        out.push_back("product input needs either 'betas' or 'pairs'");
      }
      break;
    }
    case Mode::vector_cov: {
      const nlohmann::json j = load_json(job.input_path);
      const Eigen::MatrixXd sx = matrix_field(j, "sigma_x");
      const Eigen::MatrixXd sy = matrix_field(j, "sigma_y");
      const Eigen::MatrixXd sxy = matrix_field(j, "sigma_xy");
      detail_io::check_covariance_block(sx, "sigma_x", out);
      detail_io::check_covariance_block(sy, "sigma_y", out);
      if (sxy.rows() != sx.rows() || sxy.cols() != sy.rows())
        out.push_back("sigma_xy must be dim(X) x dim(Y)");
      else
        detail_io::check_joint_psd(sx, sxy, sy, "joint (X,Y) covariance", out);
      if (j.contains("sigma_z")) {
        const Eigen::MatrixXd sz = matrix_field(j, "sigma_z");
        detail_io::check_covariance_block(sz, "sigma_z", out);
        if (j.contains("sigma_xz")) {
          const Eigen::MatrixXd sxz = matrix_field(j, "sigma_xz");
          if (sxz.rows() != sx.rows() || sxz.cols() != sz.rows())
            out.push_back("sigma_xz must be dim(X) x dim(Z)");
          else
            detail_io::check_joint_psd(sx, sxz, sz, "joint (X,Z) covariance", out);
        }
      } else if (j.contains("sigma_xz")) {
        out.push_back("sigma_xz requires sigma_z");
      }
      break;
    }
    case Mode::spectral: {
      out = parse_spectral_input(read_file(job.input_path)).check();
      break;
    }
    case Mode::discrete: {
      out = parse_discrete_input(load_json(job.input_path), /*validate=*/false).check();
      break;
    }
  }
  return out;
}

}  // namespace keycap::io
