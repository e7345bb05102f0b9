// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line each. Exit status is the number of failed criteria.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "keycap/keycap.hpp"

#ifndef KEYCAP_CLI_PATH
#define KEYCAP_CLI_PATH "keycap"
#endif
#ifndef KEYCAP_FIXTURE_DIR
#define KEYCAP_FIXTURE_DIR "tests/fixtures"
#endif

namespace fs = std::filesystem;
using namespace keycap;
using Clock = std::chrono::steady_clock;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

BetaProfile random_profile(std::mt19937_64& rng, std::size_t max_n) {
  const std::size_t n =
      1 + static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(max_n))) % max_n;
  std::vector<double> betas(n);
  for (double& b : betas) b = uniform(rng, 0.0, 4.0);
  return BetaProfile::from_values(betas);
}

std::vector<std::vector<double>> random_pmf(std::mt19937_64& rng, std::size_t nx, std::size_t ny,
                                            double floor_mass) {
  std::vector<double> flat(nx * ny);
  double sum = 0.0;
  for (double& v : flat) {
    v = -std::log(std::max(uniform(rng, 0.0, 1.0), 1e-12));
    sum += v;
  }
  std::vector<std::vector<double>> m(nx, std::vector<double>(ny));
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      m[x][y] = (1.0 - floor_mass * static_cast<double>(nx * ny)) * flat[x * ny + y] / sum +
                floor_mass;
  return m;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index n) {
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = uniform(rng, -1.0, 1.0);
  return m;
}

Eigen::MatrixXd random_invertible(std::mt19937_64& rng, Eigen::Index n) {
  for (;;) {
    Eigen::MatrixXd m = random_matrix(rng, n);
    if (std::abs(m.determinant()) > 0.1) return m;
  }
}

struct Harness {
  int failures = 0;
  void report(int index, const std::string& name, bool pass, const std::string& detail = "") {
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << index << ": " << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!pass) ++failures;
  }
};

// ---------------------------------------------------------------------------

bool scalar_identity(std::string& detail) {
  const auto start = Clock::now();
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double rho_xy = uniform(rng, 0.05, 0.95);
    const double rho_xz = uniform(rng, 0.0, rho_xy);
    const double a = rho_xy * rho_xy;
    const double b = (rho_xz * rho_xz) / a;
    const double s_yxz = (1.0 - a) * (1.0 - b) / (1.0 - a * b);
    const double s_yz = 1.0 - b;
    const Beta beta = beta_of(GaussTriple(rho_xy, rho_xz));
    for (int i = 0; i < 20; ++i) {
      const double r = uniform(rng, 0.0, 5.0);
      worst = std::max(worst, std::abs(scalar_key_rate(beta, r) -
                                       scalar_key_rate_degraded_form(s_yxz, s_yz, r)));
    }
  }
  const double elapsed = seconds_since(start);
  std::ostringstream ss;
  ss << "max |delta| = " << worst << ", " << elapsed << " s";
  detail = ss.str();
  return worst <= 1e-10 && elapsed < 1.0;
}

std::vector<BetaProfile> criterion_profiles() {
  std::mt19937_64 rng(1002);
  std::vector<BetaProfile> profiles;
  for (int i = 0; i < 20; ++i) profiles.push_back(random_profile(rng, 5));
  return profiles;
}

bool waterfill_vs_generic(std::string& detail) {
  const auto start = Clock::now();
  std::mt19937_64 rng(1003);
  double worst = 0.0;
  for (const BetaProfile& profile : criterion_profiles()) {
    std::vector<std::function<double(double)>> curves;
    for (const Beta& b : profile.betas)
      curves.push_back([b](double r) { return scalar_key_rate(b, r); });
    for (int k = 0; k < 5; ++k) {
      const double budget = uniform(rng, 0.05, 3.0);
      const double closed = key_rate(profile, budget).first;
      const double generic = allocate_generic(curves, budget).total;
      worst = std::max(worst, std::abs(closed - generic));
    }
  }
  const double elapsed = seconds_since(start);
  std::ostringstream ss;
  ss << "max |delta| = " << worst << ", " << elapsed << " s";
  detail = ss.str();
  return worst <= 1e-5 && elapsed < 10.0;
}

bool frontier_round_trip(std::string& detail) {
  double worst = 0.0;
  for (const BetaProfile& profile : criterion_profiles()) {
    const double mu_max = profile.max_beta_plus();
    if (mu_max <= 0.0) continue;
    for (double frac : {0.9, 0.5, 0.1}) {
      const double mu = mu_max * frac;
      const RatePoint pt = frontier_at(profile, mu);
      if (pt.r <= 0.0) continue;
      const double back = key_rate(profile, pt.r).second.mu;
      worst = std::max(worst, std::abs(back - mu));
    }
  }
  std::ostringstream ss;
  ss << "max |mu - mu'| = " << worst;
  detail = ss.str();
  return worst <= 1e-8;
}

bool initial_efficiency_slope(std::string& detail) {
  std::mt19937_64 rng(1004);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const BetaProfile profile = random_profile(rng, 5);
    const double expected = initial_efficiency(profile);
    if (expected <= 1e-6) continue;
    const double h = 1e-5;
    const double slope = key_rate(profile, h).first / h;
    worst = std::max(worst, std::abs(slope - expected) / expected);
  }
  std::ostringstream ss;
  ss << "max relative error = " << worst;
  detail = ss.str();
  return worst <= 0.01;
}

double offdiag_ratio(const Eigen::MatrixXd& m) {
  double off = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j) off += m(i, j) * m(i, j);
  const double total = m.squaredNorm();
  return total > 0.0 ? std::sqrt(off / total) : 0.0;
}

bool vector_invariance(std::string& detail) {
  std::mt19937_64 rng(1005);
  double worst_rate = 0.0, worst_resid = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd g = random_matrix(rng, 6);
    const Eigen::MatrixXd joint =
        g * g.transpose() + 0.05 * Eigen::MatrixXd::Identity(6, 6);
    const Eigen::MatrixXd sx = joint.topLeftCorner(3, 3);
    const Eigen::MatrixXd sy = joint.bottomRightCorner(3, 3);
    const Eigen::MatrixXd sxy = 0.8 * joint.topRightCorner(3, 3);
    const CovarianceSet cov = CovarianceSet::make(sx, sy, sxy);

    const Eigen::MatrixXd m = random_invertible(rng, 3);
    const Eigen::MatrixXd n = random_invertible(rng, 3);
    const CovarianceSet mapped = CovarianceSet::make(
        m * sx * m.transpose(), n * sy * n.transpose(), m * sxy * n.transpose());

    for (double budget : {0.1, 0.5, 1.0, 2.0}) {
      const double r1 = vector_key_rate(cov, budget).key_rate;
      const double r2 = vector_key_rate(mapped, budget).key_rate;
      worst_rate = std::max(worst_rate, std::abs(r1 - r2));
    }
    for (const CovarianceSet* c : {&cov, &mapped}) {
      const ProductReduction red = reduce_to_product(*c);
      worst_resid = std::max(
          worst_resid, offdiag_ratio(red.transform_x * c->sigma_x * red.transform_x.transpose()));
      worst_resid = std::max(
          worst_resid, offdiag_ratio(red.transform_y * c->sigma_y * red.transform_y.transpose()));
      worst_resid = std::max(
          worst_resid, offdiag_ratio(red.transform_x * c->sigma_xy * red.transform_y.transpose()));
    }
  }
  std::ostringstream ss;
  ss << "max |delta R| = " << worst_rate << ", max residual = " << worst_resid;
  detail = ss.str();
  return worst_rate <= 1e-8 && worst_resid <= 1e-8;
}

bool eavesdropper_commutativity(std::string& detail) {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd sxy(2, 2), sxz(2, 2);
  sxy << 0.8, 0.0, 0.0, 0.3;
  sxz << 0.5, 0.0, 0.0, 0.1;
  bool diagonal_ok = false;
  try {
    const ProductReduction red =
        reduce_to_product(CovarianceSet::make(eye, eye, sxy, eye, sxz));
    diagonal_ok = red.pairs.size() == 2 && std::abs(red.pairs[0].rho_xy - 0.8) < 1e-10 &&
                  std::abs(red.pairs[0].rho_xz - 0.5) < 1e-10;
  } catch (const Error&) {
    diagonal_ok = false;
  }

  const double c = std::cos(0.7), s = std::sin(0.7);
  Eigen::MatrixXd rot(2, 2);
  rot << c, -s, s, c;
  Eigen::MatrixXd d(2, 2);
  d << 0.5, 0.0, 0.0, 0.1;
  const Eigen::MatrixXd rotated = rot * d * rot.transpose();
  bool rejected = false;
  try {
    reduce_to_product(CovarianceSet::make(eye, eye, sxy, eye, rotated));
  } catch (const NotCommuting&) {
    rejected = true;
  }
  detail = std::string("diagonal triple ") + (diagonal_ok ? "reduced" : "FAILED") +
           ", non-commuting triple " + (rejected ? "rejected" : "NOT rejected");
  return diagonal_ok && rejected;
}

bool spectral_reduction(std::string& detail) {
  constexpr double kPi = std::numbers::pi;
  double worst_pc = 0.0;

  // piecewise-constant beta: level 1 on |w| < pi/2, level 0.25 outside
  SpectrumGrid g;
  const double eps = 5e-10;
  auto push_range = [&](double lo, double hi, int cells, double rho) {
    for (int i = 0; i <= cells; ++i) {
      const double w = lo + (hi - lo) * static_cast<double>(i) / cells;
      g.omegas.push_back(w);
      g.s_x.push_back(1.0);
      g.s_y.push_back(1.0);
      g.s_z.push_back(1.0);
      g.s_xy.emplace_back(rho, 0.0);
      g.s_xz.emplace_back(0.0, 0.0);
    }
  };
  const double rho_hi = std::sqrt(0.5), rho_lo = std::sqrt(0.2);
  push_range(-kPi, -kPi / 2.0 - eps, 32, rho_lo);
  push_range(-kPi / 2.0 + eps, kPi / 2.0 - eps, 64, rho_hi);
  push_range(kPi / 2.0 + eps, kPi, 32, rho_lo);
  auto scalar_r = [](double beta, double mu) {
    return beta > mu ? 0.5 * std::log2(beta * (mu + 1.0) / ((beta + 1.0) * mu)) : 0.0;
  };
  auto scalar_R = [](double beta, double mu) {
    return beta > mu ? 0.5 * std::log2((beta + 1.0) / (mu + 1.0)) : 0.0;
  };
  for (double mu : {0.6, 0.3, 0.1}) {
    const ProcessPoint pp = process_frontier(g, mu);
    worst_pc = std::max(worst_pc,
                        std::abs(pp.r - 0.5 * (scalar_r(1.0, mu) + scalar_r(0.25, mu))));
    worst_pc = std::max(worst_pc,
                        std::abs(pp.R - 0.5 * (scalar_R(1.0, mu) + scalar_R(0.25, mu))));
  }

  // AR(1) spectrum from its correlation window
  const double a = 0.5;
  const int lag = 40;
  CorrelationFunctions corr;
  const std::size_t len = static_cast<std::size_t>(2 * lag + 1);
  corr.r_x.assign(len, 0.0);
  corr.r_y.assign(len, 0.0);
  corr.r_z.assign(len, 0.0);
  corr.r_xy.assign(len, 0.0);
  corr.r_xz.assign(len, 0.0);
  for (int k = -lag; k <= lag; ++k) {
    const std::size_t i = static_cast<std::size_t>(k + lag);
    corr.r_x[i] = std::pow(a, std::abs(k));
    corr.r_xy[i] = 0.5 * corr.r_x[i];
    corr.r_y[i] = 0.25 * corr.r_x[i];
  }
  corr.r_y[static_cast<std::size_t>(lag)] += 1.0;
  corr.r_z[static_cast<std::size_t>(lag)] = 1.0;

  const SpectrumGrid coarse = spectrum_from_correlation(corr, 513);
  double worst_ar = 0.0;
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    const double w = coarse.omegas[i];
    const double closed = (1.0 - a * a) / (1.0 - 2.0 * a * std::cos(w) + a * a);
    worst_ar = std::max(worst_ar, std::abs(coarse.s_x[i] - closed));
  }

  const SpectrumGrid fine = spectrum_from_correlation(corr, 1025);
  const double halving =
      std::abs(process_key_rate(coarse, 0.2).first - process_key_rate(fine, 0.2).first);

  std::ostringstream ss;
  ss << "piecewise delta = " << worst_pc << ", AR(1) delta = " << worst_ar
     << ", halving delta = " << halving;
  detail = ss.str();
  return worst_pc <= 2e-6 && worst_ar <= 1e-6 && halving < 1e-4;
}

bool discrete_sdpi_closed_forms(std::string& detail) {
  const auto start = Clock::now();
  double worst_dsbs = 0.0, worst_erasure = 0.0, worst_rho = 0.0;
  for (double p : {0.05, 0.1, 0.2, 0.3}) {
    const JointPmf pmf = JointPmf::xy(
        {{0.5 * (1.0 - p), 0.5 * p}, {0.5 * p, 0.5 * (1.0 - p)}});
    const double expected = (1.0 - 2.0 * p) * (1.0 - 2.0 * p);
    worst_dsbs = std::max(worst_dsbs, std::abs(s_star(pmf).value - expected));
    worst_rho = std::max(worst_rho, std::abs(maximal_correlation(pmf) - expected));
  }
  for (double e : {0.25, 0.5}) {
    const JointPmf pmf = JointPmf::xy(
        {{0.5 * (1.0 - e), 0.0, 0.5 * e}, {0.0, 0.5 * (1.0 - e), 0.5 * e}});
    worst_erasure = std::max(worst_erasure, std::abs(s_star(pmf).value - (1.0 - e)));
  }
  const double elapsed = seconds_since(start);
  std::ostringstream ss;
  ss << "dsbs delta = " << worst_dsbs << ", erasure delta = " << worst_erasure
     << ", rho_m delta = " << worst_rho << ", " << elapsed << " s";
  detail = ss.str();
  return worst_dsbs <= 2e-3 && worst_erasure <= 1e-6 && worst_rho <= 1e-10 && elapsed < 30.0;
}

bool tensorization(std::string& detail) {
  std::mt19937_64 rng(1006);
  double worst = 0.0;
  for (int pair = 0; pair < 5; ++pair) {
    const JointPmf a = JointPmf::xy(random_pmf(rng, 2, 2, 0.03));
    const JointPmf b = JointPmf::xy(random_pmf(rng, 2, 2, 0.03));
    const double expected = std::max(s_star(a).value, s_star(b).value);
    const double got = s_star(tensor_product(a, b)).value;
    worst = std::max(worst, std::abs(got - expected));
  }
  std::ostringstream ss;
  ss << "max |s*(AxB) - max| = " << worst;
  detail = ss.str();
  return worst <= 3e-3;
}

bool property_suites(std::string& detail) {
  std::mt19937_64 rng(1007);

  // range
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t nx = 2 + static_cast<std::size_t>(uniform(rng, 0.0, 2.0));
    const std::size_t ny = 2 + static_cast<std::size_t>(uniform(rng, 0.0, 2.0));
    const double v = s_star(JointPmf::xy(random_pmf(rng, nx, ny, 0.0))).value;
    if (v < 0.0 || v > 1.0) {
      detail = "s* out of range";
      return false;
    }
  }

  // concave nondecreasing sampled frontiers
  for (int trial = 0; trial < 100; ++trial) {
    const RateCurve curve = sample_curve(random_profile(rng, 5), 33);
    if (!curve.check().empty()) {
      detail = "frontier invariant violated: " + curve.check().front();
      return false;
    }
  }

  // data processing monotonicity under post-channels on Y
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const JointPmf pmf = JointPmf::xy(random_pmf(rng, 2, 3, 0.01));
    std::vector<std::vector<double>> chan(3);
    for (auto& row : chan) {
      row = {uniform(rng, 0.05, 0.95), 0.0};
      row[1] = 1.0 - row[0];
    }
    std::vector<std::vector<double>> mapped(2, std::vector<double>(2, 0.0));
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 3; ++y)
        for (int yp = 0; yp < 2; ++yp)
          mapped[static_cast<std::size_t>(x)][static_cast<std::size_t>(yp)] +=
              pmf.at(x, y) * chan[static_cast<std::size_t>(y)][static_cast<std::size_t>(yp)];
    const double before = s_star(pmf).value;
    const double after = s_star(JointPmf::xy(mapped)).value;
    worst = std::max(worst, after - before);
  }
  std::ostringstream ss;
  ss << "max data-processing excess = " << worst;
  detail = ss.str();
  return worst <= 3e-3;
}

// ---------------------------------------------------------------------------
// CLI checks
// ---------------------------------------------------------------------------

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -2;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool cli_determinism(std::string& detail) {
  const std::string cli = KEYCAP_CLI_PATH;
  const fs::path fixtures = KEYCAP_FIXTURE_DIR;
  const fs::path tmp = fs::path("acceptance_tmp");
  fs::create_directories(tmp);

  struct ModeRun {
    const char* mode;
    const char* fixture;
    const char* extra;
  };
  const std::vector<ModeRun> runs = {
      {"scalar", "scalar_basic.json", "--points 16"},
      {"product", "product_basic.json", "--points 16"},
      {"vector", "vector_basic.json", "--points 16"},
      {"spectral", "spectral_basic.csv", "--points 16"},
      {"discrete", "discrete_dsbs.json", "--seed 3"},
      {"discrete", "discrete_xyz.json", "--seed 3"},
  };
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const fs::path out1 = tmp / ("out_" + std::to_string(i) + "_a");
    const fs::path out2 = tmp / ("out_" + std::to_string(i) + "_b");
    for (const fs::path* out : {&out1, &out2}) {
      const std::string cmd = "\"" + cli + "\" run --mode " + runs[i].mode + " --in \"" +
                              (fixtures / runs[i].fixture).string() + "\" --out \"" +
                              out->string() + "\" " + runs[i].extra + " 2> /dev/null";
      if (run_command(cmd) != 0) {
        detail = std::string("run failed for mode ") + runs[i].mode;
        return false;
      }
    }
    if (slurp(out1) != slurp(out2) || slurp(out1).empty()) {
      detail = std::string("output not byte-identical for mode ") + runs[i].mode;
      return false;
    }
  }

  // validate catches each seeded invariant violation
  struct ValidateRun {
    const char* mode;
    const char* fixture;
    bool expect_clean;
  };
  const std::vector<ValidateRun> validations = {
      {"discrete", "invalid_pmf_sum.json", false},
      {"vector", "invalid_psd.json", false},
      {"spectral", "invalid_spectral_cs.csv", false},
      {"product", "product_basic.json", true},
  };
  for (const ValidateRun& v : validations) {
    const fs::path report = tmp / "validate_out";
    const std::string cmd = "\"" + cli + "\" validate --mode " + v.mode + " --in \"" +
                            (fixtures / v.fixture).string() + "\" > \"" + report.string() +
                            "\" 2> /dev/null";
    const int code = run_command(cmd);
    const bool clean = code == 0 && slurp(report).empty();
    const bool flagged = code == static_cast<int>(errc::validation) && !slurp(report).empty();
    if (v.expect_clean ? !clean : !flagged) {
      detail = std::string("validate behaved unexpectedly on ") + v.fixture;
      return false;
    }
  }

  // a non-commuting eavesdropper yields the NotCommuting exit code and no file
  const fs::path refused = tmp / "refused.csv";
  std::error_code ec;
  fs::remove(refused, ec);
  const std::string cmd = "\"" + cli + "\" run --mode vector --in \"" +
                          (fixtures / "vector_noncommuting.json").string() + "\" --out \"" +
                          refused.string() + "\" 2> /dev/null";
  if (run_command(cmd) != static_cast<int>(errc::not_commuting) || fs::exists(refused)) {
    detail = "non-commuting input was not refused cleanly";
    return false;
  }

  detail = "6 modes byte-identical, 3 violations caught, refusal exit code " +
           std::to_string(static_cast<int>(errc::not_commuting));
  return true;
}

}  // namespace

int main() {
  Harness h;
  std::string detail;

  detail.clear();
  h.report(1, "scalar identity between rate forms", scalar_identity(detail), detail);
  detail.clear();
  h.report(2, "water-filling matches the generic equal-slope allocator",
           waterfill_vs_generic(detail), detail);
  detail.clear();
  h.report(3, "frontier round trip mu -> r -> mu", frontier_round_trip(detail), detail);
  detail.clear();
  h.report(4, "initial efficiency equals max beta_plus", initial_efficiency_slope(detail),
           detail);
  detail.clear();
  h.report(5, "vector reduction invariant under invertible transforms",
           vector_invariance(detail), detail);
  detail.clear();
  h.report(6, "eavesdropper commutativity gate", eavesdropper_commutativity(detail), detail);
  detail.clear();
  h.report(7, "spectral solver consistency", spectral_reduction(detail), detail);
  detail.clear();
  h.report(8, "discrete SDPI closed forms", discrete_sdpi_closed_forms(detail), detail);
  detail.clear();
  h.report(9, "tensorization of s*", tensorization(detail), detail);
  detail.clear();
  h.report(10, "range, monotonicity and data-processing property suites",
           property_suites(detail), detail);
  detail.clear();
  h.report(11, "CLI determinism and validation", cli_determinism(detail), detail);

  if (h.failures == 0)
    std::cout << "all acceptance criteria passed\n";
  else
    std::cout << h.failures << " acceptance criteria FAILED\n";
  return h.failures;
}
