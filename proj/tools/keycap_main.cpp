#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "keycap/keycap.hpp"

namespace {

struct CliOptions {
  std::string mode;
  std::string input;
  std::string output = "-";
  std::size_t points = 64;
  std::string unit = "bits";
  std::uint64_t seed = 0;
  double tol_commute = keycap::kDefaultCommuteTol;
  int grid_resolution = 0;
};

void add_common(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--mode", opt.mode, "scalar|product|vector|spectral|discrete")->required();
  cmd->add_option("--in", opt.input, "input file path")->required();
}

keycap::io::JobSpec to_job(const CliOptions& opt) {
  keycap::io::JobSpec job;
  job.mode = keycap::io::mode_from_string(opt.mode);
  job.input_path = opt.input;
  job.output_path = opt.output;
  job.curve_points = opt.points;
  job.unit = keycap::io::unit_from_string(opt.unit);
  job.seed = opt.seed;
  job.tol_commute = opt.tol_commute;
  job.grid_resolution = opt.grid_resolution;
  return job;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keycap: secret-key-rate vs communication-rate frontiers and "
               "strong data processing constants"};
  app.require_subcommand(1);

  CliOptions run_opt;
  CLI::App* run = app.add_subcommand("run", "compute and emit results");
  add_common(run, run_opt);
  run->add_option("--out", run_opt.output, "output path ('-' for stdout)");
  run->add_option("--points", run_opt.points, "curve points (default 64)")
      ->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
  run->add_option("--unit", run_opt.unit, "bits|nats (default bits)");
  run->add_option("--seed", run_opt.seed, "seed for randomized searches (default 0)");
  run->add_option("--tol-commute", run_opt.tol_commute,
                  "relative commutativity tolerance for vector mode (default 1e-8)");
  run->add_option("--grid-resolution", run_opt.grid_resolution,
                  "simplex grid resolution for discrete mode (default: per alphabet)");

  CliOptions validate_opt;
  CLI::App* validate = app.add_subcommand("validate", "check input invariants without computing");
  add_common(validate, validate_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return static_cast<int>(keycap::errc::usage);
  }

  try {
    if (run->parsed()) {
      keycap::io::run_job(to_job(run_opt));
      return 0;
    }
    const auto violations = keycap::io::validate_job(to_job(validate_opt));
    for (const auto& v : violations) std::cout << "violation: " << v << "\n";
    return violations.empty() ? 0 : static_cast<int>(keycap::errc::validation);
  } catch (const keycap::Error& e) {
    std::cerr << "keycap: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "keycap: internal error: " << e.what() << "\n";
    return static_cast<int>(keycap::errc::internal);
  }
}
