#pragma once

// Experiment configuration and the derive | simulate | solve | converge |
// selftest commands. The executable in tools/ only forwards argv here.
//
// Config files are flat "key = value" lines; '#' starts a comment and a line
// "include PATH" reads the generator text from a file (relative to the
// config). Known keys:
//   model          preset name, or a generator file path
//   dim, L         box
//   grid           nodes per side of the solver and histogram grid
//   eps            comma-separated, strictly decreasing for converge
//   t_end, times   end time and snapshot/output times
//   dt             RK4 step
//   replicas, seed, max_particles, threads
//   rho0           constant initial density
//   rho0_cos       relative amplitude of a cos(2 pi k x / L) modulation
//   rho0_mode      the k above
//   g2_bins, bootstrap
//   reference      auto | none | one of the closed-form models
//   param.NAME     override a constant or a kernel amplitude

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlasov/dsl.hpp"
#include "vlasov/grid.hpp"
#include "vlasov/sim.hpp"

namespace vlasov {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitSelftest = 4 };

struct ExperimentConfig {
  std::string model = "";        // preset name or file path as written
  std::string generator_text;    // resolved DSL
  std::string generator_origin;  // "preset:NAME" or the resolved path
  int dim = 1;
  double L = 10.0;
  int grid = 256;
  std::vector<double> eps{1.0};
  double t_end = 1.0;
  std::vector<double> times;
  double dt = 1e-3;
  std::size_t replicas = 200;
  std::uint64_t seed = 1;
  std::size_t max_particles = 0;
  unsigned threads = 1;
  double rho0 = 1.0;
  double rho0_cos = 0.0;
  int rho0_mode = 1;
  std::size_t g2_bins = 20;
  std::size_t bootstrap = 200;
  std::string reference = "auto";
  std::map<std::string, double> params;

  /// Parses config text; relative paths resolve against base_dir. Throws ConfigError.
  static ExperimentConfig parse(const std::string& text, const std::string& base_dir = ".");
  static ExperimentConfig load(const std::string& path);

  Box box() const { return Box(dim, L); }
  Grid solver_grid() const { return Grid{dim, L, grid}; }
  dsl::GeneratorSpec generator() const;
  bool homogeneous() const { return rho0_cos == 0.0; }
  DensityField initial_field() const;
  InitialDensity initial_density() const;
  /// Output times, t_end when none were given.
  std::vector<double> output_times() const;
  /// Closed-form model to compare solves with, or empty.
  std::string resolved_reference() const;
  nlohmann::json to_json() const;
};

/// Entry point: returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vlasov
