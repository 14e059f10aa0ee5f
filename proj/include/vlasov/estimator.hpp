#pragma once

// Renormalized observables of particle ensembles: eps-weighted histograms of
// the density, radial pair correlation, and eps-sweep convergence reports.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "vlasov/grid.hpp"
#include "vlasov/sim.hpp"

namespace vlasov {

using SnapshotSet = std::vector<std::span<const Point>>;

struct K1Estimate {
  DensityField field;            // eps * count / (cell volume * replicas)
  std::vector<double> stderr_;   // per cell, across replicas
  std::size_t replicas = 0;

  /// sqrt(sum se_j^2 h^d): the L2 size of pure Monte Carlo noise.
  double noise_floor() const;
};

/// Histogram on the solver grid, one cell per node. Needs >= 2 snapshots.
K1Estimate empirical_k1(const SnapshotSet& snapshots, double eps, const Grid& grid);

struct G2Options {
  std::size_t bins = 20;        // equal-width bins over (0, L/2]
  std::size_t min_pairs = 10;   // bins with fewer observed pairs are flagged
};

struct CorrelationEstimate {
  std::vector<double> centers;
  std::vector<double> values;
  std::vector<double> stderr_;
  std::vector<std::size_t> pairs;
  std::vector<bool> flagged;
  double mean_density = 0.0;    // eps-renormalized
  std::size_t snapshots = 0;

  /// max |g2 - 1| over unflagged bins; NaN when every bin is flagged.
  double sup_deviation() const;
};

/// Minimum-image pair distances binned and divided by the ideal-gas count
/// N(N-1)/2 * P(bin) of each snapshot, summed over snapshots.
CorrelationEstimate empirical_g2(const SnapshotSet& snapshots, double eps, const Box& box,
                                 const G2Options& opts = {});

/// Standard deviation of `stat` over `resamples` bootstrap draws of n units.
double bootstrap_stddev(std::size_t n, std::size_t resamples, std::uint64_t seed,
                        const std::function<double(std::span<const std::size_t>)>& stat);

struct ConvergenceRow {
  double eps = 1.0;
  double l2_k1 = 0.0;
  double l2_err = 0.0;
  double sup_g2m1 = 0.0;  // NaN for inhomogeneous runs
  double g2_err = 0.0;
  std::size_t replicas = 0;    // untruncated replicas used
  std::size_t truncated = 0;
  double noise_floor = 0.0;
};

struct ConvergenceReport {
  std::string model;
  double t = 0.0;
  bool homogeneous = false;
  std::vector<ConvergenceRow> rows;

  /// Every consecutive drop of l2_k1 exceeds one combined standard error.
  bool l2_decreasing() const;
  bool g2_decreasing() const;

  void write_csv(std::ostream& out) const;
  nlohmann::json to_json() const;
};

struct SweepOptions {
  std::size_t bootstrap = 200;
  G2Options g2;
  unsigned threads = 1;
};

/// Runs `plan` at every eps (snapshot at t = plan.t_end) and compares the
/// renormalized histogram with `solution`. eps_list must be strictly decreasing.
ConvergenceReport convergence_sweep(const std::string& model, const std::vector<double>& eps_list,
                                    const SimPlan& plan, const DensityField& solution,
                                    const SweepOptions& opts = {});

}  // namespace vlasov
