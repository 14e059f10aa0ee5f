#pragma once

// Exact continuous-time simulation of the eps-scaled birth, death and hop
// process on the periodic box (Gillespie with thinning, cell-list neighbours).
//
// RNG consumption per step, in this order:
//   1. exponential waiting time at the total (bounded) rate
//   2. one uniform selecting the channel and, inside it, the particle
//   3. channel draws: displacement from the channel kernel (parent births and
//      hops) or d uniforms for the location (uniform births)
//   4. one uniform for the thinning test, only in channels that thin
// A step whose waiting time overshoots the horizon draws nothing else and
// stops the clock at the horizon.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vlasov/config.hpp"
#include "vlasov/dsl.hpp"
#include "vlasov/grid.hpp"
#include "vlasov/kernel.hpp"

namespace vlasov {

inline constexpr double kMaxExpectedInitial = 1e6;

/// Initial intensity: a constant or a gridded density.
using InitialDensity = std::variant<double, DensityField>;

double initial_mass(const InitialDensity& rho0, const Box& box);

/// Poisson(rho0 / eps) configuration: N ~ Poisson(eps^-1 int rho0), points
/// i.i.d. with density rho0 / int rho0 (inverse CDF of the piecewise-linear
/// interpolant for d = 1, rejection for d = 2).
std::vector<Point> sample_poisson_initial(const InitialDensity& rho0, double eps, const Box& box, Rng& rng);

/// Generator of replica i: seeded from (base_seed, i) only.
Rng replica_rng(std::uint64_t base_seed, std::size_t replica);

struct EventRecord {
  enum class Kind { none, birth, death, hop };
  Kind kind = Kind::none;
  Point from;  // death: victim, hop: departure
  Point to;    // birth: new point, hop: arrival
  double time = 0.0;
  bool rejected = false;  // a proposal was thinned away
};

struct TotalRates {
  double death = 0.0;
  double birth = 0.0;
  double hop = 0.0;
  bool birth_is_bound = false;
  bool hop_is_bound = false;
  double total() const noexcept { return death + birth + hop; }
};

/// One trajectory of the scaled process.
class Simulation {
 public:
  /// `spec` is the unscaled generator; eps scaling is applied here. Kernels are
  /// restricted to the ball of radius L/2 so minimum-image distances agree
  /// with sampled displacements.
  Simulation(const dsl::GeneratorSpec& spec, double eps, std::vector<Point> initial, Rng rng);
  ~Simulation();
  Simulation(Simulation&&) noexcept;
  Simulation& operator=(Simulation&&) noexcept;

  double time() const noexcept;
  std::span<const Point> points() const noexcept;
  FiniteConfiguration configuration() const;
  const Box& box() const noexcept;
  double eps() const noexcept;

  TotalRates total_rates() const;

  /// Advances to the next event or to `horizon`, whichever comes first.
  /// Returns Kind::none when the horizon was reached or the total rate is 0.
  EventRecord step(double horizon = std::numeric_limits<double>::infinity());

  std::size_t events() const noexcept;
  std::size_t rejections() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct SimPlan {
  std::shared_ptr<const dsl::GeneratorSpec> spec;
  double eps = 1.0;
  Box box;
  InitialDensity rho0 = 0.0;
  double t_end = 1.0;
  std::vector<double> snapshot_times;
  std::size_t replicas = 1;
  std::uint64_t base_seed = 0;
  /// Replica stops and is flagged once it holds more particles than this;
  /// 0 picks max(1000, 10 x expected initial count).
  std::size_t max_particles = 0;

  /// Throws ConfigError for eps outside (0, 1], signed kernels, unsorted
  /// snapshots, a box that disagrees with a gridded rho0, or an expected
  /// initial count above kMaxExpectedInitial.
  void validate() const;
  std::size_t particle_guard() const;
};

struct Snapshot {
  double t = 0.0;
  std::vector<Point> points;
};

struct ReplicaResult {
  std::size_t replica = 0;
  std::vector<Snapshot> snapshots;  // only the times reached before truncation
  bool truncated = false;
  double truncated_at = 0.0;
  std::size_t events = 0;
  std::size_t rejections = 0;
};

struct EnsembleResult {
  double eps = 1.0;
  Box box;
  std::vector<double> snapshot_times;
  std::vector<ReplicaResult> replicas;

  bool any_truncated() const;
  /// Configurations of every untruncated replica at snapshot k.
  std::vector<std::span<const Point>> at(std::size_t k) const;
};

/// Runs every replica to t_end. Replicas are independent, so `threads` only
/// changes wall time.
EnsembleResult run_ensemble(const SimPlan& plan, unsigned threads = 1);

/// {"replica": i, "t": t, "points": [[x], ...]} per line, replica-major.
void write_snapshots_jsonl(std::ostream& out, const EnsembleResult& r);

}  // namespace vlasov
