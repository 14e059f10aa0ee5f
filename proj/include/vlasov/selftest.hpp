#pragma once

// Oracle suites: transform identities, the Minlos identity, numerical
// eps-limits of the rate coefficients, and the equation catalog.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlasov/dsl.hpp"

namespace vlasov {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;      // largest error, or smallest slope for the limit suite
  double threshold = 0.0;
  std::string detail;
  double seconds = 0.0;
};

/// K^{-1}K G = G and K K^{-1} G = G for random tables on configurations of
/// at most `max_points` of `sites` cells.
CheckResult check_transforms(std::uint64_t seed, std::size_t functions = 100, std::size_t max_points = 5,
                             int sites = 10, double tol = 1e-12);

/// Both sides of the Minlos identity for random H on a `sites`-cell space.
CheckResult check_minlos(std::uint64_t seed, std::size_t count = 50, int sites = 8, double tol = 1e-12);

struct LimitCheck {
  std::vector<double> eps;
  std::vector<double> errors;  // |eps^-|xi| K^-1 coefficient - symbolic coefficient|
  std::vector<double> floors;  // roundoff level of each error
  double slope = 0.0;          // log-log slope over points above their floor (inf if none)
  double symbolic = 0.0;
};

/// Inclusion-exclusion over 2^n subsets loses about 2^n ulps of the largest
/// rate value, amplified by eps^-n; errors below that are roundoff.
LimitCheck limit_check(const dsl::GeneratorSpec& spec, dsl::PartKind part, const Point& x,
                       const std::optional<Point>& y, const FiniteConfiguration& xi,
                       const std::vector<double>& eps);

/// Every preset, every part, |xi| <= max_points near x: slope >= min_slope.
CheckResult check_limits(std::uint64_t seed, double min_slope = 0.8, std::size_t max_points = 3,
                         std::size_t draws = 4);

/// derive_vlasov of every preset equals its catalog string.
CheckResult check_catalog();

std::vector<CheckResult> run_selftest(std::uint64_t seed = 1);

}  // namespace vlasov
