#pragma once

// Finite configurations on a periodic box, the K-transform pair and an exact
// discrete Lebesgue-Poisson oracle.

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace vlasov {

/// A location in the box. For d = 1 the `y` coordinate is always zero.
struct Point {
  double x = 0.0;
  double y = 0.0;

  auto operator<=>(const Point&) const = default;
};

/// The periodic box [0, L)^d standing in for a bounded region of R^d.
class Box {
 public:
  Box() = default;
  Box(int dim, double side);

  int dim() const noexcept { return dim_; }
  double side() const noexcept { return side_; }
  double volume() const noexcept;

  bool contains(const Point& p) const noexcept;
  Point wrap(Point p) const noexcept;
  /// Minimum-image displacement a - b.
  Point displacement(const Point& a, const Point& b) const noexcept;
  double distance(const Point& a, const Point& b) const noexcept;

  bool operator==(const Box&) const = default;

 private:
  int dim_ = 1;
  double side_ = 10.0;
};

/// Finite set of pairwise distinct points, stored in lexicographic order so
/// equality of configurations is equality of the point lists.
class FiniteConfiguration {
 public:
  FiniteConfiguration() = default;
  explicit FiniteConfiguration(std::vector<Point> points);
  FiniteConfiguration(std::initializer_list<Point> points);

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Point> points() const noexcept { return points_; }
  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }

  /// Sub-configuration selected by the bits of `mask` (bit i keeps point i).
  FiniteConfiguration subset(std::uint64_t mask) const;
  FiniteConfiguration without(std::size_t index) const;
  FiniteConfiguration with(const Point& p) const;
  bool contains(const Point& p) const;

  auto operator<=>(const FiniteConfiguration&) const = default;
  bool operator==(const FiniteConfiguration&) const = default;

 private:
  struct Sorted {};
  FiniteConfiguration(Sorted, std::vector<Point> points) : points_(std::move(points)) {}

  std::vector<Point> points_;
};

using PointFunction = std::function<double(const Point&)>;

/// A function on finite configurations, optionally known to vanish above a
/// cardinality.
struct ConfigFunction {
  std::function<double(const FiniteConfiguration&)> evaluator;
  std::optional<std::size_t> support_bound;

  double operator()(const FiniteConfiguration& eta) const {
    if (support_bound && eta.size() > *support_bound) return 0.0;
    return evaluator(eta);
  }
};

/// Table lookup; configurations absent from the table evaluate to 0.
ConfigFunction tabulated(std::map<FiniteConfiguration, double> table);

/// Finite set of cells replacing R^d so Lebesgue-Poisson integrals become
/// exact finite sums.
class DiscreteSpace {
 public:
  static constexpr std::size_t kMaxSites = 16;

  DiscreteSpace(std::vector<Point> sites, double cell_volume);
  /// Cell centres of an n^d grid on `box`.
  static DiscreteSpace uniform(const Box& box, int cells_per_side);

  std::span<const Point> sites() const noexcept { return sites_; }
  std::size_t size() const noexcept { return sites_.size(); }
  double cell_volume() const noexcept { return cell_volume_; }
  FiniteConfiguration configuration(std::uint64_t mask) const;

 private:
  std::vector<Point> sites_;
  double cell_volume_;
};

inline constexpr std::size_t kMaxSubsetCardinality = 25;
inline constexpr std::size_t kMaxMinlosSites = 10;

/// (KG)(gamma) = sum of G over all subsets of gamma.
double k_transform(const ConfigFunction& G, const FiniteConfiguration& gamma);

/// (K^{-1}F)(eta) = sum over subsets xi of eta of (-1)^{|eta \ xi|} F(xi).
double k_inverse(const ConfigFunction& F, const FiniteConfiguration& eta);

/// Product of f over the points of eta; 1 on the empty configuration.
double lp_exponent(const PointFunction& f, const FiniteConfiguration& eta);

/// Discrete Lebesgue-Poisson integral: sum over site subsets S of
/// G(S) * cell_volume^|S|.
double lp_integral(const ConfigFunction& G, const DiscreteSpace& space);

struct MinlosSides {
  double lhs = 0.0;
  double rhs = 0.0;
};

using TripleConfigFunction = std::function<double(
    const FiniteConfiguration&, const FiniteConfiguration&, const FiniteConfiguration&)>;

/// Both sides of the Minlos identity under lp_integral semantics:
///   lhs = int sum_{xi in eta} H(xi, eta\xi, eta) d(eta)
///   rhs = int int H(xi, eta, xi u eta) d(xi) d(eta), xi and eta disjoint.
MinlosSides verify_minlos(const TripleConfigFunction& H, const DiscreteSpace& space);

}  // namespace vlasov
