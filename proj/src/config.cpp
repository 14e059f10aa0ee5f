#include "vlasov/config.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "vlasov/error.hpp"

namespace vlasov {

Box::Box(int dim, double side) : dim_(dim), side_(side) {
  if (dim != 1 && dim != 2) throw ConfigError("box dimension must be 1 or 2");
  if (!(side > 0.0) || !std::isfinite(side)) throw ConfigError("box side must be positive");
}

double Box::volume() const noexcept { return dim_ == 1 ? side_ : side_ * side_; }

bool Box::contains(const Point& p) const noexcept {
  auto in = [this](double c) { return c >= 0.0 && c < side_; };
  return in(p.x) && (dim_ == 1 ? p.y == 0.0 : in(p.y));
}

Point Box::wrap(Point p) const noexcept {
  auto w = [this](double c) {
    double r = std::fmod(c, side_);
    if (r < 0.0) r += side_;
    // fmod of a tiny negative value can round up to side_
    if (r >= side_) r = 0.0;
    return r;
  };
  p.x = w(p.x);
  p.y = dim_ == 1 ? 0.0 : w(p.y);
  return p;
}

Point Box::displacement(const Point& a, const Point& b) const noexcept {
  auto mi = [this](double d) {
    d -= side_ * std::nearbyint(d / side_);
    return d;
  };
  return Point{mi(a.x - b.x), dim_ == 1 ? 0.0 : mi(a.y - b.y)};
}

double Box::distance(const Point& a, const Point& b) const noexcept {
  const Point d = displacement(a, b);
  return std::hypot(d.x, d.y);
}

namespace {

void check_distinct_sorted(const std::vector<Point>& pts) {
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i] == pts[i - 1]) throw Error("configuration points must be pairwise distinct");
  }
}

void check_cardinality(std::size_t n, const char* op) {
  if (n > kMaxSubsetCardinality) {
    throw SizeError(std::string(op) + ": configuration of " + std::to_string(n) +
                    " points exceeds the subset-enumeration cap of " +
                    std::to_string(kMaxSubsetCardinality));
  }
}

}  // namespace

FiniteConfiguration::FiniteConfiguration(std::vector<Point> points) : points_(std::move(points)) {
  std::sort(points_.begin(), points_.end());
  check_distinct_sorted(points_);
}

FiniteConfiguration::FiniteConfiguration(std::initializer_list<Point> points)
    : FiniteConfiguration(std::vector<Point>(points)) {}

FiniteConfiguration FiniteConfiguration::subset(std::uint64_t mask) const {
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(std::popcount(mask)));
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (mask >> i & 1U) out.push_back(points_[i]);
  }
  return FiniteConfiguration(Sorted{}, std::move(out));
}

FiniteConfiguration FiniteConfiguration::without(std::size_t index) const {
  std::vector<Point> out = points_;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(index));
  return FiniteConfiguration(Sorted{}, std::move(out));
}

FiniteConfiguration FiniteConfiguration::with(const Point& p) const {
  std::vector<Point> out = points_;
  auto it = std::lower_bound(out.begin(), out.end(), p);
  if (it != out.end() && *it == p) throw Error("configuration points must be pairwise distinct");
  out.insert(it, p);
  return FiniteConfiguration(Sorted{}, std::move(out));
}

bool FiniteConfiguration::contains(const Point& p) const {
  return std::binary_search(points_.begin(), points_.end(), p);
}

ConfigFunction tabulated(std::map<FiniteConfiguration, double> table) {
  std::size_t bound = 0;
  for (const auto& [eta, v] : table) bound = std::max(bound, eta.size());
  return ConfigFunction{[t = std::move(table)](const FiniteConfiguration& eta) {
                          auto it = t.find(eta);
                          return it == t.end() ? 0.0 : it->second;
                        },
                        bound};
}

DiscreteSpace::DiscreteSpace(std::vector<Point> sites, double cell_volume)
    : sites_(std::move(sites)), cell_volume_(cell_volume) {
  if (sites_.size() > kMaxSites) {
    throw SizeError("discrete space of " + std::to_string(sites_.size()) +
                    " sites exceeds the oracle cap of " + std::to_string(kMaxSites));
  }
  if (!(cell_volume > 0.0)) throw Error("cell volume must be positive");
  std::sort(sites_.begin(), sites_.end());
  check_distinct_sorted(sites_);
}

DiscreteSpace DiscreteSpace::uniform(const Box& box, int cells_per_side) {
  const double h = box.side() / cells_per_side;
  std::vector<Point> sites;
  for (int i = 0; i < cells_per_side; ++i) {
    if (box.dim() == 1) {
      sites.push_back({(i + 0.5) * h, 0.0});
    } else {
      for (int j = 0; j < cells_per_side; ++j) sites.push_back({(i + 0.5) * h, (j + 0.5) * h});
    }
  }
  return DiscreteSpace(std::move(sites), box.dim() == 1 ? h : h * h);
}

FiniteConfiguration DiscreteSpace::configuration(std::uint64_t mask) const {
  std::vector<Point> out;
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    if (mask >> i & 1U) out.push_back(sites_[i]);
  }
  return FiniteConfiguration(std::move(out));
}

double k_transform(const ConfigFunction& G, const FiniteConfiguration& gamma) {
  check_cardinality(gamma.size(), "k_transform");
  const std::uint64_t n = std::uint64_t{1} << gamma.size();
  double sum = 0.0;
  for (std::uint64_t mask = 0; mask < n; ++mask) {
    if (G.support_bound && static_cast<std::size_t>(std::popcount(mask)) > *G.support_bound) continue;
    sum += G(gamma.subset(mask));
  }
  return sum;
}

double k_inverse(const ConfigFunction& F, const FiniteConfiguration& eta) {
  check_cardinality(eta.size(), "k_inverse");
  const std::uint64_t n = std::uint64_t{1} << eta.size();
  double sum = 0.0;
  for (std::uint64_t mask = 0; mask < n; ++mask) {
    const auto removed = eta.size() - static_cast<std::size_t>(std::popcount(mask));
    const double v = F(eta.subset(mask));
    sum += removed % 2 == 0 ? v : -v;
  }
  return sum;
}

double lp_exponent(const PointFunction& f, const FiniteConfiguration& eta) {
  double prod = 1.0;
  for (const Point& p : eta) prod *= f(p);
  return prod;
}

double lp_integral(const ConfigFunction& G, const DiscreteSpace& space) {
  const std::uint64_t n = std::uint64_t{1} << space.size();
  double sum = 0.0;
  for (std::uint64_t mask = 0; mask < n; ++mask) {
    const int k = std::popcount(mask);
    if (G.support_bound && static_cast<std::size_t>(k) > *G.support_bound) continue;
    sum += G(space.configuration(mask)) * std::pow(space.cell_volume(), k);
  }
  return sum;
}

MinlosSides verify_minlos(const TripleConfigFunction& H, const DiscreteSpace& space) {
  if (space.size() > kMaxMinlosSites) {
    throw SizeError("verify_minlos: " + std::to_string(space.size()) +
                    " sites exceeds the cap of " + std::to_string(kMaxMinlosSites));
  }
  const std::uint64_t n = std::uint64_t{1} << space.size();
  const double v = space.cell_volume();
  MinlosSides out;

  for (std::uint64_t eta = 0; eta < n; ++eta) {
    const FiniteConfiguration eta_cfg = space.configuration(eta);
    double inner = 0.0;
    // submasks of eta, including eta itself and the empty set
    for (std::uint64_t xi = eta;; xi = (xi - 1) & eta) {
      inner += H(space.configuration(xi), space.configuration(eta & ~xi), eta_cfg);
      if (xi == 0) break;
    }
    out.lhs += inner * std::pow(v, std::popcount(eta));
  }

  for (std::uint64_t xi = 0; xi < n; ++xi) {
    const FiniteConfiguration xi_cfg = space.configuration(xi);
    const std::uint64_t rest = (n - 1) & ~xi;
    double inner = 0.0;
    for (std::uint64_t eta = rest;; eta = (eta - 1) & rest) {
      inner += H(xi_cfg, space.configuration(eta), space.configuration(xi | eta)) *
               std::pow(v, std::popcount(eta));
      if (eta == 0) break;
    }
    out.rhs += inner * std::pow(v, std::popcount(xi));
  }
  return out;
}

}  // namespace vlasov
