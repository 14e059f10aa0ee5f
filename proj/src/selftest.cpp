#include "vlasov/selftest.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "vlasov/derive.hpp"
#include "vlasov/error.hpp"
#include "vlasov/kernel.hpp"
#include "vlasov/presets.hpp"

namespace vlasov {

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<std::uint64_t> masks_up_to(int sites, std::size_t k) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << sites); ++m) {
    if (static_cast<std::size_t>(std::popcount(m)) <= k) out.push_back(m);
  }
  return out;
}

}  // namespace

CheckResult check_transforms(std::uint64_t seed, std::size_t functions, std::size_t max_points, int sites,
                             double tol) {
  Stopwatch sw;
  CheckResult r{"transforms", false, 0.0, tol, {}, 0.0};
  const DiscreteSpace space = DiscreteSpace::uniform(Box(1, static_cast<double>(sites)), sites);
  const auto masks = masks_up_to(sites, max_points);
  std::vector<FiniteConfiguration> configs;
  for (auto m : masks) configs.push_back(space.configuration(m));

  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t f = 0; f < functions; ++f) {
    std::map<FiniteConfiguration, double> g;
    for (const auto& c : configs) g[c] = u(rng);
    const ConfigFunction G = tabulated(g);

    std::map<FiniteConfiguration, double> kg, kinv;
    for (const auto& c : configs) {
      kg[c] = k_transform(G, c);
      kinv[c] = k_inverse(G, c);
    }
    const ConfigFunction KG = tabulated(kg), KinvG = tabulated(kinv);
    for (const auto& c : configs) {
      r.worst = std::max(r.worst, std::abs(k_inverse(KG, c) - g[c]));
      r.worst = std::max(r.worst, std::abs(k_transform(KinvG, c) - g[c]));
    }
  }
  r.passed = r.worst <= tol;
  r.detail = std::to_string(functions) + " functions, " + std::to_string(configs.size()) +
             " configurations each, max |error| " + format_number(r.worst);
  r.seconds = sw.seconds();
  return r;
}

CheckResult check_minlos(std::uint64_t seed, std::size_t count, int sites, double tol) {
  Stopwatch sw;
  CheckResult r{"minlos", false, 0.0, tol, {}, 0.0};
  const DiscreteSpace space = DiscreteSpace::uniform(Box(1, 0.5 * sites), sites);
  std::map<Point, int> site_index;
  for (std::size_t i = 0; i < space.size(); ++i) site_index[space.sites()[i]] = static_cast<int>(i);
  auto mask = [&](const FiniteConfiguration& c) {
    std::uint64_t m = 0;
    for (const auto& p : c) m |= std::uint64_t{1} << site_index.at(p);
    return m;
  };

  Rng rng(seed);
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint64_t salt = rng();
    // a fixed pseudo-random value per (xi, eta, zeta) triple
    auto H = [&](const FiniteConfiguration& a, const FiniteConfiguration& b, const FiniteConfiguration& c) {
      std::seed_seq seq{static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32),
                        static_cast<std::uint32_t>(mask(a)), static_cast<std::uint32_t>(mask(b)),
                        static_cast<std::uint32_t>(mask(c))};
      std::array<std::uint32_t, 1> out{};
      seq.generate(out.begin(), out.end());
      return static_cast<double>(out[0]) / 4294967296.0 * 2.0 - 1.0;
    };
    const auto sides = verify_minlos(H, space);
    r.worst = std::max(r.worst, std::abs(sides.lhs - sides.rhs));
  }
  r.passed = r.worst <= tol;
  r.detail = std::to_string(count) + " random H on " + std::to_string(sites) + " sites, max |lhs - rhs| " +
             format_number(r.worst);
  r.seconds = sw.seconds();
  return r;
}

LimitCheck limit_check(const dsl::GeneratorSpec& spec, dsl::PartKind part, const Point& x,
                       const std::optional<Point>& y, const FiniteConfiguration& xi,
                       const std::vector<double>& eps) {
  LimitCheck out;
  out.eps = eps;
  out.symbolic = dsl::vlasov_coefficient(spec, part, x, y)(xi);
  const auto n = static_cast<double>(xi.size());
  for (double e : eps) {
    const dsl::GeneratorSpec scaled = dsl::scale(spec, e);
    const double factor = part == dsl::PartKind::birth ? scaled.eps : 1.0;
    double largest = 0.0;
    ConfigFunction F{[&](const FiniteConfiguration& eta) {
                       const double v = factor * dsl::rate(scaled, part, x, eta, y);
                       largest = std::max(largest, std::abs(v));
                       return v;
                     },
                     std::nullopt};
    const double k = k_inverse(F, xi) / std::pow(e, n);
    out.errors.push_back(std::abs(k - out.symbolic));
    out.floors.push_back(16.0 * std::ldexp(std::numeric_limits<double>::epsilon(), static_cast<int>(xi.size())) *
                             largest * std::pow(e, -n) +
                         1e-14);
  }
  // least-squares slope of log err against log eps over the points above roundoff
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (out.errors[i] > out.floors[i]) pts.emplace_back(std::log(eps[i]), std::log(out.errors[i]));
  }
  if (pts.size() < 2) {
    // at most one resolvable point: either exact, or the error falls into
    // roundoff faster than the grid of eps can show
    out.slope = std::numeric_limits<double>::infinity();
    return out;
  }
  double mx = 0, my = 0;
  for (auto [a, b] : pts) {
    mx += a;
    my += b;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0, sxx = 0;
  for (auto [a, b] : pts) {
    sxy += (a - mx) * (b - my);
    sxx += (a - mx) * (a - mx);
  }
  out.slope = sxy / sxx;
  return out;
}

CheckResult check_limits(std::uint64_t seed, double min_slope, std::size_t max_points, std::size_t draws) {
  Stopwatch sw;
  CheckResult r{"limits", true, std::numeric_limits<double>::infinity(), min_slope, {}, 0.0};
  const std::vector<double> eps{1e-1, 1e-2, 1e-3};
  const Point x{5.0, 0.0}, y{5.3, 0.0};
  Rng rng(seed);
  std::uniform_real_distribution<double> off(-0.45, 0.45);
  std::size_t cases = 0;
  std::string worst_case;
  for (const auto& p : presets()) {
    const dsl::GeneratorSpec spec = dsl::parse(std::string(p.dsl));
    for (dsl::PartKind part : {dsl::PartKind::death, dsl::PartKind::birth, dsl::PartKind::hop}) {
      if (!spec.part(part)) continue;
      const auto yy = part == dsl::PartKind::hop ? std::optional<Point>(y) : std::nullopt;
      for (std::size_t n = 0; n <= max_points; ++n) {
        for (std::size_t d = 0; d < (n == 0 ? 1 : draws); ++d) {
          std::vector<Point> pts;
          while (pts.size() < n) {
            const Point q{x.x + off(rng), 0.0};
            if (std::find(pts.begin(), pts.end(), q) == pts.end()) pts.push_back(q);
          }
          const auto lc = limit_check(spec, part, x, yy, FiniteConfiguration(pts), eps);
          ++cases;
          if (lc.slope < r.worst) {
            r.worst = lc.slope;
            worst_case = std::string(p.name) + "/" + std::string(dsl::to_string(part)) + " |xi|=" + std::to_string(n);
          }
          if (!(lc.slope >= min_slope)) r.passed = false;
        }
      }
    }
  }
  r.detail = std::to_string(cases) + " coefficients, smallest slope " + format_number(r.worst) +
             (worst_case.empty() ? "" : " (" + worst_case + ")");
  r.seconds = sw.seconds();
  return r;
}

CheckResult check_catalog() {
  Stopwatch sw;
  CheckResult r{"catalog", true, 0.0, 0.0, {}, 0.0};
  std::size_t bad = 0;
  for (const auto& p : presets()) {
    std::string got;
    try {
      got = dsl::derive_vlasov(dsl::parse(std::string(p.dsl))).str();
    } catch (const Error& e) {
      got = std::string("error: ") + e.what();
    }
    if (got != p.equation) {
      ++bad;
      r.detail += std::string(p.name) + ": got '" + got + "' want '" + std::string(p.equation) + "'; ";
    }
  }
  r.worst = static_cast<double>(bad);
  r.passed = bad == 0;
  if (r.passed) r.detail = std::to_string(presets().size()) + " equations match";
  r.seconds = sw.seconds();
  return r;
}

std::vector<CheckResult> run_selftest(std::uint64_t seed) {
  return {check_transforms(seed), check_minlos(seed + 1), check_limits(seed + 2), check_catalog()};
}

}  // namespace vlasov
