#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <random>

#include "vlasov/config.hpp"
#include "vlasov/error.hpp"
#include "vlasov/kernel.hpp"

using namespace vlasov;

namespace {

FiniteConfiguration random_config(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<Point> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back({u(rng), 0.0});
  return FiniteConfiguration(std::move(pts));
}

// Random values on every subset of base.
ConfigFunction random_table(std::mt19937_64& rng, const FiniteConfiguration& base) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::map<FiniteConfiguration, double> t;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << base.size()); ++m) t[base.subset(m)] = u(rng);
  return tabulated(std::move(t));
}

ConfigFunction singletons(PointFunction f) {
  return {[f](const FiniteConfiguration& e) { return e.size() == 1 ? f(e[0]) : 0.0; }, 1};
}

ConfigFunction empty_indicator() {
  return {[](const FiniteConfiguration& e) { return e.empty() ? 1.0 : 0.0; }, 0};
}

}  // namespace

TEST_CASE("box wraps and measures minimum-image distances") {
  Box b(1, 10.0);
  CHECK(b.wrap({-0.5, 3.0}).x == doctest::Approx(9.5));
  CHECK(b.wrap({-0.5, 3.0}).y == 0.0);
  CHECK(b.wrap({10.0, 0.0}).x == 0.0);
  CHECK(b.distance({0.5, 0}, {9.5, 0}) == doctest::Approx(1.0));
  Box b2(2, 4.0);
  CHECK(b2.distance({0.1, 0.1}, {3.9, 3.9}) == doctest::Approx(std::sqrt(0.08)));
  CHECK(b2.volume() == 16.0);
  CHECK_THROWS_AS(Box(3, 1.0), ConfigError);
  CHECK_THROWS_AS(Box(1, 0.0), ConfigError);
}

TEST_CASE("configurations are canonical sets") {
  FiniteConfiguration a{{2, 0}, {1, 0}};
  FiniteConfiguration b{{1, 0}, {2, 0}};
  CHECK(a == b);
  CHECK(a[0].x == 1.0);
  CHECK_THROWS_AS((FiniteConfiguration{{1, 0}, {1, 0}}), Error);
  CHECK(a.with({1.5, 0})[1].x == 1.5);
  CHECK_THROWS_AS(a.with({1, 0}), Error);
  CHECK(a.without(0) == FiniteConfiguration{{2, 0}});
  CHECK(a.subset(0b10) == FiniteConfiguration{{2, 0}});
}

TEST_CASE("k_transform examples") {
  const Point x1{1, 0}, x2{3, 0};
  const FiniteConfiguration g{x1, x2};
  auto f = [](const Point& p) { return p.x * p.x + 0.5; };
  CHECK(k_transform(singletons(f), g) == doctest::Approx(f(x1) + f(x2)).epsilon(1e-15));
  CHECK(k_transform(empty_indicator(), g) == 1.0);
  std::mt19937_64 rng(3);
  CHECK(k_transform(empty_indicator(), random_config(rng, 7)) == 1.0);
  ConfigFunction e{[&](const FiniteConfiguration& eta) { return lp_exponent(f, eta); }, std::nullopt};
  CHECK(k_transform(e, g) == doctest::Approx((1 + f(x1)) * (1 + f(x2))).epsilon(1e-15));
}

TEST_CASE("k_inverse examples") {
  ConfigFunction one{[](const FiniteConfiguration&) { return 1.0; }, std::nullopt};
  CHECK(k_inverse(one, {}) == 1.0);
  CHECK(k_inverse(one, {{1, 0}}) == 0.0);
  auto f = [](const Point& p) { return std::sin(p.x) + 2.0; };
  ConfigFunction prod{[&](const FiniteConfiguration& eta) {
                        double v = 1.0;
                        for (const auto& p : eta) v *= 1.0 + f(p);
                        return v;
                      },
                      std::nullopt};
  const Point x1{0.3, 0}, x2{2.2, 0};
  CHECK(k_inverse(prod, {x1, x2}) == doctest::Approx(f(x1) * f(x2)).epsilon(1e-14));
}

TEST_CASE("K and K^-1 invert each other on random tables") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto base = random_config(rng, 1 + trial % 5);
    const ConfigFunction G = random_table(rng, base);
    ConfigFunction KG{[&](const FiniteConfiguration& e) { return k_transform(G, e); }, std::nullopt};
    ConfigFunction KiG{[&](const FiniteConfiguration& e) { return k_inverse(G, e); }, std::nullopt};
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << base.size()); ++m) {
      const auto eta = base.subset(m);
      CHECK(std::abs(k_inverse(KG, eta) - G(eta)) <= 1e-12);
      CHECK(std::abs(k_transform(KiG, eta) - G(eta)) <= 1e-12);
    }
  }
}

TEST_CASE("k_transform is linear and dominates G(empty) for nonnegative G") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto base = random_config(rng, 4);
    const auto A = random_table(rng, base), B = random_table(rng, base);
    const double a = u(rng), b = u(rng);
    ConfigFunction comb{[&](const FiniteConfiguration& e) { return a * A(e) + b * B(e); }, std::nullopt};
    CHECK(k_transform(comb, base) ==
          doctest::Approx(a * k_transform(A, base) + b * k_transform(B, base)).epsilon(1e-12));
    ConfigFunction pos{[&](const FiniteConfiguration& e) { return std::abs(A(e)); }, std::nullopt};
    CHECK(k_transform(pos, base) >= pos({}));
  }
}

TEST_CASE("subset caps raise size errors") {
  std::mt19937_64 rng(1);
  const auto big = random_config(rng, 26);
  CHECK_THROWS_AS(k_transform(empty_indicator(), big), SizeError);
  CHECK_THROWS_AS(k_inverse(empty_indicator(), big), SizeError);
  std::vector<Point> sites;
  for (int i = 0; i < 17; ++i) sites.push_back({i + 0.5, 0});
  CHECK_THROWS_AS(DiscreteSpace(sites, 1.0), SizeError);
  sites.resize(11);
  DiscreteSpace s11(sites, 1.0);
  CHECK_THROWS_AS(verify_minlos([](auto&, auto&, auto&) { return 0.0; }, s11), SizeError);
}

TEST_CASE("lp_exponent") {
  auto two = [](const Point&) { return 2.0; };
  CHECK(lp_exponent(two, {}) == 1.0);
  CHECK(lp_exponent(two, {{1, 0}, {2, 0}, {3, 0}}) == 8.0);
  auto f = [](const Point& p) { return p.x + 1; };
  CHECK(lp_exponent(f, {{1, 0}, {2, 0}}) == 6.0);
}

TEST_CASE("lp_integral closed forms") {
  const auto space = DiscreteSpace::uniform(Box(1, 4.0), 8);
  const double v = space.cell_volume();
  auto f = [](const Point& p) { return 0.3 * std::cos(p.x); };
  ConfigFunction e{[&](const FiniteConfiguration& eta) { return lp_exponent(f, eta); }, std::nullopt};
  double prod = 1.0;
  for (const auto& s : space.sites()) prod *= 1.0 + f(s) * v;
  CHECK(std::abs(lp_integral(e, space) - prod) <= 1e-12);
  CHECK(lp_integral(empty_indicator(), space) == 1.0);
  ConfigFunction one_point{[](const FiniteConfiguration& eta) { return eta.size() == 1 ? 1.0 : 0.0; }, 1};
  CHECK(lp_integral(one_point, space) == doctest::Approx(8 * v).epsilon(1e-15));
}

TEST_CASE("lp_integral of an exponent approaches exp of the integral under refinement") {
  auto f = [](const Point&) { return 0.01; };
  ConfigFunction e{[&](const FiniteConfiguration& eta) { return lp_exponent(f, eta); }, std::nullopt};
  double prev = 1.0;
  for (int n : {4, 8, 16}) {
    const auto space = DiscreteSpace::uniform(Box(1, 1.0), n);
    const double err = std::abs(lp_integral(e, space) - std::exp(0.01));
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 5e-6);
}

TEST_CASE("Minlos identity") {
  const auto space = DiscreteSpace::uniform(Box(1, 2.0), 6);
  SUBCASE("only empty arguments") {
    auto H = [](const FiniteConfiguration& a, const FiniteConfiguration& b, const FiniteConfiguration& c) {
      return a.empty() && b.empty() && c.empty() ? 1.0 : 0.0;
    };
    const auto s = verify_minlos(H, space);
    CHECK(s.lhs == 1.0);
    CHECK(s.rhs == 1.0);
  }
  SUBCASE("third argument only") {
    auto G = [](const FiniteConfiguration& z) { return 1.0 + 0.1 * static_cast<double>(z.size()); };
    auto H = [&](const FiniteConfiguration&, const FiniteConfiguration&, const FiniteConfiguration& z) {
      return G(z);
    };
    ConfigFunction weighted{[&](const FiniteConfiguration& z) { return std::pow(2.0, z.size()) * G(z); },
                            std::nullopt};
    const double expected = lp_integral(weighted, space);
    const auto s = verify_minlos(H, space);
    CHECK(std::abs(s.lhs - expected) <= 1e-12 * expected);
    CHECK(std::abs(s.rhs - expected) <= 1e-12 * expected);
  }
  SUBCASE("random tables") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      std::map<std::tuple<FiniteConfiguration, FiniteConfiguration, FiniteConfiguration>, double> t;
      auto H = [&](const FiniteConfiguration& a, const FiniteConfiguration& b, const FiniteConfiguration& c) {
        if (c.size() > 3) return 0.0;
        auto [it, fresh] = t.try_emplace({a, b, c}, 0.0);
        if (fresh) it->second = u(rng);
        return it->second;
      };
      const auto s = verify_minlos(H, space);
      CHECK(std::abs(s.lhs - s.rhs) <= 1e-12);
    }
  }
}

TEST_CASE("kernel masses and tails") {
  for (int d : {1, 2}) {
    for (const Kernel& k : {Kernel::gaussian(0.4, 2.0), Kernel::tophat(0.7, 1.5), Kernel::exponential(3.0)}) {
      // independent radial midpoint quadrature
      const double R = k.cutoff(d);
      const int n = 200000;
      double m = 0.0;
      for (int i = 0; i < n; ++i) {
        const double r = (i + 0.5) * R / n;
        m += k.value(r, d) * (d == 1 ? 2.0 : 2.0 * M_PI * r) * R / n;
      }
      CAPTURE(k.describe());
      CHECK(m == doctest::Approx(k.mass(d)).epsilon(1e-6));
      // 2-d gaussian tail beyond 6 sigma is e^-18
      CHECK(k.mass_within(R, d) == doctest::Approx(k.mass(d)).epsilon(1e-7));
      CHECK(k.mass_within(R / 3, d) < k.mass(d));
    }
  }
  CHECK(Kernel::gaussian(0.5).cutoff(1) == 3.0);
  CHECK(Kernel::tophat(2.0, 3.0).describe() == "tophat(2, 3)");
  CHECK(Kernel::gaussian(0.5).describe() == "gaussian(0.5)");
}

TEST_CASE("tabulated kernels integrate piecewise-linear profiles exactly") {
  const Kernel k = Kernel::table({0.0, 1.0, 2.0}, {1.0, 1.0, 0.0});
  CHECK(k.value(0.5, 1) == 1.0);
  CHECK(k.value(1.5, 1) == 0.5);
  CHECK(k.value(2.5, 1) == 0.0);
  CHECK(k.mass(1) == doctest::Approx(2.0 * 1.5));
  // 2 pi (int_0^1 r dr + int_1^2 r (2 - r) dr) = 2 pi (1/2 + 2/3)
  CHECK(k.mass(2) == doctest::Approx(2 * M_PI * (0.5 + 2.0 / 3.0)));
  CHECK(k.mass_within(1.0, 1) == doctest::Approx(2.0));
  CHECK(k.mass_within(1.5, 1) == doctest::Approx(2.0 + 2.0 * 0.375));
  CHECK_THROWS_AS(Kernel::table({0.5, 1.0}, {1.0, 0.0}), Error);
}

TEST_CASE("kernel displacement sampling matches the profile") {
  Rng rng(7);
  const Kernel g = Kernel::gaussian(0.5);
  const Kernel t = Kernel::tophat(1.0);
  double s2 = 0.0, r2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const Point d = g.sample_displacement(rng, 1);
    s2 += d.x * d.x;
    const Point e = t.sample_displacement(rng, 2);
    r2 += e.x * e.x + e.y * e.y;
  }
  // E|d|^2: sigma^2 in 1-d; R^2/2 for a uniform disc
  CHECK(s2 / n == doctest::Approx(0.25).epsilon(0.01));
  CHECK(r2 / n == doctest::Approx(0.5).epsilon(0.01));
}
