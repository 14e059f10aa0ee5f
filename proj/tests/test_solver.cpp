#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "vlasov/derive.hpp"
#include "vlasov/error.hpp"
#include "vlasov/presets.hpp"
#include "vlasov/solver.hpp"

using namespace vlasov;

namespace {

constexpr double kPi = std::numbers::pi;

dsl::GeneratorSpec spec_of(std::string_view name, const Box& box = Box(1, 10.0)) {
  return dsl::parse(std::string(preset(name).dsl), box);
}

DensityField cosine(const Grid& g, double base, double amp, int mode = 1) {
  return DensityField::sample(g, [=](const Point& p) { return base * (1.0 + amp * std::cos(2 * kPi * mode * p.x / g.side)); });
}

}  // namespace

TEST_CASE("FFT convolution of a gaussian with a cosine matches the heat symbol") {
  const Grid g{1, 10.0, 256};
  SpectralContext ctx(g);
  const double sigma = 0.5;
  for (int mode : {1, 3, 7}) {
    const double k = 2 * kPi * mode / g.side;
    const auto f = cosine(g, 1.0, 1.0, mode);
    const auto out = ctx.convolve("a", Kernel::gaussian(sigma), f.values());
    double err = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double x = g.node(j).x;
      err = std::max(err, std::abs(out[j] - (1.0 + std::exp(-0.5 * sigma * sigma * k * k) * std::cos(k * x))));
    }
    CAPTURE(mode);
    CHECK(err < 1e-8);
  }
}

TEST_CASE("FFT convolution agrees with direct quadrature in 2D") {
  const Grid g{2, 8.0, 32};
  SpectralContext ctx(g);
  const Kernel t = Kernel::tophat(1.0);
  std::vector<double> f(g.size());
  for (std::size_t j = 0; j < f.size(); ++j) f[j] = std::sin(0.3 * static_cast<double>(j)) + 2.0;
  const auto fast = ctx.convolve("t", t, f);
  const auto w = sample_kernel(t, g);
  // direct periodic sum with the same sampled weights
  for (std::size_t i : {0u, 17u, 500u, 1023u}) {
    double s = 0.0;
    const int ix = static_cast<int>(i) % g.n, iy = static_cast<int>(i) / g.n;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const int jx = static_cast<int>(j) % g.n, jy = static_cast<int>(j) / g.n;
      const int dx = ((ix - jx) % g.n + g.n) % g.n, dy = ((iy - jy) % g.n + g.n) % g.n;
      s += w[static_cast<std::size_t>(dy * g.n + dx)] * f[j] * g.cell_volume();
    }
    CHECK(fast[i] == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("sampled kernels carry the torus mass") {
  const Grid g{1, 10.0, 256};
  for (const Kernel& k : {Kernel::gaussian(0.5), Kernel::tophat(1.0), Kernel::exponential(2.0)}) {
    double m = 0.0;
    for (double v : sample_kernel(k, g)) m += v * g.cell_volume();
    CHECK(m == doctest::Approx(torus_mass(k, g.box())).epsilon(1e-12));
  }
  // wider than the box: the cap at L/2 removes mass
  CHECK(torus_mass(Kernel::gaussian(4.0), Box(1, 10.0)) < 0.9);
}

TEST_CASE("Surgailis: RK4 matches the closed form to 1e-8 at t = 5") {
  const Grid g{1, 10.0, 256};
  const auto spec = spec_of("surgailis");
  KineticSolver s(dsl::derive_vlasov(spec), g);
  const auto rho0 = cosine(g, 1.0, 0.5);
  const auto rep = s.integrate(rho0, 5.0, {1.0, 5.0}, {.dt = 1e-3});
  // independent: rho(t) = sigma + (rho0 - sigma) e^-t
  double err = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) err = std::max(err, std::abs(rep.fields[1][j] - (2.0 + (rho0[j] - 2.0) * std::exp(-5.0))));
  CHECK(err < 1e-8);
  CHECK(sup_distance(rep.fields[1], reference_solution("surgailis", spec, rho0, 5.0)) < 1e-8);
  CHECK(rep.times == std::vector<double>{1.0, 5.0});
}

TEST_CASE("contact: RK4 matches the per-mode exponential") {
  const Grid g{1, 10.0, 256};
  const auto spec = spec_of("contact");
  KineticSolver s(dsl::derive_vlasov(spec), g);
  const auto rho0 = cosine(g, 1.0, 0.5, 2);
  const auto rep = s.integrate(rho0, 2.0, {}, {.dt = 1e-3});
  // mode k grows at lambda e^{-sigma^2 k^2 / 2} - m
  const double k = 2 * kPi * 2 / 10.0;
  const double g0 = std::exp(2.0 * (0.5 - 1.0)), gk = std::exp(2.0 * (0.5 * std::exp(-0.125 * k * k) - 1.0));
  double err = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    err = std::max(err, std::abs(rep.fields[0][j] - (g0 + 0.5 * gk * std::cos(k * g.node(j).x))));
  }
  CHECK(err < 1e-6);
  CHECK(sup_distance(rep.fields[0], reference_solution("contact", spec, rho0, 2.0)) < 1e-6);
}

TEST_CASE("BDLP homogeneous: RK4 matches the logistic solution") {
  const Grid g{1, 10.0, 256};
  const auto spec = spec_of("bdlp");
  KineticSolver s(dsl::derive_vlasov(spec), g);
  const auto rho0 = DensityField::constant(g, 0.2);
  const auto rep = s.integrate(rho0, 3.0, {}, {.dt = 1e-3});
  // d rho/dt = r rho - c rho^2, r = lambda M+ - m, c = M-
  const double r = 1.5 * torus_mass(Kernel::gaussian(1.0), g.box()) - 0.5;
  const double c = torus_mass(Kernel::tophat(1.0), g.box());
  const double K = r / c;
  const double expect = K / (1.0 + (K / 0.2 - 1.0) * std::exp(-r * 3.0));
  CHECK(rep.fields[0][0] == doctest::Approx(expect).epsilon(1e-9));
  CHECK(sup_distance(rep.fields[0], reference_solution("bdlp_homogeneous", spec, rho0, 3.0)) < 1e-6);
}

TEST_CASE("free Kawasaki conserves mass to 1e-10 over t = 10") {
  const Grid g{1, 10.0, 256};
  const auto spec = spec_of("free_kawasaki");
  KineticSolver s(dsl::derive_vlasov(spec), g);
  const auto rho0 = cosine(g, 1.0, 0.8, 1);
  const auto rep = s.integrate(rho0, 10.0, {}, {.dt = 1e-3});
  CHECK(std::abs(rep.masses.back() - rep.initial_mass) < 1e-10);
  CHECK(sup_distance(rep.fields[0], reference_solution("free_kawasaki", spec, rho0, 10.0)) < 1e-6);
}

TEST_CASE("hop equations conserve mass") {
  const Grid g{1, 10.0, 128};
  for (std::string_view name : {"kawasaki_dd_departure", "kawasaki_dd_arrival", "gibbs_kawasaki"}) {
    KineticSolver s(dsl::derive_vlasov(spec_of(name)), g);
    const auto rep = s.integrate(cosine(g, 1.0, 0.5), 1.0, {}, {.dt = 1e-2});
    CAPTURE(name);
    CHECK(std::abs(rep.masses.back() - rep.initial_mass) < 1e-10);
  }
}

TEST_CASE("RK4 is fourth order") {
  const Grid g{1, 10.0, 64};
  const auto spec = spec_of("contact");
  const auto rho0 = cosine(g, 1.0, 0.5, 3);
  const auto ref = reference_solution("contact", spec, rho0, 2.0);
  std::vector<double> err;
  for (double dt : {0.2, 0.1}) {
    KineticSolver s(dsl::derive_vlasov(spec), g);
    err.push_back(sup_distance(s.integrate(rho0, 2.0, {}, {.dt = dt, .halving_tolerance = 1.0}).fields[0], ref));
  }
  CHECK(err[0] / err[1] > 15.0);
  CHECK(err[0] / err[1] < 17.5);
}

TEST_CASE("Glauber G+ relaxes to the fixed point") {
  const Grid g{1, 10.0, 256};
  const auto spec = spec_of("glauber_plus");
  KineticSolver s(dsl::derive_vlasov(spec), g);
  const auto rep = s.integrate(cosine(g, 0.5, 0.3), 40.0, {}, {.dt = 1e-2});
  const double M = torus_mass(Kernel::tophat(0.5), g.box());
  const double star = glauber_fixed_point(1.0, M);
  CHECK(std::abs(star - std::exp(-M * star)) < 1e-12);
  CHECK(sup_distance(rep.fields[0], DensityField::constant(g, star)) < 1e-8);
  CHECK(sup_distance(rep.fields[0], reference_solution("glauber_fixed_point", spec, rep.fields[0], 40.0)) < 1e-8);
}

TEST_CASE("glauber_fixed_point solves rho = z exp(-M rho)") {
  for (double z : {0.1, 1.0, 7.0}) {
    for (double M : {0.0, 0.5, 3.0}) {
      const double r = glauber_fixed_point(z, M);
      CHECK(r == doctest::Approx(z * std::exp(-M * r)).epsilon(1e-11));
    }
  }
}

TEST_CASE("solver faults") {
  const Grid g{1, 10.0, 64};
  SUBCASE("blow-up") {
    auto spec = spec_of("contact");
    spec.set_parameter("lambda", 30.0);
    KineticSolver s(dsl::derive_vlasov(spec), g);
    CHECK_THROWS_AS(s.integrate(DensityField::constant(g, 1.0), 10.0, {}, {.dt = 1e-2, .blowup = 100.0}),
                    NumericalFault);
  }
  SUBCASE("negativity") {
    // RK4 overshoots through zero on stiff quadratic loss
    auto spec = spec_of("social");
    spec.set_parameter("a", 20.0);
    KineticSolver s(dsl::derive_vlasov(spec), g);
    CHECK_THROWS_AS(s.integrate(DensityField::constant(g, 5.0), 1.0, {}, {.dt = 0.1, .halving_tolerance = 1e9}),
                    NumericalFault);
  }
  SUBCASE("halving test") {
    KineticSolver s(dsl::derive_vlasov(spec_of("bdlp")), g);
    CHECK_THROWS_AS(s.integrate(cosine(g, 1.0, 0.5), 1.0, {}, {.dt = 0.5}), NumericalFault);
  }
  SUBCASE("unresolved kernel") {
    const Grid coarse{1, 64.0, 16};
    CHECK_THROWS_AS(KineticSolver(dsl::derive_vlasov(spec_of("contact", coarse.box())), coarse), ConfigError);
  }
}

TEST_CASE("2D solve conserves hop mass") {
  const Grid g{2, 8.0, 64};
  KineticSolver s(dsl::derive_vlasov(spec_of("free_kawasaki", g.box())), g);
  const auto rho0 = DensityField::sample(g, [](const Point& p) { return 1.0 + 0.5 * std::cos(2 * kPi * p.x / 8.0) * std::sin(2 * kPi * p.y / 8.0); });
  const auto rep = s.integrate(rho0, 1.0, {}, {.dt = 1e-2});
  CHECK(std::abs(rep.masses.back() - rep.initial_mass) < 1e-10);
}
