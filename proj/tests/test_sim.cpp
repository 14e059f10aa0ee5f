#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "vlasov/error.hpp"
#include "vlasov/presets.hpp"
#include "vlasov/sim.hpp"
#include "vlasov/solver.hpp"

using namespace vlasov;

namespace {

dsl::GeneratorSpec spec_of(std::string_view name, const Box& box) {
  return dsl::parse(std::string(preset(name).dsl), box);
}

double min_image(double a, double b, double L) {
  double d = std::fmod(std::abs(a - b), L);
  return std::min(d, L - d);
}

struct Moments {
  double mean = 0, var = 0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

// mean of particle counts at snapshot k over the ensemble
std::vector<double> counts_at(const EnsembleResult& r, std::size_t k) {
  std::vector<double> out;
  for (const auto& rep : r.replicas) out.push_back(static_cast<double>(rep.snapshots.at(k).points.size()));
  return out;
}

SimPlan plan_for(std::string_view name, double eps, double L, double rho0, double t, std::size_t replicas,
                 std::uint64_t seed) {
  SimPlan p;
  p.box = Box(1, L);
  p.spec = std::make_shared<const dsl::GeneratorSpec>(spec_of(name, p.box));
  p.eps = eps;
  p.rho0 = rho0;
  p.t_end = t;
  p.snapshot_times = {t};
  p.replicas = replicas;
  p.base_seed = seed;
  return p;
}

}  // namespace

TEST_CASE("Poisson initial configuration: count moments") {
  const Box box(1, 10.0);
  Rng rng(7);
  std::vector<double> n;
  for (int i = 0; i < 4000; ++i) n.push_back(static_cast<double>(sample_poisson_initial(2.0, 0.5, box, rng).size()));
  const auto m = moments(n);
  // N ~ Poisson(40)
  CHECK(std::abs(m.mean - 40.0) < 4.0 * std::sqrt(40.0 / 4000.0));
  CHECK(m.var == doctest::Approx(40.0).epsilon(0.1));
}

TEST_CASE("Poisson initial configuration: cosine profile passes a KS test") {
  const double L = 10.0, a = 0.6;
  const Grid g{1, L, 256};
  const auto field = DensityField::sample(g, [&](const Point& p) { return 1.0 + a * std::cos(2 * std::numbers::pi * p.x / L); });
  Rng rng(11);
  std::vector<double> xs;
  while (xs.size() < 20000) {
    for (const auto& p : sample_poisson_initial(field, 0.01, g.box(), rng)) xs.push_back(p.x);
  }
  std::sort(xs.begin(), xs.end());
  // analytic CDF of 1 + a cos(2 pi x / L) on [0, L)
  auto cdf = [&](double x) { return (x + a * L / (2 * std::numbers::pi) * std::sin(2 * std::numbers::pi * x / L)) / L; };
  double D = 0.0;
  const auto n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = cdf(xs[i]);
    D = std::max({D, std::abs(F - i / n), std::abs(F - (i + 1) / n)});
  }
  // 1.63 / sqrt(n) is the 1% critical value
  CHECK(D < 1.63 / std::sqrt(n));
}

TEST_CASE("rate totals agree with direct sums") {
  const Box box(1, 10.0);
  const double eps = 0.5;
  const auto spec = spec_of("bdlp", box);
  Rng init(3);
  auto pts = sample_poisson_initial(1.0, eps, box, init);
  REQUIRE(pts.size() > 5);
  Simulation sim(spec, eps, pts, Rng(4));
  const auto tr = sim.total_rates();

  const Kernel aminus = Kernel::tophat(1.0);
  double death = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    death += 0.5;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i != j) death += eps * aminus.value(min_image(pts[i].x, pts[j].x, 10.0), 1);
    }
  }
  CHECK(tr.death == doctest::Approx(death).epsilon(1e-12));
  // lambda/eps * sum_j int eps aplus = lambda * mass * N
  const double birth = 1.5 * torus_mass(Kernel::gaussian(1.0), box) * static_cast<double>(pts.size());
  CHECK(tr.birth == doctest::Approx(birth).epsilon(1e-12));
  CHECK_FALSE(tr.birth_is_bound);
}

TEST_CASE("Surgailis counts follow the immigration-death law") {
  // N(t) ~ Poisson(N0 e^-t + sigma L / eps (1 - e^-t)) when N0 is Poisson
  for (double eps : {1.0, 0.25}) {
    const auto res = run_ensemble(plan_for("surgailis", eps, 10.0, 1.0, 1.0, 400, 21));
    const double lam = (10.0 * std::exp(-1.0) + 20.0 * (1.0 - std::exp(-1.0))) / eps;
    const auto m = moments(counts_at(res, 0));
    CHECK(std::abs(m.mean - lam) < 4.0 * std::sqrt(lam / 400.0));
    CHECK(m.var == doctest::Approx(lam).epsilon(0.2));
  }
}

TEST_CASE("contact counts decay at lambda mass - m") {
  const auto res = run_ensemble(plan_for("contact", 1.0, 10.0, 2.0, 1.0, 400, 5));
  const double mass = torus_mass(Kernel::gaussian(0.5), Box(1, 10.0));
  const double expect = 20.0 * std::exp((0.5 * mass - 1.0) * 1.0);
  const auto m = moments(counts_at(res, 0));
  CHECK(std::abs(m.mean - expect) < 4.0 * std::sqrt(m.var / 400.0));
}

TEST_CASE("Glauber G+ with phi = 0 matches Surgailis and never rejects") {
  const Box box(1, 10.0);
  auto g = spec_of("glauber_plus", box);
  g.set_parameter("phi", 0.0);
  SimPlan p = plan_for("surgailis", 0.5, 10.0, 1.0, 1.0, 300, 9);
  p.spec = std::make_shared<const dsl::GeneratorSpec>(g);
  const auto res = run_ensemble(p);
  for (const auto& r : res.replicas) CHECK(r.rejections == 0);
  // z = 1, m = 1: mean (10 e^-1 + 10 (1 - e^-1)) / eps = 20
  const auto m = moments(counts_at(res, 0));
  CHECK(std::abs(m.mean - 20.0) < 4.0 * std::sqrt(20.0 / 300.0));
}

TEST_CASE("Glauber G+ thins against an exact bound") {
  const Box box(1, 10.0);
  Rng init(2);
  Simulation sim(spec_of("glauber_plus", box), 0.5, sample_poisson_initial(1.0, 0.5, box, init), Rng(3));
  CHECK(sim.total_rates().birth_is_bound);
  std::size_t births = 0;
  while (sim.time() < 2.0) {
    const auto e = sim.step(2.0);
    if (e.kind == EventRecord::Kind::birth) ++births;
    if (e.kind == EventRecord::Kind::none && !e.rejected) break;
  }
  CHECK(births > 0);
  CHECK(sim.rejections() > 0);
}

TEST_CASE("hop-only models conserve the particle number") {
  for (std::string_view name : {"free_kawasaki", "kawasaki_dd_departure", "kawasaki_dd_arrival", "gibbs_kawasaki"}) {
    CAPTURE(name);
    SimPlan p = plan_for(name, 0.5, 10.0, 1.0, 2.0, 10, 13);
    p.snapshot_times = {0.0, 1.0, 2.0};
    const auto res = run_ensemble(p);
    for (const auto& r : res.replicas) {
      CHECK(r.events > 0);
      CHECK(r.snapshots[0].points.size() == r.snapshots[2].points.size());
      CHECK(r.snapshots[0].points.size() == r.snapshots[1].points.size());
    }
  }
}

TEST_CASE("free Kawasaki: displacement variance is t * mass * sigma^2") {
  const Box box(1, 10.0);
  std::vector<double> disp;
  for (std::size_t r = 0; r < 3000; ++r) {
    Simulation sim(spec_of("free_kawasaki", box), 1.0, {Point{5.0, 0.0}}, replica_rng(17, r));
    while (sim.step(1.0).kind != EventRecord::Kind::none) {
    }
    double d = sim.points()[0].x - 5.0;
    d -= 10.0 * std::round(d / 10.0);
    disp.push_back(d);
  }
  const auto m = moments(disp);
  const double expect = torus_mass(Kernel::gaussian(0.5), box) * 0.25;
  CHECK(std::abs(m.mean) < 4.0 * std::sqrt(expect / 3000.0));
  CHECK(m.var == doctest::Approx(expect).epsilon(0.08));
}

TEST_CASE("step stops at the horizon") {
  const Box box(1, 10.0);
  Simulation sim(spec_of("surgailis", box), 1.0, {}, Rng(1));
  const auto e = sim.step(1e-9);
  if (e.kind == EventRecord::Kind::none) CHECK(sim.time() == 1e-9);
  CHECK(sim.time() <= 1e-9);
}

TEST_CASE("ensembles are reproducible and independent of the thread count") {
  SimPlan p = plan_for("bdlp", 0.5, 10.0, 1.0, 1.0, 6, 99);
  p.snapshot_times = {0.5, 1.0};
  std::ostringstream a, b, c;
  write_snapshots_jsonl(a, run_ensemble(p, 1));
  write_snapshots_jsonl(b, run_ensemble(p, 1));
  write_snapshots_jsonl(c, run_ensemble(p, 3));
  CHECK(a.str() == b.str());
  CHECK(a.str() == c.str());
  p.base_seed = 100;
  std::ostringstream d;
  write_snapshots_jsonl(d, run_ensemble(p, 1));
  CHECK(a.str() != d.str());
}

TEST_CASE("replica streams depend only on (seed, index)") {
  Rng a = replica_rng(5, 3), b = replica_rng(5, 3), c = replica_rng(5, 4), d = replica_rng(6, 3);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
}

TEST_CASE("particle guard truncates explosive replicas") {
  SimPlan p = plan_for("contact", 1.0, 10.0, 1.0, 50.0, 3, 1);
  auto s = spec_of("contact", p.box);
  s.set_parameter("lambda", 5.0);
  p.spec = std::make_shared<const dsl::GeneratorSpec>(s);
  p.max_particles = 200;
  CHECK(p.particle_guard() == 200);
  const auto res = run_ensemble(p);
  CHECK(res.any_truncated());
  for (const auto& r : res.replicas) {
    if (!r.truncated) continue;
    CHECK(r.truncated_at < 50.0);
    CHECK(r.snapshots.empty());
  }
  CHECK(res.at(0).size() < 3);
}

TEST_CASE("default particle guard") {
  SimPlan p = plan_for("surgailis", 0.01, 10.0, 1.0, 1.0, 1, 1);
  CHECK(p.particle_guard() == 10000);
  p.eps = 1.0;
  CHECK(p.particle_guard() == 1000);
}

TEST_CASE("plan validation") {
  SimPlan p = plan_for("surgailis", 1.0, 10.0, 1.0, 1.0, 1, 1);
  p.eps = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.eps = 1e-6;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.eps = 0.5;
  p.snapshot_times = {0.8, 0.4};
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.snapshot_times = {2.0};
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("Dieckmann-Law without competition explodes before t = 5") {
  SimPlan p = plan_for("dieckmann_law", 1.0, 10.0, 1.0, 5.0, 4, 8);
  auto s = spec_of("dieckmann_law", p.box);
  s.set_parameter("aminus", 0.0);
  p.spec = std::make_shared<const dsl::GeneratorSpec>(s);
  p.max_particles = 300;  // dense pair births get slow near the default guard
  const auto res = run_ensemble(p);
  for (const auto& r : res.replicas) {
    CHECK(r.truncated);
    CHECK(r.truncated_at <= 5.0);
  }
}
