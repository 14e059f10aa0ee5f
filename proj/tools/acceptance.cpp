// One PASS/FAIL line per acceptance criterion. Tolerances live here and
// nowhere else; exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

#include "vlasov/cli.hpp"
#include "vlasov/derive.hpp"
#include "vlasov/error.hpp"
#include "vlasov/estimator.hpp"
#include "vlasov/presets.hpp"
#include "vlasov/selftest.hpp"
#include "vlasov/solver.hpp"

using namespace vlasov;
namespace fs = std::filesystem;

namespace tol {
constexpr double catalog_seconds = 1.0;
constexpr double transform_error = 1e-12;
constexpr double minlos_error = 1e-12;
constexpr double transform_seconds = 10.0;
constexpr double min_slope = 0.8;
constexpr double limit_seconds = 30.0;
constexpr double surgailis_abs = 1e-8;
constexpr double contact_sup = 1e-6;
constexpr double logistic_sup = 1e-6;
constexpr double kawasaki_relative_drift = 1e-10;
constexpr double glauber_sup = 1e-8;
constexpr double solver_seconds = 60.0;
constexpr double z_limit = 3.0;
constexpr double micro_seconds = 300.0;
constexpr double sweep_seconds = 1200.0;
}  // namespace tol

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int n, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << n << " " << name << ": " << o.detail << " ["
            << fmt(seconds_since(t0)) << " s]" << std::endl;
}

dsl::GeneratorSpec spec_of(std::string_view name, const Box& box) {
  return dsl::parse(std::string(preset(name).dsl), box);
}

Outcome catalog() {
  const CheckResult r = check_catalog();
  const bool pass = r.passed && r.seconds < tol::catalog_seconds;
  return {pass, r.detail};
}

Outcome transforms() {
  const CheckResult t = check_transforms(1, 100, 5, 10, tol::transform_error);
  const CheckResult m = check_minlos(2, 50, 8, tol::minlos_error);
  const bool pass = t.passed && m.passed && t.seconds + m.seconds < tol::transform_seconds;
  return {pass, "K/K^-1 " + fmt(t.worst) + ", Minlos " + fmt(m.worst)};
}

Outcome limits() {
  const CheckResult r = check_limits(3, tol::min_slope, 3, 4);
  return {r.passed && r.seconds < tol::limit_seconds, r.detail};
}

Outcome solver_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  const Grid g{1, 10.0, 256};
  const auto cosine = [&](double base, double amp) {
    return DensityField::sample(g, [=](const Point& p) {
      return base * (1.0 + amp * std::cos(2 * std::numbers::pi * p.x / g.side));
    });
  };
  std::ostringstream d;
  bool pass = true;
  auto check = [&](const std::string& label, double value, double limit) {
    d << label << " " << fmt(value) << " (<= " << fmt(limit) << "); ";
    pass = pass && value <= limit;
  };

  {
    const auto spec = spec_of("surgailis", g.box());
    KineticSolver s(dsl::derive_vlasov(spec), g);
    const auto rho0 = cosine(1.0, 0.5);
    const auto rep = s.integrate(rho0, 5.0, {}, {.dt = 1e-3});
    check("surgailis", sup_distance(rep.fields[0], reference_solution("surgailis", spec, rho0, 5.0)), tol::surgailis_abs);
  }
  {
    const auto spec = spec_of("contact", g.box());
    KineticSolver s(dsl::derive_vlasov(spec), g);
    const auto rho0 = cosine(1.0, 0.5);
    const auto rep = s.integrate(rho0, 2.0, {}, {.dt = 1e-3});
    check("contact", sup_distance(rep.fields[0], reference_solution("contact", spec, rho0, 2.0)), tol::contact_sup);
  }
  {
    const auto spec = spec_of("bdlp", g.box());
    KineticSolver s(dsl::derive_vlasov(spec), g);
    const auto rho0 = DensityField::constant(g, 0.2);
    const auto rep = s.integrate(rho0, 3.0, {}, {.dt = 1e-3});
    check("bdlp logistic", sup_distance(rep.fields[0], reference_solution("bdlp_homogeneous", spec, rho0, 3.0)),
          tol::logistic_sup);
  }
  {
    const auto spec = spec_of("free_kawasaki", g.box());
    KineticSolver s(dsl::derive_vlasov(spec), g);
    const auto rep = s.integrate(cosine(1.0, 0.8), 10.0, {}, {.dt = 1e-3});
    check("kawasaki drift", std::abs(rep.masses.back() - rep.initial_mass) / rep.initial_mass,
          tol::kawasaki_relative_drift);
  }
  {
    const auto spec = spec_of("glauber_plus", g.box());
    KineticSolver s(dsl::derive_vlasov(spec), g);
    const auto rep = s.integrate(DensityField::constant(g, 0.2), 40.0, {}, {.dt = 1e-3});
    const double star = glauber_fixed_point(spec.constant("z").value, torus_mass(Kernel::tophat(0.5), g.box()));
    check("glauber", sup_distance(rep.fields[0], DensityField::constant(g, star)), tol::glauber_sup);
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < tol::solver_seconds;
  return {pass, d.str()};
}

Outcome micro_macro() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream d;
  bool pass = true;

  {  // Surgailis, eps = 1: rho(t) = sigma + (rho0 - sigma) e^{-m t}
    SimPlan p;
    p.box = Box(1, 10.0);
    p.spec = std::make_shared<const dsl::GeneratorSpec>(spec_of("surgailis", p.box));
    p.eps = 1.0;
    p.rho0 = 1.0;
    p.t_end = 3.0;
    p.snapshot_times = {1.0, 3.0};
    p.replicas = 200;
    p.base_seed = 501;
    const auto res = run_ensemble(p);
    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> dens;
      for (const auto& s : res.at(k)) dens.push_back(static_cast<double>(s.size()) / p.box.volume());
      double m = 0, v = 0;
      for (double x : dens) m += x;
      m /= static_cast<double>(dens.size());
      for (double x : dens) v += (x - m) * (x - m);
      const double se = std::sqrt(v / static_cast<double>(dens.size() - 1) / static_cast<double>(dens.size()));
      const double t = p.snapshot_times[k];
      const double z = std::abs(m - (2.0 - std::exp(-t))) / se;
      d << "surgailis t=" << t << " z=" << fmt(z) << "; ";
      pass = pass && z <= tol::z_limit;
    }
  }
  {  // contact, homogeneous: E N(t) = N(0) e^{(lambda <a> - m) t}
    SimPlan p;
    p.box = Box(1, 10.0);
    p.spec = std::make_shared<const dsl::GeneratorSpec>(spec_of("contact", p.box));
    p.eps = 0.1;
    p.rho0 = 1.0;
    p.t_end = 2.0;
    p.snapshot_times = {0.0, 2.0};
    p.replicas = 200;
    p.base_seed = 502;
    const auto res = run_ensemble(p);
    const auto a = res.at(0), b = res.at(1);
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma += static_cast<double>(a[i].size());
      mb += static_cast<double>(b[i].size());
    }
    ma /= n;
    mb /= n;
    double vaa = 0, vbb = 0, vab = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double x = static_cast<double>(a[i].size()) - ma, y = static_cast<double>(b[i].size()) - mb;
      vaa += x * x;
      vbb += y * y;
      vab += x * y;
    }
    vaa /= n - 1;
    vbb /= n - 1;
    vab /= n - 1;
    // rate = log(mb / ma) / T, delta method on the paired means
    const double T = 2.0;
    const double rate = std::log(mb / ma) / T;
    const double var = (vbb / (mb * mb) + vaa / (ma * ma) - 2.0 * vab / (ma * mb)) / n / (T * T);
    const double expect = 0.5 * torus_mass(Kernel::gaussian(0.5), p.box) - 1.0;
    const double z = std::abs(rate - expect) / std::sqrt(var);
    d << "contact rate " << fmt(rate) << " vs " << fmt(expect) << " z=" << fmt(z) << "; ";
    pass = pass && z <= tol::z_limit;
  }
  pass = pass && seconds_since(t0) < tol::micro_seconds;
  return {pass, d.str()};
}

std::string sweep_rows(const ConvergenceReport& r, bool g2) {
  std::ostringstream s;
  for (const auto& row : r.rows) {
    s << " eps=" << fmt(row.eps) << ":"
      << (g2 ? fmt(row.sup_g2m1) + "+-" + fmt(row.g2_err) : fmt(row.l2_k1) + "+-" + fmt(row.l2_err));
  }
  return s.str();
}

Outcome convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> eps{1.0, 0.5, 0.25, 0.125};
  const Box box(1, 10.0);
  std::ostringstream d;
  bool pass = true;

  {  // BDLP with a cosine initial density
    const Grid g{1, 10.0, 64};
    const auto spec = spec_of("bdlp", box);
    const auto rho0 = DensityField::sample(
        g, [](const Point& p) { return 1.0 + 0.5 * std::cos(2 * std::numbers::pi * p.x / 10.0); });
    KineticSolver s(dsl::derive_vlasov(spec), g);
    const auto sol = s.integrate(rho0, 1.0, {}, {.dt = 1e-3}).fields[0];
    SimPlan p;
    p.box = box;
    p.spec = std::make_shared<const dsl::GeneratorSpec>(spec);
    p.rho0 = rho0;
    p.t_end = 1.0;
    p.replicas = 200;
    p.base_seed = 601;
    const auto rep = convergence_sweep("bdlp", eps, p, sol, {.bootstrap = 200});
    d << "bdlp L2" << sweep_rows(rep, false) << (rep.l2_decreasing() ? " decreasing" : " NOT decreasing") << "; ";
    pass = pass && rep.l2_decreasing();
  }
  {  // Glauber G+, homogeneous: pair correlation
    const Grid g{1, 10.0, 64};
    const auto spec = spec_of("glauber_plus", box);
    SimPlan p;
    p.box = box;
    p.spec = std::make_shared<const dsl::GeneratorSpec>(spec);
    p.rho0 = 0.2;
    p.t_end = 1.0;
    p.replicas = 200;
    p.base_seed = 602;
    KineticSolver s(dsl::derive_vlasov(spec), g);
    const auto sol = s.integrate(DensityField::constant(g, 0.2), 1.0, {}, {.dt = 1e-3}).fields[0];
    const auto rep = convergence_sweep("glauber_plus", eps, p, sol, {.bootstrap = 200});
    d << "glauber sup|g2-1|" << sweep_rows(rep, true) << (rep.g2_decreasing() ? " decreasing" : " NOT decreasing");
    pass = pass && rep.g2_decreasing();
  }
  pass = pass && seconds_since(t0) < tol::sweep_seconds;
  return {pass, d.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "vlasov_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream(root / "sim.cfg") << "model = bdlp\neps = 0.5\nt_end = 1\ntimes = 0.5, 1\nreplicas = 8\nseed = 7\n";
    std::ofstream(root / "solve.cfg") << "model = contact\nrho0_cos = 0.5\nt_end = 1\ntimes = 0.5, 1\n";
    std::ofstream(root / "conv.cfg") << "model = surgailis\neps = 1, 0.5\nreplicas = 20\ngrid = 16\nbootstrap = 20\n";
  }
  const std::vector<std::pair<std::string, std::string>> cmds{
      {"derive", "sim.cfg"}, {"simulate", "sim.cfg"}, {"solve", "solve.cfg"}, {"converge", "conv.cfg"}};
  std::size_t files = 0;
  std::string bad;
  for (const auto& [cmd, cfg] : cmds) {
    std::vector<fs::path> outs;
    for (const char* threads : {"1", "1", "2"}) {
      const fs::path out = root / (cmd + "_" + std::to_string(outs.size()));
      const std::string c = (root / cfg).string(), o = out.string();
      const char* argv[] = {"vlasov", cmd.c_str(), "--config", c.c_str(), "--out", o.c_str(), "--threads", threads};
      std::ostringstream so, se;
      if (run_cli(8, argv, so, se) != kExitOk) bad += cmd + " failed: " + se.str() + "; ";
      outs.push_back(out);
    }
    for (const auto& entry : fs::directory_iterator(outs[0])) {
      const auto name = entry.path().filename();
      const auto a = slurp(entry.path());
      ++files;
      for (std::size_t i = 1; i < outs.size(); ++i) {
        if (slurp(outs[i] / name) != a) bad += cmd + "/" + name.string() + " differs; ";
      }
    }
  }
  fs::remove_all(root);
  return {bad.empty() && files > 0,
          bad.empty() ? std::to_string(files) + " artifacts identical across 3 runs (threads 1, 1, 2)" : bad};
}

}  // namespace

int main() {
  criterion(1, "catalog", catalog);
  criterion(2, "transforms", transforms);
  criterion(3, "limits", limits);
  criterion(4, "solver", solver_checks);
  criterion(5, "micro-macro", micro_macro);
  criterion(6, "eps-convergence", convergence);
  criterion(7, "determinism", determinism);
  return failures;
}
