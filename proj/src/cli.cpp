#include "vlasov/cli.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "vlasov/derive.hpp"
#include "vlasov/error.hpp"
#include "vlasov/estimator.hpp"
#include "vlasov/presets.hpp"
#include "vlasov/selftest.hpp"
#include "vlasov/solver.hpp"

namespace fs = std::filesystem;

namespace vlasov {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, x);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(x)) {
    throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  }
  return x;
}

long long to_integer(const std::string& key, const std::string& v, long long lo) {
  long long x = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, x);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
  if (x < lo) throw ConfigError("key '" + key + "' must be >= " + std::to_string(lo));
  return x;
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw ConfigError("key '" + key + "' is empty");
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& base_dir) {
  ExperimentConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  std::optional<fs::path> included;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (line.rfind("include", 0) == 0 && line.find('=') == std::string::npos) {
      const std::string path = trim(line.substr(7));
      if (path.empty()) throw ConfigError(where + "include needs a path");
      if (included) throw ConfigError(where + "only one include directive is allowed");
      included = fs::path(base_dir) / path;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      if (key == "model") c.model = val;
      else if (key == "dim") c.dim = static_cast<int>(to_integer(key, val, 1));
      else if (key == "L") c.L = to_double(key, val);
      else if (key == "grid") c.grid = static_cast<int>(to_integer(key, val, 1));
      else if (key == "eps") c.eps = to_list(key, val);
      else if (key == "t_end") c.t_end = to_double(key, val);
      else if (key == "times") c.times = to_list(key, val);
      else if (key == "dt") c.dt = to_double(key, val);
      else if (key == "replicas") c.replicas = static_cast<std::size_t>(to_integer(key, val, 1));
      else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_integer(key, val, 0));
      else if (key == "max_particles") c.max_particles = static_cast<std::size_t>(to_integer(key, val, 0));
      else if (key == "threads") c.threads = static_cast<unsigned>(to_integer(key, val, 1));
      else if (key == "rho0") c.rho0 = to_double(key, val);
      else if (key == "rho0_cos") c.rho0_cos = to_double(key, val);
      else if (key == "rho0_mode") c.rho0_mode = static_cast<int>(to_integer(key, val, 1));
      else if (key == "g2_bins") c.g2_bins = static_cast<std::size_t>(to_integer(key, val, 1));
      else if (key == "bootstrap") c.bootstrap = static_cast<std::size_t>(to_integer(key, val, 2));
      else if (key == "reference") c.reference = val;
      else if (key.rfind("param.", 0) == 0 && key.size() > 6) c.params[key.substr(6)] = to_double(key, val);
      else throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }

  if (included && !c.model.empty()) throw ConfigError("give either 'model' or an include directive, not both");
  if (included) {
    c.generator_text = read_file(*included);
    c.generator_origin = included->lexically_normal().string();
    c.model = included->stem().string();
  } else if (c.model.empty()) {
    throw ConfigError("config names no model");
  } else if (is_preset(c.model)) {
    c.generator_text = std::string(preset(c.model).dsl);
    c.generator_origin = "preset:" + c.model;
  } else {
    const fs::path p = fs::path(base_dir) / c.model;
    if (!fs::exists(p)) throw ConfigError("model '" + c.model + "' is neither a preset nor a readable file");
    c.generator_text = read_file(p);
    c.generator_origin = p.lexically_normal().string();
  }

  if (c.dim != 1 && c.dim != 2) throw ConfigError("dim must be 1 or 2");
  if (!(c.L > 0.0)) throw ConfigError("L must be positive");
  for (double e : c.eps) {
    if (!(e > 0.0) || e > 1.0) throw ConfigError("eps values must lie in (0, 1]");
  }
  if (!(c.t_end >= 0.0)) throw ConfigError("t_end must be nonnegative");
  if (!(c.dt > 0.0)) throw ConfigError("dt must be positive");
  for (std::size_t i = 0; i < c.times.size(); ++i) {
    if (c.times[i] < 0.0 || c.times[i] > c.t_end) throw ConfigError("times must lie in [0, t_end]");
    if (i && !(c.times[i] > c.times[i - 1])) throw ConfigError("times must be strictly increasing");
  }
  if (c.rho0 < 0.0 || std::abs(c.rho0_cos) > 1.0) throw ConfigError("rho0 must be >= 0 and |rho0_cos| <= 1");
  if (c.reference != "auto" && c.reference != "none") {
    bool known = false;
    for (auto m : kReferenceModels) known = known || m == c.reference;
    if (!known) throw ConfigError("unknown reference '" + c.reference + "'");
  }
  c.solver_grid().validate();
  c.generator();  // surfaces parse errors and unknown parameters before any work
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  const fs::path p(path);
  return parse(read_file(p), p.has_parent_path() ? p.parent_path().string() : std::string("."));
}

dsl::GeneratorSpec ExperimentConfig::generator() const {
  const fs::path origin(generator_origin);
  const std::string dir = generator_origin.rfind("preset:", 0) == 0 ? std::string(".")
                                                                      : origin.parent_path().string();
  dsl::GeneratorSpec spec = dsl::parse(generator_text, box(), dir.empty() ? "." : dir);
  for (const auto& [name, value] : params) spec.set_parameter(name, value);
  return spec;
}

DensityField ExperimentConfig::initial_field() const {
  const double k = 2.0 * std::numbers::pi * rho0_mode / L;
  const double a = rho0_cos, c = rho0;
  return DensityField::sample(solver_grid(), [=](const Point& p) { return c * (1.0 + a * std::cos(k * p.x)); });
}

InitialDensity ExperimentConfig::initial_density() const {
  if (homogeneous()) return rho0;
  return initial_field();
}

std::vector<double> ExperimentConfig::output_times() const {
  return times.empty() ? std::vector<double>{t_end} : times;
}

std::string ExperimentConfig::resolved_reference() const {
  if (reference == "none") return {};
  if (reference != "auto") return reference;
  if (model == "surgailis" || model == "contact" || model == "free_kawasaki") return model;
  if (model == "bdlp" && homogeneous()) return "bdlp_homogeneous";
  return {};
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json p = nlohmann::json::object();
  for (const auto& [k, v] : params) p[k] = v;
  return {{"model", model},          {"generator_origin", generator_origin},
          {"generator", generator_text}, {"dim", dim},
          {"L", L},                  {"grid", grid},
          {"eps", eps},              {"t_end", t_end},
          {"times", output_times()}, {"dt", dt},
          {"replicas", replicas},    {"seed", seed},
          {"max_particles", max_particles},
          {"rho0", rho0},            {"rho0_cos", rho0_cos},
          {"rho0_mode", rho0_mode},  {"g2_bins", g2_bins},
          {"bootstrap", bootstrap},  {"reference", reference},
          {"params", p}};
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::optional<fs::path> out_dir;
  unsigned threads = 1;
};

std::ofstream open_artifact(const Context& ctx, const std::string& name) {
  fs::create_directories(*ctx.out_dir);
  std::ofstream f(*ctx.out_dir / name, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + (*ctx.out_dir / name).string() + "'");
  return f;
}

void write_json(const Context& ctx, const std::string& name, const nlohmann::json& j) {
  auto f = open_artifact(ctx, name);
  f << j.dump(2) << '\n';
}

int cmd_derive(const Context& ctx, const std::optional<ExperimentConfig>& cfg, bool catalog) {
  int status = kExitOk;
  if (cfg) {
    const auto spec = cfg->generator();
    const auto report = dsl::analyze_scaling(spec);
    const FieldExpr eq = dsl::derive_vlasov(spec);
    ctx.out << "model: " << cfg->model << '\n';
    for (const auto& r : report.rules) ctx.out << "  scaling: " << r << '\n';
    ctx.out << "d rho/dt = " << eq.str() << '\n';
    ctx.out << eq.to_json().dump() << '\n';
    if (is_preset(cfg->model)) {
      const bool match = eq.str() == preset(cfg->model).equation;
      ctx.out << "catalog: " << (match ? "match" : "MISMATCH") << '\n';
      if (!match) status = kExitNumerical;
    }
    if (ctx.out_dir) {
      auto f = open_artifact(ctx, "equation.txt");
      f << eq.str() << '\n';
      write_json(ctx, "equation.json",
                 {{"model", cfg->model}, {"equation", eq.str()}, {"scaling", report.rules}, {"ast", eq.to_json()}});
    }
  }
  if (catalog) {
    const CheckResult r = check_catalog();
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : presets()) {
      std::string got;
      try {
        got = dsl::derive_vlasov(dsl::parse(std::string(p.dsl))).str();
      } catch (const Error& e) {
        got = std::string("error: ") + e.what();
      }
      const bool ok = got == p.equation;
      ctx.out << (ok ? "match    " : "MISMATCH ") << p.name << ": " << got << '\n';
      rows.push_back({{"model", p.name}, {"example", p.example}, {"equation", got}, {"match", ok}});
    }
    ctx.out << "catalog: " << (r.passed ? "all match" : r.detail) << '\n';
    if (ctx.out_dir) write_json(ctx, "catalog.json", rows);
    if (!r.passed) status = kExitNumerical;
  }
  return status;
}

SimPlan make_plan(const ExperimentConfig& cfg, double eps) {
  SimPlan p;
  p.spec = std::make_shared<const dsl::GeneratorSpec>(cfg.generator());
  p.eps = eps;
  p.box = cfg.box();
  p.rho0 = cfg.initial_density();
  p.t_end = cfg.t_end;
  p.snapshot_times = cfg.output_times();
  p.replicas = cfg.replicas;
  p.base_seed = cfg.seed;
  p.max_particles = cfg.max_particles;
  return p;
}

int cmd_simulate(const Context& ctx, const ExperimentConfig& cfg) {
  const double eps = cfg.eps.front();
  const SimPlan plan = make_plan(cfg, eps);
  const EnsembleResult res = run_ensemble(plan, ctx.threads);

  const auto spec = cfg.generator();
  const bool hop_only = spec.hop && !spec.death && !spec.birth;
  bool conserved = true;
  nlohmann::json reps = nlohmann::json::array();
  std::vector<double> mean(plan.snapshot_times.size(), 0.0);
  std::vector<std::size_t> used(plan.snapshot_times.size(), 0);
  for (const auto& r : res.replicas) {
    std::vector<std::size_t> counts;
    for (std::size_t k = 0; k < r.snapshots.size(); ++k) {
      counts.push_back(r.snapshots[k].points.size());
      if (!r.truncated) {
        mean[k] += static_cast<double>(counts.back());
        ++used[k];
      }
      if (k && counts[k] != counts[0]) conserved = false;
    }
    reps.push_back({{"replica", r.replica}, {"counts", counts}, {"truncated", r.truncated},
                    {"truncated_at", r.truncated ? nlohmann::json(r.truncated_at) : nlohmann::json(nullptr)},
                    {"events", r.events}, {"rejections", r.rejections}});
  }
  nlohmann::json density = nlohmann::json::array();
  for (std::size_t k = 0; k < mean.size(); ++k) {
    const double d = used[k] ? eps * mean[k] / (static_cast<double>(used[k]) * plan.box.volume()) : 0.0;
    density.push_back({{"t", plan.snapshot_times[k]}, {"renormalized_density", d}, {"replicas", used[k]}});
  }
  const nlohmann::json summary = {{"eps", eps},
                                  {"replicas", plan.replicas},
                                  {"particle_guard", plan.particle_guard()},
                                  {"explosion", res.any_truncated()},
                                  {"count_conserved", hop_only ? nlohmann::json(conserved) : nlohmann::json(nullptr)},
                                  {"mean_density", density},
                                  {"per_replica", reps}};

  for (const auto& d : density) {
    ctx.out << "t = " << d["t"].get<double>() << "  eps*N/V = " << d["renormalized_density"].get<double>() << '\n';
  }
  if (hop_only) ctx.out << "particle number conserved in every replica: " << (conserved ? "yes" : "NO") << '\n';
  if (res.any_truncated()) ctx.out << "EXPLOSION: particle guard " << plan.particle_guard() << " breached\n";

  if (ctx.out_dir) {
    nlohmann::json manifest = cfg.to_json();
    manifest["resolved_eps"] = eps;
    manifest["particle_guard"] = plan.particle_guard();
    write_json(ctx, "manifest.json", manifest);
    write_json(ctx, "summary.json", summary);
    auto f = open_artifact(ctx, "snapshots.jsonl");
    write_snapshots_jsonl(f, res);
  }
  if (res.any_truncated()) return kExitNumerical;
  if (hop_only && !conserved) return kExitNumerical;
  return kExitOk;
}

std::string time_tag(std::size_t i) { return std::to_string(i); }

int cmd_solve(const Context& ctx, const ExperimentConfig& cfg) {
  const auto spec = cfg.generator();
  const FieldExpr eq = dsl::derive_vlasov(spec);
  KineticSolver solver(eq, cfg.solver_grid());
  const DensityField rho0 = cfg.initial_field();
  SolveOptions o;
  o.dt = cfg.dt;
  const SolveReport rep = solver.integrate(rho0, cfg.t_end, cfg.output_times(), o);
  const std::string ref = cfg.resolved_reference();

  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    nlohmann::json row = {{"t", rep.times[i]}, {"mass", rep.masses[i]}, {"max", rep.fields[i].max()},
                          {"min", rep.fields[i].min()}};
    ctx.out << "t = " << rep.times[i] << "  mass = " << rep.masses[i];
    if (!ref.empty()) {
      const double e = sup_distance(rep.fields[i], reference_solution(ref, spec, rho0, rep.times[i]));
      row["reference"] = ref;
      row["max_error"] = e;
      ctx.out << "  max |rho - " << ref << "| = " << e;
    }
    ctx.out << '\n';
    rows.push_back(row);
    if (ctx.out_dir) {
      auto f = open_artifact(ctx, "field_" + time_tag(i) + ".csv");
      write_csv(f, rep.fields[i]);
      write_json(ctx, "field_" + time_tag(i) + ".json",
                 {{"model", cfg.model}, {"params", cfg.to_json()["params"]}, {"grid", grid_json(cfg.solver_grid())},
                  {"t", rep.times[i]}, {"equation", eq.str()}});
    }
  }
  ctx.out << "steps = " << rep.steps << "  max |v| = " << rep.max_rhs
          << "  mass change = " << std::abs(rep.masses.back() - rep.initial_mass) << '\n';
  if (ctx.out_dir) {
    write_json(ctx, "solve.json",
               {{"config", cfg.to_json()}, {"equation", eq.str()}, {"steps", rep.steps}, {"max_rhs", rep.max_rhs},
                {"halving_difference", rep.halving_difference}, {"initial_mass", rep.initial_mass},
                {"outputs", rows}});
  }
  return kExitOk;
}

int cmd_converge(const Context& ctx, const ExperimentConfig& cfg) {
  const auto spec = cfg.generator();
  KineticSolver solver(dsl::derive_vlasov(spec), cfg.solver_grid());
  SolveOptions o;
  o.dt = cfg.dt;
  const DensityField solution = solver.integrate(cfg.initial_field(), cfg.t_end, {cfg.t_end}, o).fields.back();

  SimPlan plan = make_plan(cfg, cfg.eps.front());
  SweepOptions so;
  so.bootstrap = cfg.bootstrap;
  so.g2.bins = cfg.g2_bins;
  so.threads = ctx.threads;
  const ConvergenceReport rep = convergence_sweep(cfg.model, cfg.eps, plan, solution, so);

  rep.write_csv(ctx.out);
  ctx.out << "l2 decreasing beyond 1 sigma: " << (rep.l2_decreasing() ? "yes" : "no") << '\n';
  if (rep.homogeneous) ctx.out << "sup|g2-1| decreasing beyond 1 sigma: " << (rep.g2_decreasing() ? "yes" : "no") << '\n';
  if (ctx.out_dir) {
    auto f = open_artifact(ctx, "convergence.csv");
    rep.write_csv(f);
    nlohmann::json j = rep.to_json();
    j["config"] = cfg.to_json();
    write_json(ctx, "convergence.json", j);
  }
  for (const auto& r : rep.rows) {
    if (r.truncated) return kExitNumerical;
  }
  return kExitOk;
}

int cmd_selftest(const Context& ctx) {
  const auto results = run_selftest();
  bool ok = true;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : results) {
    ctx.out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << " [" << r.seconds << " s]\n";
    ok = ok && r.passed;
    rows.push_back({{"name", r.name}, {"passed", r.passed}, {"worst", r.worst}, {"threshold", r.threshold},
                    {"detail", r.detail}});
  }
  if (ctx.out_dir) write_json(ctx, "selftest.json", rows);
  return ok ? kExitOk : kExitSelftest;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-field scaling toolkit for interacting particle generators", "vlasov"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  unsigned threads = 1;
  bool catalog = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "experiment config file");
    if (needs_config) opt->required();
    sub->add_option("--out", out_dir, "directory for artifacts");
    sub->add_option("--threads", threads, "worker threads (wall time only)")->check(CLI::PositiveNumber);
  };
  auto* derive = app.add_subcommand("derive", "print the mean-field equation of a generator");
  add_common(derive, false);
  derive->add_flag("--catalog", catalog, "compare every built-in model with its catalog equation");
  auto* simulate = app.add_subcommand("simulate", "run the scaled particle ensemble");
  add_common(simulate, true);
  auto* solve = app.add_subcommand("solve", "integrate the mean-field equation");
  add_common(solve, true);
  auto* converge = app.add_subcommand("converge", "eps sweep against the mean-field solution");
  add_common(converge, true);
  auto* selftest = app.add_subcommand("selftest", "run the oracle suites");
  add_common(selftest, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  Context ctx{out, err, std::nullopt, threads};
  if (!out_dir.empty()) ctx.out_dir = fs::path(out_dir);

  try {
    std::optional<ExperimentConfig> cfg;
    if (!config_path.empty()) {
      cfg = ExperimentConfig::load(config_path);
      if (threads == 1 && cfg->threads > 1) ctx.threads = cfg->threads;
    }
    if (derive->parsed()) {
      if (!cfg && !catalog) {
        err << "derive needs --config or --catalog\n";
        return kExitConfig;
      }
      return cmd_derive(ctx, cfg, catalog);
    }
    if (simulate->parsed()) return cmd_simulate(ctx, *cfg);
    if (solve->parsed()) return cmd_solve(ctx, *cfg);
    if (converge->parsed()) return cmd_converge(ctx, *cfg);
    if (selftest->parsed()) return cmd_selftest(ctx);
  } catch (const ParseError& e) {
    err << "error: " << config_path << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ScalingError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UnsupportedForm& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalFault& e) {
    err << "numerical fault: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace vlasov
