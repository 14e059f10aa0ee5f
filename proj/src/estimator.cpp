#include "vlasov/estimator.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include "vlasov/error.hpp"

namespace vlasov {

double K1Estimate::noise_floor() const {
  double s = 0.0;
  for (double e : stderr_) s += e * e;
  return std::sqrt(s * field.grid().cell_volume());
}

namespace {

std::vector<double> histogram(std::span<const Point> pts, const Grid& g, double scale) {
  std::vector<double> h(g.size(), 0.0);
  for (const auto& p : pts) h[g.cell_of(p)] += scale;
  return h;
}

}  // namespace

K1Estimate empirical_k1(const SnapshotSet& snapshots, double eps, const Grid& grid) {
  if (snapshots.empty()) throw Error("empirical_k1: empty ensemble");
  if (snapshots.size() < 2) throw ConfigError("empirical_k1 needs at least 2 replicas");
  const std::size_t n = grid.size();
  const double scale = eps / grid.cell_volume();
  std::vector<double> sum(n, 0.0), sq(n, 0.0);
  for (const auto& s : snapshots) {
    const auto h = histogram(s, grid, scale);
    for (std::size_t j = 0; j < n; ++j) {
      sum[j] += h[j];
      sq[j] += h[j] * h[j];
    }
  }
  const auto r = static_cast<double>(snapshots.size());
  K1Estimate out;
  out.replicas = snapshots.size();
  std::vector<double> mean(n);
  out.stderr_.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    mean[j] = sum[j] / r;
    const double var = std::max(0.0, (sq[j] - r * mean[j] * mean[j]) / (r - 1.0));
    out.stderr_[j] = std::sqrt(var / r);
  }
  out.field = DensityField(grid, std::move(mean));
  return out;
}

double CorrelationEstimate::sup_deviation() const {
  double s = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t b = 0; b < values.size(); ++b) {
    if (flagged[b]) continue;
    const double d = std::abs(values[b] - 1.0);
    s = std::isnan(s) ? d : std::max(s, d);
  }
  return s;
}

namespace {

struct PairTable {
  std::vector<std::vector<double>> a;  // observed pairs per snapshot and bin
  std::vector<std::vector<double>> b;  // ideal-gas expectation per snapshot and bin
  std::vector<double> centers;
};

PairTable pair_table(const SnapshotSet& snapshots, const Box& box, std::size_t bins) {
  if (bins == 0) throw ConfigError("g2 needs at least one bin");
  const double rmax = 0.5 * box.side();
  const double w = rmax / static_cast<double>(bins);
  std::vector<double> prob(bins);
  PairTable t;
  for (std::size_t k = 0; k < bins; ++k) {
    const double r0 = w * static_cast<double>(k), r1 = r0 + w;
    t.centers.push_back(0.5 * (r0 + r1));
    prob[k] = box.dim() == 1 ? 2.0 * (r1 - r0) / box.side()
                             : std::numbers::pi * (r1 * r1 - r0 * r0) / box.volume();
  }
  for (const auto& s : snapshots) {
    std::vector<double> a(bins, 0.0), b(bins);
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        const double r = box.distance(s[i], s[j]);
        if (r <= 0.0 || r > rmax) continue;
        const auto k = std::min(bins - 1, static_cast<std::size_t>(std::ceil(r / w)) - 1);
        a[k] += 1.0;
      }
    }
    const double n = static_cast<double>(s.size());
    for (std::size_t k = 0; k < bins; ++k) b[k] = 0.5 * n * (n - 1.0) * prob[k];
    t.a.push_back(std::move(a));
    t.b.push_back(std::move(b));
  }
  return t;
}

// Ratio estimate sum(a) / sum(b) over the selected snapshots for every bin.
std::vector<double> ratio(const PairTable& t, std::span<const std::size_t> idx) {
  const std::size_t bins = t.centers.size();
  std::vector<double> sa(bins, 0.0), sb(bins, 0.0);
  for (std::size_t i : idx) {
    for (std::size_t k = 0; k < bins; ++k) {
      sa[k] += t.a[i][k];
      sb[k] += t.b[i][k];
    }
  }
  std::vector<double> g(bins);
  for (std::size_t k = 0; k < bins; ++k) g[k] = sb[k] > 0.0 ? sa[k] / sb[k] : std::numeric_limits<double>::quiet_NaN();
  return g;
}

CorrelationEstimate estimate(const PairTable& t, std::span<const std::size_t> idx, const G2Options& opts) {
  CorrelationEstimate e;
  const std::size_t bins = t.centers.size();
  e.centers = t.centers;
  e.values = ratio(t, idx);
  e.stderr_.assign(bins, std::numeric_limits<double>::quiet_NaN());
  e.pairs.assign(bins, 0);
  e.flagged.assign(bins, false);
  const auto n = static_cast<double>(idx.size());
  for (std::size_t k = 0; k < bins; ++k) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t i : idx) {
      sa += t.a[i][k];
      sb += t.b[i][k];
    }
    e.pairs[k] = static_cast<std::size_t>(sa);
    e.flagged[k] = e.pairs[k] < opts.min_pairs || !(sb > 0.0);
    if (idx.size() >= 2 && sb > 0.0) {
      double ss = 0.0;
      for (std::size_t i : idx) {
        const double r = t.a[i][k] - e.values[k] * t.b[i][k];
        ss += r * r;
      }
      e.stderr_[k] = std::sqrt(ss / (n * (n - 1.0))) / (sb / n);
    }
  }
  return e;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

CorrelationEstimate empirical_g2(const SnapshotSet& snapshots, double eps, const Box& box,
                                 const G2Options& opts) {
  if (snapshots.empty()) throw Error("empirical_g2: empty ensemble");
  const PairTable t = pair_table(snapshots, box, opts.bins);
  const auto idx = iota(snapshots.size());
  CorrelationEstimate e = estimate(t, idx, opts);
  double total = 0.0;
  for (const auto& s : snapshots) total += static_cast<double>(s.size());
  e.mean_density = eps * total / (static_cast<double>(snapshots.size()) * box.volume());
  e.snapshots = snapshots.size();
  return e;
}

double bootstrap_stddev(std::size_t n, std::size_t resamples, std::uint64_t seed,
                        const std::function<double(std::span<const std::size_t>)>& stat) {
  if (n == 0 || resamples < 2) return std::numeric_limits<double>::quiet_NaN();
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  double sum = 0.0, sq = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < resamples; ++b) {
    for (auto& i : idx) i = pick(rng);
    const double v = stat(idx);
    if (std::isnan(v)) continue;
    sum += v;
    sq += v * v;
    ++used;
  }
  if (used < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = sum / static_cast<double>(used);
  return std::sqrt(std::max(0.0, (sq - static_cast<double>(used) * m * m) / static_cast<double>(used - 1)));
}

bool ConvergenceReport::l2_decreasing() const {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double drop = rows[i - 1].l2_k1 - rows[i].l2_k1;
    if (!(drop > std::hypot(rows[i - 1].l2_err, rows[i].l2_err))) return false;
  }
  return rows.size() >= 2;
}

bool ConvergenceReport::g2_decreasing() const {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double drop = rows[i - 1].sup_g2m1 - rows[i].sup_g2m1;
    if (!(drop > std::hypot(rows[i - 1].g2_err, rows[i].g2_err))) return false;
  }
  return rows.size() >= 2;
}

void ConvergenceReport::write_csv(std::ostream& out) const {
  out << "eps,l2_k1,l2_err,sup_g2m1,g2_err,replicas,truncated,noise_floor\n";
  for (const auto& r : rows) {
    out << format_number(r.eps) << ',' << format_number(r.l2_k1) << ',' << format_number(r.l2_err) << ','
        << format_number(r.sup_g2m1) << ',' << format_number(r.g2_err) << ',' << r.replicas << ','
        << r.truncated << ',' << format_number(r.noise_floor) << '\n';
  }
}

nlohmann::json ConvergenceReport::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"eps", r.eps}, {"l2_k1", num(r.l2_k1)}, {"l2_err", num(r.l2_err)},
                  {"sup_g2m1", num(r.sup_g2m1)}, {"g2_err", num(r.g2_err)}, {"replicas", r.replicas},
                  {"truncated", r.truncated}, {"noise_floor", num(r.noise_floor)}});
  }
  return {{"model", model}, {"t", t}, {"homogeneous", homogeneous}, {"rows", std::move(rs)},
          {"l2_decreasing", l2_decreasing()}, {"g2_decreasing", homogeneous && g2_decreasing()}};
}

ConvergenceReport convergence_sweep(const std::string& model, const std::vector<double>& eps_list,
                                    const SimPlan& plan, const DensityField& solution,
                                    const SweepOptions& opts) {
  if (eps_list.empty()) throw ConfigError("eps list is empty");
  for (std::size_t i = 1; i < eps_list.size(); ++i) {
    if (!(eps_list[i] < eps_list[i - 1])) throw ConfigError("eps values must be strictly decreasing");
  }
  if (!(solution.grid().box() == plan.box)) throw ConfigError("solver grid does not match the simulation box");

  ConvergenceReport rep;
  rep.model = model;
  rep.t = plan.t_end;
  rep.homogeneous = std::holds_alternative<double>(plan.rho0);

  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    SimPlan p = plan;
    p.eps = eps_list[e];
    p.snapshot_times = {plan.t_end};
    const EnsembleResult ens = run_ensemble(p, opts.threads);
    const SnapshotSet snaps = ens.at(0);

    ConvergenceRow row;
    row.eps = p.eps;
    row.replicas = snaps.size();
    row.truncated = plan.replicas - snaps.size();
    if (snaps.size() < 2) {
      row.l2_k1 = row.l2_err = row.sup_g2m1 = row.g2_err = row.noise_floor =
          std::numeric_limits<double>::quiet_NaN();
      rep.rows.push_back(row);
      continue;
    }
    const K1Estimate k1 = empirical_k1(snaps, p.eps, solution.grid());
    row.l2_k1 = l2_distance(k1.field, solution);
    row.noise_floor = k1.noise_floor();
    const std::uint64_t seed = plan.base_seed ^ (0x9e3779b97f4a7c15ULL * (e + 1));
    row.l2_err = bootstrap_stddev(snaps.size(), opts.bootstrap, seed, [&](std::span<const std::size_t> idx) {
      SnapshotSet sub;
      for (std::size_t i : idx) sub.push_back(snaps[i]);
      return l2_distance(empirical_k1(sub, p.eps, solution.grid()).field, solution);
    });

    if (rep.homogeneous) {
      const PairTable table = pair_table(snaps, p.box, opts.g2.bins);
      const auto all = iota(snaps.size());
      row.sup_g2m1 = estimate(table, all, opts.g2).sup_deviation();
      row.g2_err = bootstrap_stddev(snaps.size(), opts.bootstrap, seed + 1, [&](std::span<const std::size_t> idx) {
        return estimate(table, idx, opts.g2).sup_deviation();
      });
    } else {
      row.sup_g2m1 = row.g2_err = std::numeric_limits<double>::quiet_NaN();
    }
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace vlasov
