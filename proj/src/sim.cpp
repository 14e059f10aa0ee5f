#include "vlasov/sim.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

#include "vlasov/error.hpp"

namespace vlasov {

using dsl::Binding;
using dsl::Env;
using dsl::GeneratorSpec;
using dsl::Node;

double initial_mass(const InitialDensity& rho0, const Box& box) {
  if (const double* c = std::get_if<double>(&rho0)) return *c * box.volume();
  return std::get<DensityField>(rho0).integral();
}

namespace {

// Inverse CDF of the periodic piecewise-linear interpolant through the nodes.
double sample_linear_1d(const DensityField& f, Rng& rng) {
  const Grid& g = f.grid();
  const double h = g.spacing();
  const auto n = static_cast<std::size_t>(g.n);
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) cum[j + 1] = cum[j] + 0.5 * h * (f[j] + f[(j + 1) % n]);
  std::uniform_real_distribution<double> u(0.0, cum.back());
  const double target = u(rng);
  std::size_t j = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), target) - cum.begin());
  j = std::clamp<std::size_t>(j, 1, n) - 1;
  const double a = f[j], b = f[(j + 1) % n];
  const double rem = target - cum[j];
  // solve a*s + (b - a) s^2 / (2h) = rem for s in [0, h]
  double s;
  const double q = (b - a) / (2.0 * h);
  if (std::abs(q) < 1e-14 * std::max(1.0, std::abs(a))) {
    s = a > 0.0 ? rem / a : 0.0;
  } else {
    const double disc = std::max(0.0, a * a + 4.0 * q * rem);
    s = 2.0 * rem / (a + std::sqrt(disc));
  }
  return static_cast<double>(j) * h + std::clamp(s, 0.0, h);
}

}  // namespace

std::vector<Point> sample_poisson_initial(const InitialDensity& rho0, double eps, const Box& box, Rng& rng) {
  if (!(eps > 0.0) || eps > 1.0) throw ConfigError("eps must lie in (0, 1]");
  const double mass = initial_mass(rho0, box);
  if (const auto* f = std::get_if<DensityField>(&rho0)) {
    if (f->min() < 0.0) throw ConfigError("initial density must be nonnegative");
    if (!(f->grid().box() == box)) throw ConfigError("initial density grid does not match the box");
  } else if (std::get<double>(rho0) < 0.0) {
    throw ConfigError("initial density must be nonnegative");
  }
  const double mean = mass / eps;
  if (mean > kMaxExpectedInitial) {
    throw ConfigError("expected initial particle count " + format_number(mean) + " exceeds the guard of 1e6");
  }
  std::vector<Point> pts;
  if (mean <= 0.0) return pts;
  std::poisson_distribution<long> count(mean);
  const long n = count(rng);
  pts.reserve(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> u(0.0, box.side());
  const auto* field = std::get_if<DensityField>(&rho0);
  const double top = field ? field->max() : 0.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (long i = 0; i < n; ++i) {
    Point p;
    if (!field) {
      p.x = u(rng);
      if (box.dim() == 2) p.y = u(rng);
    } else if (box.dim() == 1) {
      p.x = sample_linear_1d(*field, rng);
    } else {
      do {
        p = {u(rng), u(rng)};
      } while (unit(rng) * top > field->at(p));
    }
    pts.push_back(box.wrap(p));
  }
  return pts;
}

Rng replica_rng(std::uint64_t base_seed, std::size_t replica) {
  std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                    static_cast<std::uint32_t>(replica), static_cast<std::uint32_t>(replica >> 32)};
  return Rng(seq);
}

namespace {

// Binary tree of partial sums over per-particle weights. Inner nodes are
// recomputed from their children, so totals never drift.
class SumTree {
 public:
  std::size_t size() const noexcept { return size_; }
  double total() const noexcept { return cap_ ? tree_[1] : 0.0; }
  double get(std::size_t i) const { return tree_[cap_ + i]; }

  void push(double w) {
    if (size_ == cap_) grow();
    set(size_++, w);
  }
  void pop() {
    set(--size_, 0.0);
  }
  void set(std::size_t i, double w) {
    std::size_t k = cap_ + i;
    tree_[k] = w;
    for (k /= 2; k >= 1; k /= 2) tree_[k] = tree_[2 * k] + tree_[2 * k + 1];
  }
  /// Index whose cumulative interval contains u, 0 <= u < total().
  std::size_t find(double u) const {
    std::size_t k = 1;
    while (k < cap_) {
      const double left = tree_[2 * k];
      if ((u < left && left > 0.0) || tree_[2 * k + 1] <= 0.0) {
        k = 2 * k;
      } else {
        u -= left;
        k = 2 * k + 1;
      }
    }
    return std::min(k - cap_, size_ - 1);
  }

 private:
  void grow() {
    const std::size_t cap = cap_ ? 2 * cap_ : 16;
    std::vector<double> t(2 * cap, 0.0);
    for (std::size_t i = 0; i < size_; ++i) t[cap + i] = tree_[cap_ + i];
    for (std::size_t k = cap - 1; k >= 1; --k) t[k] = t[2 * k] + t[2 * k + 1];
    tree_ = std::move(t);
    cap_ = cap;
  }

  std::vector<double> tree_;
  std::size_t cap_ = 0;
  std::size_t size_ = 0;
};

// Points with a uniform cell list for neighbour queries.
class ParticleStore final : public dsl::PointSet {
 public:
  ParticleStore(const Box& box, double cell_min) : box_(box) {
    nc_ = cell_min > 0.0 ? std::max(1, static_cast<int>(std::floor(box.side() / cell_min))) : 1;
    cell_ = box.side() / nc_;
    cells_.resize(box.dim() == 1 ? static_cast<std::size_t>(nc_) : static_cast<std::size_t>(nc_) * static_cast<std::size_t>(nc_));
  }

  std::size_t size() const override { return pts_.size(); }
  const Point& point(std::size_t i) const override { return pts_[i]; }
  std::span<const Point> points() const { return pts_; }

  void for_each_near(const Point& p, double radius,
                     const std::function<void(std::size_t)>& visit) const override {
    const int k = static_cast<int>(std::ceil(radius / cell_));
    if (2 * k + 1 >= nc_) {
      for (std::size_t i = 0; i < pts_.size(); ++i) visit(i);
      return;
    }
    const int cx = coord(p.x);
    if (box_.dim() == 1) {
      for (int dx = -k; dx <= k; ++dx) {
        for (std::uint32_t i : cells_[static_cast<std::size_t>(wrap(cx + dx))]) visit(i);
      }
      return;
    }
    const int cy = coord(p.y);
    for (int dy = -k; dy <= k; ++dy) {
      for (int dx = -k; dx <= k; ++dx) {
        for (std::uint32_t i : cells_[flat(wrap(cx + dx), wrap(cy + dy))]) visit(i);
      }
    }
  }

  std::size_t add(const Point& p) {
    const std::size_t i = pts_.size();
    pts_.push_back(p);
    cells_[cell_of(p)].push_back(static_cast<std::uint32_t>(i));
    return i;
  }

  /// Removes point i; the last point takes its index.
  void remove(std::size_t i) {
    erase_from_cell(i);
    const std::size_t last = pts_.size() - 1;
    if (i != last) {
      auto& c = cells_[cell_of(pts_[last])];
      *std::find(c.begin(), c.end(), static_cast<std::uint32_t>(last)) = static_cast<std::uint32_t>(i);
      pts_[i] = pts_[last];
    }
    pts_.pop_back();
  }

 private:
  int coord(double c) const { return std::clamp(static_cast<int>(c / cell_), 0, nc_ - 1); }
  int wrap(int c) const { return ((c % nc_) + nc_) % nc_; }
  std::size_t flat(int cx, int cy) const {
    return static_cast<std::size_t>(cy) * static_cast<std::size_t>(nc_) + static_cast<std::size_t>(cx);
  }
  std::size_t cell_of(const Point& p) const {
    return box_.dim() == 1 ? static_cast<std::size_t>(coord(p.x)) : flat(coord(p.x), coord(p.y));
  }
  void erase_from_cell(std::size_t i) {
    auto& c = cells_[cell_of(pts_[i])];
    auto it = std::find(c.begin(), c.end(), static_cast<std::uint32_t>(i));
    *it = c.back();
    c.pop_back();
  }

  Box box_;
  int nc_ = 1;
  double cell_ = 1.0;
  std::vector<Point> pts_;
  std::vector<std::vector<std::uint32_t>> cells_;
};

void collect_kernel_refs(const Node& n, std::set<int>& refs, std::set<int>& bound) {
  if (n.kind == Node::Kind::kernel) {
    refs.insert(n.from);
    refs.insert(n.to);
  }
  if (n.kind == Node::Kind::sum) bound.insert(n.bound);
  for (const auto& c : n.children) collect_kernel_refs(c, refs, bound);
}

// Slots a node reaches through kernels, ignoring sum exclusions.
std::set<int> kernel_refs(const Node& n) {
  std::set<int> refs, bound, out;
  collect_kernel_refs(n, refs, bound);
  for (int r : refs) {
    if (!bound.contains(r)) out.insert(r);
  }
  return out;
}

bool is_scalar(const Node& n) {
  return n.kind == Node::Kind::number || n.kind == Node::Kind::constant || n.kind == Node::Kind::inveps;
}

bool jump_kernel(const Node& n, int a, int b) {
  return n.kind == Node::Kind::kernel && ((n.from == a && n.to == b) || (n.from == b && n.to == a));
}

struct ParentChannel {
  dsl::PartKind part;
  double scalar = 1.0;
  int kernel = -1;           // displacement kernel declaration
  double kernel_mass = 0.0;  // scaled truncated mass
  int source_slot = 0;       // slot bound to the parent particle
  int target_slot = 0;       // slot bound to the proposed location
  std::vector<const Node*> source;  // exact per-particle factors
  std::vector<const Node*> target;  // thinned factors at the proposal
  SumTree weights;
};

struct UniformChannel {
  double scalar = 1.0;
  std::vector<const Node*> target;  // exp(-nonnegative) factors at x
};

}  // namespace

struct Simulation::Impl {
  GeneratorSpec spec;
  double eps;
  Box box;
  int dim;
  ParticleStore store;
  Rng rng;
  double t = 0.0;
  std::size_t events = 0;
  std::size_t rejections = 0;

  SumTree death;
  std::vector<ParentChannel> parents;
  std::vector<UniformChannel> uniforms;
  double influence = 0.0;

  Impl(GeneratorSpec s, double e, Rng r)
      : spec(std::move(s)), eps(e), box(spec.box), dim(spec.box.dim()), store(box, cell_size()), rng(std::move(r)) {}

  double cell_size() const {
    double c = 0.0;
    for (const auto& k : spec.kernels) {
      const double cut = k.kernel.cutoff(box.dim());
      if (cut > 0.0) c = c == 0.0 ? cut : std::min(c, cut);
    }
    return c;
  }

  double cutoff(int decl) const { return spec.kernels[static_cast<std::size_t>(decl)].kernel.cutoff(dim); }

  double link_cutoff(const Node& sum) const {
    double c = 0.0;
    for (int k : sum.link_kernels) c = std::max(c, cutoff(k));
    return c;
  }

  double reach(const Node& n) const {
    double r = 0.0;
    for (const auto& c : n.children) r = std::max(r, reach(c));
    if (n.kind == Node::Kind::sum) r += link_cutoff(n);
    return r;
  }

  bool nonnegative(const Node& n) const {
    switch (n.kind) {
      case Node::Kind::number: return n.number >= 0.0;
      case Node::Kind::constant:
      case Node::Kind::inveps:
      case Node::Kind::exp: return true;
      case Node::Kind::kernel: return spec.kernels[static_cast<std::size_t>(n.decl)].kernel.nonnegative();
      case Node::Kind::sum: return nonnegative(n.children.front());
      case Node::Kind::add:
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          if (n.signs[i] < 0 || !nonnegative(n.children[i])) return false;
        }
        return true;
      case Node::Kind::mul:
        return std::all_of(n.children.begin(), n.children.end(), [&](const Node& c) { return nonnegative(c); });
    }
    return false;
  }

  // exp(-A) with A >= 0 is bounded by 1 wherever it is evaluated.
  bool unit_bounded(const Node& n) const {
    return n.kind == Node::Kind::exp && n.negated && nonnegative(n.children.front());
  }

  std::size_t count_within(const Point& c, double r) const {
    std::size_t k = 0;
    store.for_each_near(c, r, [&](std::size_t i) {
      if (box.distance(store.point(i), c) <= r) ++k;
    });
    return k;
  }

  // Upper bound of |n| while its free point ranges over the ball B(c, r).
  double bound(const Node& n, const Point& c, double r) const {
    switch (n.kind) {
      case Node::Kind::number: return std::abs(n.number);
      case Node::Kind::constant: return spec.constant_value(n.decl);
      case Node::Kind::inveps: return 1.0 / spec.eps;
      case Node::Kind::kernel:
        return spec.kernel_multiplier(n.decl) * spec.kernels[static_cast<std::size_t>(n.decl)].kernel.max_value(dim);
      case Node::Kind::sum: {
        if (n.link < 0) return static_cast<double>(store.size()) * bound(n.children.front(), c, box.side());
        const double rr = r + link_cutoff(n);
        const auto k = count_within(c, rr);
        return k ? static_cast<double>(k) * bound(n.children.front(), c, rr) : 0.0;
      }
      case Node::Kind::exp:
        if (unit_bounded(n)) return 1.0;
        return std::exp(bound(n.children.front(), c, r));
      case Node::Kind::add: {
        double s = 0.0;
        for (const auto& ch : n.children) s += bound(ch, c, r);
        return s;
      }
      case Node::Kind::mul: {
        double p = 1.0;
        for (const auto& ch : n.children) p *= bound(ch, c, r);
        return p;
      }
    }
    return 0.0;
  }

  double eval(const Node& n, Env& env) const {
    return dsl::evaluate(spec, n, env, store, {.truncate = true});
  }

  double product(const std::vector<const Node*>& fs, Env& env) const {
    double p = 1.0;
    for (const Node* f : fs) {
      p *= eval(*f, env);
      if (p == 0.0) break;
    }
    return p;
  }

  // ---- channel construction

  void build() {
    const int d = dim;
    for (const auto& k : spec.kernels) {
      if (!k.kernel.nonnegative()) {
        throw UnsupportedForm("kernel '" + k.name + "' takes negative values; thinning bounds need nonnegative kernels");
      }
    }
    if (spec.death) influence = std::max(influence, reach(*spec.death));
    if (spec.birth) {
      for (const auto& term : dsl::additive_terms(*spec.birth)) add_birth_term(term);
    }
    if (spec.hop) {
      for (const auto& term : dsl::additive_terms(*spec.hop)) add_hop_term(term);
    }
    (void)d;
  }

  void add_birth_term(const dsl::ProductTerm& term) {
    double scalar = term.sign;
    const Node* parent = nullptr;
    std::vector<const Node*> target;
    for (const Node* f : term.factors) {
      if (is_scalar(*f)) {
        Env env{};
        scalar *= eval(*f, env);
      } else if (!parent && f->kind == Node::Kind::sum && f->link == 0) {
        parent = f;
      } else {
        target.push_back(f);
      }
    }
    if (!parent) {
      for (const Node* f : target) {
        if (!unit_bounded(*f)) {
          throw UnsupportedForm("birth term without a dispersal sum may only carry exp(-sum) factors at "
                                + dsl::to_string(f->loc));
        }
      }
      if (scalar < 0.0) throw UnsupportedForm("negative birth term");
      uniforms.push_back({scalar, std::move(target)});
      return;
    }
    for (const auto& inner : dsl::additive_terms(parent->children.front())) {
      ParentChannel ch;
      ch.part = dsl::PartKind::birth;
      ch.scalar = scalar * inner.sign;
      ch.source_slot = parent->bound;
      ch.target_slot = 0;
      ch.target = target;
      for (const Node* f : inner.factors) {
        if (ch.kernel < 0 && jump_kernel(*f, 0, parent->bound)) {
          ch.kernel = f->decl;
          continue;
        }
        if (kernel_refs(*f).contains(0)) {
          throw UnsupportedForm("birth summand at " + dsl::to_string(f->loc) +
                                " couples the new point to the parent beyond the dispersal kernel");
        }
        ch.source.push_back(f);
      }
      if (ch.kernel < 0) throw UnsupportedForm("birth sum without a dispersal kernel");
      if (ch.scalar < 0.0) throw UnsupportedForm("negative birth term");
      finish_parent(std::move(ch));
    }
  }

  void add_hop_term(const dsl::ProductTerm& term) {
    ParentChannel ch;
    ch.part = dsl::PartKind::hop;
    ch.scalar = term.sign;
    ch.source_slot = 0;
    ch.target_slot = 1;
    for (const Node* f : term.factors) {
      if (is_scalar(*f)) {
        Env env{};
        ch.scalar *= eval(*f, env);
        continue;
      }
      if (ch.kernel < 0 && jump_kernel(*f, 0, 1)) {
        ch.kernel = f->decl;
        continue;
      }
      const auto refs = kernel_refs(*f);
      if (!refs.contains(1)) ch.source.push_back(f);
      else if (!refs.contains(0)) ch.target.push_back(f);
      else throw UnsupportedForm("hop factor at " + dsl::to_string(f->loc) + " couples departure and arrival");
    }
    if (ch.kernel < 0) throw UnsupportedForm("hop term without a jump kernel");
    if (ch.scalar < 0.0) throw UnsupportedForm("negative hop term");
    finish_parent(std::move(ch));
  }

  void finish_parent(ParentChannel ch) {
    const auto& k = spec.kernels[static_cast<std::size_t>(ch.kernel)];
    ch.kernel_mass = spec.kernel_multiplier(ch.kernel) * k.kernel.truncated_mass(dim);
    for (const Node* f : ch.source) influence = std::max(influence, reach(*f));
    for (const Node* f : ch.target) influence = std::max(influence, cutoff(ch.kernel) + reach(*f));
    parents.push_back(std::move(ch));
  }

  // ---- weights

  Env particle_env(std::size_t i, int slot) const {
    Env env{};
    env[static_cast<std::size_t>(slot)] = {store.point(i), static_cast<long>(i)};
    if (slot != 0) env[0] = {store.point(i), -1};
    return env;
  }

  double death_rate(std::size_t i) const {
    if (!spec.death) return 0.0;
    Env env = particle_env(i, 0);
    const double r = eval(*spec.death, env);
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw NumericalFault("death rate " + format_number(r) + " at x = " + format_number(store.point(i).x));
    }
    return r;
  }

  double target_bound(const ParentChannel& ch, std::size_t i) const {
    double b = 1.0;
    for (const Node* f : ch.target) {
      if (unit_bounded(*f)) continue;
      b *= bound(*f, store.point(i), cutoff(ch.kernel));
    }
    return b;
  }

  double parent_weight(const ParentChannel& ch, std::size_t i) const {
    if (ch.scalar == 0.0 || ch.kernel_mass == 0.0) return 0.0;
    Env env = particle_env(i, ch.source_slot);
    const double s = product(ch.source, env);
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw NumericalFault(std::string(dsl::to_string(ch.part)) + " source factor " + format_number(s));
    }
    if (s == 0.0) return 0.0;
    return ch.scalar * ch.kernel_mass * s * target_bound(ch, i);
  }

  void push_particle(const Point& p) {
    const std::size_t i = store.add(p);
    death.push(0.0);
    for (auto& ch : parents) ch.weights.push(0.0);
    (void)i;
  }

  void refresh(std::size_t i) {
    death.set(i, death_rate(i));
    for (auto& ch : parents) ch.weights.set(i, parent_weight(ch, i));
  }

  void refresh_near(const Point& p) {
    if (influence <= 0.0) return;
    std::vector<std::size_t> hit;
    store.for_each_near(p, influence, [&](std::size_t i) {
      if (box.distance(store.point(i), p) <= influence) hit.push_back(i);
    });
    for (std::size_t i : hit) refresh(i);
  }

  void insert(const Point& p) {
    push_particle(p);
    refresh_near(p);
    refresh(store.size() - 1);
  }

  void erase(std::size_t i) {
    const Point p = store.point(i);
    const std::size_t last = store.size() - 1;
    store.remove(i);
    if (i != last) {
      death.set(i, death.get(last));
      for (auto& ch : parents) ch.weights.set(i, ch.weights.get(last));
    }
    death.pop();
    for (auto& ch : parents) ch.weights.pop();
    refresh_near(p);
  }

  double uniform_total(const UniformChannel& u) const { return u.scalar * box.volume(); }

  TotalRates totals() const {
    TotalRates r;
    r.death = death.total();
    for (const auto& ch : parents) {
      if (ch.part == dsl::PartKind::birth) {
        r.birth += ch.weights.total();
        if (!ch.target.empty()) r.birth_is_bound = true;
      } else {
        r.hop += ch.weights.total();
        if (!ch.target.empty()) r.hop_is_bound = true;
      }
    }
    for (const auto& u : uniforms) {
      r.birth += uniform_total(u);
      if (!u.target.empty()) r.birth_is_bound = true;
    }
    return r;
  }

  double accept_ratio(const std::vector<const Node*>& target, Env& env, double bound_value) const {
    if (target.empty()) return 1.0;
    const double v = product(target, env);
    if (!(v >= 0.0) || !std::isfinite(v)) throw NumericalFault("thinned factor " + format_number(v));
    if (bound_value <= 0.0) return 0.0;
    const double q = v / bound_value;
    if (q > 1.0 + 1e-9) throw NumericalFault("thinning bound violated: ratio " + format_number(q));
    return q;
  }

  EventRecord step(double horizon) {
    const TotalRates tr = totals();
    const double total = tr.total();
    EventRecord ev;
    if (!(total > 0.0)) {
      t = std::max(t, horizon);
      ev.time = t;
      return ev;
    }
    if (!std::isfinite(total)) throw NumericalFault("total event rate is not finite");
    std::exponential_distribution<double> wait(total);
    const double tau = wait(rng);
    if (t + tau > horizon) {
      t = horizon;
      ev.time = t;
      return ev;
    }
    t += tau;
    ev.time = t;
    ++events;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double u = unit(rng) * total;

    if (u < death.total()) {
      const std::size_t i = death.find(u);
      ev.kind = EventRecord::Kind::death;
      ev.from = store.point(i);
      erase(i);
      return ev;
    }
    u -= death.total();

    for (auto& ch : parents) {
      const double w = ch.weights.total();
      if (u >= w) {
        u -= w;
        continue;
      }
      const std::size_t i = ch.weights.find(u);
      const Kernel& k = spec.kernels[static_cast<std::size_t>(ch.kernel)].kernel;
      const Point src = store.point(i);
      const Point disp = k.sample_displacement(rng, dim);
      const Point dst = box.wrap({src.x + disp.x, src.y + disp.y});
      double accept = 1.0;
      if (!ch.target.empty()) {
        Env env{};
        if (ch.part == dsl::PartKind::birth) {
          env[0] = {dst, -1};
        } else {
          env[0] = {src, static_cast<long>(i)};
          env[1] = {dst, -1};
        }
        accept = accept_ratio(ch.target, env, target_bound(ch, i));
        if (accept < 1.0 && unit(rng) >= accept) {
          ++rejections;
          ev.rejected = true;
          return ev;
        }
      }
      if (ch.part == dsl::PartKind::birth) {
        ev.kind = EventRecord::Kind::birth;
        ev.to = dst;
        insert(dst);
      } else {
        ev.kind = EventRecord::Kind::hop;
        ev.from = src;
        ev.to = dst;
        erase(i);
        insert(dst);
      }
      return ev;
    }

    for (const auto& uc : uniforms) {
      const double w = uniform_total(uc);
      if (u >= w && &uc != &uniforms.back()) {
        u -= w;
        continue;
      }
      std::uniform_real_distribution<double> pos(0.0, box.side());
      Point x{pos(rng), 0.0};
      if (dim == 2) x.y = pos(rng);
      x = box.wrap(x);
      if (!uc.target.empty()) {
        Env env{};
        env[0] = {x, -1};
        const double accept = accept_ratio(uc.target, env, 1.0);
        if (accept < 1.0 && unit(rng) >= accept) {
          ++rejections;
          ev.rejected = true;
          return ev;
        }
      }
      ev.kind = EventRecord::Kind::birth;
      ev.to = x;
      insert(x);
      return ev;
    }
    // rounding left u beyond every channel: treat as a rejected proposal
    ++rejections;
    ev.rejected = true;
    return ev;
  }
};

namespace {

GeneratorSpec prepared(const GeneratorSpec& spec, double eps) {
  GeneratorSpec s = dsl::scale(spec, eps);
  for (auto& k : s.kernels) {
    if (k.kernel.cutoff(s.box.dim()) > 0.5 * s.box.side()) k.kernel = k.kernel.with_range_cap(0.5 * s.box.side());
  }
  return s;
}

}  // namespace

Simulation::Simulation(const GeneratorSpec& spec, double eps, std::vector<Point> initial, Rng rng)
    : impl_(std::make_unique<Impl>(prepared(spec, eps), eps, std::move(rng))) {
  impl_->build();
  for (const auto& p : initial) {
    if (!impl_->box.contains(p)) throw ConfigError("initial point outside the box");
    impl_->push_particle(p);
  }
  for (std::size_t i = 0; i < impl_->store.size(); ++i) impl_->refresh(i);
}

Simulation::~Simulation() = default;
Simulation::Simulation(Simulation&&) noexcept = default;
Simulation& Simulation::operator=(Simulation&&) noexcept = default;

double Simulation::time() const noexcept { return impl_->t; }
std::span<const Point> Simulation::points() const noexcept { return impl_->store.points(); }
FiniteConfiguration Simulation::configuration() const {
  const auto p = impl_->store.points();
  return FiniteConfiguration(std::vector<Point>(p.begin(), p.end()));
}
const Box& Simulation::box() const noexcept { return impl_->box; }
double Simulation::eps() const noexcept { return impl_->eps; }
TotalRates Simulation::total_rates() const { return impl_->totals(); }
EventRecord Simulation::step(double horizon) { return impl_->step(horizon); }
std::size_t Simulation::events() const noexcept { return impl_->events; }
std::size_t Simulation::rejections() const noexcept { return impl_->rejections; }

// ---------------------------------------------------------------------------
// Ensembles

void SimPlan::validate() const {
  if (!spec) throw ConfigError("simulation plan has no generator");
  if (!(eps > 0.0) || eps > 1.0) throw ConfigError("eps must lie in (0, 1], got " + format_number(eps));
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw ConfigError("t_end must be a finite nonnegative time");
  if (replicas == 0) throw ConfigError("replicas must be positive");
  for (std::size_t i = 0; i < snapshot_times.size(); ++i) {
    const double s = snapshot_times[i];
    if (!(s >= 0.0) || s > t_end) throw ConfigError("snapshot time " + format_number(s) + " outside [0, t_end]");
    if (i && !(s > snapshot_times[i - 1])) throw ConfigError("snapshot times must be strictly increasing");
  }
  for (const auto& k : spec->kernels) {
    if (!k.kernel.nonnegative()) throw ConfigError("kernel '" + k.name + "' is signed; the simulator needs nonnegative kernels");
  }
  if (const auto* f = std::get_if<DensityField>(&rho0); f && !(f->grid().box() == box)) {
    throw ConfigError("initial density grid does not match the box");
  }
  const double expected = initial_mass(rho0, box) / eps;
  if (expected > kMaxExpectedInitial) {
    throw ConfigError("expected initial particle count " + format_number(expected) + " exceeds the guard of 1e6");
  }
}

std::size_t SimPlan::particle_guard() const {
  if (max_particles) return max_particles;
  const double expected = initial_mass(rho0, box) / eps;
  return static_cast<std::size_t>(std::max(1000.0, std::ceil(10.0 * expected)));
}

bool EnsembleResult::any_truncated() const {
  return std::any_of(replicas.begin(), replicas.end(), [](const ReplicaResult& r) { return r.truncated; });
}

std::vector<std::span<const Point>> EnsembleResult::at(std::size_t k) const {
  std::vector<std::span<const Point>> out;
  for (const auto& r : replicas) {
    if (!r.truncated && k < r.snapshots.size()) out.emplace_back(r.snapshots[k].points);
  }
  return out;
}

namespace {

ReplicaResult run_replica(const GeneratorSpec& spec, const SimPlan& plan, std::size_t index) {
  ReplicaResult res;
  res.replica = index;
  Rng rng = replica_rng(plan.base_seed, index);
  auto initial = sample_poisson_initial(plan.rho0, plan.eps, plan.box, rng);
  Simulation sim(spec, plan.eps, std::move(initial), std::move(rng));
  const std::size_t guard = plan.particle_guard();

  auto advance = [&](double until) {
    while (sim.time() < until) {
      sim.step(until);
      if (sim.points().size() > guard) {
        res.truncated = true;
        res.truncated_at = sim.time();
        return false;
      }
    }
    return true;
  };

  bool alive = true;
  for (double s : plan.snapshot_times) {
    if (!(alive = advance(s))) break;
    res.snapshots.push_back({s, std::vector<Point>(sim.points().begin(), sim.points().end())});
  }
  if (alive) advance(plan.t_end);
  res.events = sim.events();
  res.rejections = sim.rejections();
  return res;
}

}  // namespace

EnsembleResult run_ensemble(const SimPlan& plan, unsigned threads) {
  plan.validate();
  GeneratorSpec spec = *plan.spec;
  spec.box = plan.box;
  EnsembleResult out;
  out.eps = plan.eps;
  out.box = plan.box;
  out.snapshot_times = plan.snapshot_times;
  out.replicas.resize(plan.replicas);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  auto worker = [&] {
    for (std::size_t i = next++; i < plan.replicas; i = next++) {
      try {
        out.replicas[i] = run_replica(spec, plan, i);
      } catch (...) {
        std::lock_guard lock(failure_lock);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(plan.replicas)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

void write_snapshots_jsonl(std::ostream& out, const EnsembleResult& r) {
  for (const auto& rep : r.replicas) {
    for (const auto& s : rep.snapshots) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : s.points) {
        pts.push_back(r.box.dim() == 1 ? nlohmann::json::array({p.x}) : nlohmann::json::array({p.x, p.y}));
      }
      out << nlohmann::json{{"replica", rep.replica}, {"t", s.t}, {"points", std::move(pts)}}.dump() << '\n';
    }
  }
}

}  // namespace vlasov
