#include "vlasov/grid.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "vlasov/error.hpp"
#include "vlasov/kernel.hpp"

namespace vlasov {

double Grid::cell_volume() const noexcept { return std::pow(spacing(), dim); }

std::size_t Grid::size() const noexcept {
  const auto m = static_cast<std::size_t>(n);
  return dim == 1 ? m : m * m;
}

Point Grid::node(std::size_t j) const {
  const double h = spacing();
  const auto m = static_cast<std::size_t>(n);
  if (dim == 1) return {static_cast<double>(j) * h, 0.0};
  return {static_cast<double>(j % m) * h, static_cast<double>(j / m) * h};
}

std::size_t Grid::cell_of(const Point& p) const {
  const double h = spacing();
  auto idx = [&](double c) {
    auto i = static_cast<long>(std::floor(c / h + 0.5));
    i %= n;
    if (i < 0) i += n;
    return static_cast<std::size_t>(i);
  };
  if (dim == 1) return idx(p.x);
  return idx(p.y) * static_cast<std::size_t>(n) + idx(p.x);
}

void Grid::validate() const {
  if (dim != 1 && dim != 2) throw ConfigError("grid dimension must be 1 or 2");
  if (!(side > 0.0) || !std::isfinite(side)) throw ConfigError("box side must be positive");
  if (n < 16 || (n & (n - 1)) != 0) {
    throw ConfigError("grid size must be a power of two >= 16, got " + std::to_string(n));
  }
  if (dim == 2 && n > 256) throw ConfigError("2-d grids are limited to n <= 256");
}

DensityField::DensityField(Grid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) throw Error("density field size does not match its grid");
}

DensityField DensityField::constant(const Grid& grid, double c) {
  return DensityField(grid, std::vector<double>(grid.size(), c));
}

DensityField DensityField::sample(const Grid& grid, const std::function<double(const Point&)>& f) {
  std::vector<double> v(grid.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = f(grid.node(j));
  return DensityField(grid, std::move(v));
}

double DensityField::at(const Point& p) const {
  const double h = grid_.spacing();
  const int n = grid_.n;
  auto split = [&](double c, int& i0, double& t) {
    const double u = c / h;
    const double f = std::floor(u);
    t = u - f;
    long i = static_cast<long>(f) % n;
    if (i < 0) i += n;
    i0 = static_cast<int>(i);
  };
  int i0, j0 = 0;
  double tx, ty = 0.0;
  split(p.x, i0, tx);
  const int i1 = (i0 + 1) % n;
  if (grid_.dim == 1) {
    return (1.0 - tx) * values_[static_cast<std::size_t>(i0)] + tx * values_[static_cast<std::size_t>(i1)];
  }
  split(p.y, j0, ty);
  const int j1 = (j0 + 1) % n;
  auto v = [&](int i, int j) { return values_[static_cast<std::size_t>(j) * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)]; };
  return (1.0 - ty) * ((1.0 - tx) * v(i0, j0) + tx * v(i1, j0)) +
         ty * ((1.0 - tx) * v(i0, j1) + tx * v(i1, j1));
}

double DensityField::integral() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s * grid_.cell_volume();
}

double DensityField::max() const { return *std::max_element(values_.begin(), values_.end()); }
double DensityField::min() const { return *std::min_element(values_.begin(), values_.end()); }

namespace {

void check_same(const DensityField& a, const DensityField& b) {
  if (!(a.grid() == b.grid())) throw Error("fields live on different grids");
}

}  // namespace

double l2_distance(const DensityField& a, const DensityField& b) {
  check_same(a, b);
  double s = 0.0;
  for (std::size_t j = 0; j < a.values().size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s * a.grid().cell_volume());
}

double sup_distance(const DensityField& a, const DensityField& b) {
  check_same(a, b);
  double s = 0.0;
  for (std::size_t j = 0; j < a.values().size(); ++j) s = std::max(s, std::abs(a[j] - b[j]));
  return s;
}

void write_csv(std::ostream& out, const DensityField& f) {
  const Grid& g = f.grid();
  out << (g.dim == 1 ? "x,rho\n" : "x,y,rho\n");
  for (std::size_t j = 0; j < g.size(); ++j) {
    const Point p = g.node(j);
    out << format_number(p.x) << ',';
    if (g.dim == 2) out << format_number(p.y) << ',';
    out << format_number(f[j]) << '\n';
  }
}

nlohmann::json grid_json(const Grid& g) {
  return {{"dim", g.dim}, {"L", g.side}, {"n", g.n}, {"h", g.spacing()}};
}

}  // namespace vlasov
