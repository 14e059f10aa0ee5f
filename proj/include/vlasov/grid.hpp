#pragma once

// Periodic grids and gridded densities.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlasov/config.hpp"

namespace vlasov {

/// n^d nodes at x_j = j * h on [0, L)^d, h = L / n.
struct Grid {
  int dim = 1;
  double side = 10.0;
  int n = 256;

  double spacing() const noexcept { return side / n; }
  double cell_volume() const noexcept;
  std::size_t size() const noexcept;
  Box box() const { return Box(dim, side); }
  /// Node position of flat index j (row-major, x fastest).
  Point node(std::size_t j) const;
  /// Nearest node of p, i.e. the histogram cell [x_j - h/2, x_j + h/2).
  std::size_t cell_of(const Point& p) const;

  /// Throws ConfigError unless n is a power of two >= 16, d in {1, 2} and n <= 256 for d = 2.
  void validate() const;

  bool operator==(const Grid&) const = default;
};

class DensityField {
 public:
  DensityField() = default;
  DensityField(Grid grid, std::vector<double> values);

  static DensityField constant(const Grid& grid, double c);
  static DensityField sample(const Grid& grid, const std::function<double(const Point&)>& f);

  const Grid& grid() const noexcept { return grid_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }
  double operator[](std::size_t j) const { return values_[j]; }

  /// Periodic (bi)linear interpolation between nodes.
  double at(const Point& p) const;
  /// Rectangle rule, exact for the interpolant on the torus.
  double integral() const;
  double max() const;
  double min() const;

 private:
  Grid grid_;
  std::vector<double> values_;
};

double l2_distance(const DensityField& a, const DensityField& b);
double sup_distance(const DensityField& a, const DensityField& b);

/// "x,rho" or "x,y,rho" rows with a header line.
void write_csv(std::ostream& out, const DensityField& f);
nlohmann::json grid_json(const Grid& g);

}  // namespace vlasov
