#pragma once

#include <limits>
#include <random>
#include <string>
#include <vector>

#include "vlasov/config.hpp"

namespace vlasov {

using Rng = std::mt19937_64;

/// Shortest decimal form that reads back to the same double.
std::string format_number(double v);

/// Radially symmetric, nonnegative interaction or dispersal profile.
/// Analytic profiles are unit-mass densities on R^d scaled by `amplitude`,
/// so their integral is exactly the amplitude. Tabulated profiles take the
/// radial samples as given and integrate them by quadrature.
class Kernel {
 public:
  enum class Shape { gaussian, tophat, exponential, table };

  static Kernel gaussian(double sigma, double amplitude = 1.0);
  static Kernel tophat(double radius, double amplitude = 1.0);
  static Kernel exponential(double rate, double amplitude = 1.0);
  /// Piecewise-linear radial profile through (r_i, v_i), zero beyond the last node.
  static Kernel table(std::vector<double> r, std::vector<double> v, double amplitude = 1.0,
                      std::string source = {});
  /// Reads whitespace-separated "r value" lines; '#' starts a comment.
  static Kernel table_from_file(const std::string& path, double amplitude = 1.0);

  Shape shape() const noexcept { return shape_; }
  double parameter() const noexcept { return param_; }
  double amplitude() const noexcept { return amplitude_; }
  Kernel with_amplitude(double amplitude) const;

  /// Value at distance r >= 0 in dimension dim.
  double value(double r, int dim) const;
  /// Integral over R^d.
  double mass(int dim) const;
  /// Integral over the ball of radius r.
  double mass_within(double r, int dim) const;
  /// Interaction range used by neighbour search: exact support for compact
  /// profiles, otherwise the radius outside which the tail mass is below 1e-9.
  double cutoff(int dim) const;
  /// Copy whose interaction range is at most `cap` (the periodic box uses L/2).
  Kernel with_range_cap(double cap) const;
  /// Mass of the profile as seen through truncated_value().
  double truncated_mass(int dim) const { return mass_within(cutoff(dim), dim); }
  /// Value at distance r with everything beyond cutoff(dim) dropped.
  double truncated_value(double r, int dim) const {
    return r > cutoff(dim) ? 0.0 : value(r, dim);
  }
  double max_value(int dim) const;
  /// Smallest length scale the profile resolves (sigma, radius, 1/rate or node spacing).
  double feature_length() const;
  bool nonnegative() const;

  /// Displacement drawn from the normalized profile restricted to cutoff(dim).
  Point sample_displacement(Rng& rng, int dim) const;

  /// "gaussian(0.5)", "tophat(1, 2)" and so on.
  std::string describe() const;

 private:
  Kernel(Shape s, double p, double a) : shape_(s), param_(p), amplitude_(a) {}
  double unit_value(double r, int dim) const;
  double natural_cutoff(int dim) const;
  double table_segment_mass(std::size_t i, int dim) const;
  double sample_radius_table(Rng& rng, int dim) const;

  Shape shape_;
  double param_;
  double amplitude_;
  std::vector<double> table_r_;
  std::vector<double> table_v_;
  std::string source_;
  double range_cap_ = std::numeric_limits<double>::infinity();
};

}  // namespace vlasov
