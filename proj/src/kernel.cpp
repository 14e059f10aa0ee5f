#include "vlasov/kernel.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vlasov/error.hpp"

namespace vlasov {

namespace {

constexpr double kTailMass = 1e-9;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Solve e^{-t}(1+t) = tail for t > 0 by bisection.
double exponential_2d_tail_radius() {
  double lo = 0.0, hi = 100.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (std::exp(-mid) * (1.0 + mid) > kTailMass) lo = mid; else hi = mid;
  }
  return hi;
}

Point along_direction(double r, int dim, Rng& rng) {
  if (dim == 1) {
    std::bernoulli_distribution sign(0.5);
    return {sign(rng) ? r : -r, 0.0};
  }
  std::uniform_real_distribution<double> angle(0.0, kTwoPi);
  const double t = angle(rng);
  return {r * std::cos(t), r * std::sin(t)};
}

}  // namespace

std::string format_number(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

Kernel Kernel::gaussian(double sigma, double amplitude) {
  if (!(sigma > 0.0)) throw Error("gaussian width must be positive");
  return Kernel(Shape::gaussian, sigma, amplitude);
}

Kernel Kernel::tophat(double radius, double amplitude) {
  if (!(radius > 0.0)) throw Error("tophat radius must be positive");
  return Kernel(Shape::tophat, radius, amplitude);
}

Kernel Kernel::exponential(double rate, double amplitude) {
  if (!(rate > 0.0)) throw Error("exponential rate must be positive");
  return Kernel(Shape::exponential, rate, amplitude);
}

Kernel Kernel::table(std::vector<double> r, std::vector<double> v, double amplitude,
                     std::string source) {
  if (r.size() < 2 || r.size() != v.size()) {
    throw Error("kernel table needs at least two (r, value) rows");
  }
  if (r.front() != 0.0) throw Error("kernel table must start at r = 0");
  for (std::size_t i = 1; i < r.size(); ++i) {
    if (!(r[i] > r[i - 1])) throw Error("kernel table radii must be strictly increasing");
  }
  Kernel k(Shape::table, 0.0, amplitude);
  k.table_r_ = std::move(r);
  k.table_v_ = std::move(v);
  k.source_ = std::move(source);
  return k;
}

Kernel Kernel::table_from_file(const std::string& path, double amplitude) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open kernel table '" + path + "'");
  std::vector<double> r, v;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double a, b;
    if (ls >> a >> b) {
      r.push_back(a);
      v.push_back(b);
    }
  }
  return table(std::move(r), std::move(v), amplitude, path);
}

Kernel Kernel::with_amplitude(double amplitude) const {
  Kernel k = *this;
  k.amplitude_ = amplitude;
  return k;
}

double Kernel::unit_value(double r, int dim) const {
  switch (shape_) {
    case Shape::gaussian: {
      const double s2 = param_ * param_;
      const double norm = dim == 1 ? 1.0 / std::sqrt(kTwoPi * s2) : 1.0 / (kTwoPi * s2);
      return norm * std::exp(-r * r / (2.0 * s2));
    }
    case Shape::tophat:
      if (r > param_) return 0.0;
      return dim == 1 ? 1.0 / (2.0 * param_) : 1.0 / (std::numbers::pi * param_ * param_);
    case Shape::exponential:
      return dim == 1 ? 0.5 * param_ * std::exp(-param_ * r)
                      : param_ * param_ / kTwoPi * std::exp(-param_ * r);
    case Shape::table: {
      if (r >= table_r_.back()) return r == table_r_.back() ? table_v_.back() : 0.0;
      const auto it = std::upper_bound(table_r_.begin(), table_r_.end(), r);
      const std::size_t i = static_cast<std::size_t>(it - table_r_.begin()) - 1;
      const double t = (r - table_r_[i]) / (table_r_[i + 1] - table_r_[i]);
      return table_v_[i] + t * (table_v_[i + 1] - table_v_[i]);
    }
  }
  return 0.0;
}

double Kernel::value(double r, int dim) const { return amplitude_ * unit_value(r, dim); }

namespace {

// Radial mass of a linear segment (r0, v0) -> (r1, v1).
double linear_segment_mass(double r0, double r1, double v0, double v1, int dim) {
  if (dim == 1) return (v0 + v1) * (r1 - r0);
  // r v(r) is quadratic on the segment, so Simpson is exact
  const double rm = 0.5 * (r0 + r1), vm = 0.5 * (v0 + v1);
  return kTwoPi * (r1 - r0) / 6.0 * (r0 * v0 + 4.0 * rm * vm + r1 * v1);
}

}  // namespace

double Kernel::table_segment_mass(std::size_t i, int dim) const {
  return linear_segment_mass(table_r_[i], table_r_[i + 1], table_v_[i], table_v_[i + 1], dim);
}

double Kernel::mass(int dim) const {
  if (shape_ != Shape::table) return amplitude_;
  double m = 0.0;
  for (std::size_t i = 0; i + 1 < table_r_.size(); ++i) m += table_segment_mass(i, dim);
  return amplitude_ * m;
}

double Kernel::mass_within(double r, int dim) const {
  if (r <= 0.0) return 0.0;
  double f = 0.0;
  switch (shape_) {
    case Shape::gaussian:
      f = dim == 1 ? std::erf(r / (param_ * std::numbers::sqrt2))
                   : 1.0 - std::exp(-r * r / (2.0 * param_ * param_));
      break;
    case Shape::tophat:
      f = std::min(1.0, std::pow(r / param_, dim));
      break;
    case Shape::exponential:
      f = dim == 1 ? 1.0 - std::exp(-param_ * r)
                   : 1.0 - std::exp(-param_ * r) * (1.0 + param_ * r);
      break;
    case Shape::table: {
      double m = 0.0;
      for (std::size_t i = 0; i + 1 < table_r_.size(); ++i) {
        if (table_r_[i + 1] <= r) {
          m += table_segment_mass(i, dim);
        } else {
          if (table_r_[i] < r) {
            m += linear_segment_mass(table_r_[i], r, table_v_[i], unit_value(r, dim), dim);
          }
          break;
        }
      }
      return amplitude_ * m;
    }
  }
  return amplitude_ * f;
}

double Kernel::cutoff(int dim) const { return std::min(natural_cutoff(dim), range_cap_); }

Kernel Kernel::with_range_cap(double cap) const {
  if (!(cap > 0.0)) throw Error("kernel range cap must be positive");
  Kernel k = *this;
  k.range_cap_ = cap;
  return k;
}

double Kernel::natural_cutoff(int dim) const {
  switch (shape_) {
    case Shape::gaussian: return 6.0 * param_;
    case Shape::tophat: return param_;
    case Shape::exponential: {
      static const double t2 = exponential_2d_tail_radius();
      return (dim == 1 ? -std::log(kTailMass) : t2) / param_;
    }
    case Shape::table: return table_r_.back();
  }
  return 0.0;
}

double Kernel::max_value(int dim) const {
  if (shape_ != Shape::table) return std::abs(value(0.0, dim));
  double m = 0.0;
  for (double v : table_v_) m = std::max(m, std::abs(v));
  return std::abs(amplitude_) * m;
}

double Kernel::feature_length() const {
  switch (shape_) {
    case Shape::gaussian:
    case Shape::tophat: return param_;
    case Shape::exponential: return 1.0 / param_;
    case Shape::table: {
      double h = table_r_.back();
      for (std::size_t i = 1; i < table_r_.size(); ++i) h = std::min(h, table_r_[i] - table_r_[i - 1]);
      return h;
    }
  }
  return 0.0;
}

bool Kernel::nonnegative() const {
  if (amplitude_ < 0.0) return false;
  return std::all_of(table_v_.begin(), table_v_.end(), [](double v) { return v >= 0.0; });
}

double Kernel::sample_radius_table(Rng& rng, int dim) const {
  std::vector<double> seg(table_r_.size() - 1);
  for (std::size_t i = 0; i < seg.size(); ++i) seg[i] = table_segment_mass(i, dim);
  std::discrete_distribution<std::size_t> pick(seg.begin(), seg.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t i = pick(rng);
  const double r0 = table_r_[i], r1 = table_r_[i + 1];
  auto density = [&](double r) { return dim == 1 ? unit_value(r, 1) : r * unit_value(r, 2); };
  const double top = std::max(density(r0), density(r1));
  for (;;) {
    const double r = r0 + (r1 - r0) * u(rng);
    if (u(rng) * top <= density(r)) return r;
  }
}

Point Kernel::sample_displacement(Rng& rng, int dim) const {
  const double cut = cutoff(dim);
  for (;;) {
    Point d;
    switch (shape_) {
      case Shape::gaussian: {
        std::normal_distribution<double> n(0.0, param_);
        d.x = n(rng);
        if (dim == 2) d.y = n(rng);
        break;
      }
      case Shape::tophat: {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double r = dim == 1 ? param_ * u(rng) : param_ * std::sqrt(u(rng));
        d = along_direction(r, dim, rng);
        break;
      }
      case Shape::exponential: {
        std::exponential_distribution<double> e(param_);
        const double r = dim == 1 ? e(rng) : e(rng) + e(rng);
        d = along_direction(r, dim, rng);
        break;
      }
      case Shape::table:
        d = along_direction(sample_radius_table(rng, dim), dim, rng);
        break;
    }
    if (std::hypot(d.x, d.y) <= cut) return d;
  }
}

std::string Kernel::describe() const {
  std::string head;
  switch (shape_) {
    case Shape::gaussian: head = "gaussian(" + format_number(param_); break;
    case Shape::tophat: head = "tophat(" + format_number(param_); break;
    case Shape::exponential: head = "exponential(" + format_number(param_); break;
    case Shape::table: head = "table(" + source_; break;
  }
  if (amplitude_ != 1.0) head += ", " + format_number(amplitude_);
  return head + ")";
}

}  // namespace vlasov
