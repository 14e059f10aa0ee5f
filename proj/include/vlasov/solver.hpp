#pragma once

// Fixed-step RK4 integration of d rho / dt = v(rho) on a periodic grid.
// Convolutions go through real FFTs with per-kernel transforms cached.

#include <complex>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vlasov/dsl.hpp"
#include "vlasov/field_expr.hpp"
#include "vlasov/grid.hpp"

namespace vlasov {

/// Kernel as the torus sees it: restricted to the ball of radius L/2.
Kernel torus_kernel(const Kernel& k, const Box& box);
/// Mass of torus_kernel(k, box).
double torus_mass(const Kernel& k, const Box& box);

/// Kernel sampled at minimum-image node distances, rescaled so the
/// rectangle-rule mass equals torus_mass.
std::vector<double> sample_kernel(const Kernel& k, const Grid& g);

/// Grid operations for FieldExpr evaluation backed by FFTW.
class SpectralContext final : public FieldContext {
 public:
  explicit SpectralContext(const Grid& g);
  ~SpectralContext() override;
  SpectralContext(const SpectralContext&) = delete;
  SpectralContext& operator=(const SpectralContext&) = delete;

  std::size_t size() const override { return grid_.size(); }
  std::vector<double> convolve(const std::string& name, const Kernel& k, const std::vector<double>& f) override;
  double mass(const std::string& name, const Kernel& k) override;

  const Grid& grid() const noexcept { return grid_; }
  /// Number of complex coefficients of a real transform.
  std::size_t spectrum_size() const noexcept;
  std::vector<std::complex<double>> forward(const std::vector<double>& f);
  std::vector<double> inverse(const std::vector<std::complex<double>>& c);
  /// Signed wavenumber (kx, ky) of spectral index s.
  std::pair<double, double> wavenumber(std::size_t s) const;

 private:
  struct Fft;
  Grid grid_;
  std::unique_ptr<Fft> fft_;
  std::map<std::string, std::vector<std::complex<double>>> cache_;
};

/// v(rho) at the grid nodes.
DensityField eval_rhs(const FieldExpr& expr, const DensityField& rho);

struct SolveOptions {
  double dt = 1e-3;
  double negativity_tolerance = 1e-10;
  double blowup = 1e6;
  /// One step at dt against two at dt/2 from rho0 must agree to this sup-norm.
  double halving_tolerance = 1e-6;
};

struct SolveReport {
  std::vector<double> times;
  std::vector<DensityField> fields;
  std::size_t steps = 0;
  double max_rhs = 0.0;
  double halving_difference = 0.0;
  /// int rho at t = 0 and at each requested time.
  double initial_mass = 0.0;
  std::vector<double> masses;
};

class KineticSolver {
 public:
  /// Validates the grid: power-of-two n >= 16 and spacing below half of every kernel's feature length.
  KineticSolver(FieldExpr expr, const Grid& grid);

  const FieldExpr& expr() const noexcept { return expr_; }
  const Grid& grid() const noexcept { return grid_; }

  DensityField rhs(const DensityField& rho);
  /// Snapshots at `times` (t_end when empty); the step is shortened between
  /// snapshots so each one is hit exactly.
  SolveReport integrate(const DensityField& rho0, double t_end, std::vector<double> times,
                        const SolveOptions& opts = {});

 private:
  void rk4(std::vector<double>& rho, double h);

  FieldExpr expr_;
  Grid grid_;
  SpectralContext ctx_;
  double max_rhs_ = 0.0;
};

SolveReport integrate(const FieldExpr& expr, const DensityField& rho0, double t_end,
                      std::vector<double> times, double dt);

/// Models with solutions independent of the RK4 path.
inline constexpr std::string_view kReferenceModels[] = {"surgailis", "contact", "free_kawasaki",
                                                        "bdlp_homogeneous", "glauber_fixed_point"};

/// Closed-form or spectral solution at time t. Parameters are read from the
/// generator (m, sigma, lambda, z and kernels a, aminus, aplus, phi).
/// glauber_fixed_point ignores rho0 and t and returns the stationary level.
DensityField reference_solution(std::string_view model, const dsl::GeneratorSpec& spec,
                                const DensityField& rho0, double t);

/// Root of rho = z exp(-phi_mass * rho) by bisection.
double glauber_fixed_point(double z, double phi_mass, double tol = 1e-12);

}  // namespace vlasov
