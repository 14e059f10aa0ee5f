#include "vlasov/solver.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "vlasov/error.hpp"

namespace vlasov {

Kernel torus_kernel(const Kernel& k, const Box& box) {
  const double half = 0.5 * box.side();
  return k.cutoff(box.dim()) > half ? k.with_range_cap(half) : k;
}

double torus_mass(const Kernel& k, const Box& box) {
  return torus_kernel(k, box).truncated_mass(box.dim());
}

std::vector<double> sample_kernel(const Kernel& k, const Grid& g) {
  const Box box = g.box();
  const Kernel t = torus_kernel(k, box);
  const Point origin{0.0, 0.0};
  std::vector<double> v(g.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    v[j] = t.truncated_value(box.distance(g.node(j), origin), g.dim);
    sum += v[j];
  }
  const double target = t.truncated_mass(g.dim);
  const double quad = sum * g.cell_volume();
  if (quad != 0.0) {
    for (double& x : v) x *= target / quad;
  }
  return v;
}

namespace {

// fftw's planner is not thread-safe; execution on distinct buffers is.
std::mutex& planner_lock() {
  static std::mutex m;
  return m;
}

}  // namespace

struct SpectralContext::Fft {
  int rank;
  int dims[2];
  std::size_t real_size;
  std::size_t complex_size;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;

  explicit Fft(const Grid& g) {
    rank = g.dim;
    dims[0] = g.n;
    dims[1] = g.n;
    real_size = g.size();
    complex_size = g.dim == 1 ? static_cast<std::size_t>(g.n / 2 + 1)
                              : static_cast<std::size_t>(g.n) * static_cast<std::size_t>(g.n / 2 + 1);
    real = fftw_alloc_real(real_size);
    spec = fftw_alloc_complex(complex_size);
    if (!real || !spec) {
      release();
      throw std::bad_alloc();
    }
    std::lock_guard lock(planner_lock());
    fwd = fftw_plan_dft_r2c(rank, dims, real, spec, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r(rank, dims, spec, real, FFTW_ESTIMATE);
  }
  ~Fft() { release(); }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  void release() {
    std::lock_guard lock(planner_lock());
    if (fwd) fftw_destroy_plan(fwd);
    if (inv) fftw_destroy_plan(inv);
    fftw_free(real);
    fftw_free(spec);
    fwd = inv = nullptr;
    real = nullptr;
    spec = nullptr;
  }
};

SpectralContext::SpectralContext(const Grid& g) : grid_(g) {
  g.validate();
  fft_ = std::make_unique<Fft>(g);
}

SpectralContext::~SpectralContext() = default;

std::size_t SpectralContext::spectrum_size() const noexcept { return fft_->complex_size; }

std::vector<std::complex<double>> SpectralContext::forward(const std::vector<double>& f) {
  std::copy(f.begin(), f.end(), fft_->real);
  fftw_execute(fft_->fwd);
  std::vector<std::complex<double>> out(fft_->complex_size);
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = {fft_->spec[s][0], fft_->spec[s][1]};
  return out;
}

std::vector<double> SpectralContext::inverse(const std::vector<std::complex<double>>& c) {
  for (std::size_t s = 0; s < c.size(); ++s) {
    fft_->spec[s][0] = c[s].real();
    fft_->spec[s][1] = c[s].imag();
  }
  fftw_execute(fft_->inv);
  const double norm = 1.0 / static_cast<double>(fft_->real_size);
  std::vector<double> out(fft_->real_size);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = fft_->real[j] * norm;
  return out;
}

std::pair<double, double> SpectralContext::wavenumber(std::size_t s) const {
  const int n = grid_.n;
  const double unit = 2.0 * std::numbers::pi / grid_.side;
  const auto half = static_cast<std::size_t>(n / 2 + 1);
  if (grid_.dim == 1) return {unit * static_cast<double>(s), 0.0};
  const auto kx = static_cast<long>(s % half);
  auto ky = static_cast<long>(s / half);
  if (ky > n / 2) ky -= n;
  return {unit * static_cast<double>(kx), unit * static_cast<double>(ky)};
}

std::vector<double> SpectralContext::convolve(const std::string& name, const Kernel& k,
                                              const std::vector<double>& f) {
  const std::string key = name + "|" + k.describe();
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    auto khat = forward(sample_kernel(k, grid_));
    const double h = grid_.cell_volume();
    for (auto& c : khat) c *= h;
    it = cache_.emplace(key, std::move(khat)).first;
  }
  auto fhat = forward(f);
  for (std::size_t s = 0; s < fhat.size(); ++s) fhat[s] *= it->second[s];
  return inverse(fhat);
}

double SpectralContext::mass(const std::string&, const Kernel& k) { return torus_mass(k, grid_.box()); }

DensityField eval_rhs(const FieldExpr& expr, const DensityField& rho) {
  SpectralContext ctx(rho.grid());
  return DensityField(rho.grid(), evaluate(expr, rho.values(), ctx));
}

namespace {

void collect_kernels(const FieldExpr& e, std::vector<const Kernel*>& out) {
  for (const auto& t : e.terms()) {
    for (const auto& a : t.atoms) {
      if (a.kernel) out.push_back(a.kernel.get());
      if (a.arg) collect_kernels(*a.arg, out);
    }
  }
}

}  // namespace

KineticSolver::KineticSolver(FieldExpr expr, const Grid& grid)
    : expr_(std::move(expr)), grid_(grid), ctx_(grid) {
  std::vector<const Kernel*> ks;
  collect_kernels(expr_, ks);
  for (const Kernel* k : ks) {
    if (grid_.spacing() >= 0.5 * k->feature_length()) {
      throw ConfigError("grid spacing " + format_number(grid_.spacing()) + " does not resolve kernel " +
                        k->describe() + " (needs h < " + format_number(0.5 * k->feature_length()) + ")");
    }
  }
}

DensityField KineticSolver::rhs(const DensityField& rho) {
  return DensityField(grid_, evaluate(expr_, rho.values(), ctx_));
}

void KineticSolver::rk4(std::vector<double>& rho, double h) {
  const std::size_t n = rho.size();
  auto f = [&](const std::vector<double>& r) {
    auto v = evaluate(expr_, r, ctx_);
    for (double x : v) max_rhs_ = std::max(max_rhs_, std::abs(x));
    return v;
  };
  std::vector<double> tmp(n);
  const auto k1 = f(rho);
  for (std::size_t j = 0; j < n; ++j) tmp[j] = rho[j] + 0.5 * h * k1[j];
  const auto k2 = f(tmp);
  for (std::size_t j = 0; j < n; ++j) tmp[j] = rho[j] + 0.5 * h * k2[j];
  const auto k3 = f(tmp);
  for (std::size_t j = 0; j < n; ++j) tmp[j] = rho[j] + h * k3[j];
  const auto k4 = f(tmp);
  for (std::size_t j = 0; j < n; ++j) rho[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
}

SolveReport KineticSolver::integrate(const DensityField& rho0, double t_end, std::vector<double> times,
                                     const SolveOptions& opts) {
  if (!(rho0.grid() == grid_)) throw ConfigError("initial field is on a different grid");
  if (!(opts.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw ConfigError("t_end must be finite and nonnegative");
  if (times.empty()) times.push_back(t_end);
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || times[i] > t_end) throw ConfigError("output time outside [0, t_end]");
    if (i && !(times[i] > times[i - 1])) throw ConfigError("output times must be strictly increasing");
  }
  for (double v : rho0.values()) {
    if (!std::isfinite(v) || v < -opts.negativity_tolerance) throw NumericalFault("invalid initial density");
  }

  SolveReport rep;
  rep.initial_mass = rho0.integral();
  max_rhs_ = 0.0;

  {
    std::vector<double> one = rho0.values(), two = rho0.values();
    rk4(one, opts.dt);
    rk4(two, 0.5 * opts.dt);
    rk4(two, 0.5 * opts.dt);
    double d = 0.0;
    for (std::size_t j = 0; j < one.size(); ++j) d = std::max(d, std::abs(one[j] - two[j]));
    rep.halving_difference = d;
    if (!(d < opts.halving_tolerance)) {
      throw NumericalFault("dt = " + format_number(opts.dt) + " fails the halving test (difference " +
                           format_number(d) + ")");
    }
  }

  std::vector<double> rho = rho0.values();
  double t = 0.0;
  for (double target : times) {
    const double span = target - t;
    if (span > 0.0) {
      const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(span / opts.dt - 1e-9)));
      const double h = span / static_cast<double>(n);
      for (std::size_t s = 0; s < n; ++s) {
        rk4(rho, h);
        ++rep.steps;
        const double tt = t + static_cast<double>(s + 1) * h;
        for (std::size_t j = 0; j < rho.size(); ++j) {
          if (!std::isfinite(rho[j])) throw NumericalFault("non-finite density at t = " + format_number(tt));
          if (rho[j] < -opts.negativity_tolerance) {
            throw NumericalFault("negative density " + format_number(rho[j]) + " at node " + std::to_string(j) +
                                 ", t = " + format_number(tt));
          }
          if (rho[j] > opts.blowup) throw NumericalFault("blow-up: density above 1e6 at t = " + format_number(tt));
        }
      }
    }
    t = target;
    rep.times.push_back(target);
    rep.fields.emplace_back(grid_, rho);
    rep.masses.push_back(rep.fields.back().integral());
  }
  rep.max_rhs = max_rhs_;
  return rep;
}

SolveReport integrate(const FieldExpr& expr, const DensityField& rho0, double t_end,
                      std::vector<double> times, double dt) {
  KineticSolver s(expr, rho0.grid());
  SolveOptions o;
  o.dt = dt;
  return s.integrate(rho0, t_end, std::move(times), o);
}

// ---------------------------------------------------------------------------
// References

double glauber_fixed_point(double z, double phi_mass, double tol) {
  if (!(z > 0.0) || !(phi_mass >= 0.0)) throw ConfigError("glauber fixed point needs z > 0 and <phi> >= 0");
  // g(r) = r - z exp(-phi r) is increasing with g(0) < 0 <= g(z)
  double lo = 0.0, hi = z;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid - z * std::exp(-phi_mass * mid) < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

double param(const dsl::GeneratorSpec& spec, const std::string& name) {
  if (!spec.has_constant(name)) throw ConfigError("reference needs a constant named '" + name + "'");
  return spec.constant(name).value;
}

const Kernel& kernel_param(const dsl::GeneratorSpec& spec, const std::string& name) {
  if (!spec.has_kernel(name)) throw ConfigError("reference needs a kernel named '" + name + "'");
  return spec.kernel(name).kernel;
}

// Fourier transform of the torus kernel: analytic for gaussians whose
// 6-sigma support fits in the box, the sampled kernel's DFT otherwise.
std::vector<std::complex<double>> kernel_symbol(SpectralContext& ctx, const Kernel& k) {
  const Grid& g = ctx.grid();
  std::vector<std::complex<double>> out(ctx.spectrum_size());
  if (k.shape() == Kernel::Shape::gaussian && k.cutoff(g.dim) <= 0.5 * g.side) {
    const double s2 = k.parameter() * k.parameter();
    for (std::size_t s = 0; s < out.size(); ++s) {
      const auto [kx, ky] = ctx.wavenumber(s);
      out[s] = k.amplitude() * std::exp(-0.5 * s2 * (kx * kx + ky * ky));
    }
    return out;
  }
  out = ctx.forward(sample_kernel(k, g));
  for (auto& c : out) c *= g.cell_volume();
  return out;
}

DensityField spectral_linear(const DensityField& rho0, double t, const Kernel& k, double gain, double loss) {
  SpectralContext ctx(rho0.grid());
  auto c = ctx.forward(rho0.values());
  const auto sym = kernel_symbol(ctx, k);
  for (std::size_t s = 0; s < c.size(); ++s) c[s] *= std::exp((gain * sym[s] - loss) * t);
  return DensityField(rho0.grid(), ctx.inverse(c));
}

}  // namespace

DensityField reference_solution(std::string_view model, const dsl::GeneratorSpec& spec,
                                const DensityField& rho0, double t) {
  const Grid& g = rho0.grid();
  const Box box = g.box();
  if (model == "surgailis") {
    const double m = param(spec, "m"), sigma = param(spec, "sigma");
    std::vector<double> v(rho0.values());
    for (double& x : v) x = sigma / m + (x - sigma / m) * std::exp(-m * t);
    return DensityField(g, std::move(v));
  }
  if (model == "contact") {
    return spectral_linear(rho0, t, kernel_param(spec, "a"), param(spec, "lambda"), param(spec, "m"));
  }
  if (model == "free_kawasaki") {
    const Kernel& a = kernel_param(spec, "a");
    return spectral_linear(rho0, t, a, 1.0, torus_mass(a, box));
  }
  if (model == "bdlp_homogeneous") {
    const double c = rho0[0];
    if (rho0.max() - rho0.min() > 1e-12 * std::max(1.0, std::abs(c))) {
      throw ConfigError("bdlp_homogeneous needs a constant initial density");
    }
    const double m = param(spec, "m"), lambda = param(spec, "lambda");
    const double am = torus_mass(kernel_param(spec, "aminus"), box);
    const double ap = torus_mass(kernel_param(spec, "aplus"), box);
    const double r = lambda * ap - m;
    if (r == 0.0 || am <= 0.0) throw ConfigError("bdlp_homogeneous needs r != 0 and <aminus> > 0");
    const double K = r / am;
    const double e = std::exp(r * t);
    return DensityField::constant(g, K * c * e / (K + c * (e - 1.0)));
  }
  if (model == "glauber_fixed_point") {
    const double z = param(spec, "z");
    const double phi = torus_mass(kernel_param(spec, "phi"), box);
    return DensityField::constant(g, glauber_fixed_point(z, phi));
  }
  throw ConfigError("no closed-form reference for model '" + std::string(model) + "'");
}

}  // namespace vlasov
