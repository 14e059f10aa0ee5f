#include "vlasov/presets.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "vlasov/error.hpp"

namespace vlasov {

namespace {

constexpr std::array kPresets = {
    Preset{"surgailis", "Surgailis", 1,
           "const m = 1;\n"
           "const sigma = 2 scale inveps;\n"
           "death = m;\n"
           "birth = sigma;\n",
           "-m*rho + sigma"},
    Preset{"contact", "Contact", 2,
           "kernel a gaussian(0.5) scale eps;\n"
           "const m = 1;\n"
           "const lambda = 0.5 scale inveps;\n"
           "death = m;\n"
           "birth = lambda * sum[y in gamma] a(x-y);\n",
           "-m*rho + lambda*conv(a,rho)"},
    Preset{"social", "Social", 3,
           "kernel a tophat(1) scale eps;\n"
           "const sigma = 1 scale inveps;\n"
           "death = sum[y in gamma\\x] a(x-y);\n"
           "birth = sigma;\n",
           "-rho*conv(a,rho) + sigma"},
    Preset{"bdlp", "Bolker-Dieckmann-Law-Pacala", 4,
           "kernel aminus tophat(1) scale eps;\n"
           "kernel aplus gaussian(1) scale eps;\n"
           "const m = 0.5;\n"
           "const lambda = 1.5 scale inveps;\n"
           "death = m + sum[y in gamma\\x] aminus(x-y);\n"
           "birth = lambda * sum[y in gamma] aplus(x-y);\n",
           "-m*rho - rho*conv(aminus,rho) + lambda*conv(aplus,rho)"},
    Preset{"contact_establishment", "Contact with establishment", 5,
           "kernel a gaussian(0.5) scale eps;\n"
           "kernel phi tophat(0.5) scale eps;\n"
           "const m = 1;\n"
           "const lambda = 2 scale inveps;\n"
           "death = m;\n"
           "birth = lambda * sum[y in gamma] a(x-y) * exp(-sum[u in gamma] phi(x-u));\n",
           "-m*rho + lambda*conv(a,rho)*exp(-conv(phi,rho))"},
    Preset{"contact_fecundity", "Contact with fecundity", 6,
           "kernel a gaussian(0.5) scale eps;\n"
           "kernel phi tophat(0.5) scale eps;\n"
           "const m = 1;\n"
           "const lambda = 2 scale inveps;\n"
           "death = m;\n"
           "birth = lambda * sum[y in gamma] (a(x-y) * exp(-sum[u in gamma\\y] phi(y-u)));\n",
           "-m*rho + lambda*conv(a,rho*exp(-conv(phi,rho)))"},
    Preset{"dieckmann_law", "Dieckmann-Law", 7,
           "kernel aminus tophat(1) scale eps;\n"
           "kernel aplus gaussian(0.5) scale eps;\n"
           "kernel b tophat(1, 0.5) scale eps;\n"
           "const m = 1;\n"
           "const lambda = 1.5;\n"
           "death = m + sum[y in gamma\\x] aminus(x-y);\n"
           "birth = inveps * sum[y in gamma] (aplus(x-y) * (lambda + sum[u in gamma\\y] b(y-u)));\n",
           "-m*rho - rho*conv(aminus,rho) + lambda*conv(aplus,rho) + conv(aplus,rho*conv(b,rho))"},
    Preset{"glauber_plus", "Glauber G+", 8,
           "kernel phi tophat(0.5) scale eps;\n"
           "const z = 1 scale inveps;\n"
           "death = 1;\n"
           "birth = z * exp(-sum[u in gamma] phi(x-u));\n",
           "-rho + z*exp(-conv(phi,rho))"},
    Preset{"glauber_minus", "Glauber G-", 9,
           "kernel phi tophat(0.5) scale eps;\n"
           "const z = 1 scale inveps;\n"
           "death = exp(sum[u in gamma\\x] phi(x-u));\n"
           "birth = z;\n",
           "-rho*exp(conv(phi,rho)) + z"},
    Preset{"free_kawasaki", "Free Kawasaki", 10,
           "kernel a gaussian(0.5);\n"
           "hop = a(x-y);\n",
           "conv(a,rho) - mass(a)*rho"},
    Preset{"kawasaki_dd_departure", "Density-dependent Kawasaki, departure interaction", 11,
           "kernel a gaussian(0.5);\n"
           "kernel b tophat(1) scale eps;\n"
           "hop = a(x-y) * sum[u in gamma\\x] b(x-u);\n",
           "conv(a,rho*conv(b,rho)) - mass(a)*rho*conv(b,rho)"},
    Preset{"kawasaki_dd_arrival", "Density-dependent Kawasaki, arrival interaction", 11,
           "kernel a gaussian(0.5);\n"
           "kernel b tophat(1) scale eps;\n"
           "hop = a(x-y) * sum[u in gamma] b(y-u);\n",
           "conv(a,rho)*conv(b,rho) - rho*conv(a,conv(b,rho))"},
    Preset{"gibbs_kawasaki", "Gibbs-Kawasaki", 12,
           "kernel a gaussian(0.5);\n"
           "kernel phi tophat(0.5) scale eps;\n"
           "hop = a(x-y) * exp(-sum[u in gamma] phi(y-u));\n",
           "conv(a,rho)*exp(-conv(phi,rho)) - rho*conv(a,exp(-conv(phi,rho)))"},
};

}  // namespace

std::span<const Preset> presets() { return kPresets; }

bool is_preset(std::string_view name) {
  return std::any_of(kPresets.begin(), kPresets.end(), [&](const Preset& p) { return p.name == name; });
}

const Preset& preset(std::string_view name) {
  for (const auto& p : kPresets) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

}  // namespace vlasov
