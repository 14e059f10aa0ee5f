#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "vlasov/derive.hpp"
#include "vlasov/dsl.hpp"
#include "vlasov/error.hpp"
#include "vlasov/presets.hpp"

using namespace vlasov;
using namespace vlasov::dsl;

namespace {

const std::string kBdlp =
    "kernel aminus tophat(1) scale eps;\n"
    "kernel aplus gaussian(1) scale eps;\n"
    "const m = 0.5;\n"
    "const lambda = 1.5 scale inveps;\n"
    "death = m + sum[y in gamma\\x] aminus(x-y); birth = lambda * sum[y in gamma] aplus(x-y)";

GeneratorSpec preset_spec(std::string_view name) { return parse(std::string(preset(name).dsl)); }

FiniteConfiguration near(std::mt19937_64& rng, const Point& x, std::size_t n, double spread = 0.4) {
  std::uniform_real_distribution<double> u(-spread, spread);
  std::vector<Point> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back({x.x + u(rng), 0.0});
  return FiniteConfiguration(std::move(pts));
}

// Direct quadrature on a grid, independent of the solver's FFT path.
class DirectContext : public FieldContext {
 public:
  DirectContext(int n, double L) : n_(n), h_(L / n), L_(L) {}
  std::size_t size() const override { return static_cast<std::size_t>(n_); }
  std::vector<double> convolve(const std::string&, const Kernel& k, const std::vector<double>& f) override {
    std::vector<double> out(size(), 0.0);
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        double d = std::abs(i - j) * h_;
        d = std::min(d, L_ - d);
        out[static_cast<std::size_t>(i)] += k.value(d, 1) * f[static_cast<std::size_t>(j)] * h_;
      }
    }
    return out;
  }
  double mass(const std::string&, const Kernel& k) override { return k.mass(1); }

 private:
  int n_;
  double h_, L_;
};

}  // namespace

TEST_CASE("parse BDLP") {
  const GeneratorSpec s = parse(kBdlp);
  REQUIRE(s.death);
  REQUIRE(s.birth);
  CHECK(!s.hop);
  const Node& d = *s.death;
  CHECK(d.kind == Node::Kind::add);
  CHECK(d.children[0].kind == Node::Kind::constant);
  CHECK(d.children[1].kind == Node::Kind::sum);
  CHECK(d.children[1].form == Form::linear_sum);
  CHECK(d.children[1].children[0].name == "aminus");
  const Node& b = *s.birth;
  CHECK(b.kind == Node::Kind::mul);
  CHECK(b.children[0].name == "lambda");
  CHECK(b.children[1].kind == Node::Kind::sum);
  CHECK(b.form == Form::linear_sum);
  CHECK(s.kernel("aplus").kernel.shape() == Kernel::Shape::gaussian);
  CHECK(s.constant("lambda").scaling == ConstScaling::inv_eps);
}

TEST_CASE("parse Surgailis and Glauber") {
  const GeneratorSpec s = parse("const m = 1; const sigma = 2 scale inveps; death = m; birth = sigma");
  CHECK(s.death->form == Form::constant);
  CHECK(s.birth->form == Form::constant);
  const GeneratorSpec g = parse(
      "kernel phi tophat(0.5) scale eps; const z = 1 scale inveps;"
      "birth = z * exp(-sum[u in gamma] phi(x-u)); death = 1");
  CHECK(g.birth->form == Form::exp_sum);
  CHECK(g.birth->children[1].negated);
  CHECK(g.death->kind == Node::Kind::number);
}

TEST_CASE("every preset parses and classifies") {
  for (const auto& p : presets()) {
    CAPTURE(p.name);
    const GeneratorSpec s = parse(std::string(p.dsl));
    CHECK((s.death || s.birth || s.hop));
  }
  CHECK(preset_spec("dieckmann_law").birth->form == Form::pair_sum);
  CHECK(preset_spec("contact_fecundity").birth->form == Form::sum_with_exp);
  CHECK(preset_spec("contact_establishment").birth->form == Form::sum_times_exp);
}

TEST_CASE("parse errors carry positions") {
  auto err = [](const std::string& text) -> ParseError {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return e;
    }
    FAIL("no parse error for: " << text);
    return ParseError("", 0, 0);
  };
  const auto e1 = err("const m = 1;\ndeath = m +;");
  CHECK(e1.line() == 2);
  CHECK(e1.column() == 12);
  CHECK(std::string(err("death = q").what()).find("undeclared identifier 'q'") != std::string::npos);
  CHECK(std::string(err("kernel a gaussian(1); death = a(x-z)").what()).find("undeclared variable") !=
        std::string::npos);
  CHECK(std::string(err("const m = 1; const m = 2; death = m").what()).find("declared twice") !=
        std::string::npos);
  CHECK(std::string(err("const m = 1; death = m; death = m").what()).find("death declared twice") !=
        std::string::npos);
  CHECK(std::string(err("const m = 1;").what()).find("no death, birth or hop") != std::string::npos);
  CHECK(std::string(err("death = 1 $ 2").what()).find("unexpected character") != std::string::npos);
}

TEST_CASE("rates outside the supported family are rejected") {
  const std::string k = "kernel a tophat(1) scale eps; kernel b tophat(1) scale eps;";
  CHECK_THROWS_AS(parse(k + "death = sum[y in gamma] sum[u in gamma\\y] sum[v in gamma\\u] a(x-y)*a(y-u)*a(u-v)"),
                  ParseError);
  CHECK_THROWS_AS(parse(k + "death = exp(-sum[y in gamma] a(x-y)) * exp(sum[y in gamma] b(x-y))"), ParseError);
  CHECK_THROWS_AS(parse(k + "death = exp(-sum[y in gamma] a(x-y) * sum[u in gamma] b(x-u))"), ParseError);
  CHECK_THROWS_AS(parse(k + "death = sum[y in gamma] 2"), ParseError);
  CHECK_THROWS_AS(parse(k + "death = sum[y in gamma] a(x-y) * b(x-y)"), ParseError);
  CHECK_THROWS_AS(parse(k + "hop = sum[u in gamma] b(x-u)"), ParseError);
  CHECK_THROWS_AS(parse(k + "birth = a(x-x)"), ParseError);
  CHECK_NOTHROW(parse(k + "death = (1 + sum[y in gamma] a(x-y)) * 2"));
}

TEST_CASE("analyze_scaling reports the induced rules") {
  const ScalingReport r = analyze_scaling(parse(kBdlp));
  const std::vector<std::string> want = {"aminus -> eps*aminus", "aplus -> eps*aplus", "m fixed",
                                         "lambda -> eps^-1*lambda"};
  CHECK(r.rules == want);
  for (const auto& [part, order] : r.part_orders) CHECK(order == 0);

  const ScalingReport s = analyze_scaling(preset_spec("surgailis"));
  CHECK(s.rules == std::vector<std::string>{"m fixed", "sigma -> eps^-1*sigma"});
}

TEST_CASE("unbalanced scalings have no limit") {
  const auto contact_fixed = parse(
      "kernel a gaussian(0.5) scale eps; const m = 1; const lambda = 0.5;"
      "death = m; birth = lambda * sum[y in gamma] a(x-y)");
  try {
    analyze_scaling(contact_fixed);
    FAIL("expected a scaling error");
  } catch (const ScalingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("no Vlasov limit under declared scalings") != std::string::npos);
    CHECK(msg.find("birth") != std::string::npos);
    CHECK(msg.find("net eps-order 1") != std::string::npos);
  }
  CHECK_THROWS_AS(analyze_scaling(parse("kernel a gaussian(1); death = sum[y in gamma] a(x-y)")), ScalingError);
  CHECK_THROWS_AS(analyze_scaling(parse("kernel a gaussian(1); const m = 1;"
                                        "death = m + sum[y in gamma] a(x-y)")),
                  ScalingError);
  CHECK_THROWS_AS(analyze_scaling(parse("kernel a gaussian(1); death = exp(sum[y in gamma] a(x-y))")),
                  ScalingError);
  CHECK_THROWS_AS(derive_vlasov(contact_fixed), ScalingError);
}

TEST_CASE("scale substitutes eps") {
  const GeneratorSpec s = parse(kBdlp);
  const FiniteConfiguration g{{4.5, 0}, {5.2, 0}, {7.0, 0}};
  const Point x{5.0, 0};
  const GeneratorSpec h = scale(s, 0.5);
  const double sum_minus = 0.5 * (0.5 + 0.5);  // eps * tophat(1) height 1/2, two points within 1
  CHECK(rate(h, PartKind::death, x, g) == doctest::Approx(0.5 + sum_minus));
  double sum_plus = 0.0;
  for (const auto& p : g) sum_plus += std::exp(-(p.x - x.x) * (p.x - x.x) / 2) / std::sqrt(2 * M_PI);
  // total birth rate eps^-1 * lambda * sum(eps * aplus) = lambda * sum(aplus)
  CHECK(rate(h, PartKind::birth, x, g) == doctest::Approx(1.5 * sum_plus));

  const GeneratorSpec gl = scale(preset_spec("glauber_plus"), 0.1);
  const double phi_sum = 2 * 1.0;  // tophat(0.5) height 1, two points within 0.5
  const FiniteConfiguration g2{{4.8, 0}, {5.3, 0}, {8.0, 0}};
  CHECK(rate(gl, PartKind::birth, x, g2) == doctest::Approx(10.0 * std::exp(-0.1 * phi_sum)));
  CHECK_THROWS_AS(scale(s, 0.0), ScalingError);
  CHECK_THROWS_AS(scale(s, -1.0), ScalingError);
}

TEST_CASE("scale at eps = 1 is the identity on random inputs") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (const auto& p : presets()) {
    const GeneratorSpec s = parse(std::string(p.dsl));
    const GeneratorSpec t = scale(s, 1.0);
    for (int i = 0; i < 100; ++i) {
      std::vector<Point> pts;
      for (int k = 0; k < 6; ++k) pts.push_back({u(rng), 0});
      const FiniteConfiguration g(pts);
      const Point x{u(rng), 0}, y{u(rng), 0};
      for (PartKind part : {PartKind::death, PartKind::birth, PartKind::hop}) {
        CHECK(rate(s, part, x, g, y) == rate(t, part, x, g, y));
      }
    }
  }
}

TEST_CASE("k_coefficient examples") {
  const Point x{5.0, 0};
  const auto surg = preset_spec("surgailis");
  for (double eps : {1.0, 0.3, 0.01}) {
    CHECK(k_coefficient(surg, PartKind::death, x, {}, {}, eps) == doctest::Approx(1.0));
    CHECK(k_coefficient(surg, PartKind::death, x, {}, {{4.0, 0}}, eps) == 0.0);
    CHECK(k_coefficient(surg, PartKind::death, x, {}, {{4.0, 0}, {6.0, 0}}, eps) == 0.0);
  }
  const auto bdlp = parse(kBdlp);
  const Point u{5.4, 0};
  CHECK(k_coefficient(bdlp, PartKind::death, x, {}, {u}, 0.2) == doctest::Approx(0.2 * 0.5));

  // Glauber birth with the eps^-1 absorbed: z * e_lambda(exp(-eps phi) - 1, xi), brute force on |xi| <= 3
  const auto gl = preset_spec("glauber_plus");
  std::mt19937_64 rng(3);
  for (std::size_t n = 0; n <= 3; ++n) {
    const auto xi = near(rng, x, n);
    for (double eps : {0.5, 0.05}) {
      double want = 1.0;
      for (const auto& p : xi) {
        const double phi = std::abs(p.x - x.x) <= 0.5 ? 1.0 : 0.0;
        want *= std::exp(-eps * phi) - 1.0;
      }
      CHECK(k_coefficient(gl, PartKind::birth, x, {}, xi, eps) == doctest::Approx(want).epsilon(1e-12));
    }
  }
  std::vector<Point> many;
  for (int i = 0; i < 21; ++i) many.push_back({0.1 * i, 0});
  CHECK_THROWS_AS(k_coefficient(gl, PartKind::birth, x, {}, FiniteConfiguration(many), 0.5), SizeError);
}

TEST_CASE("vlasov_coefficient examples") {
  const Point x{5.0, 0};
  const auto gl = vlasov_coefficient(preset_spec("glauber_plus"), PartKind::birth, x);
  const FiniteConfiguration xi{{4.8, 0}, {5.3, 0}, {6.0, 0}};
  // -phi at the two points inside the tophat, 0 at the third
  CHECK(gl(xi) == 0.0);
  CHECK(gl({{4.8, 0}, {5.3, 0}}) == doctest::Approx(1.0));
  CHECK(gl({{4.8, 0}}) == doctest::Approx(-1.0));
  CHECK(gl({}) == doctest::Approx(1.0));

  const auto bd = vlasov_coefficient(parse(kBdlp), PartKind::death, x);
  CHECK(bd({}) == doctest::Approx(0.5));
  CHECK(bd({{5.5, 0}}) == doctest::Approx(0.5));
  CHECK(bd({{6.5, 0}}) == 0.0);
  CHECK(bd({{5.5, 0}, {4.5, 0}}) == 0.0);

  const auto c = vlasov_coefficient(parse("const alpha = 3; death = alpha"), PartKind::death, x);
  CHECK(c({}) == 3.0);
  CHECK(c({{1, 0}}) == 0.0);
}

TEST_CASE("limit consistency: eps^-|xi| K^-1 coefficient approaches the symbolic one linearly") {
  std::mt19937_64 rng(23);
  const Point x{5.0, 0}, y{5.3, 0};
  for (const auto& p : presets()) {
    const GeneratorSpec s = parse(std::string(p.dsl));
    for (PartKind part : {PartKind::death, PartKind::birth, PartKind::hop}) {
      if (!s.part(part)) continue;
      const std::optional<Point> yy = part == PartKind::hop ? std::optional<Point>(y) : std::nullopt;
      const auto V = vlasov_coefficient(s, part, x, yy);
      for (std::size_t n = 0; n <= 3; ++n) {
        const auto xi = near(rng, x, n, 0.2);
        const double v = V(xi);
        double err[2];
        int i = 0;
        for (double eps : {1e-2, 1e-3}) {
          const double k = k_coefficient(s, part, x, yy, xi, eps) / std::pow(eps, static_cast<double>(n));
          err[i++] = std::abs(k - v);
        }
        CAPTURE(p.name);
        CAPTURE(to_string(part));
        CAPTURE(n);
        // C fit from the first point bounds the second. Inclusion-exclusion over 2^n
        // subsets loses about 2^n ulps of the rate, amplified by eps^-n.
        const double floor =
            16.0 * std::ldexp(std::numeric_limits<double>::epsilon(), static_cast<int>(n)) *
                (1.0 + std::abs(v)) * std::pow(1e3, static_cast<double>(n)) + 1e-14;
        CHECK(err[1] <= std::max(err[0] / 1e-2 * 1e-3 * 1.5, floor));
      }
    }
  }
}

TEST_CASE("derive_vlasov reproduces the catalog") {
  for (const auto& p : presets()) {
    CAPTURE(p.name);
    CHECK(derive_vlasov(parse(std::string(p.dsl))).str() == p.equation);
  }
}

TEST_CASE("derive_vlasov emits a JSON tree") {
  const auto j = derive_vlasov(preset_spec("surgailis")).to_json();
  CHECK(j["op"] == "add");
  CHECK(j["terms"].size() == 2);
  CHECK(j["terms"][0]["factors"][0]["op"] == "num");
  CHECK(j["terms"][0]["factors"][1]["name"] == "m");
  CHECK(j["terms"][1]["factors"][0]["op"] == "const");
}

TEST_CASE("canonical form is idempotent and merges like terms") {
  const auto e = derive_vlasov(preset_spec("dieckmann_law"));
  CHECK(e.canonical().str() == e.str());
  const auto twice = derive_vlasov(parse("const m = 1; death = m + m"));
  CHECK(twice.str() == "-2*m*rho");
  const auto mixed = derive_vlasov(parse("kernel a tophat(1) scale eps; death = 2 * (3 + sum[y in gamma] a(x-y))"));
  CHECK(mixed.str() == "-6*rho - 2*rho*conv(a,rho)");
}

TEST_CASE("derived equations are linear in the generator") {
  const auto surg = preset_spec("surgailis");
  const auto contact = parse(
      "kernel a gaussian(0.5) scale eps; const m2 = 0.7; const lambda = 0.5 scale inveps;"
      "death = m2; birth = lambda * sum[y in gamma] a(x-y)");
  const auto both = parse(
      "kernel a gaussian(0.5) scale eps; const m = 1; const m2 = 0.7; const sigma = 2 scale inveps;"
      "const lambda = 0.5 scale inveps;"
      "death = m + m2; birth = sigma + lambda * sum[y in gamma] a(x-y)");
  DirectContext ctx(64, 10.0);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> rho(64);
    for (double& r : rho) r = u(rng);
    const auto a = evaluate(derive_vlasov(surg), rho, ctx);
    const auto b = evaluate(derive_vlasov(contact), rho, ctx);
    const auto c = evaluate(derive_vlasov(both), rho, ctx);
    for (std::size_t i = 0; i < rho.size(); ++i) CHECK(c[i] == doctest::Approx(a[i] + b[i]).epsilon(1e-12));
  }
}

TEST_CASE("field evaluation reports the failing node") {
  const auto e = derive_vlasov(preset_spec("glauber_minus"));
  DirectContext ctx(16, 10.0);
  std::vector<double> rho(16, 1e6);
  try {
    evaluate(e, rho, ctx);
    FAIL("expected a numerical fault");
  } catch (const NumericalFault& f) {
    CHECK(std::string(f.what()).find("exp") != std::string::npos);
  }
}

TEST_CASE("set_parameter overrides constants and kernel amplitudes") {
  auto s = preset_spec("dieckmann_law");
  s.set_parameter("aminus", 0.0);
  CHECK(s.kernel("aminus").kernel.mass(1) == 0.0);
  s.set_parameter("lambda", 2.0);
  CHECK(s.constant("lambda").value == 2.0);
  CHECK_THROWS_AS(s.set_parameter("nope", 1.0), ConfigError);
  CHECK_THROWS_AS(s.set_parameter("m", -1.0), ConfigError);
}
