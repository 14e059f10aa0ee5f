#include "vlasov/field_expr.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vlasov/error.hpp"

namespace vlasov {

FieldAtom FieldAtom::rho() { return FieldAtom{}; }

FieldAtom FieldAtom::mass(std::string name, std::shared_ptr<const Kernel> k) {
  FieldAtom a;
  a.kind = Kind::mass;
  a.kernel_name = std::move(name);
  a.kernel = std::move(k);
  return a;
}

FieldAtom FieldAtom::conv(std::string name, std::shared_ptr<const Kernel> k, FieldExpr arg) {
  FieldAtom a;
  a.kind = Kind::conv;
  a.kernel_name = std::move(name);
  a.kernel = std::move(k);
  a.arg = std::make_shared<const FieldExpr>(std::move(arg));
  return a;
}

FieldAtom FieldAtom::exp(FieldExpr arg) {
  FieldAtom a;
  a.kind = Kind::exp;
  a.arg = std::make_shared<const FieldExpr>(std::move(arg));
  return a;
}

std::string FieldAtom::str() const {
  switch (kind) {
    case Kind::rho: return "rho";
    case Kind::mass: return "mass(" + kernel_name + ")";
    case Kind::conv: return "conv(" + kernel_name + "," + arg->str() + ")";
    case Kind::exp: return "exp(" + arg->str() + ")";
  }
  return {};
}

namespace {

int degree(const FieldAtom& a) {
  if (a.kind == FieldAtom::Kind::rho) return 1;
  if (a.kind != FieldAtom::Kind::conv) return 0;
  int d = 0;
  for (const auto& t : a.arg->terms()) d = std::max(d, t.rho_degree());
  return d;
}

int rank(FieldAtom::Kind k) {
  switch (k) {
    case FieldAtom::Kind::mass: return 0;
    case FieldAtom::Kind::rho: return 1;
    case FieldAtom::Kind::conv: return 2;
    case FieldAtom::Kind::exp: return 3;
  }
  return 4;
}

bool atom_less(const FieldAtom& a, const FieldAtom& b) {
  if (rank(a.kind) != rank(b.kind)) return rank(a.kind) < rank(b.kind);
  if (a.kernel_name != b.kernel_name) return a.kernel_name < b.kernel_name;
  return a.str() < b.str();
}

std::vector<FieldTerm> product(const std::vector<FieldTerm>& lhs, const std::vector<FieldTerm>& rhs) {
  std::vector<FieldTerm> out;
  for (const auto& a : lhs) {
    for (const auto& b : rhs) {
      FieldTerm t = a;
      t.coef *= b.coef;
      t.consts.insert(t.consts.end(), b.consts.begin(), b.consts.end());
      t.atoms.insert(t.atoms.end(), b.atoms.begin(), b.atoms.end());
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::vector<FieldTerm> expand_atom(const FieldAtom& a) {
  switch (a.kind) {
    case FieldAtom::Kind::rho:
    case FieldAtom::Kind::mass: return {FieldTerm{1.0, {}, {a}}};
    case FieldAtom::Kind::exp: return {FieldTerm{1.0, {}, {FieldAtom::exp(a.arg->canonical(false))}}};
    case FieldAtom::Kind::conv: {
      std::vector<FieldTerm> out;
      const FieldExpr inner = a.arg->canonical(false);
      for (const auto& u : inner.terms()) {
        FieldTerm t{u.coef, u.consts, {}};
        if (u.atoms.empty()) {
          t.atoms.push_back(FieldAtom::mass(a.kernel_name, a.kernel));
        } else {
          t.atoms.push_back(
              FieldAtom::conv(a.kernel_name, a.kernel, FieldExpr({FieldTerm{1.0, {}, u.atoms}})));
        }
        out.push_back(std::move(t));
      }
      return out;
    }
  }
  return {};
}

std::string const_key(const FieldTerm& t) {
  std::string key;
  for (const auto& c : t.consts) key += c.name + "*";
  return key;
}

}  // namespace

int FieldTerm::rho_degree() const {
  int d = 0;
  for (const auto& a : atoms) d += degree(a);
  return d;
}

std::string FieldTerm::body() const {
  std::vector<std::string> parts;
  const double c = std::abs(coef);
  if (c != 1.0 || (consts.empty() && atoms.empty())) parts.push_back(format_number(c));
  for (const auto& k : consts) parts.push_back(k.name);
  for (const auto& a : atoms) parts.push_back(a.str());
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "*" : "") + parts[i];
  return out;
}

FieldExpr::FieldExpr(std::vector<FieldTerm> terms) : terms_(std::move(terms)) {}

FieldExpr FieldExpr::constant(double c) { return FieldExpr({FieldTerm{c, {}, {}}}); }

FieldExpr FieldExpr::atom(FieldAtom a) { return FieldExpr({FieldTerm{1.0, {}, {std::move(a)}}}); }

FieldExpr FieldExpr::operator+(const FieldExpr& o) const {
  std::vector<FieldTerm> t = terms_;
  t.insert(t.end(), o.terms_.begin(), o.terms_.end());
  return FieldExpr(std::move(t));
}

FieldExpr FieldExpr::canonical(bool grouped) const {
  std::vector<FieldTerm> expanded;
  for (const auto& t : terms_) {
    std::vector<FieldTerm> acc{FieldTerm{t.coef, t.consts, {}, grouped ? t.group : TermGroup::constant_loss}};
    for (const auto& a : t.atoms) acc = product(acc, expand_atom(a));
    expanded.insert(expanded.end(), acc.begin(), acc.end());
  }

  std::vector<FieldTerm> merged;
  std::map<std::string, std::size_t> index;
  for (auto& t : expanded) {
    std::sort(t.consts.begin(), t.consts.end(),
              [](const auto& a, const auto& b) { return a.name < b.name; });
    std::sort(t.atoms.begin(), t.atoms.end(), atom_less);
    std::string key = std::to_string(static_cast<int>(t.group)) + "|" + const_key(t) + "|";
    for (const auto& a : t.atoms) key += a.str() + "*";
    if (auto it = index.find(key); it != index.end()) {
      merged[it->second].coef += t.coef;
    } else {
      index.emplace(key, merged.size());
      merged.push_back(std::move(t));
    }
  }
  std::erase_if(merged, [](const FieldTerm& t) { return t.coef == 0.0; });

  std::stable_sort(merged.begin(), merged.end(), [](const FieldTerm& a, const FieldTerm& b) {
    if (a.group != b.group) return a.group < b.group;
    if (a.rho_degree() != b.rho_degree()) return a.rho_degree() < b.rho_degree();
    return a.body() < b.body();
  });
  return FieldExpr(std::move(merged));
}

std::string FieldExpr::str() const {
  if (terms_.empty()) return "0";
  std::string out;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const bool neg = terms_[i].coef < 0.0;
    if (i == 0) out += neg ? "-" : "";
    else out += neg ? " - " : " + ";
    out += terms_[i].body();
  }
  return out;
}

namespace {

nlohmann::json atom_json(const FieldAtom& a) {
  switch (a.kind) {
    case FieldAtom::Kind::rho: return {{"op", "rho"}};
    case FieldAtom::Kind::mass:
      return {{"op", "mass"}, {"kernel", a.kernel_name}, {"profile", a.kernel->describe()}};
    case FieldAtom::Kind::conv:
      return {{"op", "conv"}, {"kernel", a.kernel_name}, {"profile", a.kernel->describe()},
              {"arg", a.arg->to_json()}};
    case FieldAtom::Kind::exp: return {{"op", "exp"}, {"arg", a.arg->to_json()}};
  }
  return {};
}

}  // namespace

nlohmann::json FieldExpr::to_json() const {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : terms_) {
    nlohmann::json factors = nlohmann::json::array();
    if (t.coef != 1.0) factors.push_back({{"op", "num"}, {"value", t.coef}});
    for (const auto& c : t.consts) factors.push_back({{"op", "const"}, {"name", c.name}, {"value", c.value}});
    for (const auto& a : t.atoms) factors.push_back(atom_json(a));
    terms.push_back({{"op", "mul"}, {"factors", std::move(factors)}});
  }
  return {{"op", "add"}, {"terms", std::move(terms)}};
}

namespace {

void check_finite(const std::vector<double>& v, const std::string& path) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericalFault("non-finite value at " + path + " (grid index " + std::to_string(i) + ")");
    }
  }
}

std::string label(const FieldAtom& a) {
  switch (a.kind) {
    case FieldAtom::Kind::rho: return "rho";
    case FieldAtom::Kind::mass: return "mass(" + a.kernel_name + ")";
    case FieldAtom::Kind::conv: return "conv(" + a.kernel_name + ")";
    case FieldAtom::Kind::exp: return "exp";
  }
  return {};
}

std::vector<double> eval_expr(const FieldExpr& e, const std::vector<double>& rho, FieldContext& ctx,
                              const std::string& path);

std::vector<double> eval_atom(const FieldAtom& a, const std::vector<double>& rho, FieldContext& ctx,
                              const std::string& path) {
  switch (a.kind) {
    case FieldAtom::Kind::rho: return rho;
    case FieldAtom::Kind::mass: return std::vector<double>(ctx.size(), ctx.mass(a.kernel_name, *a.kernel));
    case FieldAtom::Kind::conv:
      return ctx.convolve(a.kernel_name, *a.kernel, eval_expr(*a.arg, rho, ctx, path));
    case FieldAtom::Kind::exp: {
      auto v = eval_expr(*a.arg, rho, ctx, path);
      for (double& x : v) x = std::exp(x);
      return v;
    }
  }
  return {};
}

std::vector<double> eval_expr(const FieldExpr& e, const std::vector<double>& rho, FieldContext& ctx,
                              const std::string& path) {
  std::vector<double> out(ctx.size(), 0.0);
  const auto& terms = e.terms();
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const FieldTerm& t = terms[i];
    const std::string tpath = path + "term[" + std::to_string(i) + "]";
    double scalar = t.coef;
    for (const auto& c : t.consts) scalar *= c.value;
    std::vector<double> v(ctx.size(), scalar);
    for (const auto& a : t.atoms) {
      const std::string apath = tpath + "/" + label(a) + "/";
      const auto av = eval_atom(a, rho, ctx, apath);
      check_finite(av, apath);
      for (std::size_t j = 0; j < v.size(); ++j) v[j] *= av[j];
    }
    check_finite(v, tpath);
    for (std::size_t j = 0; j < v.size(); ++j) out[j] += v[j];
  }
  return out;
}

}  // namespace

std::vector<double> evaluate(const FieldExpr& expr, const std::vector<double>& rho, FieldContext& ctx) {
  if (rho.size() != ctx.size()) throw Error("density size does not match the evaluation grid");
  auto out = eval_expr(expr, rho, ctx, "");
  check_finite(out, "result");
  return out;
}

}  // namespace vlasov
