#include "vlasov/derive.hpp"

#include <map>

#include "vlasov/error.hpp"

namespace vlasov::dsl {

namespace {

struct Link {
  int decl;
  int a;
  int b;
};

// A product whose field factors are attached to the variable they are evaluated at.
struct LocatedTerm {
  double coef = 1.0;
  std::vector<NamedConstant> consts;
  std::map<int, std::vector<FieldAtom>> at;
  std::vector<Link> links;
};

using LocatedPoly = std::vector<LocatedTerm>;

class Compiler {
 public:
  explicit Compiler(const GeneratorSpec& spec) : spec_(spec) {
    for (const auto& k : spec.kernels) kernels_.push_back(std::make_shared<const Kernel>(k.kernel));
  }

  LocatedPoly compile(const Node& n) {
    switch (n.kind) {
      case Node::Kind::number: {
        LocatedTerm t;
        t.coef = n.number;
        return {t};
      }
      case Node::Kind::inveps: return {LocatedTerm{}};
      case Node::Kind::constant: {
        LocatedTerm t;
        t.consts.push_back({n.name, spec_.constants[static_cast<std::size_t>(n.decl)].value});
        return {t};
      }
      case Node::Kind::kernel: {
        LocatedTerm t;
        t.links.push_back({n.decl, n.from, n.to});
        return {t};
      }
      case Node::Kind::add: {
        LocatedPoly out;
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          for (auto t : compile(n.children[i])) {
            t.coef *= n.signs[i];
            out.push_back(std::move(t));
          }
        }
        return out;
      }
      case Node::Kind::mul: {
        LocatedPoly out{LocatedTerm{}};
        for (const auto& c : n.children) out = product(out, compile(c));
        return out;
      }
      case Node::Kind::sum: return sum(n);
      case Node::Kind::exp: return exp(n);
    }
    return {};
  }

  const std::shared_ptr<const Kernel>& kernel(int decl) const {
    return kernels_[static_cast<std::size_t>(decl)];
  }
  const std::string& kernel_name(int decl) const {
    return spec_.kernels[static_cast<std::size_t>(decl)].name;
  }

  FieldAtom conv(int decl, std::vector<FieldAtom> atoms) const {
    return FieldAtom::conv(kernel_name(decl), kernel(decl), FieldExpr({FieldTerm{1.0, {}, std::move(atoms)}}));
  }

 private:
  static LocatedPoly product(const LocatedPoly& lhs, const LocatedPoly& rhs) {
    LocatedPoly out;
    for (const auto& a : lhs) {
      for (const auto& b : rhs) {
        LocatedTerm t = a;
        t.coef *= b.coef;
        t.consts.insert(t.consts.end(), b.consts.begin(), b.consts.end());
        for (const auto& [slot, atoms] : b.at) {
          auto& dst = t.at[slot];
          dst.insert(dst.end(), atoms.begin(), atoms.end());
        }
        t.links.insert(t.links.end(), b.links.begin(), b.links.end());
        out.push_back(std::move(t));
      }
    }
    return out;
  }

  LocatedPoly sum(const Node& n) {
    LocatedPoly out;
    for (auto t : compile(n.children.front())) {
      auto it = std::find_if(t.links.begin(), t.links.end(),
                             [&](const Link& l) { return l.a == n.bound || l.b == n.bound; });
      if (it == t.links.end()) throw UnsupportedForm("sum over '" + n.name + "' has no kernel tie");
      const Link link = *it;
      t.links.erase(it);
      const int outer = link.a == n.bound ? link.b : link.a;
      std::vector<FieldAtom> inner{FieldAtom::rho()};
      if (auto f = t.at.find(n.bound); f != t.at.end()) {
        inner.insert(inner.end(), f->second.begin(), f->second.end());
        t.at.erase(f);
      }
      t.at[outer].push_back(conv(link.decl, std::move(inner)));
      out.push_back(std::move(t));
    }
    return out;
  }

  LocatedPoly exp(const Node& n) {
    std::vector<FieldTerm> terms;
    int slot = -1;
    for (const auto& t : compile(n.children.front())) {
      if (!t.links.empty()) throw UnsupportedForm("kernel outside a sum inside an exponent");
      FieldTerm ft{n.negated ? -t.coef : t.coef, t.consts, {}};
      for (const auto& [s, atoms] : t.at) {
        if (atoms.empty()) continue;
        if (slot >= 0 && s != slot) throw UnsupportedForm("exponent evaluated at two different points");
        slot = s;
        ft.atoms.insert(ft.atoms.end(), atoms.begin(), atoms.end());
      }
      terms.push_back(std::move(ft));
    }
    if (slot < 0) throw UnsupportedForm("exponential of a constant");
    LocatedTerm t;
    t.at[slot].push_back(FieldAtom::exp(FieldExpr(std::move(terms))));
    return {t};
  }

  const GeneratorSpec& spec_;
  std::vector<std::shared_ptr<const Kernel>> kernels_;
};

std::vector<FieldAtom> atoms_at(const LocatedTerm& t, int slot) {
  auto it = t.at.find(slot);
  return it == t.at.end() ? std::vector<FieldAtom>{} : it->second;
}

void check_slots(const LocatedTerm& t, std::initializer_list<int> allowed, PartKind part) {
  for (const auto& [slot, atoms] : t.at) {
    if (atoms.empty()) continue;
    if (std::find(allowed.begin(), allowed.end(), slot) == allowed.end()) {
      throw UnsupportedForm(std::string(to_string(part)) + " rate has a factor at an unbound point");
    }
  }
}

}  // namespace

FieldExpr derive_vlasov(const GeneratorSpec& spec) {
  const GeneratorSpec annotated = analyze_scaling(spec).annotated;
  Compiler c(annotated);
  std::vector<FieldTerm> terms;

  if (annotated.death) {
    for (const auto& t : c.compile(*annotated.death)) {
      if (!t.links.empty()) throw UnsupportedForm("death rate has a kernel outside a sum");
      check_slots(t, {0}, PartKind::death);
      std::vector<FieldAtom> atoms{FieldAtom::rho()};
      const auto at = atoms_at(t, 0);
      atoms.insert(atoms.end(), at.begin(), at.end());
      terms.push_back({-t.coef, t.consts, std::move(atoms),
                       at.empty() ? TermGroup::constant_loss : TermGroup::interaction_loss});
    }
  }

  if (annotated.birth) {
    for (const auto& t : c.compile(*annotated.birth)) {
      if (!t.links.empty()) throw UnsupportedForm("birth rate has a kernel outside a sum");
      check_slots(t, {0}, PartKind::birth);
      terms.push_back({t.coef, t.consts, atoms_at(t, 0), TermGroup::birth_gain});
    }
  }

  if (annotated.hop) {
    for (const auto& t : c.compile(*annotated.hop)) {
      if (t.links.size() != 1) throw UnsupportedForm("hop term needs exactly one jump kernel");
      check_slots(t, {0, 1}, PartKind::hop);
      const int a = t.links.front().decl;
      const auto dep = atoms_at(t, 0);
      const auto arr = atoms_at(t, 1);

      std::vector<FieldAtom> moved{FieldAtom::rho()};
      moved.insert(moved.end(), dep.begin(), dep.end());
      std::vector<FieldAtom> gain = arr;
      gain.push_back(c.conv(a, std::move(moved)));
      terms.push_back({t.coef, t.consts, std::move(gain), TermGroup::hop_gain});

      std::vector<FieldAtom> loss{FieldAtom::rho()};
      loss.insert(loss.end(), dep.begin(), dep.end());
      loss.push_back(c.conv(a, arr));
      terms.push_back({-t.coef, t.consts, std::move(loss), TermGroup::hop_loss});
    }
  }

  return FieldExpr(std::move(terms)).canonical(true);
}

}  // namespace vlasov::dsl
