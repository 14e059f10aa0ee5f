#include "vlasov/dsl.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <set>

#include "vlasov/error.hpp"

namespace vlasov::dsl {

std::string_view to_string(PartKind p) {
  switch (p) {
    case PartKind::death: return "death";
    case PartKind::birth: return "birth";
    case PartKind::hop: return "hop";
  }
  return "?";
}

std::string to_string(SourceLoc loc) {
  return std::to_string(loc.line) + ":" + std::to_string(loc.column);
}

std::string_view to_string(Form f) {
  switch (f) {
    case Form::constant: return "constant";
    case Form::kernel_factor: return "kernel_factor";
    case Form::linear_sum: return "linear_sum";
    case Form::exp_sum: return "exp_sum";
    case Form::pair_sum: return "pair_sum";
    case Form::sum_with_exp: return "sum_with_exp";
    case Form::sum_times_exp: return "sum_times_exp";
    case Form::composite: return "composite";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// GeneratorSpec

const Node* GeneratorSpec::part(PartKind p) const {
  const std::optional<Node>& n = p == PartKind::death ? death : p == PartKind::birth ? birth : hop;
  return n ? &*n : nullptr;
}

const KernelDecl& GeneratorSpec::kernel(const std::string& name) const {
  for (const auto& k : kernels) {
    if (k.name == name) return k;
  }
  throw Error("no kernel named '" + name + "'");
}

const ConstDecl& GeneratorSpec::constant(const std::string& name) const {
  for (const auto& c : constants) {
    if (c.name == name) return c;
  }
  throw Error("no constant named '" + name + "'");
}

bool GeneratorSpec::has_kernel(const std::string& name) const {
  return std::any_of(kernels.begin(), kernels.end(), [&](const auto& k) { return k.name == name; });
}

bool GeneratorSpec::has_constant(const std::string& name) const {
  return std::any_of(constants.begin(), constants.end(),
                     [&](const auto& c) { return c.name == name; });
}

void GeneratorSpec::set_parameter(const std::string& name, double value) {
  if (!std::isfinite(value)) throw ConfigError("parameter '" + name + "' must be finite");
  for (auto& c : constants) {
    if (c.name == name) {
      if (!(value > 0.0)) throw ConfigError("constant '" + name + "' must be positive");
      c.value = value;
      return;
    }
  }
  for (auto& k : kernels) {
    if (k.name == name) {
      k.kernel = k.kernel.with_amplitude(value);
      return;
    }
  }
  throw ConfigError("model has no constant or kernel named '" + name + "'");
}

double GeneratorSpec::constant_value(int decl) const {
  const ConstDecl& c = constants[static_cast<std::size_t>(decl)];
  return c.scaling == ConstScaling::inv_eps ? c.value / eps : c.value;
}

double GeneratorSpec::kernel_multiplier(int decl) const {
  return kernels[static_cast<std::size_t>(decl)].scaling == KernelScaling::eps ? eps : 1.0;
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok { ident, number, punct, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  double number = 0.0;
  SourceLoc loc;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : s_(text) {}

  Token next() {
    skip_space();
    Token t;
    t.loc = {line_, col_};
    if (pos_ >= s_.size()) return t;
    const char c = s_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
        advance();
      }
      t.kind = Tok::ident;
      t.text = s_.substr(start, pos_ - start);
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      t.number = std::strtod(begin, &end);
      if (end == begin) throw ParseError("malformed number", t.loc.line, t.loc.column);
      const auto len = static_cast<std::size_t>(end - begin);
      t.text = s_.substr(pos_, len);
      for (std::size_t i = 0; i < len; ++i) advance();
      t.kind = Tok::number;
      return t;
    }
    if (std::string_view(";=()[]+-*\\,").find(c) != std::string_view::npos) {
      advance();
      t.kind = Tok::punct;
      t.text = std::string(1, c);
      return t;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
  }

  // Raw text up to the next ',' or ')', trimmed; used for table paths.
  Token raw_path() {
    skip_space();
    Token t;
    t.loc = {line_, col_};
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ')' && s_[pos_] != ',' && s_[pos_] != '\n') advance();
    std::string text = s_.substr(start, pos_ - start);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
    if (text.empty()) throw ParseError("expected a table path", t.loc.line, t.loc.column);
    t.kind = Tok::ident;
    t.text = std::move(text);
    return t;
  }

 private:
  void advance() {
    if (s_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < s_.size()) {
      if (std::isspace(static_cast<unsigned char>(s_[pos_]))) {
        advance();
      } else if (s_[pos_] == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

const std::set<std::string, std::less<>> kReserved = {
    "kernel", "const", "scale",    "eps",         "inveps", "death", "birth",
    "hop",    "exp",   "sum",      "in",          "gamma",  "gaussian", "tophat",
    "exponential", "table", "x", "y"};

[[noreturn]] void fail(const std::string& what, SourceLoc loc) {
  throw ParseError(what, loc.line, loc.column);
}

[[noreturn]] void unsupported(const std::string& what, SourceLoc loc) {
  fail("rate form outside the supported family: " + what, loc);
}

// ---------------------------------------------------------------------------
// Structural helpers

bool is_constant_kind(const Node& n) {
  return n.kind == Node::Kind::number || n.kind == Node::Kind::constant ||
         n.kind == Node::Kind::inveps;
}

int sum_depth(const Node& n) {
  int inner = 0;
  for (const auto& c : n.children) inner = std::max(inner, sum_depth(c));
  return inner + (n.kind == Node::Kind::sum ? 1 : 0);
}

bool contains_kind(const Node& n, Node::Kind k, bool enter_exp) {
  for (const auto& c : n.children) {
    if (c.kind == k) return true;
    if (c.kind == Node::Kind::exp && !enter_exp) continue;
    if (contains_kind(c, k, enter_exp)) return true;
  }
  return false;
}

bool is_sum_form(Form f) {
  return f == Form::linear_sum || f == Form::pair_sum || f == Form::sum_with_exp;
}

void classify(Node& n) {
  for (auto& c : n.children) classify(c);
  switch (n.kind) {
    case Node::Kind::number:
    case Node::Kind::constant:
    case Node::Kind::inveps: n.form = Form::constant; break;
    case Node::Kind::kernel: n.form = Form::kernel_factor; break;
    case Node::Kind::exp: n.form = Form::exp_sum; break;
    case Node::Kind::sum: {
      const Node& s = n.children.front();
      if (contains_kind(s, Node::Kind::sum, false) || s.kind == Node::Kind::sum) {
        n.form = Form::pair_sum;
      } else if (contains_kind(s, Node::Kind::exp, true) || s.kind == Node::Kind::exp) {
        n.form = Form::sum_with_exp;
      } else {
        n.form = Form::linear_sum;
      }
      break;
    }
    case Node::Kind::add:
      n.form = std::all_of(n.children.begin(), n.children.end(),
                           [](const Node& c) { return c.form == Form::constant; })
                   ? Form::constant
                   : Form::composite;
      break;
    case Node::Kind::mul: {
      std::vector<Form> rest;
      for (const auto& c : n.children) {
        if (c.form != Form::constant) rest.push_back(c.form);
      }
      if (rest.empty()) {
        n.form = Form::constant;
      } else if (rest.size() == 1 && rest[0] != Form::kernel_factor) {
        n.form = rest[0];
      } else if (rest.size() == 2 &&
                 ((is_sum_form(rest[0]) && rest[1] == Form::exp_sum) ||
                  (is_sum_form(rest[1]) && rest[0] == Form::exp_sum))) {
        n.form = Form::sum_times_exp;
      } else {
        n.form = Form::composite;
      }
      break;
    }
  }
}

void collect_refs(const Node& n, std::set<int>& refs, std::set<int>& bound) {
  if (n.kind == Node::Kind::kernel) {
    refs.insert(n.from);
    refs.insert(n.to);
  }
  if (n.kind == Node::Kind::sum) {
    bound.insert(n.bound);
    refs.insert(n.excluded.begin(), n.excluded.end());
  }
  for (const auto& c : n.children) collect_refs(c, refs, bound);
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  Parser(const std::string& text, const Box& box, std::string base_dir)
      : lex_(text), base_dir_(std::move(base_dir)) {
    spec_.box = box;
    spec_.source = text;
    tok_ = lex_.next();
  }

  GeneratorSpec run() {
    bool seen_part = false;
    while (tok_.kind != Tok::end) {
      if (tok_.kind != Tok::ident) fail("expected a declaration or a rate part", tok_.loc);
      if (tok_.text == "kernel" || tok_.text == "const") {
        if (seen_part) fail("declarations must precede rate parts", tok_.loc);
        if (tok_.text == "kernel") kernel_decl(); else const_decl();
      } else if (tok_.text == "death" || tok_.text == "birth" || tok_.text == "hop") {
        part();
        seen_part = true;
      } else {
        fail("expected a declaration or a rate part, found '" + tok_.text + "'", tok_.loc);
      }
      if (tok_.kind == Tok::end) break;
      expect_punct(";");
    }
    if (!spec_.death && !spec_.birth && !spec_.hop) {
      fail("generator has no death, birth or hop part", tok_.loc);
    }
    return std::move(spec_);
  }

 private:
  void bump() { tok_ = lex_.next(); }

  bool at_punct(std::string_view p) const { return tok_.kind == Tok::punct && tok_.text == p; }
  bool at_ident(std::string_view w) const { return tok_.kind == Tok::ident && tok_.text == w; }

  void expect_punct(std::string_view p) {
    if (!at_punct(p)) {
      fail("expected '" + std::string(p) + "'" + found(), tok_.loc);
    }
    bump();
  }

  void expect_ident(std::string_view w) {
    if (!at_ident(w)) fail("expected '" + std::string(w) + "'" + found(), tok_.loc);
    bump();
  }

  std::string found() const {
    if (tok_.kind == Tok::end) return ", found end of input";
    return ", found '" + tok_.text + "'";
  }

  Token take_ident(const char* what) {
    if (tok_.kind != Tok::ident) fail(std::string("expected ") + what + found(), tok_.loc);
    Token t = tok_;
    bump();
    return t;
  }

  double take_number() {
    if (tok_.kind != Tok::number) fail("expected a number" + found(), tok_.loc);
    const double v = tok_.number;
    bump();
    return v;
  }

  void check_new_name(const Token& t) {
    if (kReserved.contains(t.text)) fail("'" + t.text + "' is a reserved word", t.loc);
    if (spec_.has_kernel(t.text) || spec_.has_constant(t.text)) {
      fail("identifier '" + t.text + "' declared twice", t.loc);
    }
  }

  void kernel_decl() {
    const SourceLoc loc = tok_.loc;
    bump();
    const Token name = take_ident("a kernel name");
    check_new_name(name);
    const Token shape = take_ident("a kernel profile");
    expect_punct("(");
    std::optional<Kernel> k;
    try {
      if (shape.text == "table") {
        const Token path = lex_.raw_path();
        tok_ = lex_.next();
        double amp = 1.0;
        if (at_punct(",")) {
          bump();
          amp = take_number();
        }
        std::filesystem::path p(path.text);
        if (p.is_relative() && !base_dir_.empty()) p = std::filesystem::path(base_dir_) / p;
        k = Kernel::table_from_file(p.string(), amp);
      } else {
        const double param = take_number();
        double amp = 1.0;
        if (at_punct(",")) {
          bump();
          amp = take_number();
        }
        if (shape.text == "gaussian") k = Kernel::gaussian(param, amp);
        else if (shape.text == "tophat") k = Kernel::tophat(param, amp);
        else if (shape.text == "exponential") k = Kernel::exponential(param, amp);
        else fail("unknown kernel profile '" + shape.text + "'", shape.loc);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      fail(e.what(), shape.loc);
    }
    expect_punct(")");
    KernelScaling scaling = KernelScaling::fixed;
    if (at_ident("scale")) {
      bump();
      expect_ident("eps");
      scaling = KernelScaling::eps;
    }
    spec_.kernels.push_back({name.text, *k, scaling, loc});
  }

  void const_decl() {
    const SourceLoc loc = tok_.loc;
    bump();
    const Token name = take_ident("a constant name");
    check_new_name(name);
    expect_punct("=");
    const SourceLoc vloc = tok_.loc;
    const double v = take_number();
    if (!(v > 0.0) || !std::isfinite(v)) fail("constant '" + name.text + "' must be positive", vloc);
    ConstScaling scaling = ConstScaling::fixed;
    if (at_ident("scale")) {
      bump();
      expect_ident("inveps");
      scaling = ConstScaling::inv_eps;
    }
    spec_.constants.push_back({name.text, v, scaling, loc});
  }

  void part() {
    const Token head = tok_;
    bump();
    expect_punct("=");
    PartKind kind = head.text == "death" ? PartKind::death
                    : head.text == "birth" ? PartKind::birth
                                           : PartKind::hop;
    std::optional<Node>& slot = kind == PartKind::death ? spec_.death
                                : kind == PartKind::birth ? spec_.birth
                                                          : spec_.hop;
    if (slot) fail(head.text + " declared twice", head.loc);
    part_ = kind;
    scope_ = {"x"};
    if (kind == PartKind::hop) scope_.push_back("y");
    Node n = expr();
    validate_part(n, kind);
    classify(n);
    slot = std::move(n);
  }

  Node expr() {
    Node add;
    add.kind = Node::Kind::add;
    add.loc = tok_.loc;
    int sign = 1;
    if (at_punct("-")) {
      sign = -1;
      bump();
    }
    add.children.push_back(term());
    add.signs.push_back(sign);
    while (at_punct("+") || at_punct("-")) {
      sign = at_punct("+") ? 1 : -1;
      bump();
      add.children.push_back(term());
      add.signs.push_back(sign);
    }
    if (add.children.size() == 1 && add.signs[0] == 1) return std::move(add.children[0]);
    return add;
  }

  Node term() {
    Node mul;
    mul.kind = Node::Kind::mul;
    mul.loc = tok_.loc;
    mul.children.push_back(factor());
    while (at_punct("*")) {
      bump();
      mul.children.push_back(factor());
    }
    if (mul.children.size() == 1) return std::move(mul.children[0]);
    return mul;
  }

  int slot_of(const Token& t) const {
    for (std::size_t i = 0; i < scope_.size(); ++i) {
      if (scope_[i] == t.text) return static_cast<int>(i);
    }
    return -1;
  }

  int variable(const Token& t) {
    const int s = slot_of(t);
    if (s < 0) fail("undeclared variable '" + t.text + "'", t.loc);
    return s;
  }

  Node factor() {
    Node n;
    n.loc = tok_.loc;
    if (tok_.kind == Tok::number) {
      n.kind = Node::Kind::number;
      n.number = tok_.number;
      bump();
      return n;
    }
    if (at_punct("(")) {
      bump();
      Node inner = expr();
      expect_punct(")");
      return inner;
    }
    if (tok_.kind != Tok::ident) fail("expected a factor" + found(), tok_.loc);
    const Token id = tok_;
    bump();
    if (id.text == "inveps") {
      n.kind = Node::Kind::inveps;
      return n;
    }
    if (id.text == "exp") {
      n.kind = Node::Kind::exp;
      expect_punct("(");
      if (at_punct("-")) {
        n.negated = true;
        bump();
      }
      n.children.push_back(expr());
      expect_punct(")");
      return n;
    }
    if (id.text == "sum") return sum(n);
    if (at_punct("(")) {
      if (!spec_.has_kernel(id.text)) {
        fail(spec_.has_constant(id.text) ? "'" + id.text + "' is a constant, not a kernel"
                                         : "undeclared kernel '" + id.text + "'",
             id.loc);
      }
      bump();
      const Token a = take_ident("a variable");
      expect_punct("-");
      const Token b = take_ident("a variable");
      expect_punct(")");
      n.kind = Node::Kind::kernel;
      n.name = id.text;
      n.from = variable(a);
      n.to = variable(b);
      if (n.from == n.to) fail("kernel '" + id.text + "' applied to a zero displacement", id.loc);
      n.decl = decl_index(spec_.kernels, id.text);
      return n;
    }
    if (spec_.has_constant(id.text)) {
      n.kind = Node::Kind::constant;
      n.name = id.text;
      n.decl = decl_index(spec_.constants, id.text);
      return n;
    }
    if (spec_.has_kernel(id.text)) fail("kernel '" + id.text + "' needs a displacement argument", id.loc);
    if (slot_of(id) >= 0) fail("variable '" + id.text + "' cannot be used as a value", id.loc);
    fail("undeclared identifier '" + id.text + "'", id.loc);
  }

  template <class Decls>
  static int decl_index(const Decls& decls, const std::string& name) {
    for (std::size_t i = 0; i < decls.size(); ++i) {
      if (decls[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }

  Node sum(Node n) {
    n.kind = Node::Kind::sum;
    expect_punct("[");
    const Token var = take_ident("a summation variable");
    if (kReserved.contains(var.text) && var.text != "x" && var.text != "y") {
      fail("'" + var.text + "' is a reserved word", var.loc);
    }
    if (slot_of(var) >= 0) fail("summation variable '" + var.text + "' shadows an outer variable", var.loc);
    if (spec_.has_kernel(var.text) || spec_.has_constant(var.text)) {
      fail("summation variable '" + var.text + "' clashes with a declaration", var.loc);
    }
    expect_ident("in");
    expect_ident("gamma");
    if (part_ != PartKind::birth) n.excluded.push_back(0);
    if (at_punct("\\")) {
      bump();
      const int ex = variable(take_ident("a variable"));
      if (std::find(n.excluded.begin(), n.excluded.end(), ex) == n.excluded.end()) {
        n.excluded.push_back(ex);
      }
    }
    expect_punct("]");
    if (static_cast<int>(scope_.size()) >= kMaxSlots) fail("sums nested too deeply", n.loc);
    n.name = var.text;
    n.bound = static_cast<int>(scope_.size());
    scope_.push_back(var.text);
    n.children.push_back(factor());
    scope_.pop_back();
    return n;
  }

  // ---- supported-family validation

  void validate_part(Node& n, PartKind kind) {
    if (sum_depth(n) > 2) unsupported("interaction sums nested more than two deep", n.loc);
    check_exp_count(n);
    for (const auto& t : additive_terms(n)) {
      int hop_links = 0;
      for (const Node* f : t.factors) {
        if (f->kind != Node::Kind::kernel) continue;
        const bool xy = (f->from == 0 && f->to == 1) || (f->from == 1 && f->to == 0);
        if (kind == PartKind::hop && xy) {
          ++hop_links;
        } else {
          unsupported("kernel '" + f->name + "' outside an interaction sum", f->loc);
        }
      }
      if (kind == PartKind::hop && hop_links != 1) {
        unsupported("every hop term needs exactly one jump kernel a(x-y)", n.loc);
      }
    }
    validate_node(n);
  }

  void check_exp_count(const Node& n) {
    for (const auto& t : additive_terms(n)) {
      const auto exps = std::count_if(t.factors.begin(), t.factors.end(),
                                      [](const Node* f) { return f->kind == Node::Kind::exp; });
      if (exps > 1) unsupported("more than one exponential factor in a term", n.loc);
    }
  }

  void validate_node(Node& n) {
    if (n.kind == Node::Kind::exp) validate_exp(n);
    if (n.kind == Node::Kind::sum) validate_sum(n);
    for (auto& c : n.children) validate_node(c);
  }

  void validate_exp(const Node& n) {
    const Node& arg = n.children.front();
    if (contains_kind(arg, Node::Kind::exp, true) || arg.kind == Node::Kind::exp) {
      unsupported("nested exponentials", n.loc);
    }
    for (const auto& t : additive_terms(arg)) {
      int sums = 0;
      for (const Node* f : t.factors) {
        if (f->kind == Node::Kind::sum) {
          ++sums;
          for (const auto& inner : additive_terms(f->children.front())) {
            int kernels = 0;
            for (const Node* g : inner.factors) {
              if (g->kind == Node::Kind::kernel) ++kernels;
              else if (!is_constant_kind(*g)) unsupported("exponent must be linear in the configuration", g->loc);
            }
            if (kernels != 1) unsupported("exponent must be a constant times a single kernel sum", f->loc);
          }
        } else if (!is_constant_kind(*f)) {
          unsupported("exponent must be linear in the configuration", f->loc);
        }
      }
      if (sums != 1) unsupported("exponent terms must each hold exactly one kernel sum", n.loc);
    }
  }

  void validate_sum(Node& n) {
    std::set<int> links;
    std::set<int> kernels;
    for (const auto& t : additive_terms(n.children.front())) {
      int tied = 0;
      for (const Node* f : t.factors) {
        if (f->kind != Node::Kind::kernel) continue;
        if (f->from != n.bound && f->to != n.bound) continue;
        ++tied;
        links.insert(f->from == n.bound ? f->to : f->from);
        kernels.insert(f->decl);
      }
      if (tied != 1) {
        unsupported("sum over '" + n.name + "' must be tied to an outer variable by exactly one kernel",
                    n.loc);
      }
    }
    n.link = links.size() == 1 ? *links.begin() : -1;
    n.link_kernels.assign(kernels.begin(), kernels.end());
  }

  Lexer lex_;
  std::string base_dir_;
  Token tok_;
  GeneratorSpec spec_;
  PartKind part_ = PartKind::death;
  std::vector<std::string> scope_;
};

}  // namespace

GeneratorSpec parse(const std::string& text, const Box& box, const std::string& base_dir) {
  return Parser(text, box, base_dir).run();
}

std::vector<ProductTerm> additive_terms(const Node& node) {
  switch (node.kind) {
    case Node::Kind::add: {
      std::vector<ProductTerm> out;
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        for (auto t : additive_terms(node.children[i])) {
          t.sign *= node.signs[i];
          out.push_back(std::move(t));
        }
      }
      return out;
    }
    case Node::Kind::mul: {
      std::vector<ProductTerm> out{ProductTerm{}};
      for (const auto& c : node.children) {
        const auto rhs = additive_terms(c);
        std::vector<ProductTerm> next;
        for (const auto& a : out) {
          for (const auto& b : rhs) {
            ProductTerm t{a.sign * b.sign, a.factors};
            t.factors.insert(t.factors.end(), b.factors.begin(), b.factors.end());
            next.push_back(std::move(t));
          }
        }
        out = std::move(next);
      }
      return out;
    }
    default:
      return {ProductTerm{1.0, {&node}}};
  }
}

std::vector<int> free_slots(const Node& node) {
  std::set<int> refs, bound;
  collect_refs(node, refs, bound);
  std::vector<int> out;
  for (int r : refs) {
    if (!bound.contains(r)) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scaling analysis

namespace {

[[noreturn]] void unbalanced(const std::string& what) {
  throw ScalingError("no Vlasov limit under declared scalings: " + what);
}

int annotate(Node& n, const GeneratorSpec& spec, PartKind part) {
  for (auto& c : n.children) annotate(c, spec, part);
  switch (n.kind) {
    case Node::Kind::number: n.order = 0; break;
    case Node::Kind::constant:
      n.order = spec.constants[static_cast<std::size_t>(n.decl)].scaling == ConstScaling::inv_eps ? -1 : 0;
      break;
    case Node::Kind::inveps: n.order = -1; break;
    case Node::Kind::kernel:
      n.order = spec.kernels[static_cast<std::size_t>(n.decl)].scaling == KernelScaling::eps ? 1 : 0;
      break;
    case Node::Kind::sum: n.order = n.children.front().order - 1; break;
    case Node::Kind::exp: {
      const int o = n.children.front().order;
      if (o != 0) {
        unbalanced("exponent at " + to_string(n.loc) + " in " + std::string(to_string(part)) +
                   " has eps-order " + std::to_string(o) + " (needs eps-scaled kernels, order 0)");
      }
      n.order = 0;
      break;
    }
    case Node::Kind::mul:
      n.order = 0;
      for (const auto& c : n.children) n.order += c.order;
      break;
    case Node::Kind::add: {
      n.order = n.children.front().order;
      for (std::size_t i = 1; i < n.children.size(); ++i) {
        if (n.children[i].order != n.order) {
          unbalanced("terms at " + to_string(n.children.front().loc) + " and " +
                     to_string(n.children[i].loc) + " in " + std::string(to_string(part)) +
                     " have eps-orders " + std::to_string(n.order) + " and " +
                     std::to_string(n.children[i].order));
        }
      }
      break;
    }
  }
  return n.order;
}

bool uses_inveps(const Node& n) {
  if (n.kind == Node::Kind::inveps) return true;
  return std::any_of(n.children.begin(), n.children.end(), uses_inveps);
}

}  // namespace

ScalingReport analyze_scaling(const GeneratorSpec& spec) {
  ScalingReport r{{}, {}, spec};
  GeneratorSpec& a = r.annotated;
  for (PartKind p : {PartKind::death, PartKind::birth, PartKind::hop}) {
    std::optional<Node>& n = p == PartKind::death ? a.death : p == PartKind::birth ? a.birth : a.hop;
    if (!n) continue;
    const int order = annotate(*n, a, p);
    const int net = p == PartKind::birth ? order + 1 : order;
    if (net != 0) {
      std::string what = std::string(to_string(p)) + " term at " + to_string(n->loc) +
                         " has net eps-order " + std::to_string(net);
      if (p == PartKind::birth) what += " after the structural eps^-1 of the birth scaling";
      unbalanced(what + " (expected 0)");
    }
    r.part_orders.emplace_back(p, net);
  }
  for (const auto& k : a.kernels) {
    r.rules.push_back(k.scaling == KernelScaling::eps ? k.name + " -> eps*" + k.name : k.name + " fixed");
  }
  for (const auto& c : a.constants) {
    r.rules.push_back(c.scaling == ConstScaling::inv_eps ? c.name + " -> eps^-1*" + c.name
                                                          : c.name + " fixed");
  }
  if ((a.birth && uses_inveps(*a.birth)) || (a.death && uses_inveps(*a.death)) ||
      (a.hop && uses_inveps(*a.hop))) {
    r.rules.push_back("1 -> eps^-1 (inveps prefactor)");
  }
  return r;
}

GeneratorSpec scale(const GeneratorSpec& spec, double eps) {
  if (!(eps > 0.0) || eps > 1.0 || !std::isfinite(eps)) {
    throw ScalingError("eps must lie in (0, 1], got " + std::to_string(eps));
  }
  GeneratorSpec out = analyze_scaling(spec).annotated;
  out.eps *= eps;
  return out;
}

// ---------------------------------------------------------------------------
// Numerical evaluation

void PointSet::for_each_near(const Point&, double,
                             const std::function<void(std::size_t)>& visit) const {
  for (std::size_t i = 0; i < size(); ++i) visit(i);
}

double evaluate(const GeneratorSpec& spec, const Node& node, Env& env, const PointSet& gamma,
                EvalOptions opts) {
  switch (node.kind) {
    case Node::Kind::number: return node.number;
    case Node::Kind::constant: return spec.constant_value(node.decl);
    case Node::Kind::inveps: return 1.0 / spec.eps;
    case Node::Kind::kernel: {
      const Kernel& k = spec.kernels[static_cast<std::size_t>(node.decl)].kernel;
      const double r = spec.box.distance(env[static_cast<std::size_t>(node.from)].pos,
                                         env[static_cast<std::size_t>(node.to)].pos);
      const int d = spec.box.dim();
      return spec.kernel_multiplier(node.decl) * (opts.truncate ? k.truncated_value(r, d) : k.value(r, d));
    }
    case Node::Kind::sum: {
      const Node& summand = node.children.front();
      Binding& b = env[static_cast<std::size_t>(node.bound)];
      double acc = 0.0;
      auto visit = [&](std::size_t i) {
        for (int ex : node.excluded) {
          if (env[static_cast<std::size_t>(ex)].index == static_cast<long>(i)) return;
        }
        b = {gamma.point(i), static_cast<long>(i)};
        acc += evaluate(spec, summand, env, gamma, opts);
      };
      if (opts.truncate && node.link >= 0) {
        double radius = 0.0;
        for (int k : node.link_kernels) {
          radius = std::max(radius, spec.kernels[static_cast<std::size_t>(k)].kernel.cutoff(spec.box.dim()));
        }
        gamma.for_each_near(env[static_cast<std::size_t>(node.link)].pos, radius, visit);
      } else {
        for (std::size_t i = 0; i < gamma.size(); ++i) visit(i);
      }
      return acc;
    }
    case Node::Kind::exp: {
      const double a = evaluate(spec, node.children.front(), env, gamma, opts);
      return std::exp(node.negated ? -a : a);
    }
    case Node::Kind::add: {
      double acc = 0.0;
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        acc += node.signs[i] * evaluate(spec, node.children[i], env, gamma, opts);
      }
      return acc;
    }
    case Node::Kind::mul: {
      double acc = 1.0;
      for (const auto& c : node.children) {
        acc *= evaluate(spec, c, env, gamma, opts);
        if (acc == 0.0) break;
      }
      return acc;
    }
  }
  return 0.0;
}

double rate(const GeneratorSpec& spec, PartKind part, const Point& x, const FiniteConfiguration& rest,
            const std::optional<Point>& y) {
  const Node* n = spec.part(part);
  if (!n) return 0.0;
  if (part == PartKind::hop && !y) throw Error("hop rate needs an arrival point");
  SpanPointSet set(rest.points());
  Env env{};
  env[0] = {x, -1};
  if (part == PartKind::hop) env[1] = {*y, -1};
  return evaluate(spec, *n, env, set);
}

double k_coefficient(const GeneratorSpec& spec, PartKind part, const Point& x,
                     const std::optional<Point>& y, const FiniteConfiguration& xi, double eps) {
  if (xi.size() > kMaxCoefficientCardinality) {
    throw SizeError("k_coefficient: |xi| = " + std::to_string(xi.size()) + " exceeds the cap of " +
                    std::to_string(kMaxCoefficientCardinality));
  }
  const GeneratorSpec scaled = scale(spec, eps);
  const double factor = part == PartKind::birth ? scaled.eps : 1.0;
  ConfigFunction F{[&](const FiniteConfiguration& eta) { return factor * rate(scaled, part, x, eta, y); },
                   std::nullopt};
  return k_inverse(F, xi);
}

// ---------------------------------------------------------------------------
// Symbolic limit coefficients

namespace {

double volterra(const GeneratorSpec& spec, const Node& n, Env& env, std::span<const Point> xi,
                std::uint32_t mask);

double volterra_product(const GeneratorSpec& spec, const Node& n, std::size_t from, Env& env,
                        std::span<const Point> xi, std::uint32_t mask) {
  if (from == n.children.size()) return mask == 0 ? 1.0 : 0.0;
  double acc = 0.0;
  for (std::uint32_t sub = mask;; sub = (sub - 1) & mask) {
    const double head = volterra(spec, n.children[from], env, xi, sub);
    if (head != 0.0) acc += head * volterra_product(spec, n, from + 1, env, xi, mask & ~sub);
    if (sub == 0) break;
  }
  return acc;
}

double volterra(const GeneratorSpec& spec, const Node& n, Env& env, std::span<const Point> xi,
                std::uint32_t mask) {
  switch (n.kind) {
    case Node::Kind::number: return mask ? 0.0 : n.number;
    case Node::Kind::constant:
      return mask ? 0.0 : spec.constants[static_cast<std::size_t>(n.decl)].value;
    case Node::Kind::inveps: return mask ? 0.0 : 1.0;
    case Node::Kind::kernel: {
      if (mask) return 0.0;
      const double r = spec.box.distance(env[static_cast<std::size_t>(n.from)].pos,
                                         env[static_cast<std::size_t>(n.to)].pos);
      return spec.kernels[static_cast<std::size_t>(n.decl)].kernel.value(r, spec.box.dim());
    }
    case Node::Kind::sum: {
      double acc = 0.0;
      for (std::size_t p = 0; p < xi.size(); ++p) {
        if (!(mask >> p & 1U)) continue;
        env[static_cast<std::size_t>(n.bound)] = {xi[p], static_cast<long>(p)};
        acc += volterra(spec, n.children.front(), env, xi, mask & ~(1U << p));
      }
      return acc;
    }
    case Node::Kind::exp: {
      const double s = n.negated ? -1.0 : 1.0;
      const Node& arg = n.children.front();
      double acc = std::exp(s * volterra(spec, arg, env, xi, 0));
      for (std::size_t p = 0; p < xi.size() && acc != 0.0; ++p) {
        if (mask >> p & 1U) acc *= s * volterra(spec, arg, env, xi, 1U << p);
      }
      return acc;
    }
    case Node::Kind::add: {
      double acc = 0.0;
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        acc += n.signs[i] * volterra(spec, n.children[i], env, xi, mask);
      }
      return acc;
    }
    case Node::Kind::mul: return volterra_product(spec, n, 0, env, xi, mask);
  }
  return 0.0;
}

}  // namespace

VlasovCoefficient::VlasovCoefficient(std::shared_ptr<const GeneratorSpec> spec, PartKind part,
                                     Point x, std::optional<Point> y)
    : spec_(std::move(spec)), part_(part), x_(x), y_(y) {
  if (part_ == PartKind::hop && !y_) throw Error("hop coefficient needs an arrival point");
}

double VlasovCoefficient::operator()(const FiniteConfiguration& xi) const {
  if (xi.size() > kMaxSubsetCardinality) {
    throw SizeError("vlasov coefficient: |xi| = " + std::to_string(xi.size()) +
                    " exceeds the cap of " + std::to_string(kMaxSubsetCardinality));
  }
  const Node* n = spec_->part(part_);
  if (!n) return 0.0;
  Env env{};
  env[0] = {x_, -1};
  if (y_) env[1] = {*y_, -1};
  const auto mask = static_cast<std::uint32_t>((std::uint64_t{1} << xi.size()) - 1);
  return volterra(*spec_, *n, env, xi.points(), mask);
}

VlasovCoefficient vlasov_coefficient(const GeneratorSpec& spec, PartKind part, const Point& x,
                                     const std::optional<Point>& y) {
  auto annotated = std::make_shared<GeneratorSpec>(analyze_scaling(spec).annotated);
  annotated->eps = 1.0;
  return VlasovCoefficient(std::move(annotated), part, x, y);
}

}  // namespace vlasov::dsl
