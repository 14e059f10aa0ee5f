#pragma once

// Generator description language: rates of death, birth and hopping built
// from constants, kernel sums and exponentials of kernel sums.
//
//   spec    := (decl ";")* (part ";")+
//   decl    := "kernel" IDENT profile ["scale" "eps"]
//            | "const" IDENT "=" NUMBER ["scale" "inveps"]
//   profile := ("gaussian" | "tophat" | "exponential") "(" NUMBER ["," NUMBER] ")"
//            | "table" "(" PATH ["," NUMBER] ")"
//   part    := ("death" | "birth" | "hop") "=" expr
//   expr    := ["-"] term (("+" | "-") term)*
//   term    := factor ("*" factor)*
//   factor  := NUMBER | IDENT | IDENT "(" IDENT "-" IDENT ")" | "inveps"
//            | "exp" "(" ["-"] expr ")" | "sum" "[" IDENT "in" domain "]" factor
//            | "(" expr ")"
//   domain  := "gamma" | "gamma" "\" IDENT
//
// The optional second profile number is the kernel amplitude (its integral).
// Free variables: x in death and birth, x (departure) and y (arrival) in hop.

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vlasov/config.hpp"
#include "vlasov/kernel.hpp"

namespace vlasov::dsl {

enum class PartKind { death, birth, hop };
std::string_view to_string(PartKind p);

enum class KernelScaling { fixed, eps };
enum class ConstScaling { fixed, inv_eps };

struct SourceLoc {
  int line = 0;
  int column = 0;
};
std::string to_string(SourceLoc loc);

struct KernelDecl {
  std::string name;
  Kernel kernel;
  KernelScaling scaling = KernelScaling::fixed;
  SourceLoc loc;
};

struct ConstDecl {
  std::string name;
  double value = 0.0;
  ConstScaling scaling = ConstScaling::fixed;
  SourceLoc loc;
};

/// Which rate shape a node realizes. Sums, exponentials and their
/// combinations map onto the six limit rules of the symbolic compiler.
enum class Form {
  constant,       // alpha
  kernel_factor,  // k(p - q) between variables already in scope
  linear_sum,     // sum_y f(x - y)
  exp_sum,        // exp(+-sum_y f(x - y))
  pair_sum,       // sum_y f(x - y) * sum_u g(y - u)
  sum_with_exp,   // sum_y f(x - y) exp(sum_u g(y - u))
  sum_times_exp,  // (sum_y f(x - y)) exp(sum_u g(x - u))
  composite,      // sums and products of the above
};
std::string_view to_string(Form f);

/// Variable slots: 0 = x, 1 = y in hop parts, then one slot per enclosing sum.
inline constexpr int kMaxSlots = 8;

struct Node {
  enum class Kind { number, constant, inveps, kernel, sum, exp, add, mul };

  Kind kind = Kind::number;
  double number = 0.0;
  std::string name;  // constant or kernel name, or the bound variable of a sum
  int decl = -1;     // index into GeneratorSpec::constants or ::kernels
  int from = -1;     // kernel: k(slot from - slot to)
  int to = -1;
  int bound = -1;              // sum: slot of the bound variable
  std::vector<int> excluded;   // sum: slots removed from gamma
  int link = -1;               // sum: outer slot every addend is tied to by a kernel, or -1
  std::vector<int> link_kernels;
  bool negated = false;        // exp(-...)
  std::vector<Node> children;  // add/mul operands, sum summand, exp argument
  std::vector<int> signs;      // add: +1 / -1 per child
  SourceLoc loc;
  Form form = Form::constant;
  int order = 0;  // eps-order, filled by analyze_scaling
};

struct GeneratorSpec {
  std::vector<KernelDecl> kernels;
  std::vector<ConstDecl> constants;
  std::optional<Node> death;
  std::optional<Node> birth;
  std::optional<Node> hop;
  Box box;
  /// Scaling parameter already applied by scale(); 1 means unscaled.
  double eps = 1.0;
  std::string source;

  const Node* part(PartKind p) const;
  const KernelDecl& kernel(const std::string& name) const;
  const ConstDecl& constant(const std::string& name) const;
  bool has_kernel(const std::string& name) const;
  bool has_constant(const std::string& name) const;
  /// Sets a constant's value or a kernel's amplitude.
  void set_parameter(const std::string& name, double value);

  /// Value of a declaration with the current eps substitution applied.
  double constant_value(int decl) const;
  double kernel_multiplier(int decl) const;
};

/// Parses generator text. Kernel table paths are resolved relative to `base_dir`.
GeneratorSpec parse(const std::string& text, const Box& box = Box(),
                    const std::string& base_dir = {});

struct ScalingReport {
  /// Human-readable substitutions, e.g. "aminus -> eps*aminus", "lambda -> eps^-1*lambda".
  std::vector<std::string> rules;
  /// Net order per present part after the structural eps^-1 of birth (0 when balanced).
  std::vector<std::pair<PartKind, int>> part_orders;
  /// Copy of the generator with Node::order filled in.
  GeneratorSpec annotated;
};

/// Checks that every term of every part has net eps-order zero (birth terms
/// after removing the eps^-1 that scales the whole birth part). Throws
/// ScalingError naming the offending node otherwise.
ScalingReport analyze_scaling(const GeneratorSpec& spec);

/// Applies the declared substitutions at eps: eps-kernels are multiplied by
/// eps, inveps constants and the `inveps` factor divided by eps.
GeneratorSpec scale(const GeneratorSpec& spec, double eps);

/// Points a rate is evaluated against. The default neighbour query visits
/// every point; spatial indices override it with a superset of the ball.
class PointSet {
 public:
  virtual ~PointSet() = default;
  virtual std::size_t size() const = 0;
  virtual const Point& point(std::size_t i) const = 0;
  virtual void for_each_near(const Point& p, double radius,
                             const std::function<void(std::size_t)>& visit) const;
};

class SpanPointSet final : public PointSet {
 public:
  explicit SpanPointSet(std::span<const Point> pts) : pts_(pts) {}
  std::size_t size() const override { return pts_.size(); }
  const Point& point(std::size_t i) const override { return pts_[i]; }

 private:
  std::span<const Point> pts_;
};

struct Binding {
  Point pos;
  long index = -1;  // position in the PointSet, or -1 when the variable is not a member
};

using Env = std::array<Binding, kMaxSlots>;

struct EvalOptions {
  /// Drop kernel values beyond their cutoff and restrict sums to neighbours.
  bool truncate = false;
};

/// Numerical value of a (scaled) rate expression.
double evaluate(const GeneratorSpec& spec, const Node& node, Env& env, const PointSet& gamma,
                EvalOptions opts = {});

/// Rate of `part` in the scaled spec at x (and y for hop) given the
/// configuration `rest` that excludes x. Birth rates include the eps^-1.
double rate(const GeneratorSpec& spec, PartKind part, const Point& x, const FiniteConfiguration& rest,
            const std::optional<Point>& y = std::nullopt);

inline constexpr std::size_t kMaxCoefficientCardinality = 20;

/// D_x^(eps)(xi), B_x^(eps)(xi) or C_{x,y}^(eps)(xi): the inverse K-transform
/// of the rate scaled at eps, by inclusion-exclusion over subsets of xi. The
/// birth rate enters without its structural eps^-1.
double k_coefficient(const GeneratorSpec& spec, PartKind part, const Point& x,
                     const std::optional<Point>& y, const FiniteConfiguration& xi, double eps);

/// Symbolic eps -> 0 limit of eps^{-|xi|} k_coefficient, evaluated from the
/// rate's structure (constants, e_lambda products, singleton and pair
/// indicators combined by the star product).
class VlasovCoefficient {
 public:
  VlasovCoefficient(std::shared_ptr<const GeneratorSpec> spec, PartKind part, Point x,
                    std::optional<Point> y);
  double operator()(const FiniteConfiguration& xi) const;
  PartKind part() const noexcept { return part_; }

 private:
  std::shared_ptr<const GeneratorSpec> spec_;
  PartKind part_;
  Point x_;
  std::optional<Point> y_;
};

VlasovCoefficient vlasov_coefficient(const GeneratorSpec& spec, PartKind part, const Point& x,
                                     const std::optional<Point>& y = std::nullopt);

/// Top-level additive terms of an expression with products distributed over
/// sums, each as a flat list of factor pointers and a sign.
struct ProductTerm {
  double sign = 1.0;
  std::vector<const Node*> factors;
};
std::vector<ProductTerm> additive_terms(const Node& node);

/// Slots referenced anywhere inside node (kernels and sum exclusions),
/// excluding slots bound inside node.
std::vector<int> free_slots(const Node& node);

}  // namespace vlasov::dsl
