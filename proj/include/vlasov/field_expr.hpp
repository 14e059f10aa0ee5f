#pragma once

// Expressions over a density field rho: sums of products of rho, kernel
// convolutions, kernel masses and exponentials, kept in a canonical
// expanded form so equal right-hand sides print identically.

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlasov/kernel.hpp"

namespace vlasov {

class FieldExpr;

struct FieldAtom {
  enum class Kind { mass, rho, conv, exp };

  Kind kind = Kind::rho;
  std::string kernel_name;                 // mass, conv
  std::shared_ptr<const Kernel> kernel;    // mass, conv
  std::shared_ptr<const FieldExpr> arg;    // conv, exp

  static FieldAtom rho();
  static FieldAtom mass(std::string name, std::shared_ptr<const Kernel> k);
  static FieldAtom conv(std::string name, std::shared_ptr<const Kernel> k, FieldExpr arg);
  static FieldAtom exp(FieldExpr arg);

  std::string str() const;
};

struct NamedConstant {
  std::string name;
  double value = 0.0;
};

/// Term classes used to order the printed right-hand side.
enum class TermGroup : int {
  constant_loss = 0,     // -m*rho
  interaction_loss = 1,  // -rho*conv(a,rho), -rho*exp(...)
  birth_gain = 2,
  hop_gain = 3,
  hop_loss = 4,
};

struct FieldTerm {
  double coef = 1.0;
  std::vector<NamedConstant> consts;
  std::vector<FieldAtom> atoms;
  TermGroup group = TermGroup::constant_loss;

  /// Number of rho factors, counting those inside convolutions.
  int rho_degree() const;
  /// Product without the sign, e.g. "lambda*conv(aplus,rho)".
  std::string body() const;
};

/// Canonical polynomial: terms expanded, constants pulled out of
/// convolutions, conv of a constant replaced by the kernel mass, like terms
/// merged, atoms and terms in a fixed order.
class FieldExpr {
 public:
  FieldExpr() = default;
  explicit FieldExpr(std::vector<FieldTerm> terms);

  static FieldExpr constant(double c);
  static FieldExpr atom(FieldAtom a);

  const std::vector<FieldTerm>& terms() const noexcept { return terms_; }
  bool empty() const noexcept { return terms_.empty(); }

  /// Rebuilds the canonical form. Groups are preserved when `grouped`.
  FieldExpr canonical(bool grouped = true) const;

  FieldExpr operator+(const FieldExpr& o) const;

  std::string str() const;
  nlohmann::json to_json() const;

 private:
  std::vector<FieldTerm> terms_;
};

/// Supplies the grid operations an expression needs to be evaluated.
class FieldContext {
 public:
  virtual ~FieldContext() = default;
  virtual std::size_t size() const = 0;
  /// Circular convolution of a grid field with a kernel, scaled as an integral.
  virtual std::vector<double> convolve(const std::string& name, const Kernel& k,
                                       const std::vector<double>& f) = 0;
  virtual double mass(const std::string& name, const Kernel& k) = 0;
};

/// Pointwise value of expr at density rho. Throws NumericalFault naming the
/// node path when an intermediate value is not finite.
std::vector<double> evaluate(const FieldExpr& expr, const std::vector<double>& rho, FieldContext& ctx);

}  // namespace vlasov
