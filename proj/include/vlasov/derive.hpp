#pragma once

#include "vlasov/dsl.hpp"
#include "vlasov/field_expr.hpp"

namespace vlasov::dsl {

/// Mean-field right-hand side of the generator: death contributes
/// -rho * int e(rho) D^V, birth + int e(rho) B^V, hopping the gain/loss pair
/// built from C^V. Product-form coefficients integrate in closed form to
/// convolutions and exponentials of convolutions.
/// Kernels are radial, so k(x - y) and k(y - x) compile to the same convolution.
FieldExpr derive_vlasov(const GeneratorSpec& spec);

}  // namespace vlasov::dsl
