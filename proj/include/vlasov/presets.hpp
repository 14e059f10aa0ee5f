#pragma once

#include <span>
#include <string>
#include <string_view>

namespace vlasov {

/// A built-in model: generator text plus the canonical mean-field equation
/// it must compile to.
struct Preset {
  std::string_view name;
  std::string_view title;
  int example;  // model number in the catalog (two presets share number 11)
  std::string_view dsl;
  std::string_view equation;
};

std::span<const Preset> presets();
/// Throws ConfigError for unknown names.
const Preset& preset(std::string_view name);
bool is_preset(std::string_view name);

}  // namespace vlasov
