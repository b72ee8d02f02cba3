#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace omc {

// Role of a model variable. Assigned when the model is built, never inferred
// from shape. Values double as checkpoint kind codes.
enum class VariableKind : std::uint8_t {
  kWeightMatrix = 0,
  kBiasVector = 1,
  kNormScale = 2,
  kNormBias = 3,
  kOther = 4,
};

constexpr std::string_view variable_kind_name(VariableKind kind) {
  switch (kind) {
    case VariableKind::kWeightMatrix: return "weight_matrix";
    case VariableKind::kBiasVector: return "bias_vector";
    case VariableKind::kNormScale: return "norm_scale";
    case VariableKind::kNormBias: return "norm_bias";
    case VariableKind::kOther: return "other";
  }
  return "other";
}

constexpr std::optional<VariableKind> variable_kind_from_code(std::uint8_t code) {
  if (code > static_cast<std::uint8_t>(VariableKind::kOther)) return std::nullopt;
  return static_cast<VariableKind>(code);
}

}  // namespace omc
