#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "omc/float_codec.hpp"
#include "omc/variable_kind.hpp"

namespace omc {

struct PolicyConfig {
  FloatFormat format = FloatFormat(3, 7);
  double quantize_fraction = 0.9;
  bool weights_only = true;
  bool use_pvt = true;
  std::uint64_t selection_seed = 0;

  void validate() const;
};

struct VariableTag {
  std::string name;
  VariableKind kind = VariableKind::kOther;
};

// Names chosen for quantization on one (round, client), in model order.
struct QuantSelection {
  std::vector<std::string> names;

  bool contains(std::string_view name) const;
  std::size_t size() const noexcept { return names.size(); }
};

std::vector<std::string> eligible_variables(const std::vector<VariableTag>& model_vars,
                                            const PolicyConfig& cfg);

// round(q * m) with halves rounding up.
std::size_t selection_count(double quantize_fraction, std::size_t eligible_count);

QuantSelection select_variables(const std::vector<VariableTag>& model_vars, const PolicyConfig& cfg,
                                std::uint64_t round, std::uint64_t client);

// Counter-based generator: output i is a pure function of (key, i), so draws
// do not depend on execution order or thread count.
class KeyedStream {
 public:
  explicit KeyedStream(std::uint64_t key) noexcept : key_(key) {}
  KeyedStream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept;

  std::uint64_t next() noexcept;
  // Uniform integer in [0, bound), rejection-sampled. bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  // Uniform double in [0, 1).
  double unit() noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace omc
