#include "omc/quant_policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "omc/error.hpp"

namespace omc {

void PolicyConfig::validate() const {
  if (!(quantize_fraction >= 0.0 && quantize_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "quantize_fraction must be in [0, 1], got " +
                                               std::to_string(quantize_fraction));
  }
}

bool QuantSelection::contains(std::string_view name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::vector<std::string> eligible_variables(const std::vector<VariableTag>& model_vars,
                                            const PolicyConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& v : model_vars) {
    if (!cfg.weights_only || v.kind == VariableKind::kWeightMatrix) out.push_back(v.name);
  }
  return out;
}

std::size_t selection_count(double quantize_fraction, std::size_t eligible_count) {
  const double exact = quantize_fraction * static_cast<double>(eligible_count);
  const auto rounded = static_cast<std::size_t>(std::floor(exact + 0.5));
  return std::min(rounded, eligible_count);
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

KeyedStream::KeyedStream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept
    : key_(mix64(mix64(mix64(seed) ^ a) ^ (b + 0x632be59bd9b4e019ull))) {}

std::uint64_t KeyedStream::next() noexcept {
  return mix64(key_ ^ mix64(counter_++ * 0xd1b54a32d192ed03ull));
}

std::uint64_t KeyedStream::below(std::uint64_t bound) noexcept {
  // Reject the low sliver that would bias the modulo.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = next();
    if (r >= threshold) return r % bound;
  }
}

double KeyedStream::unit() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

QuantSelection select_variables(const std::vector<VariableTag>& model_vars, const PolicyConfig& cfg,
                                std::uint64_t round, std::uint64_t client) {
  cfg.validate();
  const std::vector<std::string> eligible = eligible_variables(model_vars, cfg);
  const std::size_t m = eligible.size();
  const std::size_t take = selection_count(cfg.quantize_fraction, m);

  // Partial Fisher-Yates over eligible positions.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  KeyedStream stream(cfg.selection_seed, round, client);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.below(m - i));
    std::swap(order[i], order[j]);
  }
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(chosen.begin(), chosen.end());

  QuantSelection sel;
  sel.names.reserve(take);
  for (std::size_t idx : chosen) sel.names.push_back(eligible[idx]);
  return sel;
}

}  // namespace omc
