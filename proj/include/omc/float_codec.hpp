#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace omc {

// Reduced-precision floating-point format S1E{y}M{z}: one sign bit, y exponent
// bits with IEEE-style bias, z mantissa bits. There are no inf/NaN encodings;
// every pattern is finite and overflow saturates.
class FloatFormat {
 public:
  FloatFormat(int exponent_bits, int mantissa_bits);

  // Accepts "S1E{y}M{z}" in any letter case.
  static FloatFormat parse(std::string_view text);
  static FloatFormat fp32() { return FloatFormat(8, 23); }

  int exponent_bits() const noexcept { return exponent_bits_; }
  int mantissa_bits() const noexcept { return mantissa_bits_; }
  int total_bits() const noexcept { return 1 + exponent_bits_ + mantissa_bits_; }
  int bias() const noexcept { return (1 << (exponent_bits_ - 1)) - 1; }

  // Largest exponent field that decodes to a finite float. For y = 8 the top
  // field would exceed the FP32 range, so it is excluded.
  std::uint32_t max_exponent_field() const noexcept;
  // Largest magnitude bit pattern (sign bit clear) that is a valid value.
  std::uint32_t max_magnitude_pattern() const noexcept;

  float max_finite() const;
  float min_normal() const;
  float min_subnormal() const;

  // True when quantization is the identity on every finite float.
  bool is_fp32_passthrough() const noexcept { return exponent_bits_ == 8 && mantissa_bits_ == 23; }

  std::string to_string() const;

  friend bool operator==(const FloatFormat&, const FloatFormat&) = default;

 private:
  int exponent_bits_;
  int mantissa_bits_;
};

// Encoded value: low total_bits bits hold [sign | exponent | mantissa].
struct BitPattern {
  std::uint32_t bits = 0;

  bool sign(const FloatFormat& fmt) const noexcept { return (bits >> (fmt.total_bits() - 1)) & 1u; }
  std::uint32_t exponent_field(const FloatFormat& fmt) const noexcept {
    return (bits >> fmt.mantissa_bits()) & ((1u << fmt.exponent_bits()) - 1u);
  }
  std::uint32_t mantissa_field(const FloatFormat& fmt) const noexcept {
    return bits & ((1u << fmt.mantissa_bits()) - 1u);
  }

  static BitPattern from_fields(const FloatFormat& fmt, bool sign, std::uint32_t exponent,
                                std::uint32_t mantissa);

  // Binary digits grouped as "s eeee mmmmmmm".
  std::string to_binary_string(const FloatFormat& fmt) const;

  friend bool operator==(const BitPattern&, const BitPattern&) = default;
};

BitPattern encode(float x, const FloatFormat& fmt);
float decode(BitPattern p, const FloatFormat& fmt);

// Nearest representable value, ties to even, saturating, signed zero kept.
float quantize_value(float x, const FloatFormat& fmt);

class PackedBuffer {
 public:
  PackedBuffer(FloatFormat format, std::size_t element_count, std::vector<std::uint8_t> bytes);

  static std::size_t byte_length(std::size_t element_count, const FloatFormat& fmt) noexcept {
    return (element_count * static_cast<std::size_t>(fmt.total_bits()) + 7) / 8;
  }

  const FloatFormat& format() const noexcept { return format_; }
  std::size_t element_count() const noexcept { return element_count_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

  friend bool operator==(const PackedBuffer&, const PackedBuffer&) = default;

 private:
  FloatFormat format_;
  std::size_t element_count_;
  std::vector<std::uint8_t> bytes_;
};

PackedBuffer pack(std::span<const float> values, const FloatFormat& fmt);
std::vector<float> unpack(const PackedBuffer& buf);
// Decodes into caller storage; out.size() must equal buf.element_count().
void unpack_into(const PackedBuffer& buf, std::span<float> out);

}  // namespace omc
