#include "omc/float_codec.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>

#include "omc/error.hpp"

namespace omc {

FloatFormat::FloatFormat(int exponent_bits, int mantissa_bits)
    : exponent_bits_(exponent_bits), mantissa_bits_(mantissa_bits) {
  if (exponent_bits < 2 || exponent_bits > 8) {
    throw Error(ErrorCode::kInvalidInput,
                "exponent bits must be in [2, 8], got " + std::to_string(exponent_bits));
  }
  if (mantissa_bits < 0 || mantissa_bits > 23) {
    throw Error(ErrorCode::kInvalidInput,
                "mantissa bits must be in [0, 23], got " + std::to_string(mantissa_bits));
  }
}

FloatFormat FloatFormat::parse(std::string_view text) {
  auto fail = [&]() -> Error {
    return Error(ErrorCode::kInvalidInput, "malformed float format '" + std::string(text) +
                                               "', expected S1E<y>M<z>");
  };
  auto upper = [](char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); };

  std::size_t pos = 0;
  auto expect = [&](char c) {
    if (pos >= text.size() || upper(text[pos]) != c) throw fail();
    ++pos;
  };
  auto number = [&]() {
    int value = 0;
    const char* first = text.data() + pos;
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr == first) throw fail();
    pos += static_cast<std::size_t>(ptr - first);
    return value;
  };

  expect('S');
  if (number() != 1) throw fail();
  expect('E');
  const int y = number();
  expect('M');
  const int z = number();
  if (pos != text.size()) throw fail();
  return FloatFormat(y, z);
}

std::uint32_t FloatFormat::max_exponent_field() const noexcept {
  const std::uint32_t top = (1u << exponent_bits_) - 1u;
  return exponent_bits_ == 8 ? top - 1u : top;
}

std::uint32_t FloatFormat::max_magnitude_pattern() const noexcept {
  return (max_exponent_field() << mantissa_bits_) | ((1u << mantissa_bits_) - 1u);
}

float FloatFormat::max_finite() const { return decode(BitPattern{max_magnitude_pattern()}, *this); }

float FloatFormat::min_normal() const { return decode(BitPattern{1u << mantissa_bits_}, *this); }

float FloatFormat::min_subnormal() const {
  // With z = 0 pattern 1 is the smallest normal instead.
  return decode(BitPattern{1u}, *this);
}

std::string FloatFormat::to_string() const {
  return "S1E" + std::to_string(exponent_bits_) + "M" + std::to_string(mantissa_bits_);
}

BitPattern BitPattern::from_fields(const FloatFormat& fmt, bool sign, std::uint32_t exponent,
                                   std::uint32_t mantissa) {
  const int z = fmt.mantissa_bits();
  const int y = fmt.exponent_bits();
  if (exponent >= (1u << y) || mantissa >= (1u << z)) {
    throw Error(ErrorCode::kInvalidInput, "field out of range for " + fmt.to_string());
  }
  const std::uint32_t sign_bit = sign ? 1u << (y + z) : 0u;
  return BitPattern{sign_bit | (exponent << z) | mantissa};
}

std::string BitPattern::to_binary_string(const FloatFormat& fmt) const {
  std::string out;
  const int n = fmt.total_bits();
  for (int i = n - 1; i >= 0; --i) {
    out.push_back(((bits >> i) & 1u) ? '1' : '0');
    if (i == n - 1 || (i == fmt.mantissa_bits() && fmt.mantissa_bits() > 0)) out.push_back(' ');
  }
  return out;
}

BitPattern encode(float x, const FloatFormat& fmt) {
  if (!std::isfinite(x)) {
    throw Error(ErrorCode::kInvalidInput, "cannot encode non-finite value");
  }
  const int z = fmt.mantissa_bits();
  const int bias = fmt.bias();
  const std::uint32_t sign_bit = 1u << (fmt.total_bits() - 1);

  const auto raw = std::bit_cast<std::uint32_t>(x);
  const std::uint32_t sign = (raw >> 31) ? sign_bit : 0u;
  const std::uint32_t magnitude = raw & 0x7fffffffu;
  if (magnitude == 0) return BitPattern{sign};

  // |x| = significand * 2^scale exactly.
  const std::uint32_t float_exp = magnitude >> 23;
  const std::uint64_t significand =
      float_exp == 0 ? (magnitude & 0x7fffffu) : ((magnitude & 0x7fffffu) | 0x800000u);
  const int scale = float_exp == 0 ? -149 : static_cast<int>(float_exp) - 150;
  int exponent = scale + static_cast<int>(std::bit_width(significand)) - 1;

  const int min_exponent = 1 - bias;
  if (exponent < min_exponent) exponent = min_exponent;

  // Integer significand k of the target format such that the result is
  // k * 2^(exponent - z); the magnitude pattern is then base + k.
  const std::uint64_t base = static_cast<std::uint64_t>(exponent + bias - 1) << z;
  const int shift = scale - exponent + z;
  std::uint64_t k = 0;
  if (shift >= 0) {
    k = significand << shift;
  } else if (-shift <= 32) {
    const int drop = -shift;
    k = significand >> drop;
    const std::uint64_t rest = significand & ((std::uint64_t{1} << drop) - 1u);
    const std::uint64_t half = std::uint64_t{1} << (drop - 1);
    if (rest > half || (rest == half && ((base + k) & 1u))) ++k;
  }

  std::uint64_t pattern = base + k;
  const std::uint64_t max_pattern = fmt.max_magnitude_pattern();
  if (pattern > max_pattern) pattern = max_pattern;
  return BitPattern{sign | static_cast<std::uint32_t>(pattern)};
}

float decode(BitPattern p, const FloatFormat& fmt) {
  const int z = fmt.mantissa_bits();
  const int magnitude_bits = fmt.total_bits() - 1;
  const bool negative = (p.bits >> magnitude_bits) & 1u;
  std::uint32_t magnitude = p.bits & ((1u << magnitude_bits) - 1u);
  // Only reachable for y = 8, whose top exponent field lies outside FP32.
  if (magnitude > fmt.max_magnitude_pattern()) magnitude = fmt.max_magnitude_pattern();

  const std::uint32_t exponent = magnitude >> z;
  const std::uint32_t mantissa = magnitude & ((1u << z) - 1u);
  double value;
  if (exponent == 0) {
    value = std::ldexp(static_cast<double>(mantissa), 1 - fmt.bias() - z);
  } else {
    value = std::ldexp(static_cast<double>((std::uint64_t{1} << z) + mantissa),
                       static_cast<int>(exponent) - fmt.bias() - z);
  }
  const auto result = static_cast<float>(value);
  return negative ? -result : result;
}

float quantize_value(float x, const FloatFormat& fmt) {
  if (fmt.is_fp32_passthrough()) {
    if (!std::isfinite(x)) throw Error(ErrorCode::kInvalidInput, "cannot quantize non-finite value");
    return x;
  }
  return decode(encode(x, fmt), fmt);
}

PackedBuffer::PackedBuffer(FloatFormat format, std::size_t element_count,
                           std::vector<std::uint8_t> bytes)
    : format_(format), element_count_(element_count), bytes_(std::move(bytes)) {
  const std::size_t expected = byte_length(element_count_, format_);
  if (bytes_.size() != expected) {
    throw Error(ErrorCode::kCorruptBuffer, "packed buffer holds " + std::to_string(bytes_.size()) +
                                               " bytes, expected " + std::to_string(expected));
  }
  const std::size_t used_bits = element_count_ * static_cast<std::size_t>(format_.total_bits());
  if (used_bits % 8 != 0) {
    const auto tail_mask = static_cast<std::uint8_t>(0xffu << (used_bits % 8));
    if (bytes_.back() & tail_mask) {
      throw Error(ErrorCode::kCorruptBuffer, "nonzero padding bits in final byte");
    }
  }
}

PackedBuffer pack(std::span<const float> values, const FloatFormat& fmt) {
  const int width = fmt.total_bits();
  std::vector<std::uint8_t> bytes(PackedBuffer::byte_length(values.size(), fmt), 0);

  std::uint64_t acc = 0;
  int acc_bits = 0;
  std::size_t out = 0;
  for (float v : values) {
    acc |= static_cast<std::uint64_t>(encode(v, fmt).bits) << acc_bits;
    acc_bits += width;
    while (acc_bits >= 8) {
      bytes[out++] = static_cast<std::uint8_t>(acc);
      acc >>= 8;
      acc_bits -= 8;
    }
  }
  if (acc_bits > 0) bytes[out] = static_cast<std::uint8_t>(acc);
  return PackedBuffer(fmt, values.size(), std::move(bytes));
}

void unpack_into(const PackedBuffer& buf, std::span<float> out) {
  if (out.size() != buf.element_count()) {
    throw Error(ErrorCode::kCorruptBuffer, "unpack destination size mismatch");
  }
  const FloatFormat& fmt = buf.format();
  const int width = fmt.total_bits();
  const std::uint64_t mask = (std::uint64_t{1} << width) - 1u;
  const auto& bytes = buf.bytes();

  std::uint64_t acc = 0;
  int acc_bits = 0;
  std::size_t in = 0;
  for (float& v : out) {
    while (acc_bits < width) {
      acc |= static_cast<std::uint64_t>(bytes[in++]) << acc_bits;
      acc_bits += 8;
    }
    v = decode(BitPattern{static_cast<std::uint32_t>(acc & mask)}, fmt);
    acc >>= width;
    acc_bits -= width;
  }
}

std::vector<float> unpack(const PackedBuffer& buf) {
  std::vector<float> out(buf.element_count());
  unpack_into(buf, out);
  return out;
}

}  // namespace omc
