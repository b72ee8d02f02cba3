#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "codec_oracle.hpp"
#include "doctest.h"
#include "omc/error.hpp"
#include "omc/float_codec.hpp"

using omc::BitPattern;
using omc::FloatFormat;

namespace {

std::vector<FloatFormat> small_formats() {
  std::vector<FloatFormat> out;
  for (int y = 2; y <= 8; ++y) {
    for (int z = 0; 1 + y + z <= 12; ++z) out.emplace_back(y, z);
  }
  return out;
}

template <typename Fn>
void expect_error(omc::ErrorCode code, Fn&& fn) {
  try {
    fn();
    FAIL("expected an error");
  } catch (const omc::Error& e) {
    CHECK(e.code() == code);
  }
}

}  // namespace

TEST_SUITE("float_codec") {

TEST_CASE("format strings parse and render canonically") {
  for (const char* s : {"S1E3M7", "S1E2M3", "S1E8M23", "S1E5M10", "S1E4M14"}) {
    CHECK(FloatFormat::parse(s).to_string() == s);
  }
  CHECK(FloatFormat::parse("s1e3m7") == FloatFormat(3, 7));
  CHECK(FloatFormat(4, 14).bias() == 7);
  CHECK(FloatFormat(3, 7).total_bits() == 11);
  for (const char* bad : {"S1E1M3", "S1E9M3", "S1E3M24", "S2E3M4", "E3M4", "S1E3M", "S1E3M7x", ""}) {
    CAPTURE(bad);
    expect_error(omc::ErrorCode::kInvalidInput, [&] { FloatFormat::parse(bad); });
  }
}

TEST_CASE("quantize_value examples") {
  for (const auto& f : small_formats()) CHECK(omc::quantize_value(0.0f, f) == 0.0f);
  CHECK(omc::quantize_value(1.0f, FloatFormat(2, 3)) == 1.0f);

  // pi in half precision; cross-checked against the enumerated table
  const FloatFormat half(5, 10);
  omc::testing::BruteForceCodec half_oracle(5, 10);
  CHECK(omc::quantize_value(3.14159265f, half) == 3.140625f);
  CHECK(half_oracle.decode(half_oracle.encode(3.14159265f)) == 3.140625);

  // 1e9 saturates to 2^(7-3) * (2 - 2^-7)
  const FloatFormat f37(3, 7);
  omc::testing::BruteForceCodec oracle37(3, 7);
  const double expected_max = std::ldexp(1.0, 4) * (2.0 - std::ldexp(1.0, -7));
  CHECK(expected_max == oracle37.max_value());
  CHECK(omc::quantize_value(1e9f, f37) == static_cast<float>(expected_max));
  CHECK(omc::quantize_value(-1e9f, f37) == -static_cast<float>(expected_max));
  CHECK(f37.max_finite() == 31.875f);
}

TEST_CASE("encode examples") {
  const FloatFormat f37(3, 7);
  CHECK(omc::encode(0.0f, f37).bits == 0u);
  CHECK(omc::encode(-0.0f, f37).bits == (1u << 10));
  const FloatFormat f414(4, 14);
  const BitPattern one = omc::encode(1.0f, f414);
  CHECK_FALSE(one.sign(f414));
  CHECK(one.exponent_field(f414) == 7u);
  CHECK(one.mantissa_field(f414) == 0u);
}

TEST_CASE("decode examples") {
  const FloatFormat half(5, 10);
  CHECK(omc::decode(BitPattern{0}, half) == 0.0f);
  CHECK(omc::decode(BitPattern::from_fields(half, false, 0, 1), half) == std::ldexp(1.0f, -24));
  const FloatFormat f23(2, 3);
  CHECK(omc::decode(BitPattern::from_fields(f23, true, 3, 0), f23) == -4.0f);
}

TEST_CASE("non-finite inputs are rejected") {
  const FloatFormat f(3, 7);
  for (float bad : {std::numeric_limits<float>::infinity(), -std::numeric_limits<float>::infinity(),
                    std::numeric_limits<float>::quiet_NaN()}) {
    expect_error(omc::ErrorCode::kInvalidInput, [&] { omc::encode(bad, f); });
    expect_error(omc::ErrorCode::kInvalidInput, [&] { omc::quantize_value(bad, f); });
    expect_error(omc::ErrorCode::kInvalidInput, [&] { omc::quantize_value(bad, FloatFormat::fp32()); });
    const std::vector<float> v{1.0f, bad};
    expect_error(omc::ErrorCode::kInvalidInput, [&] { omc::pack(v, f); });
  }
}

TEST_CASE("signed zero and underflow") {
  const FloatFormat f(3, 7);
  const float tiny = f.min_subnormal() * 0.49f;
  CHECK(omc::quantize_value(tiny, f) == 0.0f);
  CHECK_FALSE(std::signbit(omc::quantize_value(tiny, f)));
  CHECK(std::signbit(omc::quantize_value(-tiny, f)));
  // exactly half the smallest subnormal ties to the even pattern, zero
  CHECK(omc::quantize_value(f.min_subnormal() * 0.5f, f) == 0.0f);
  CHECK(omc::quantize_value(f.min_subnormal() * 0.51f, f) == f.min_subnormal());
}

TEST_CASE("eight exponent bits exclude the field beyond FP32") {
  const FloatFormat f(8, 3);
  CHECK(std::isfinite(f.max_finite()));
  CHECK(f.max_finite() == std::ldexp(1.875f, 127));
  CHECK(omc::quantize_value(std::numeric_limits<float>::max(), f) == f.max_finite());
  // a hand-built top-field pattern decodes to the saturated maximum
  CHECK(omc::decode(BitPattern::from_fields(f, false, 255, 5), f) == f.max_finite());
  CHECK(FloatFormat::fp32().max_finite() == std::numeric_limits<float>::max());
}

TEST_CASE("encoder matches the brute-force oracle on every format up to 12 bits") {
  std::uint64_t seed = 1;
  for (const auto& f : small_formats()) {
    CAPTURE(f.to_string());
    omc::testing::BruteForceCodec oracle(f.exponent_bits(), f.mantissa_bits());
    const auto inputs = omc::testing::codec_test_inputs(oracle, 100000, seed++);
    std::size_t mismatches = 0;
    for (float x : inputs) mismatches += omc::encode(x, f).bits != oracle.encode(x);
    CHECK(mismatches == 0);

    // literal scan over all patterns on a subset
    for (std::size_t i = 0; i < 300; ++i) {
      const float x = inputs[i];
      CHECK(omc::encode(x, f).bits == oracle.encode_linear(x));
    }
  }
}

TEST_CASE("decode agrees with the oracle on every pattern") {
  for (const auto& f : small_formats()) {
    omc::testing::BruteForceCodec oracle(f.exponent_bits(), f.mantissa_bits());
    for (std::uint32_t p = 0; p < (1u << f.total_bits()); ++p) {
      REQUIRE(static_cast<double>(omc::decode(BitPattern{p}, f)) == oracle.decode(p));
    }
  }
}

TEST_CASE("idempotence, monotonicity, symmetry and error bound") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> uni(-40.0f, 40.0f);
  std::uniform_int_distribution<std::uint32_t> raw;
  for (const FloatFormat f : {FloatFormat(2, 3), FloatFormat(3, 7), FloatFormat(4, 14), FloatFormat(5, 10),
                              FloatFormat(8, 7), FloatFormat(6, 20)}) {
    CAPTURE(f.to_string());
    std::vector<float> xs;
    for (int i = 0; i < 20000; ++i) {
      xs.push_back(uni(rng));
      const float r = std::bit_cast<float>(raw(rng));
      if (std::isfinite(r)) xs.push_back(r);
    }
    std::sort(xs.begin(), xs.end());
    float prev = -std::numeric_limits<float>::infinity();
    for (float x : xs) {
      const float q = omc::quantize_value(x, f);
      REQUIRE(omc::quantize_value(q, f) == q);
      REQUIRE(q >= prev);
      prev = q;
      REQUIRE(omc::quantize_value(-x, f) == -q);
      const double ax = std::fabs(static_cast<double>(x));
      if (ax >= f.min_normal() && ax <= f.max_finite()) {
        const double bound = std::ldexp(1.0, static_cast<int>(std::floor(std::log2(ax))) - f.mantissa_bits() - 1);
        REQUIRE(std::fabs(static_cast<double>(q) - static_cast<double>(x)) <= bound);
      }
    }
  }
}

TEST_CASE("S1E8M23 is the identity on finite floats") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::uint32_t> raw;
  const FloatFormat fp32 = FloatFormat::fp32();
  const FloatFormat same(8, 23);
  for (int i = 0; i < 200000; ++i) {
    const float x = std::bit_cast<float>(raw(rng));
    if (!std::isfinite(x)) continue;
    REQUIRE(std::bit_cast<std::uint32_t>(omc::quantize_value(x, fp32)) == std::bit_cast<std::uint32_t>(x));
    // the generic encode path agrees with the shortcut
    REQUIRE(std::bit_cast<std::uint32_t>(omc::decode(omc::encode(x, same), same)) ==
            std::bit_cast<std::uint32_t>(x));
    REQUIRE(omc::encode(x, same).bits == std::bit_cast<std::uint32_t>(x));
  }
}

TEST_CASE("packed buffer length formula") {
  const FloatFormat f(3, 7);
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 1000u}) {
    std::vector<float> v(n, 0.5f);
    const auto buf = omc::pack(v, f);
    CHECK(buf.bytes().size() == (n * 11 + 7) / 8);
    CHECK(buf.element_count() == n);
  }
  CHECK(omc::pack(std::vector<float>(8, 1.0f), f).bytes().size() == 11);
  const auto empty = omc::pack(std::vector<float>{}, f);
  CHECK(empty.bytes().empty());
  CHECK(omc::unpack(empty).empty());
}

TEST_CASE("bitstream layout is least-significant-bit first") {
  const FloatFormat f(2, 3);
  const std::vector<float> v{1.0f, -0.0f};
  const auto buf = omc::pack(v, f);
  // 1.0 -> 0b0'01'000 = 8 in bits 0..5; -0.0 -> 0b1'00'000 = 32 in bits 6..11
  REQUIRE(buf.bytes().size() == 2);
  CHECK(buf.bytes()[0] == 0x08);
  CHECK(buf.bytes()[1] == 0x08);
  const auto back = omc::unpack(buf);
  CHECK(back[0] == 1.0f);
  CHECK(std::signbit(back[1]));
}

TEST_CASE("pack and unpack roundtrip equals elementwise quantization") {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> normal(0.0f, 3.0f);
  for (const auto& f : {FloatFormat(2, 3), FloatFormat(3, 7), FloatFormat(4, 14), FloatFormat(5, 10),
                        FloatFormat(8, 23), FloatFormat(7, 0)}) {
    for (std::size_t n : {1u, 7u, 8u, 9u, 1000u}) {
      std::vector<float> v(n);
      for (auto& x : v) x = normal(rng);
      const auto back = omc::unpack(omc::pack(v, f));
      REQUIRE(back.size() == n);
      for (std::size_t i = 0; i < n; ++i) REQUIRE(back[i] == omc::quantize_value(v[i], f));
      // representable input survives exactly
      CHECK(omc::unpack(omc::pack(back, f)) == back);
    }
  }
}

TEST_CASE("corrupt buffers are rejected") {
  const FloatFormat f(3, 7);
  expect_error(omc::ErrorCode::kCorruptBuffer, [&] { omc::PackedBuffer(f, 8, std::vector<std::uint8_t>(10)); });
  expect_error(omc::ErrorCode::kCorruptBuffer, [&] { omc::PackedBuffer(f, 1, std::vector<std::uint8_t>{0, 0xf8}); });
  CHECK_NOTHROW(omc::PackedBuffer(f, 1, std::vector<std::uint8_t>{0xff, 0x07}));
}

}  // TEST_SUITE
