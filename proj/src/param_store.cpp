#include "omc/param_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>

namespace omc {
namespace {

void require_finite(std::span<const float> values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidInput, std::string(what) + " contains a non-finite value");
  }
}

}  // namespace

TransformFit solve_transform(std::span<const float> original, std::span<const float> dequantized) {
  if (original.empty()) throw Error(ErrorCode::kInvalidInput, "cannot fit a transform to an empty variable");
  if (original.size() != dequantized.size()) {
    throw Error(ErrorCode::kInvalidInput, "original and dequantized lengths differ");
  }
  require_finite(original, "original");
  require_finite(dequantized, "dequantized");

  const auto n = static_cast<double>(original.size());
  double sum_v = 0.0;
  double sum_t = 0.0;
  for (std::size_t k = 0; k < original.size(); ++k) {
    sum_v += original[k];
    sum_t += dequantized[k];
  }
  const double mean_v = sum_v / n;
  const double mean_t = sum_t / n;

  // Centered sums: n * sxx equals n*sum(t^2) - sum(t)^2, and is exactly zero
  // when every dequantized value is equal.
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t k = 0; k < original.size(); ++k) {
    const double dt = static_cast<double>(dequantized[k]) - mean_t;
    sxx += dt * dt;
    sxy += dt * (static_cast<double>(original[k]) - mean_v);
  }

  TransformFit fit;
  if (sxx == 0.0) {
    fit.scale = 1.0;
    fit.bias = mean_v - mean_t;
    fit.degenerate = true;
  } else {
    fit.scale = sxy / sxx;
    fit.bias = mean_v - fit.scale * mean_t;
  }
  return fit;
}

double squared_error(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    acc += d * d;
  }
  return acc;
}

TransformParams fit_transform(std::span<const float> original, std::span<const float> dequantized) {
  const TransformFit fit = solve_transform(original, dequantized);
  TransformParams t{static_cast<float>(fit.scale), static_cast<float>(fit.bias)};
  if (!std::isfinite(t.scale) || !std::isfinite(t.bias)) return TransformParams{};
  if (t.is_identity()) return t;

  const std::vector<float> restored = apply_transform(dequantized, t);
  if (squared_error(restored, original) > squared_error(dequantized, original)) return TransformParams{};
  return t;
}

void apply_transform_inplace(std::span<float> values, const TransformParams& t) {
  // Identity leaves signed zeros alone.
  if (t.is_identity()) return;
  for (float& v : values) v = t.scale * v + t.bias;
}

std::vector<float> apply_transform(std::span<const float> dequantized, const TransformParams& t) {
  std::vector<float> out(dequantized.begin(), dequantized.end());
  apply_transform_inplace(out, t);
  return out;
}

std::size_t shape_element_count(std::span<const std::uint32_t> shape) noexcept {
  std::size_t n = 1;
  for (std::uint32_t d : shape) n *= d;
  return n;
}

std::size_t VariableRecord::element_count() const noexcept { return shape_element_count(shape); }

std::uint64_t VariableRecord::memory_bytes() const noexcept {
  if (const auto* q = std::get_if<Quantized>(&storage)) {
    return q->payload.bytes().size() + 2 * sizeof(float);
  }
  return static_cast<std::uint64_t>(element_count()) * sizeof(float);
}

VariableRecord make_full_variable(std::string name, std::vector<std::uint32_t> shape,
                                  VariableKind kind, std::vector<float> values) {
  if (values.size() != shape_element_count(shape)) {
    throw Error(ErrorCode::kInvalidInput, "variable '" + name + "' has " +
                                              std::to_string(values.size()) +
                                              " values but its shape holds " +
                                              std::to_string(shape_element_count(shape)));
  }
  return VariableRecord{std::move(name), std::move(shape), kind, FullPrecision{std::move(values)}};
}

VariableRecord compress_variable(std::string name, std::vector<std::uint32_t> shape,
                                 VariableKind kind, std::span<const float> values,
                                 const FloatFormat& fmt, bool use_pvt) {
  const std::size_t n = shape_element_count(shape);
  if (n == 0 || values.size() != n) {
    throw Error(ErrorCode::kInvalidInput, "variable '" + name + "' needs " + std::to_string(n) +
                                              " (>= 1) values, got " + std::to_string(values.size()));
  }
  PackedBuffer payload = pack(values, fmt);
  TransformParams transform;
  if (use_pvt) transform = fit_transform(values, unpack(payload));
  return VariableRecord{std::move(name), std::move(shape), kind,
                        Quantized{std::move(payload), transform}};
}

void decompress_into(const VariableRecord& record, std::span<float> out) {
  if (out.size() != record.element_count()) {
    throw Error(ErrorCode::kCorruptBuffer, "decompress destination size mismatch for '" + record.name + "'");
  }
  if (const auto* full = std::get_if<FullPrecision>(&record.storage)) {
    if (full->values.size() != out.size()) {
      throw Error(ErrorCode::kCorruptBuffer, "stored value count mismatch for '" + record.name + "'");
    }
    std::copy(full->values.begin(), full->values.end(), out.begin());
    return;
  }
  const auto& q = std::get<Quantized>(record.storage);
  if (q.payload.element_count() != out.size()) {
    throw Error(ErrorCode::kCorruptBuffer, "payload element count mismatch for '" + record.name + "'");
  }
  unpack_into(q.payload, out);
  apply_transform_inplace(out, q.transform);
}

std::vector<float> decompress_variable(const VariableRecord& record) {
  std::vector<float> out(record.element_count());
  decompress_into(record, out);
  return out;
}

TransientAccounting::TransientAccounting(const TransientAccounting& other)
    : current_(other.current_.load()), peak_(other.peak_.load()) {}

TransientAccounting& TransientAccounting::operator=(const TransientAccounting& other) {
  current_.store(other.current_.load());
  peak_.store(other.peak_.load());
  return *this;
}

void TransientAccounting::acquire(std::uint64_t bytes) noexcept {
  const std::uint64_t now = current_.fetch_add(bytes) + bytes;
  std::uint64_t seen = peak_.load();
  while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
  }
}

void TransientAccounting::release(std::uint64_t bytes) noexcept { current_.fetch_sub(bytes); }

void ParamStore::add(VariableRecord record) {
  if (index_.contains(record.name)) {
    throw Error(ErrorCode::kInvalidInput, "duplicate variable name '" + record.name + "'");
  }
  index_.emplace(record.name, records_.size());
  records_.push_back(std::move(record));
}

bool ParamStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw Error(ErrorCode::kMissingVariable, "no variable named '" + std::string(name) + "'");
  return it->second;
}

const VariableRecord& ParamStore::at(std::string_view name) const { return records_[index_of(name)]; }

const VariableRecord& ParamStore::update_variable(std::string_view name, const Applier& applier,
                                                  bool use_pvt) {
  VariableRecord& record = records_[index_of(name)];
  const std::size_t n = record.element_count();

  Lease decompressed_lease(accounting_, n);
  std::vector<float> values(n);
  decompress_into(record, values);

  Lease updated_lease(accounting_, n);
  std::vector<float> updated = applier(values);
  if (updated.size() != n) {
    throw Error(ErrorCode::kInvalidInput, "update of '" + record.name + "' returned " +
                                              std::to_string(updated.size()) + " values, expected " +
                                              std::to_string(n));
  }

  if (auto* q = std::get_if<Quantized>(&record.storage)) {
    const FloatFormat fmt = q->payload.format();
    record = compress_variable(std::move(record.name), std::move(record.shape), record.kind,
                               updated, fmt, use_pvt);
  } else {
    std::get<FullPrecision>(record.storage).values = std::move(updated);
  }
  return record;
}

std::uint64_t ParamStore::parameter_memory_bytes() const noexcept {
  std::uint64_t total = 0;
  for (const auto& r : records_) total += r.memory_bytes();
  return total;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization

namespace {

constexpr char kMagic[4] = {'O', 'M', 'C', '1'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kStorageFull = 0;
constexpr std::uint8_t kStorageQuantized = 1;

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }

  template <typename T>
  void le(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf[i] = static_cast<char>(u & 0xffu);
      u = static_cast<U>(u >> 8);
    }
    out_.write(buf, sizeof(T));
  }

  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }

 private:
  std::ostream& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data) : data_(std::move(data)) {}

  std::uint64_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }

  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) throw CheckpointError(pos_, std::string("truncated while reading ") + what);
  }

  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<std::make_unsigned_t<T>>(data_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }

  std::vector<std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    std::vector<std::uint8_t> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

 private:
  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_store(const ParamStore& store, std::ostream& sink) {
  ByteWriter w(sink);
  w.bytes(kMagic, sizeof(kMagic));
  w.le<std::uint8_t>(kVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
  for (const auto& r : store.records()) {
    if (r.name.size() > 0xffff) throw Error(ErrorCode::kInvalidInput, "variable name too long: " + r.name);
    if (r.shape.size() > 0xff) throw Error(ErrorCode::kInvalidInput, "rank too large for " + r.name);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(r.name.size()));
    w.bytes(r.name.data(), r.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(r.kind));
    w.le<std::uint8_t>(r.is_quantized() ? kStorageQuantized : kStorageFull);
    w.le<std::uint8_t>(static_cast<std::uint8_t>(r.shape.size()));
    for (std::uint32_t d : r.shape) w.le<std::uint32_t>(d);
    if (const auto* q = std::get_if<Quantized>(&r.storage)) {
      w.le<std::uint8_t>(static_cast<std::uint8_t>(q->payload.format().exponent_bits()));
      w.le<std::uint8_t>(static_cast<std::uint8_t>(q->payload.format().mantissa_bits()));
      w.f32(q->transform.scale);
      w.f32(q->transform.bias);
      w.le<std::uint64_t>(q->payload.bytes().size());
      w.bytes(q->payload.bytes().data(), q->payload.bytes().size());
    } else {
      for (float v : std::get<FullPrecision>(r.storage).values) w.f32(v);
    }
  }
  if (!sink) throw Error(ErrorCode::kInvalidInput, "failed writing checkpoint");
}

ParamStore load_store(std::istream& source) {
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
  ByteReader r(std::move(data));

  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw CheckpointError(0, "bad magic");
  const auto version_at = r.offset();
  if (r.le<std::uint8_t>("version") != kVersion) throw CheckpointError(version_at, "unsupported version");
  const auto count = r.le<std::uint32_t>("variable count");

  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto record_at = r.offset();
    VariableRecord rec;
    const auto name_len = r.le<std::uint16_t>("name length");
    const auto name_bytes = r.take(name_len, "name");
    rec.name.assign(name_bytes.begin(), name_bytes.end());

    const auto kind_at = r.offset();
    const auto kind = variable_kind_from_code(r.le<std::uint8_t>("kind"));
    if (!kind) throw CheckpointError(kind_at, "unknown variable kind");
    rec.kind = *kind;

    const auto storage_at = r.offset();
    const auto storage = r.le<std::uint8_t>("storage code");
    if (storage != kStorageFull && storage != kStorageQuantized) throw CheckpointError(storage_at, "unknown storage code");

    const auto rank = r.le<std::uint8_t>("rank");
    std::uint64_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      rec.shape.push_back(r.le<std::uint32_t>("dimension"));
      n *= rec.shape.back();
      if (n > (std::uint64_t{1} << 40)) throw CheckpointError(r.offset(), "implausible element count");
    }

    if (storage == kStorageQuantized) {
      const auto fmt_at = r.offset();
      const auto y = r.le<std::uint8_t>("exponent bits");
      const auto z = r.le<std::uint8_t>("mantissa bits");
      std::optional<FloatFormat> fmt;
      try {
        fmt.emplace(y, z);
      } catch (const Error& e) {
        throw CheckpointError(fmt_at, e.what());
      }
      TransformParams t;
      t.scale = r.f32("scale");
      t.bias = r.f32("bias");
      if (!std::isfinite(t.scale) || !std::isfinite(t.bias)) throw CheckpointError(fmt_at + 2, "non-finite transform");
      const auto len_at = r.offset();
      const auto len = r.le<std::uint64_t>("payload length");
      if (len != PackedBuffer::byte_length(n, *fmt)) throw CheckpointError(len_at, "payload length does not match shape");
      const auto payload_at = r.offset();
      auto payload = r.take(len, "payload");
      try {
        rec.storage = Quantized{PackedBuffer(*fmt, n, std::move(payload)), t};
      } catch (const Error& e) {
        throw CheckpointError(payload_at, e.what());
      }
    } else {
      r.need(n * sizeof(float), "values");
      std::vector<float> values(n);
      for (auto& v : values) v = r.f32("value");
      rec.storage = FullPrecision{std::move(values)};
    }

    if (store.contains(rec.name)) throw CheckpointError(record_at, "duplicate variable '" + rec.name + "'");
    store.add(std::move(rec));
  }
  if (!r.at_end()) throw CheckpointError(r.offset(), "trailing bytes after last variable");
  return store;
}

void save_store_file(const ParamStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kInvalidInput, "cannot open '" + path + "' for writing");
  save_store(store, out);
}

ParamStore load_store_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kInvalidInput, "cannot open '" + path + "'");
  return load_store(in);
}

}  // namespace omc
