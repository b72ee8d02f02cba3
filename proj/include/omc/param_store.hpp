#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "omc/error.hpp"
#include "omc/float_codec.hpp"
#include "omc/variable_kind.hpp"

namespace omc {

// Affine map applied to a decompressed variable: restored = scale * v + bias.
struct TransformParams {
  float scale = 1.0f;
  float bias = 0.0f;

  bool is_identity() const noexcept { return scale == 1.0f && bias == 0.0f; }
  friend bool operator==(const TransformParams&, const TransformParams&) = default;
};

// Least-squares solution before rounding to 32 bits.
struct TransformFit {
  double scale = 1.0;
  double bias = 0.0;
  bool degenerate = false;
};

// Ordinary least squares for original ~ scale * dequantized + bias, with all
// sums in double. A zero denominator (constant dequantized input) pins
// scale to 1 and takes bias as the mean residual.
TransformFit solve_transform(std::span<const float> original, std::span<const float> dequantized);

// solve_transform rounded to float. If rounding makes the fitted map worse
// than the identity on these inputs, the identity is returned.
TransformParams fit_transform(std::span<const float> original, std::span<const float> dequantized);

std::vector<float> apply_transform(std::span<const float> dequantized, const TransformParams& t);
void apply_transform_inplace(std::span<float> values, const TransformParams& t);

// Squared l2 distance accumulated in double.
double squared_error(std::span<const float> a, std::span<const float> b);

struct FullPrecision {
  std::vector<float> values;
  friend bool operator==(const FullPrecision&, const FullPrecision&) = default;
};

struct Quantized {
  PackedBuffer payload;
  TransformParams transform;
  friend bool operator==(const Quantized&, const Quantized&) = default;
};

struct VariableRecord {
  std::string name;
  std::vector<std::uint32_t> shape;
  VariableKind kind = VariableKind::kOther;
  std::variant<FullPrecision, Quantized> storage;

  std::size_t element_count() const noexcept;
  bool is_quantized() const noexcept { return std::holds_alternative<Quantized>(storage); }
  // 4n for full precision; packed length plus the two transform scalars otherwise.
  std::uint64_t memory_bytes() const noexcept;

  friend bool operator==(const VariableRecord&, const VariableRecord&) = default;
};

std::size_t shape_element_count(std::span<const std::uint32_t> shape) noexcept;

VariableRecord make_full_variable(std::string name, std::vector<std::uint32_t> shape,
                                  VariableKind kind, std::vector<float> values);

VariableRecord compress_variable(std::string name, std::vector<std::uint32_t> shape,
                                 VariableKind kind, std::span<const float> values,
                                 const FloatFormat& fmt, bool use_pvt);

std::vector<float> decompress_variable(const VariableRecord& record);
void decompress_into(const VariableRecord& record, std::span<float> out);

// Current and peak bytes of decompressed copies alive at once.
class TransientAccounting {
 public:
  TransientAccounting() = default;
  TransientAccounting(const TransientAccounting& other);
  TransientAccounting& operator=(const TransientAccounting& other);

  void acquire(std::uint64_t bytes) noexcept;
  void release(std::uint64_t bytes) noexcept;
  void reset_peak() noexcept { peak_.store(current_.load()); }

  std::uint64_t current() const noexcept { return current_.load(); }
  std::uint64_t peak() const noexcept { return peak_.load(); }

 private:
  std::atomic<std::uint64_t> current_{0};
  std::atomic<std::uint64_t> peak_{0};
};

class ParamStore {
 public:
  using Consumer = std::function<void(std::span<const float>)>;
  using Applier = std::function<std::vector<float>(std::span<const float>)>;

  void add(VariableRecord record);

  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  bool contains(std::string_view name) const;
  const VariableRecord& at(std::string_view name) const;
  const std::vector<VariableRecord>& records() const noexcept { return records_; }

  // Materializes the decompressed values for the duration of the call only.
  template <typename Fn>
  decltype(auto) with_decompressed(std::string_view name, Fn&& consumer) const {
    const VariableRecord& record = at(name);
    Lease lease(accounting_, record.element_count());
    std::vector<float> values(record.element_count());
    decompress_into(record, values);
    return std::forward<Fn>(consumer)(std::span<const float>(values));
  }

  // Decompress, apply, recompress in the record's storage mode, discard.
  const VariableRecord& update_variable(std::string_view name, const Applier& applier,
                                        bool use_pvt);

  std::uint64_t parameter_memory_bytes() const noexcept;
  std::uint64_t current_transient_bytes() const noexcept { return accounting_.current(); }
  std::uint64_t peak_transient_bytes() const noexcept { return accounting_.peak(); }
  void reset_peak_transient() noexcept { accounting_.reset_peak(); }

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.records_ == b.records_; }

 private:
  class Lease {
   public:
    Lease(TransientAccounting& acct, std::size_t elements)
        : acct_(acct), bytes_(static_cast<std::uint64_t>(elements) * sizeof(float)) {
      acct_.acquire(bytes_);
    }
    ~Lease() { acct_.release(bytes_); }
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;

   private:
    TransientAccounting& acct_;
    std::uint64_t bytes_;
  };

  std::size_t index_of(std::string_view name) const;

  std::vector<VariableRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
  mutable TransientAccounting accounting_;
};

// Checkpoint format "OMC1", version 1, little-endian.
void save_store(const ParamStore& store, std::ostream& sink);
ParamStore load_store(std::istream& source);
void save_store_file(const ParamStore& store, const std::string& path);
ParamStore load_store_file(const std::string& path);

}  // namespace omc
