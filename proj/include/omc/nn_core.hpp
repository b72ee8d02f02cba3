#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "omc/quant_policy.hpp"
#include "omc/variable_kind.hpp"

namespace omc {

enum class Activation { kRelu, kTanh };

Activation parse_activation(std::string_view text);
std::string_view activation_name(Activation a);

// Fully connected classifier: widths = {input, hidden..., classes}. Each
// hidden layer is dense -> (layer norm) -> activation.
struct ModelSpec {
  std::vector<std::size_t> widths;
  Activation activation = Activation::kRelu;
  bool use_layernorm = true;
  float layernorm_eps = 1e-5f;

  void validate() const;
  std::size_t input_width() const { return widths.front(); }
  std::size_t num_classes() const { return widths.back(); }
  std::size_t hidden_layers() const { return widths.size() - 2; }
};

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  static Tensor zeros(std::vector<std::size_t> shape);
  std::size_t size() const noexcept { return data.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct NamedTensor {
  std::string name;
  VariableKind kind = VariableKind::kOther;
  Tensor tensor;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Read access to parameters by name. The span is only valid inside fn, which
// lets compressed stores hand out transient decompressed copies.
class ParameterSource {
 public:
  using Visitor = std::function<void(std::span<const float>)>;
  virtual ~ParameterSource() = default;
  virtual void visit(std::string_view name, const Visitor& fn) const = 0;
};

class ModelParams : public ParameterSource {
 public:
  void add(std::string name, VariableKind kind, Tensor tensor);

  const std::vector<NamedTensor>& entries() const noexcept { return entries_; }
  std::vector<NamedTensor>& entries() noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(std::string_view name) const;
  const NamedTensor& at(std::string_view name) const;
  NamedTensor& at(std::string_view name);
  std::vector<VariableTag> tags() const;
  std::size_t element_count() const noexcept;

  void visit(std::string_view name, const Visitor& fn) const override;

  friend bool operator==(const ModelParams& a, const ModelParams& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ParamLayout {
  std::string name;
  VariableKind kind;
  std::vector<std::size_t> shape;
};

// Parameter names, kinds and shapes in model order.
std::vector<ParamLayout> param_layout(const ModelSpec& spec);

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);

struct Batch {
  std::size_t dim = 0;
  std::span<const float> features;  // size() x dim, row-major
  std::span<const std::int32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<float> features;
  std::vector<std::int32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  Batch batch(std::size_t begin, std::size_t end) const;
  Batch all() const { return batch(0, size()); }
  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> label_histogram() const;
};

template <typename T>
struct BasicHiddenCache {
  std::vector<T> input;       // batch x in
  std::vector<T> normalized;  // batch x out, layer-norm output before gain/offset
  std::vector<T> inv_std;     // batch
  std::vector<T> output;      // batch x out, after activation
};
using HiddenCache = BasicHiddenCache<float>;

struct ForwardResult {
  Tensor logits;
  std::vector<HiddenCache> cache;
};

ForwardResult forward(const ParameterSource& params, const ModelSpec& spec, const Batch& batch);

struct LossAndGrads {
  float loss = 0.0f;
  ModelParams grads;
};

// Mean softmax cross-entropy and gradients of every parameter.
LossAndGrads loss_and_grads(const ParameterSource& params, const ModelSpec& spec, const Batch& batch);

// The same computation carried out in double, for finite-difference checks.
// Values follow param_layout order.
struct ShadowLossAndGrads {
  double loss = 0.0;
  std::vector<std::vector<double>> grads;
};
std::vector<std::vector<double>> to_shadow(const ModelParams& params);
ShadowLossAndGrads loss_and_grads_f64(const std::vector<std::vector<double>>& params,
                                      const ModelSpec& spec, const Batch& batch);

// Mean loss and top-1 accuracy; evaluated in chunks.
struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};
EvalResult evaluate(const ParameterSource& params, const ModelSpec& spec, const Dataset& data);

inline float sgd_update(float param, float grad, float lr) noexcept { return param - lr * grad; }
void sgd_step(ModelParams& params, const ModelParams& grads, float lr);

Dataset synth_clusters(std::size_t num_classes, std::size_t dim, std::size_t samples, float spread,
                       std::uint64_t seed);
std::vector<Dataset> partition_iid(const Dataset& data, std::size_t num_clients, std::uint64_t seed);
std::vector<Dataset> partition_by_label(const Dataset& data, std::size_t num_clients,
                                        std::size_t labels_per_client, std::uint64_t seed);

// Header row f0..f{d-1},label; one sample per line.
void write_dataset_csv(const Dataset& data, std::ostream& out);
Dataset read_dataset_csv(std::istream& in, std::size_t num_classes = 0);

}  // namespace omc
