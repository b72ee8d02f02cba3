#include "omc/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "omc/error.hpp"

namespace omc {

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::kRelu;
  if (text == "tanh") return Activation::kTanh;
  throw Error(ErrorCode::kInvalidConfig, "unknown activation '" + std::string(text) + "'");
}

std::string_view activation_name(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

void ModelSpec::validate() const {
  if (widths.size() < 3) throw Error(ErrorCode::kInvalidConfig, "model needs input, >= 1 hidden and output widths");
  for (std::size_t w : widths) {
    if (w == 0) throw Error(ErrorCode::kInvalidConfig, "layer widths must be >= 1");
  }
  if (!(layernorm_eps > 0.0f)) throw Error(ErrorCode::kInvalidConfig, "layernorm epsilon must be positive");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return Tensor{std::move(shape), std::vector<float>(n, 0.0f)};
}

void ModelParams::add(std::string name, VariableKind kind, Tensor tensor) {
  if (index_.contains(name)) throw Error(ErrorCode::kInvalidInput, "duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back(NamedTensor{std::move(name), kind, std::move(tensor)});
}

bool ModelParams::contains(std::string_view name) const { return index_.contains(std::string(name)); }

const NamedTensor& ModelParams::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw Error(ErrorCode::kMissingVariable, "no parameter named '" + std::string(name) + "'");
  return entries_[it->second];
}

NamedTensor& ModelParams::at(std::string_view name) {
  return const_cast<NamedTensor&>(std::as_const(*this).at(name));
}

std::vector<VariableTag> ModelParams::tags() const {
  std::vector<VariableTag> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(VariableTag{e.name, e.kind});
  return out;
}

std::size_t ModelParams::element_count() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ModelParams::visit(std::string_view name, const Visitor& fn) const {
  fn(std::span<const float>(at(name).tensor.data));
}

namespace {

std::string kernel_name(std::size_t layer) { return "dense_" + std::to_string(layer) + "/kernel"; }
std::string bias_name(std::size_t layer) { return "dense_" + std::to_string(layer) + "/bias"; }
std::string scale_name(std::size_t layer) { return "layer_norm_" + std::to_string(layer) + "/scale"; }
std::string offset_name(std::size_t layer) { return "layer_norm_" + std::to_string(layer) + "/offset"; }

}  // namespace

std::vector<ParamLayout> param_layout(const ModelSpec& spec) {
  spec.validate();
  std::vector<ParamLayout> out;
  const std::size_t dense_layers = spec.widths.size() - 1;
  for (std::size_t l = 0; l < dense_layers; ++l) {
    const std::size_t in = spec.widths[l];
    const std::size_t width = spec.widths[l + 1];
    out.push_back({kernel_name(l), VariableKind::kWeightMatrix, {in, width}});
    out.push_back({bias_name(l), VariableKind::kBiasVector, {width}});
    if (spec.use_layernorm && l + 1 < dense_layers) {
      out.push_back({scale_name(l), VariableKind::kNormScale, {width}});
      out.push_back({offset_name(l), VariableKind::kNormBias, {width}});
    }
  }
  return out;
}

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams params;
  for (auto& layout : param_layout(spec)) {
    Tensor t = Tensor::zeros(layout.shape);
    if (layout.kind == VariableKind::kWeightMatrix) {
      const auto fan_in = static_cast<float>(layout.shape[0]);
      const auto fan_out = static_cast<float>(layout.shape[1]);
      const float limit = std::sqrt(6.0f / (fan_in + fan_out));
      std::uniform_real_distribution<float> dist(-limit, limit);
      for (float& v : t.data) v = dist(rng);
    } else if (layout.kind == VariableKind::kNormScale) {
      std::fill(t.data.begin(), t.data.end(), 1.0f);
    }
    params.add(std::move(layout.name), layout.kind, std::move(t));
  }
  return params;
}

Batch Dataset::batch(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw Error(ErrorCode::kInvalidInput, "batch range out of bounds");
  return Batch{dim, std::span<const float>(features).subspan(begin * dim, (end - begin) * dim),
               std::span<const std::int32_t>(labels).subspan(begin, end - begin)};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out{dim, num_classes, {}, {}};
  out.features.reserve(indices.size() * dim);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.features.insert(out.features.end(), features.begin() + static_cast<std::ptrdiff_t>(i * dim),
                        features.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::vector<std::size_t> Dataset::label_histogram() const {
  std::vector<std::size_t> hist(num_classes, 0);
  for (std::int32_t y : labels) ++hist[static_cast<std::size_t>(y)];
  return hist;
}

// ---------------------------------------------------------------------------
// Forward / backward, shared by the float path and the double shadow path.

namespace {

template <typename T>
using Fetch = std::function<void(const std::string&, const std::function<void(std::span<const T>)>&)>;

template <typename T>
struct Network {
  const ModelSpec& spec;
  Fetch<T> fetch;

  // out = in * W + b, in is rows x nin.
  void dense(std::size_t layer, const std::vector<T>& in, std::size_t rows, std::vector<T>& out) const {
    const std::size_t nin = spec.widths[layer];
    const std::size_t nout = spec.widths[layer + 1];
    out.assign(rows * nout, T(0));
    fetch(kernel_name(layer), [&](std::span<const T> w) {
      for (std::size_t r = 0; r < rows; ++r) {
        T* dst = out.data() + r * nout;
        for (std::size_t i = 0; i < nin; ++i) {
          const T x = in[r * nin + i];
          const T* wrow = w.data() + i * nout;
          for (std::size_t j = 0; j < nout; ++j) dst[j] += x * wrow[j];
        }
      }
    });
    fetch(bias_name(layer), [&](std::span<const T> b) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < nout; ++j) out[r * nout + j] += b[j];
      }
    });
  }

  std::vector<T> forward(const std::vector<T>& input, std::size_t rows,
                         std::vector<BasicHiddenCache<T>>& cache) const {
    const std::size_t hidden = spec.hidden_layers();
    cache.assign(hidden, {});
    std::vector<T> x = input;
    for (std::size_t l = 0; l < hidden; ++l) {
      auto& c = cache[l];
      const std::size_t width = spec.widths[l + 1];
      std::vector<T> z;
      dense(l, x, rows, z);
      c.input = std::move(x);

      if (spec.use_layernorm) {
        c.normalized.resize(rows * width);
        c.inv_std.resize(rows);
        const T eps = static_cast<T>(spec.layernorm_eps);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* zr = z.data() + r * width;
          T mean = 0;
          for (std::size_t j = 0; j < width; ++j) mean += zr[j];
          mean /= static_cast<T>(width);
          T var = 0;
          for (std::size_t j = 0; j < width; ++j) var += (zr[j] - mean) * (zr[j] - mean);
          var /= static_cast<T>(width);
          const T inv_std = T(1) / std::sqrt(var + eps);
          c.inv_std[r] = inv_std;
          for (std::size_t j = 0; j < width; ++j) c.normalized[r * width + j] = (zr[j] - mean) * inv_std;
        }
        fetch(scale_name(l), [&](std::span<const T> g) {
          for (std::size_t k = 0; k < z.size(); ++k) z[k] = c.normalized[k] * g[k % width];
        });
        fetch(offset_name(l), [&](std::span<const T> beta) {
          for (std::size_t k = 0; k < z.size(); ++k) z[k] += beta[k % width];
        });
      }

      for (T& v : z) v = spec.activation == Activation::kRelu ? (v > T(0) ? v : T(0)) : std::tanh(v);
      c.output = z;
      x = std::move(z);
    }
    std::vector<T> logits;
    dense(hidden, x, rows, logits);
    return logits;
  }

  // Mean cross-entropy; fills dlogits with its gradient.
  double softmax_xent(const std::vector<T>& logits, std::span<const std::int32_t> labels,
                      std::vector<T>& dlogits) const {
    const std::size_t rows = labels.size();
    const std::size_t k = spec.num_classes();
    dlogits.assign(rows * k, T(0));
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* lr = logits.data() + r * k;
      T* dr = dlogits.data() + r * k;
      const T peak = *std::max_element(lr, lr + k);
      T sum = 0;
      for (std::size_t j = 0; j < k; ++j) {
        dr[j] = std::exp(lr[j] - peak);
        sum += dr[j];
      }
      const auto y = static_cast<std::size_t>(labels[r]);
      total += static_cast<double>(std::log(sum) - (lr[y] - peak));
      const T inv_rows = T(1) / static_cast<T>(rows);
      for (std::size_t j = 0; j < k; ++j) dr[j] = (dr[j] / sum - (j == y ? T(1) : T(0))) * inv_rows;
    }
    return total / static_cast<double>(rows);
  }

  // Gradient of a dense layer; returns d(input) when wanted.
  void dense_backward(std::size_t layer, const std::vector<T>& input, const std::vector<T>& dout,
                      std::size_t rows, std::vector<T>& dw, std::vector<T>& db,
                      std::vector<T>* din) const {
    const std::size_t nin = spec.widths[layer];
    const std::size_t nout = spec.widths[layer + 1];
    dw.assign(nin * nout, T(0));
    db.assign(nout, T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      const T* dr = dout.data() + r * nout;
      for (std::size_t i = 0; i < nin; ++i) {
        const T x = input[r * nin + i];
        T* dwrow = dw.data() + i * nout;
        for (std::size_t j = 0; j < nout; ++j) dwrow[j] += x * dr[j];
      }
      for (std::size_t j = 0; j < nout; ++j) db[j] += dr[j];
    }
    if (din == nullptr) return;
    din->assign(rows * nin, T(0));
    fetch(kernel_name(layer), [&](std::span<const T> w) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* dr = dout.data() + r * nout;
        for (std::size_t i = 0; i < nin; ++i) {
          const T* wrow = w.data() + i * nout;
          T acc = 0;
          for (std::size_t j = 0; j < nout; ++j) acc += dr[j] * wrow[j];
          (*din)[r * nin + i] = acc;
        }
      }
    });
  }

  // Gradients in param_layout order.
  double loss_and_grads(const std::vector<T>& input, std::span<const std::int32_t> labels,
                        std::vector<std::vector<T>>& grads) const {
    const std::size_t rows = labels.size();
    const std::size_t hidden = spec.hidden_layers();
    std::vector<BasicHiddenCache<T>> cache;
    const std::vector<T> logits = forward(input, rows, cache);
    std::vector<T> dout;
    const double loss = softmax_xent(logits, labels, dout);

    // Per dense layer: kernel, bias, then scale/offset for normalized hidden layers.
    const std::size_t per_hidden = spec.use_layernorm ? 4 : 2;
    grads.assign(hidden * per_hidden + 2, {});

    std::vector<T> da;
    const std::vector<T>& last_hidden = cache.back().output;
    dense_backward(hidden, last_hidden, dout, rows, grads[hidden * per_hidden],
                   grads[hidden * per_hidden + 1], &da);

    for (std::size_t l = hidden; l-- > 0;) {
      const auto& c = cache[l];
      const std::size_t width = spec.widths[l + 1];
      std::vector<T> dz(rows * width);
      for (std::size_t k = 0; k < dz.size(); ++k) {
        const T a = c.output[k];
        dz[k] = spec.activation == Activation::kRelu ? (a > T(0) ? da[k] : T(0)) : da[k] * (T(1) - a * a);
      }

      if (spec.use_layernorm) {
        auto& dscale = grads[l * per_hidden + 2];
        auto& doffset = grads[l * per_hidden + 3];
        dscale.assign(width, T(0));
        doffset.assign(width, T(0));
        for (std::size_t k = 0; k < dz.size(); ++k) {
          dscale[k % width] += dz[k] * c.normalized[k];
          doffset[k % width] += dz[k];
        }
        fetch(scale_name(l), [&](std::span<const T> g) {
          for (std::size_t k = 0; k < dz.size(); ++k) dz[k] *= g[k % width];
        });
        const auto n = static_cast<T>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          T* dr = dz.data() + r * width;
          const T* xr = c.normalized.data() + r * width;
          T sum = 0;
          T dot = 0;
          for (std::size_t j = 0; j < width; ++j) {
            sum += dr[j];
            dot += dr[j] * xr[j];
          }
          for (std::size_t j = 0; j < width; ++j) {
            dr[j] = c.inv_std[r] * (dr[j] - sum / n - xr[j] * dot / n);
          }
        }
      }

      dense_backward(l, c.input, dz, rows, grads[l * per_hidden], grads[l * per_hidden + 1],
                     l > 0 ? &da : nullptr);
    }
    return loss;
  }
};

void check_batch(const ModelSpec& spec, const Batch& batch) {
  spec.validate();
  if (batch.size() == 0) throw Error(ErrorCode::kInvalidInput, "empty batch");
  if (batch.dim != spec.input_width()) {
    throw Error(ErrorCode::kInvalidInput, "batch feature width " + std::to_string(batch.dim) +
                                              " does not match model input " +
                                              std::to_string(spec.input_width()));
  }
  if (batch.features.size() != batch.size() * batch.dim) {
    throw Error(ErrorCode::kInvalidInput, "batch feature buffer has wrong length");
  }
  for (std::int32_t y : batch.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes()) {
      throw Error(ErrorCode::kInvalidInput, "label " + std::to_string(y) + " out of range");
    }
  }
}

Network<float> float_network(const ParameterSource& params, const ModelSpec& spec) {
  return Network<float>{spec, [&params](const std::string& name,
                                        const std::function<void(std::span<const float>)>& fn) {
                          params.visit(name, fn);
                        }};
}

}  // namespace

ForwardResult forward(const ParameterSource& params, const ModelSpec& spec, const Batch& batch) {
  check_batch(spec, batch);
  const Network<float> net = float_network(params, spec);
  ForwardResult result;
  std::vector<float> input(batch.features.begin(), batch.features.end());
  result.logits.data = net.forward(input, batch.size(), result.cache);
  result.logits.shape = {batch.size(), spec.num_classes()};
  return result;
}

LossAndGrads loss_and_grads(const ParameterSource& params, const ModelSpec& spec, const Batch& batch) {
  check_batch(spec, batch);
  const Network<float> net = float_network(params, spec);
  std::vector<float> input(batch.features.begin(), batch.features.end());
  std::vector<std::vector<float>> grads;
  LossAndGrads out;
  out.loss = static_cast<float>(net.loss_and_grads(input, batch.labels, grads));

  auto layout = param_layout(spec);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    out.grads.add(std::move(layout[i].name), layout[i].kind,
                  Tensor{std::move(layout[i].shape), std::move(grads[i])});
  }
  return out;
}

std::vector<std::vector<double>> to_shadow(const ModelParams& params) {
  std::vector<std::vector<double>> out;
  for (const auto& e : params.entries()) out.emplace_back(e.tensor.data.begin(), e.tensor.data.end());
  return out;
}

ShadowLossAndGrads loss_and_grads_f64(const std::vector<std::vector<double>>& params,
                                      const ModelSpec& spec, const Batch& batch) {
  check_batch(spec, batch);
  const auto layout = param_layout(spec);
  if (params.size() != layout.size()) throw Error(ErrorCode::kInvalidInput, "shadow parameter count mismatch");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < layout.size(); ++i) index.emplace(layout[i].name, i);

  const Network<double> net{spec, [&](const std::string& name,
                                      const std::function<void(std::span<const double>)>& fn) {
                              fn(std::span<const double>(params[index.at(name)]));
                            }};
  std::vector<double> input(batch.features.begin(), batch.features.end());
  ShadowLossAndGrads out;
  out.loss = net.loss_and_grads(input, batch.labels, out.grads);
  return out;
}

EvalResult evaluate(const ParameterSource& params, const ModelSpec& spec, const Dataset& data) {
  if (data.empty()) throw Error(ErrorCode::kInvalidInput, "empty evaluation set");
  constexpr std::size_t kChunk = 1024;
  const std::size_t k = spec.num_classes();
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, data.size());
    const Batch b = data.batch(begin, end);
    const ForwardResult fr = forward(params, spec, b);
    for (std::size_t r = 0; r < b.size(); ++r) {
      const float* lr = fr.logits.data.data() + r * k;
      const float* best = std::max_element(lr, lr + k);
      const auto y = static_cast<std::size_t>(b.labels[r]);
      if (static_cast<std::size_t>(best - lr) == y) ++correct;
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(lr[j]) - *best);
      loss += std::log(sum) - (static_cast<double>(lr[y]) - *best);
    }
  }
  const auto n = static_cast<double>(data.size());
  return EvalResult{loss / n, static_cast<double>(correct) / n};
}

void sgd_step(ModelParams& params, const ModelParams& grads, float lr) {
  if (params.size() != grads.size()) throw Error(ErrorCode::kInvalidInput, "gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.entries()[i];
    const auto& g = grads.entries()[i];
    if (p.name != g.name || p.tensor.shape != g.tensor.shape) {
      throw Error(ErrorCode::kInvalidInput, "gradient '" + g.name + "' does not match parameter '" + p.name + "'");
    }
    for (std::size_t k = 0; k < p.tensor.data.size(); ++k) {
      p.tensor.data[k] = sgd_update(p.tensor.data[k], g.tensor.data[k], lr);
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

// Class c sits on +-e_{c mod dim}; classes beyond 2*dim get fixed random unit directions.
std::vector<float> class_mean(std::size_t c, std::size_t dim) {
  std::vector<float> mean(dim, 0.0f);
  if (c < 2 * dim) {
    mean[c % dim] = (c / dim) % 2 == 0 ? 1.0f : -1.0f;
    return mean;
  }
  std::mt19937_64 rng(0x5eedull + c);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  float norm = 0.0f;
  for (float& v : mean) {
    v = normal(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (float& v : mean) v /= norm > 0.0f ? norm : 1.0f;
  return mean;
}

}  // namespace

Dataset synth_clusters(std::size_t num_classes, std::size_t dim, std::size_t samples, float spread,
                       std::uint64_t seed) {
  if (num_classes == 0 || dim == 0 || samples == 0) {
    throw Error(ErrorCode::kInvalidConfig, "synthetic dataset sizes must be >= 1");
  }
  if (!(spread >= 0.0f)) throw Error(ErrorCode::kInvalidConfig, "spread must be >= 0");

  std::vector<std::vector<float>> means;
  for (std::size_t c = 0; c < num_classes; ++c) means.push_back(class_mean(c, dim));

  std::mt19937_64 rng(seed);
  Dataset data{dim, num_classes, std::vector<float>(samples * dim), std::vector<std::int32_t>(samples)};
  for (std::size_t i = 0; i < samples; ++i) data.labels[i] = static_cast<std::int32_t>(i % num_classes);
  std::shuffle(data.labels.begin(), data.labels.end(), rng);

  std::normal_distribution<float> noise(0.0f, 1.0f);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto& mean = means[static_cast<std::size_t>(data.labels[i])];
    for (std::size_t j = 0; j < dim; ++j) data.features[i * dim + j] = mean[j] + spread * noise(rng);
  }
  return data;
}

std::vector<Dataset> partition_iid(const Dataset& data, std::size_t num_clients, std::uint64_t seed) {
  if (num_clients == 0) throw Error(ErrorCode::kInvalidConfig, "num_clients must be >= 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Dataset> shards;
  const std::size_t base = data.size() / num_clients;
  const std::size_t extra = data.size() % num_clients;
  std::size_t pos = 0;
  for (std::size_t c = 0; c < num_clients; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    shards.push_back(data.subset(std::span<const std::size_t>(order).subspan(pos, len)));
    pos += len;
  }
  return shards;
}

std::vector<Dataset> partition_by_label(const Dataset& data, std::size_t num_clients,
                                        std::size_t labels_per_client, std::uint64_t seed) {
  if (num_clients == 0) throw Error(ErrorCode::kInvalidConfig, "num_clients must be >= 1");
  if (labels_per_client == 0) throw Error(ErrorCode::kInvalidConfig, "labels_per_client must be >= 1");
  const std::size_t classes = data.num_classes;
  const std::size_t per_client = std::min(labels_per_client, classes);
  if (num_clients * per_client < classes) {
    throw Error(ErrorCode::kInvalidConfig,
                std::to_string(num_clients) + " clients x " + std::to_string(per_client) +
                    " labels cannot cover " + std::to_string(classes) + " classes");
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> class_order(classes);
  std::iota(class_order.begin(), class_order.end(), std::size_t{0});
  std::shuffle(class_order.begin(), class_order.end(), rng);

  // Consecutive windows over the shuffled class ring; every class gets >= 1 holder.
  std::vector<std::vector<std::size_t>> holders(classes);
  for (std::size_t c = 0; c < num_clients; ++c) {
    for (std::size_t j = 0; j < per_client; ++j) holders[class_order[(c * per_client + j) % classes]].push_back(c);
  }

  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

  std::vector<std::vector<std::size_t>> assigned(num_clients);
  for (std::size_t cls = 0; cls < classes; ++cls) {
    auto& idx = by_class[cls];
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto& h = holders[cls];
    const std::size_t base = idx.size() / h.size();
    const std::size_t extra = idx.size() % h.size();
    std::size_t pos = 0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      const std::size_t len = base + (k < extra ? 1 : 0);
      assigned[h[k]].insert(assigned[h[k]].end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                            idx.begin() + static_cast<std::ptrdiff_t>(pos + len));
      pos += len;
    }
  }

  std::vector<Dataset> shards;
  for (auto& idx : assigned) {
    std::shuffle(idx.begin(), idx.end(), rng);
    shards.push_back(data.subset(idx));
  }
  return shards;
}

void write_dataset_csv(const Dataset& data, std::ostream& out) {
  for (std::size_t j = 0; j < data.dim; ++j) out << 'f' << j << ',';
  out << "label\n";
  out.precision(9);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim; ++j) out << data.features[i * data.dim + j] << ',';
    out << data.labels[i] << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in, std::size_t num_classes) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kInvalidInput, "dataset CSV is empty");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2) throw Error(ErrorCode::kInvalidInput, "dataset CSV needs feature and label columns");

  Dataset data;
  data.dim = columns - 1;
  std::size_t row = 1;
  std::int32_t max_label = -1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        if (col < data.dim) {
          data.features.push_back(std::stof(cell));
        } else if (col == data.dim) {
          const int y = std::stoi(cell);
          if (y < 0) throw Error(ErrorCode::kInvalidInput, "negative label");
          data.labels.push_back(y);
          max_label = std::max(max_label, data.labels.back());
        }
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::kInvalidInput, "bad number '" + cell + "' on CSV row " + std::to_string(row));
      }
      ++col;
    }
    if (col != columns) throw Error(ErrorCode::kInvalidInput, "CSV row " + std::to_string(row) + " has wrong column count");
  }
  data.num_classes = num_classes > 0 ? num_classes : static_cast<std::size_t>(max_label + 1);
  if (max_label >= 0 && static_cast<std::size_t>(max_label) >= data.num_classes) {
    throw Error(ErrorCode::kInvalidInput, "label exceeds declared class count");
  }
  return data;
}

}  // namespace omc
