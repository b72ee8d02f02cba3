#include "omc/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "omc/error.hpp"

namespace omc {
namespace fs = std::filesystem;

ModelSpec ExperimentConfig::model_spec() const {
  ModelSpec spec;
  spec.widths.push_back(data.dim);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(data.classes);
  spec.activation = activation;
  spec.use_layernorm = layernorm;
  spec.layernorm_eps = layernorm_eps;
  return spec;
}

void ExperimentConfig::validate() const {
  model_spec().validate();
  fl.validate();
  if (data.classes == 0 || data.dim == 0 || data.train_samples == 0 || data.eval_samples == 0) {
    throw Error(ErrorCode::kInvalidConfig, "data sizes must be >= 1");
  }
  if (!(data.spread >= 0.0f)) throw Error(ErrorCode::kInvalidConfig, "data.spread must be >= 0");
  if (fl.partition == PartitionMode::kByLabel && fl.labels_per_client == 0) {
    throw Error(ErrorCode::kInvalidConfig, "data.labels_per_client must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// Configuration schema

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw Error(ErrorCode::kInvalidConfig, "key '" + std::string(key) + "': cannot parse '" +
                                             std::string(value) + "' as " + std::string(expected));
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "an unsigned integer");
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
    bad_value(key, v, "a finite number");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v, "true/false");
}

std::string render_real(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::string render_bool(bool v) { return v ? "true" : "false"; }

struct ConfigKey {
  std::string_view key;
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Field>
ConfigKey size_key(std::string_view key, Field field) {
  return {key,
          [field](ExperimentConfig& c, std::string_view k, std::string_view v) {
            field(c) = static_cast<std::size_t>(parse_u64(k, v));
          },
          [field](const ExperimentConfig& c) { return std::to_string(field(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Field>
ConfigKey float_key(std::string_view key, Field field) {
  return {key,
          [field](ExperimentConfig& c, std::string_view k, std::string_view v) {
            field(c) = static_cast<float>(parse_real(k, v));
          },
          [field](const ExperimentConfig& c) { return render_real(field(const_cast<ExperimentConfig&>(c)), 9); }};
}

template <typename Field>
ConfigKey bool_key(std::string_view key, Field field) {
  return {key,
          [field](ExperimentConfig& c, std::string_view k, std::string_view v) { field(c) = parse_bool(k, v); },
          [field](const ExperimentConfig& c) { return render_bool(field(const_cast<ExperimentConfig&>(c))); }};
}

const std::vector<ConfigKey>& schema() {
  static const std::vector<ConfigKey> keys = {
      {"model.hidden",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.hidden.clear();
         std::stringstream ss{std::string(v)};
         std::string item;
         while (std::getline(ss, item, ',')) c.hidden.push_back(static_cast<std::size_t>(parse_u64(k, trim(item))));
         if (c.hidden.empty()) bad_value(k, v, "a comma-separated width list");
       },
       [](const ExperimentConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.hidden.size(); ++i) out += (i ? "," : "") + std::to_string(c.hidden[i]);
         return out;
       }},
      {"model.activation",
       [](ExperimentConfig& c, std::string_view, std::string_view v) { c.activation = parse_activation(v); },
       [](const ExperimentConfig& c) { return std::string(activation_name(c.activation)); }},
      bool_key("model.layernorm", [](ExperimentConfig& c) -> bool& { return c.layernorm; }),
      float_key("model.layernorm_eps", [](ExperimentConfig& c) -> float& { return c.layernorm_eps; }),
      size_key("data.classes", [](ExperimentConfig& c) -> std::size_t& { return c.data.classes; }),
      size_key("data.dim", [](ExperimentConfig& c) -> std::size_t& { return c.data.dim; }),
      size_key("data.train_samples", [](ExperimentConfig& c) -> std::size_t& { return c.data.train_samples; }),
      size_key("data.eval_samples", [](ExperimentConfig& c) -> std::size_t& { return c.data.eval_samples; }),
      float_key("data.spread", [](ExperimentConfig& c) -> float& { return c.data.spread; }),
      {"data.partition",
       [](ExperimentConfig& c, std::string_view, std::string_view v) { c.fl.partition = parse_partition_mode(v); },
       [](const ExperimentConfig& c) { return std::string(partition_mode_name(c.fl.partition)); }},
      size_key("data.labels_per_client", [](ExperimentConfig& c) -> std::size_t& { return c.fl.labels_per_client; }),
      size_key("data.num_clients", [](ExperimentConfig& c) -> std::size_t& { return c.fl.num_clients; }),
      size_key("fl.clients_per_round", [](ExperimentConfig& c) -> std::size_t& { return c.fl.clients_per_round; }),
      size_key("fl.local_steps", [](ExperimentConfig& c) -> std::size_t& { return c.fl.local_steps; }),
      size_key("fl.batch_size", [](ExperimentConfig& c) -> std::size_t& { return c.fl.batch_size; }),
      float_key("fl.learning_rate", [](ExperimentConfig& c) -> float& { return c.fl.learning_rate; }),
      size_key("fl.rounds", [](ExperimentConfig& c) -> std::size_t& { return c.fl.total_rounds; }),
      size_key("fl.eval_every", [](ExperimentConfig& c) -> std::size_t& { return c.fl.eval_every; }),
      size_key("fl.threads", [](ExperimentConfig& c) -> std::size_t& { return c.fl.threads; }),
      {"policy.format",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         try {
           c.fl.policy.format = FloatFormat::parse(v);
         } catch (const Error&) {
           bad_value(k, v, "a S1E<y>M<z> format");
         }
       },
       [](const ExperimentConfig& c) { return c.fl.policy.format.to_string(); }},
      {"policy.quantize_fraction",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.fl.policy.quantize_fraction = parse_real(k, v);
       },
       [](const ExperimentConfig& c) { return render_real(c.fl.policy.quantize_fraction, 17); }},
      bool_key("policy.weights_only", [](ExperimentConfig& c) -> bool& { return c.fl.policy.weights_only; }),
      bool_key("policy.use_pvt", [](ExperimentConfig& c) -> bool& { return c.fl.policy.use_pvt; }),
      {"policy.selection_seed",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.fl.policy.selection_seed = parse_u64(k, v); },
       [](const ExperimentConfig& c) { return std::to_string(c.fl.policy.selection_seed); }},
      bool_key("policy.passthrough_as_full", [](ExperimentConfig& c) -> bool& { return c.fl.passthrough_as_full; }),
      bool_key("run.record_seconds", [](ExperimentConfig& c) -> bool& { return c.fl.record_seconds; }),
      {"run.seed",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.seed = parse_u64(k, v); },
       [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      {"run.label", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.label = std::string(v); },
       [](const ExperimentConfig& c) { return c.label; }},
      {"run.out_dir", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.out_dir = std::string(v); },
       [](const ExperimentConfig& c) { return c.out_dir; }},
  };
  return keys;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : schema()) out.emplace_back(k.key);
  return out;
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& k : schema()) {
    if (k.key == key) {
      k.set(cfg, key, value);
      return;
    }
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown configuration key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  std::stringstream ss{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kInvalidConfig, "line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set_config_value(base, trim(std::string_view(content).substr(0, eq)),
                       trim(std::string_view(content).substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(ErrorCode::kInvalidConfig, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

ExperimentConfig load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidConfig, "cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorCode::kInvalidConfig, "override '" + std::string(assignment) + "' must be key=value");
  }
  set_config_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string render_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : schema()) out += std::string(k.key) + " = " + k.get(cfg) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Accounting

ModelInventory inventory_from_spec(const ModelSpec& spec) {
  ModelInventory inv;
  for (const auto& p : param_layout(spec)) {
    std::uint64_t n = 1;
    for (std::size_t d : p.shape) n *= d;
    inv.push_back({p.name, p.kind, n});
  }
  return inv;
}

ModelInventory synthetic_inventory(double weight_fraction, std::uint64_t total_elements,
                                   std::size_t weight_matrices, std::size_t other_vectors) {
  if (weight_matrices == 0 || !(weight_fraction >= 0.0 && weight_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidInput, "bad synthetic inventory parameters");
  }
  const auto weight_total = static_cast<std::uint64_t>(std::llround(weight_fraction * static_cast<double>(total_elements)));
  const std::uint64_t other_total = total_elements - weight_total;
  ModelInventory inv;
  for (std::size_t i = 0; i < weight_matrices; ++i) {
    const std::uint64_t n = weight_total / weight_matrices + (i < weight_total % weight_matrices ? 1 : 0);
    inv.push_back({"layer_" + std::to_string(i) + "/kernel", VariableKind::kWeightMatrix, n});
  }
  for (std::size_t i = 0; i < other_vectors && other_total > 0; ++i) {
    const std::uint64_t n = other_total / other_vectors + (i < other_total % other_vectors ? 1 : 0);
    const VariableKind kind = i % 2 == 0 ? VariableKind::kNormScale : VariableKind::kNormBias;
    inv.push_back({"norm_" + std::to_string(i), kind, n});
  }
  return inv;
}

double memory_ratio(const ModelInventory& inventory, const PolicyConfig& policy) {
  policy.validate();
  if (inventory.empty()) throw Error(ErrorCode::kInvalidInput, "empty inventory");
  const double q = policy.quantize_fraction;
  const double bits = policy.format.total_bits();
  double full = 0.0;
  double compressed = 0.0;
  for (const auto& v : inventory) {
    const auto n = static_cast<double>(v.elements);
    full += 4.0 * n;
    const bool eligible = !policy.weights_only || v.kind == VariableKind::kWeightMatrix;
    compressed += eligible ? q * (n * bits / 8.0 + 8.0) + (1.0 - q) * 4.0 * n : 4.0 * n;
  }
  if (full == 0.0) throw Error(ErrorCode::kInvalidInput, "inventory holds no elements");
  return compressed / full;
}

// ---------------------------------------------------------------------------
// Runs

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) { return mix64(seed ^ mix64(tag)); }

std::string json_number(double v) { return render_real(v, 17); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kInvalidInput, "cannot write '" + path.string() + "'");
  out << text;
}

nlohmann::ordered_json summary_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["label"] = s.label;
  j["final_loss"] = s.final_loss;
  j["final_accuracy"] = s.final_accuracy;
  j["memory_ratio"] = s.memory_ratio;
  j["bytes_down_total"] = s.bytes_down_total;
  j["bytes_up_total"] = s.bytes_up_total;
  j["rounds"] = s.rounds;
  return j;
}

RunSummary summarize(const std::string& label, const std::vector<RoundMetrics>& metrics) {
  RunSummary s;
  s.label = label;
  s.metrics = metrics;
  for (const auto& m : metrics) {
    s.bytes_down_total += m.bytes_down;
    s.bytes_up_total += m.bytes_up;
    if (m.eval_loss) s.final_loss = *m.eval_loss;
    if (m.eval_accuracy) s.final_accuracy = *m.eval_accuracy;
    s.rounds = std::max<std::uint64_t>(s.rounds, m.round);
  }
  return s;
}

}  // namespace

FLState build_state(const ExperimentConfig& cfg) {
  cfg.validate();
  FLState state;
  state.spec = cfg.model_spec();
  const Dataset train = synth_clusters(cfg.data.classes, cfg.data.dim, cfg.data.train_samples,
                                       cfg.data.spread, derive_seed(cfg.seed, 1));
  state.eval_set = synth_clusters(cfg.data.classes, cfg.data.dim, cfg.data.eval_samples, cfg.data.spread,
                                  derive_seed(cfg.seed, 2));
  state.shards = cfg.fl.partition == PartitionMode::kIid
                     ? partition_iid(train, cfg.fl.num_clients, derive_seed(cfg.seed, 3))
                     : partition_by_label(train, cfg.fl.num_clients, cfg.fl.labels_per_client,
                                          derive_seed(cfg.seed, 3));
  state.server = init_params(state.spec, derive_seed(cfg.seed, 4));
  return state;
}

RunSummary run_command(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  fs::create_directories(out);
  write_text(out / "config.resolved", render_config(cfg));

  FLConfig fl = cfg.fl;
  fl.seed = cfg.seed;

  std::ofstream csv(out / "metrics.csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw Error(ErrorCode::kInvalidInput, "cannot write metrics into '" + out.string() + "'");
  write_metrics_header(csv);
  const ExperimentResult result =
      run_experiment(build_state(cfg), fl,
                     [&](const RoundMetrics& m) {
                       write_metrics_row(csv, m);
                       csv.flush();
                     },
                     (out / "final.omc").string());

  RunSummary summary = summarize(cfg.label, result.metrics);
  summary.memory_ratio = memory_ratio(inventory_from_spec(cfg.model_spec()), cfg.fl.policy);
  write_text(out / "summary.json", summary_json(summary).dump(2) + "\n");
  return summary;
}

std::vector<AblationRow> ablation_configs(const ExperimentConfig& base) {
  std::vector<AblationRow> rows;
  auto add = [&](std::string name, double q, bool weights_only, bool pvt) {
    ExperimentConfig c = base;
    c.fl.policy.quantize_fraction = q;
    c.fl.policy.weights_only = weights_only;
    c.fl.policy.use_pvt = pvt;
    c.label = base.label + "/" + name;
    rows.push_back({std::move(name), std::move(c), std::nullopt, {}});
  };
  add("fp32", 0.0, false, false);
  add("quantized", 1.0, false, false);
  add("quantized+pvt", 1.0, false, true);
  add("quantized+pvt+weights_only", 1.0, true, true);
  add("quantized+pvt+weights_only+partial", 0.9, true, true);
  return rows;
}

std::vector<AblationRow> ablate_command(const ExperimentConfig& base, const fs::path& out) {
  std::vector<AblationRow> rows = ablation_configs(base);
  fs::create_directories(out);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& row = rows[i];
    try {
      row.summary = run_command(row.config, out / ("row" + std::to_string(i + 1) + "_" + row.name));
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  }

  std::string csv = "row,name,quantized,pvt,weights_only,quantize_fraction,final_loss,final_accuracy,memory_ratio,error\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& p = r.config.fl.policy;
    csv += std::to_string(i + 1) + "," + r.name + "," + render_bool(p.quantize_fraction > 0.0) + "," +
           render_bool(p.use_pvt) + "," + render_bool(p.weights_only) + "," + render_real(p.quantize_fraction, 6) + ",";
    if (r.summary) {
      csv += json_number(r.summary->final_loss) + "," + json_number(r.summary->final_accuracy) + "," +
             json_number(r.summary->memory_ratio) + ",";
    } else {
      csv += ",,,";
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    csv += err + "\n";
  }
  write_text(out / "ablation.csv", csv);
  write_text(out / "ablation.md", format_ablation_table(rows));
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "| # | configuration | format | PVT | weights only | q | final loss | final acc | memory ratio |\n";
  out += "|---|---|---|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& p = r.config.fl.policy;
    const std::string fmt = p.quantize_fraction > 0.0 ? p.format.to_string() : "S1E8M23";
    out += "| " + std::to_string(i + 1) + " | " + r.name + " | " + fmt + " | " + (p.use_pvt ? "yes" : "no") +
           " | " + (p.weights_only ? "yes" : "no") + " | " + render_real(p.quantize_fraction, 3) + " | ";
    if (r.summary) {
      out += render_real(r.summary->final_loss, 5) + " | " + render_real(r.summary->final_accuracy, 4) + " | " +
             render_real(r.summary->memory_ratio, 4) + " |\n";
    } else {
      out += "error: " + r.error + " | | |\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// codec

std::string codec_report(const FloatFormat& fmt, std::span<const float> values) {
  std::ostringstream out;
  out << "format " << fmt.to_string() << " (" << fmt.total_bits() << " bits, bias " << fmt.bias() << ")\n";
  out << "max finite:    " << render_real(fmt.max_finite(), 9) << "\n";
  out << "min normal:    " << render_real(fmt.min_normal(), 9) << "\n";
  out << "min subnormal: " << render_real(fmt.min_subnormal(), 9) << "\n";
  const int hex_digits = (fmt.total_bits() + 3) / 4;
  auto hex = [&](std::uint32_t bits) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "0x%0*x", hex_digits & 0xf, bits);
    return std::string(buf);
  };
  if (!values.empty()) {
    out << "\ninput\tquantized\tpattern\thex\n";
    for (float v : values) {
      const BitPattern p = encode(v, fmt);
      out << render_real(v, 9) << "\t" << render_real(decode(p, fmt), 9) << "\t" << p.to_binary_string(fmt)
          << "\t" << hex(p.bits) << "\n";
    }
  }
  if (fmt.total_bits() <= 12) {
    out << "\nall representable values:\npattern\thex\tvalue\n";
    for (std::uint32_t bits = 0; bits < (1u << fmt.total_bits()); ++bits) {
      const BitPattern p{bits};
      out << p.to_binary_string(fmt) << "\t" << hex(bits) << "\t" << render_real(decode(p, fmt), 9) << "\n";
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// report

namespace {

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg_chart(const std::vector<ReportSeries>& series, bool accuracy,
                             const std::string& title) {
  constexpr double kWidth = 720, kHeight = 440, kLeft = 70, kRight = 180, kTop = 40, kBottom = 50;
  static constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                             "#9467bd", "#8c564b", "#e377c2", "#17becf"};

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (const auto& m : s.metrics) {
      const auto& y = accuracy ? m.eval_accuracy : m.eval_loss;
      if (!y) continue;
      xmin = std::min(xmin, static_cast<double>(m.round));
      xmax = std::max(xmax, static_cast<double>(m.round));
      ymin = std::min(ymin, *y);
      ymax = std::max(ymax, *y);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"24\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    svg << "<text x=\"" << px(fx) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
        << render_real(fx, 4) << "</text>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">" << render_real(fy, 4)
        << "</text>\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << py(fy) << "\" x2=\"" << kLeft + pw << "\" y2=\"" << py(fy)
        << "\" stroke=\"#dddddd\"/>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">round</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& m : series[i].metrics) {
      const auto& y = accuracy ? m.eval_accuracy : m.eval_loss;
      if (y) svg << px(static_cast<double>(m.round)) << "," << py(*y) << " ";
    }
    svg << "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(i) + 8;
    svg << "<line x1=\"" << kLeft + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 32 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kLeft + pw + 38 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[i].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void report_command(const std::vector<fs::path>& files, const fs::path& out) {
  if (files.empty()) throw Error(ErrorCode::kInvalidInput, "report needs at least one metrics CSV");
  std::vector<ReportSeries> series;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw Error(ErrorCode::kInvalidInput, "cannot read '" + f.string() + "'");
    ReportSeries s;
    s.label = f.stem() == "metrics" && f.has_parent_path() ? f.parent_path().filename().string() : f.stem().string();
    s.metrics = read_metrics_csv(in);
    auto j = summary_json(summarize(s.label, s.metrics));
    j.erase("memory_ratio");
    j["file"] = f.string();
    runs.push_back(std::move(j));
    series.push_back(std::move(s));
  }
  fs::create_directories(out);
  nlohmann::ordered_json summary;
  summary["runs"] = runs;
  write_text(out / "summary.json", summary.dump(2) + "\n");
  write_text(out / "eval_loss.svg", render_svg_chart(series, false, "eval loss vs round"));
  write_text(out / "eval_accuracy.svg", render_svg_chart(series, true, "eval accuracy vs round"));
}

}  // namespace omc
