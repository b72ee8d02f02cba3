#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omc/fl_runtime.hpp"
#include "omc/nn_core.hpp"
#include "omc/quant_policy.hpp"

namespace omc {

struct DataConfig {
  std::size_t classes = 4;
  std::size_t dim = 8;
  std::size_t train_samples = 4096;
  std::size_t eval_samples = 2048;
  float spread = 0.5f;
};

struct ExperimentConfig {
  std::vector<std::size_t> hidden = {32};
  Activation activation = Activation::kRelu;
  bool layernorm = true;
  float layernorm_eps = 1e-5f;
  DataConfig data;
  FLConfig fl;
  std::uint64_t seed = 0;
  std::string label = "run";
  std::string out_dir = "out";

  ModelSpec model_spec() const;
  void validate() const;
};

// Flat "section.key = value" lines, '#' comments. Unknown keys are errors.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config_file(const std::filesystem::path& path);
// Applies one "key=value" override.
void apply_override(ExperimentConfig& cfg, std::string_view assignment);
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);
// Every key in schema order; parse_config(render_config(c)) reproduces c.
std::string render_config(const ExperimentConfig& cfg);
std::vector<std::string> config_keys();

struct InventoryEntry {
  std::string name;
  VariableKind kind = VariableKind::kOther;
  std::uint64_t elements = 0;
};
using ModelInventory = std::vector<InventoryEntry>;

ModelInventory inventory_from_spec(const ModelSpec& spec);
// Synthetic census in which weight matrices hold weight_fraction of all elements.
ModelInventory synthetic_inventory(double weight_fraction, std::uint64_t total_elements = 1'000'000,
                                   std::size_t weight_matrices = 16, std::size_t other_vectors = 4);

// Expected compressed bytes over FP32 bytes when each eligible variable is
// quantized with probability q, including 8 bytes of transform per
// quantized variable.
double memory_ratio(const ModelInventory& inventory, const PolicyConfig& policy);

FLState build_state(const ExperimentConfig& cfg);

struct RunSummary {
  std::string label;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  double memory_ratio = 1.0;
  std::uint64_t bytes_down_total = 0;
  std::uint64_t bytes_up_total = 0;
  std::uint64_t rounds = 0;
  std::vector<RoundMetrics> metrics;
};

// Writes metrics.csv, summary.json, final.omc and config.resolved into out.
RunSummary run_command(const ExperimentConfig& cfg, const std::filesystem::path& out);

struct AblationRow {
  std::string name;
  ExperimentConfig config;
  std::optional<RunSummary> summary;
  std::string error;
};

// The five cumulative configurations, in table order.
std::vector<AblationRow> ablation_configs(const ExperimentConfig& base);
std::vector<AblationRow> ablate_command(const ExperimentConfig& base, const std::filesystem::path& out);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

std::string codec_report(const FloatFormat& fmt, std::span<const float> values);

struct ReportSeries {
  std::string label;
  std::vector<RoundMetrics> metrics;
};
// Writes summary.json, eval_loss.svg and eval_accuracy.svg into out.
void report_command(const std::vector<std::filesystem::path>& files, const std::filesystem::path& out);
std::string render_svg_chart(const std::vector<ReportSeries>& series, bool accuracy,
                             const std::string& title);

}  // namespace omc
