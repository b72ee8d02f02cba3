#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "omc/experiment.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using omc::ExperimentConfig;
using omc::FloatFormat;
using omc::PolicyConfig;
using omc::testing::expect_error;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("omc_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// metrics.csv without the wall-clock column.
std::string metrics_without_seconds(const fs::path& p) {
  std::stringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.hidden = {12};
  cfg.data.train_samples = 256;
  cfg.data.eval_samples = 128;
  cfg.fl.num_clients = 4;
  cfg.fl.clients_per_round = 4;
  cfg.fl.total_rounds = 3;
  cfg.fl.learning_rate = 0.2f;
  cfg.seed = 5;
  cfg.label = "tiny";
  return cfg;
}

PolicyConfig policy(FloatFormat fmt, double q, bool weights_only = true) {
  PolicyConfig p;
  p.format = fmt;
  p.quantize_fraction = q;
  p.weights_only = weights_only;
  return p;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config parsing") {
  const auto cfg = omc::parse_config(R"(
# comment line
model.hidden = 16, 8
model.activation = tanh   # trailing comment
policy.format = S1E4M14
policy.quantize_fraction = 0.75
policy.weights_only = false
data.partition = by_label
fl.rounds = 7
run.label = hello world
)");
  CHECK(cfg.hidden == std::vector<std::size_t>{16, 8});
  CHECK(cfg.activation == omc::Activation::kTanh);
  CHECK(cfg.fl.policy.format == FloatFormat(4, 14));
  CHECK(cfg.fl.policy.quantize_fraction == 0.75);
  CHECK(!cfg.fl.policy.weights_only);
  CHECK(cfg.fl.partition == omc::PartitionMode::kByLabel);
  CHECK(cfg.fl.total_rounds == 7);
  CHECK(cfg.label == "hello world");
  CHECK(cfg.data.classes == ExperimentConfig{}.data.classes);

  expect_error(omc::ErrorCode::kInvalidConfig, [] { omc::parse_config("model.width = 3\n"); });
  expect_error(omc::ErrorCode::kInvalidConfig, [] { omc::parse_config("fl.rounds = -1\n"); });
  expect_error(omc::ErrorCode::kInvalidConfig, [] { omc::parse_config("fl.rounds = 3x\n"); });
  expect_error(omc::ErrorCode::kInvalidConfig, [] { omc::parse_config("policy.use_pvt = yes\n"); });
  expect_error(omc::ErrorCode::kInvalidConfig, [] { omc::parse_config("policy.format = S1E9M3\n"); });
  expect_error(omc::ErrorCode::kInvalidConfig, [] { omc::parse_config("just words\n"); });
  expect_error(omc::ErrorCode::kInvalidConfig, [] { omc::parse_config("fl.learning_rate = nan\n"); });
}

TEST_CASE("overrides and validation") {
  auto cfg = tiny_config();
  omc::apply_override(cfg, "fl.learning_rate=0.05");
  omc::apply_override(cfg, " policy.use_pvt = false ");
  CHECK(cfg.fl.learning_rate == 0.05f);
  CHECK(!cfg.fl.policy.use_pvt);
  expect_error(omc::ErrorCode::kInvalidConfig, [&] { omc::apply_override(cfg, "fl.rounds"); });
  expect_error(omc::ErrorCode::kInvalidConfig, [&] { omc::apply_override(cfg, "nope=1"); });

  cfg.fl.clients_per_round = 9;
  expect_error(omc::ErrorCode::kInvalidConfig, [&] { cfg.validate(); });
  cfg = tiny_config();
  cfg.fl.policy.quantize_fraction = 2.0;
  expect_error(omc::ErrorCode::kInvalidConfig, [&] { cfg.validate(); });
}

TEST_CASE("rendered config parses back to the same config") {
  auto cfg = tiny_config();
  cfg.hidden = {7, 5, 3};
  cfg.layernorm_eps = 3.3e-6f;
  cfg.fl.learning_rate = 0.1f;
  cfg.fl.policy.quantize_fraction = 0.1;
  cfg.fl.policy.selection_seed = 18446744073709551615ull;
  cfg.data.spread = 0.3f;
  cfg.fl.partition = omc::PartitionMode::kByLabel;
  const auto text = omc::render_config(cfg);
  const auto back = omc::parse_config(text);
  CHECK(omc::render_config(back) == text);
  CHECK(back.fl.learning_rate == cfg.fl.learning_rate);
  CHECK(back.layernorm_eps == cfg.layernorm_eps);
  CHECK(back.fl.policy.quantize_fraction == cfg.fl.policy.quantize_fraction);
  CHECK(back.fl.policy.selection_seed == cfg.fl.policy.selection_seed);
  CHECK(back.data.spread == cfg.data.spread);
  // every key appears exactly once
  for (const auto& key : omc::config_keys()) {
    CAPTURE(key);
    CHECK(text.find(key + " = ") != std::string::npos);
  }
}

TEST_CASE("memory ratio examples") {
  const auto inv = omc::synthetic_inventory(0.998);
  const auto r19 = omc::memory_ratio(inv, policy(FloatFormat(4, 14), 0.9));
  const auto r11 = omc::memory_ratio(inv, policy(FloatFormat(3, 7), 0.9));
  CHECK(r19 == doctest::Approx(0.998 * (0.9 * 19.0 / 32 + 0.1) + 0.002).epsilon(1e-4));
  CHECK(r11 == doctest::Approx(0.998 * (0.9 * 11.0 / 32 + 0.1) + 0.002).epsilon(1e-4));
  CHECK(std::abs(r19 - 0.64) <= 0.01);
  CHECK(std::abs(r11 - 0.41) <= 0.01);
  CHECK(std::abs((1.0 - r11) - 0.59) <= 0.01);

  // S1E8M23 costs exactly FP32 plus the transform scalars.
  const auto r32 = omc::memory_ratio(inv, policy(FloatFormat(8, 23), 0.9));
  CHECK(r32 >= 1.0);
  CHECK(r32 - 1.0 < 1e-4);
  CHECK(omc::memory_ratio(inv, policy(FloatFormat(3, 7), 0.0)) == 1.0);
  expect_error(omc::ErrorCode::kInvalidInput, [] { omc::memory_ratio({}, PolicyConfig{}); });

  // Exact agreement with a store built from the same census at q = 1.
  omc::ModelInventory small = {{"w", omc::VariableKind::kWeightMatrix, 100},
                               {"b", omc::VariableKind::kBiasVector, 10}};
  CHECK(omc::memory_ratio(small, policy(FloatFormat(3, 7), 1.0)) ==
        doctest::Approx((100 * 11.0 / 8 + 8 + 40) / 440.0));
}

TEST_CASE("memory ratio is monotone in bits and in 1 - q") {
  const auto inv = omc::synthetic_inventory(0.9);
  for (bool wo : {true, false}) {
    double prev_q = 0.0;
    for (int step = 10; step >= 0; --step) {
      const double q = step / 10.0;
      const double r = omc::memory_ratio(inv, policy(FloatFormat(3, 7), q, wo));
      CHECK(r >= prev_q);
      prev_q = r;
    }
    for (int y = 2; y <= 8; ++y) {
      double prev = 0.0;
      for (int z = 0; z <= 23; ++z) {
        const double r = omc::memory_ratio(inv, policy(FloatFormat(y, z), 0.9, wo));
        CHECK(r >= prev);
        prev = r;
      }
    }
  }
}

TEST_CASE("inventory from a model spec") {
  omc::ModelSpec spec;
  spec.widths = {8, 32, 4};
  const auto inv = omc::inventory_from_spec(spec);
  std::uint64_t total = 0;
  for (const auto& e : inv) total += e.elements;
  CHECK(total == omc::init_params(spec, 0).element_count());
  CHECK(inv.front().name == "dense_0/kernel");
  CHECK(inv.front().elements == 256);
}

TEST_CASE("run writes outputs and is reproducible from the echoed config") {
  const auto dir = scratch_dir("run");
  const auto cfg = tiny_config();
  const auto summary = omc::run_command(cfg, dir / "a");
  for (const char* f : {"config.resolved", "metrics.csv", "summary.json", "final.omc"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / "a" / f));
  }
  const auto json = nlohmann::json::parse(slurp(dir / "a" / "summary.json"));
  for (const char* key : {"final_loss", "final_accuracy", "memory_ratio", "bytes_down_total", "bytes_up_total", "rounds"}) {
    CAPTURE(key);
    CHECK(json.contains(key));
  }
  CHECK(json["rounds"] == 3);
  CHECK(json["final_loss"].get<double>() == summary.final_loss);
  CHECK(summary.metrics.size() == 4);

  const auto echoed = omc::load_config_file(dir / "a" / "config.resolved");
  omc::run_command(echoed, dir / "b");
  CHECK(metrics_without_seconds(dir / "a" / "metrics.csv") == metrics_without_seconds(dir / "b" / "metrics.csv"));
  CHECK(slurp(dir / "a" / "final.omc") == slurp(dir / "b" / "final.omc"));
  CHECK(slurp(dir / "a" / "summary.json") == slurp(dir / "b" / "summary.json"));

  // The checkpoint holds the final server model.
  const auto store = omc::load_store_file((dir / "a" / "final.omc").string());
  CHECK(store.size() == omc::param_layout(cfg.model_spec()).size());
  fs::remove_all(dir);
}

TEST_CASE("ablation runs five rows in order") {
  const auto dir = scratch_dir("ablate");
  auto base = tiny_config();
  const auto configs = omc::ablation_configs(base);
  REQUIRE(configs.size() == 5);
  CHECK(configs[0].config.fl.policy.quantize_fraction == 0.0);
  CHECK(configs[1].config.fl.policy.quantize_fraction == 1.0);
  CHECK(!configs[1].config.fl.policy.use_pvt);
  CHECK(!configs[1].config.fl.policy.weights_only);
  CHECK(configs[2].config.fl.policy.use_pvt);
  CHECK(configs[3].config.fl.policy.weights_only);
  CHECK(configs[3].config.fl.policy.quantize_fraction == 1.0);
  CHECK(configs[4].config.fl.policy.quantize_fraction == 0.9);

  const auto rows = omc::ablate_command(base, dir);
  REQUIRE(rows.size() == 5);
  for (const auto& r : rows) {
    CAPTURE(r.name);
    REQUIRE(r.summary.has_value());
    CHECK(r.error.empty());
    // identical data and initialization
    CHECK(r.summary->metrics.front().eval_loss == rows[0].summary->metrics.front().eval_loss);
  }
  CHECK(rows[0].summary->memory_ratio == 1.0);
  CHECK(rows[1].summary->memory_ratio < rows[3].summary->memory_ratio);
  CHECK(rows[3].summary->memory_ratio < rows[4].summary->memory_ratio);
  CHECK(fs::exists(dir / "ablation.csv"));
  const auto table = slurp(dir / "ablation.md");
  CHECK(table == omc::format_ablation_table(rows));
  CHECK(std::count(table.begin(), table.end(), '\n') == 7);

  // A failing row is reported without stopping the rest.
  base.fl.learning_rate = 1e38f;
  const auto wild = omc::ablate_command(base, dir / "wild");
  CHECK(wild.size() == 5);
  fs::remove_all(dir);
}

TEST_CASE("codec report") {
  const std::vector<float> values = {3.14159265f, 1e9f};
  const auto half = omc::codec_report(FloatFormat(5, 10), values);
  CHECK(half.find("3.140625") != std::string::npos);
  CHECK(half.find("max finite:    131008") != std::string::npos);
  CHECK(half.find("all representable values") == std::string::npos);
  const auto small = omc::codec_report(FloatFormat(3, 7), values);
  CHECK(small.find("31.875") != std::string::npos);
  CHECK(small.find("all representable values") != std::string::npos);
  std::stringstream lines(small.substr(small.find("pattern\thex\tvalue")));
  std::size_t count = 0;
  for (std::string line; std::getline(lines, line);) ++count;
  CHECK(count == 1 + 2048);
}

TEST_CASE("report merges runs into JSON and SVG") {
  const auto dir = scratch_dir("report");
  auto cfg = tiny_config();
  omc::run_command(cfg, dir / "a&b");
  cfg.fl.policy.quantize_fraction = 0.0;
  omc::run_command(cfg, dir / "fp32");
  omc::report_command({dir / "a&b" / "metrics.csv", dir / "fp32" / "metrics.csv"}, dir / "report");
  const auto json = nlohmann::json::parse(slurp(dir / "report" / "summary.json"));
  REQUIRE(json["runs"].size() == 2);
  CHECK(json["runs"][0]["label"] == "a&b");
  CHECK(json["runs"][1]["rounds"] == 3);
  const auto svg = slurp(dir / "report" / "eval_loss.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("a&amp;b") != std::string::npos);
  CHECK(std::count(svg.begin(), svg.end(), '\n') > 10);
  CHECK(fs::exists(dir / "report" / "eval_accuracy.svg"));
  expect_error(omc::ErrorCode::kInvalidInput, [&] { omc::report_command({dir / "missing.csv"}, dir / "r2"); });
  fs::remove_all(dir);
}

}  // TEST_SUITE
