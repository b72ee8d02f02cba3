#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "omc/error.hpp"
#include "omc/experiment.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Federated learning with online model compression"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string out_dir;

  auto* run = app.add_subcommand("run", "Run one federated experiment");
  run->add_option("--config", config_path, "Configuration file")->required()->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "Override a key, key=value (repeatable)");
  auto* seed_opt = run->add_option("--seed", seed, "Override run.seed");
  run->add_option("--out", out_dir, "Output directory (defaults to run.out_dir)");

  auto* ablate = app.add_subcommand("ablate", "Run the five-row cumulative ablation");
  ablate->add_option("--config", config_path, "Base configuration file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", out_dir, "Output directory")->required();

  std::string format;
  std::vector<float> values;
  auto* codec = app.add_subcommand("codec", "Inspect a reduced-precision float format");
  codec->add_option("--format", format, "Format string, e.g. S1E3M7")->required();
  codec->add_option("values", values, "Values to quantize");

  std::vector<std::string> files;
  auto* report = app.add_subcommand("report", "Merge metrics CSVs into a summary and SVG charts");
  report->add_option("files", files, "metrics.csv files")->required();
  report->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      omc::ExperimentConfig cfg = omc::load_config_file(config_path);
      for (const auto& o : overrides) omc::apply_override(cfg, o);
      if (*seed_opt) cfg.seed = seed;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      const auto summary = omc::run_command(cfg, cfg.out_dir);
      std::printf("%s: final loss %.5f, final accuracy %.4f, memory ratio %.4f, %llu rounds -> %s\n",
                  summary.label.c_str(), summary.final_loss, summary.final_accuracy, summary.memory_ratio,
                  static_cast<unsigned long long>(summary.rounds), cfg.out_dir.c_str());
    } else if (*ablate) {
      const omc::ExperimentConfig cfg = omc::load_config_file(config_path);
      const auto rows = omc::ablate_command(cfg, out_dir);
      std::cout << omc::format_ablation_table(rows);
      for (const auto& r : rows) {
        if (!r.error.empty()) return 2;
      }
    } else if (*codec) {
      std::cout << omc::codec_report(omc::FloatFormat::parse(format), values);
    } else if (*report) {
      std::vector<fs::path> paths(files.begin(), files.end());
      omc::report_command(paths, out_dir);
      std::printf("wrote %s/summary.json, eval_loss.svg, eval_accuracy.svg\n", out_dir.c_str());
    }
  } catch (const omc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
