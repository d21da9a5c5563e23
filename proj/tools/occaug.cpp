#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "occaug/core/error.hpp"
#include "occaug/data/dataset.hpp"
#include "occaug/experiment/config.hpp"
#include "occaug/experiment/runner.hpp"
#include "occaug/verify/criteria.hpp"

namespace {

using namespace occaug;

ExperimentConfig config_with_overrides(const std::string& path, std::int64_t seed,
                                       const std::string& out) {
  std::vector<std::pair<std::string, std::string>> entries;
  if (!path.empty()) entries = parse_entries(read_text_file(path));
  if (seed >= 0) {
    std::erase_if(entries, [](const auto& e) { return e.first == "seed"; });
    entries.emplace_back("seed", std::to_string(seed));
  }
  if (!out.empty()) {
    std::erase_if(entries, [](const auto& e) { return e.first == "output_dir"; });
    entries.emplace_back("output_dir", out);
  }
  return apply_config_entries(entries);
}

void print_config_error(const ConfigError& e) {
  std::cerr << "invalid configuration:\n";
  for (const auto& v : e.violations()) std::cerr << "  - " << v << "\n";
}

int cmd_generate(const std::string& config, std::int64_t seed, const std::string& out) {
  std::vector<std::pair<std::string, std::string>> entries;
  if (!config.empty()) entries = parse_entries(read_text_file(config));
  const ExperimentConfig c = apply_config_entries(entries);
  const std::uint64_t data_seed = seed >= 0 ? static_cast<std::uint64_t>(seed) : c.data_seed;
  generate_data(c.two_cue, data_seed, out);
  std::cout << "wrote " << out << "/{train,val,val_occluded}.lds and manifest.txt\n";
  return 0;
}

int cmd_run(const std::string& config, std::int64_t seed, const std::string& out,
            const std::string& resume) {
  const ExperimentConfig c = config_with_overrides(config, seed, out);
  if (auto v = validate_config(c); !v.empty()) throw ConfigError(std::move(v));
  RunOptions options;
  options.resume_from = resume;
  const RunResult r = run_experiment(c, options);
  for (const auto& row : r.log.rows()) {
    std::cout << "epoch " << row.epoch << "  loss " << row.train_loss << "  train "
              << row.train_top1 << "%  val " << row.val_top1.value_or(0.0) << "%";
    if (row.val_occluded_top1) std::cout << "  val_occluded " << *row.val_occluded_top1 << "%";
    std::cout << "\n";
  }
  std::cout << "results in " << c.output_dir << "\n";
  return r.ok ? 0 : 1;
}

int cmd_sweep(const std::string& config, std::int64_t seed, int workers, const std::string& out) {
  auto entries = parse_entries(read_text_file(config));
  if (seed >= 0) {
    std::erase_if(entries, [](const auto& e) { return e.first == "seed"; });
    entries.emplace_back("seed", std::to_string(seed));
  }
  if (workers > 0) {
    std::erase_if(entries, [](const auto& e) { return e.first == "sweep.workers"; });
    entries.emplace_back("sweep.workers", std::to_string(workers));
  }
  if (!out.empty()) {
    std::erase_if(entries, [](const auto& e) { return e.first == "output_dir"; });
    entries.emplace_back("output_dir", out);
  }
  std::string rebuilt;
  for (const auto& [k, v] : entries) rebuilt += k + " = " + v + "\n";
  const SweepSpec spec = parse_sweep(rebuilt);
  const SweepResult r = run_sweep(spec);
  std::size_t failed = 0;
  for (const auto& cell : r.cells) {
    for (const auto& run : cell.runs) failed += !run.ok;
  }
  std::cout << sweep_table_csv(r);
  std::cout << "tables in " << spec.base.output_dir << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_export(const std::string& checkpoint, const std::string& data,
               const std::string& layer, std::size_t n, const std::string& out) {
  const LabeledDataset ds = load_binary_dataset(data, Split::val);
  for (const auto& path : export_heatmaps(checkpoint, ds, layer, n, out)) {
    std::cout << path << "\n";
  }
  return 0;
}

int cmd_verify(bool full, std::int64_t seed, int workers, const std::string& out) {
  VerifyOptions o;
  o.full = full;
  if (seed >= 0) o.seed = static_cast<std::uint64_t>(seed);
  if (workers > 0) o.workers = workers;
  if (!out.empty()) o.work_dir = out;
  bool all = true;
  run_criteria(o, [&](const CriterionResult& r) {
    all = all && r.passed;
    std::cout << format_result(r) << std::endl;
  });
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occlusion augmentation experiments on desk-scale CNNs"};
  app.require_subcommand(1);

  std::string config, out, resume, checkpoint, data, layer;
  std::int64_t seed = -1;
  int workers = 0;
  std::size_t count = 4;
  bool full = false;

  auto* gen = app.add_subcommand("generate-data", "Write the two-cue dataset splits");
  gen->add_option("--config", config, "Config file; data.two_cue.* keys are used");
  gen->add_option("--seed", seed, "Generation seed (overrides data.seed)");
  gen->add_option("--out", out, "Output directory")->required();

  auto* run = app.add_subcommand("run", "Train one configuration");
  run->add_option("--config", config, "Config file")->required();
  run->add_option("--seed", seed, "Override the run seed");
  run->add_option("--out", out, "Override output_dir");
  run->add_option("--resume", resume, "Continue from a checkpoint written by this config");

  auto* sweep = app.add_subcommand("sweep", "Train a grid of configurations");
  sweep->add_option("--config", config, "Sweep file")->required();
  sweep->add_option("--seed", seed, "Override the base seed");
  sweep->add_option("--workers", workers, "Runs trained concurrently");
  sweep->add_option("--out", out, "Override output_dir");

  auto* exp = app.add_subcommand("export-heatmaps", "Write saliency heatmaps of a trained model");
  exp->add_option("--checkpoint", checkpoint, "checkpoint.ocsm of a finished run")->required();
  exp->add_option("--data", data, "LDS1 dataset file")->required();
  exp->add_option("--layer", layer, "Hooked layer")->required();
  exp->add_option("--n", count, "Number of samples");
  exp->add_option("--out", out, "Output directory")->required();

  auto* ver = app.add_subcommand("verify", "Run the acceptance checks");
  ver->add_flag("--full", full, "Include the training experiments");
  ver->add_option("--seed", seed, "Base seed for randomized checks");
  ver->add_option("--workers", workers, "Concurrent runs for the experiments");
  ver->add_option("--out", out, "Scratch directory for experiment outputs");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate(config, seed, out);
    if (*run) return cmd_run(config, seed, out, resume);
    if (*sweep) return cmd_sweep(config, seed, workers, out);
    if (*exp) return cmd_export(checkpoint, data, layer, count, out);
    if (*ver) return cmd_verify(full, seed, workers, out);
  } catch (const ConfigError& e) {
    print_config_error(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
