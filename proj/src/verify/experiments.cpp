#include "occaug/verify/experiments.hpp"

#include "occaug/experiment/runner.hpp"

namespace occaug {
namespace {

ExperimentConfig with(const ExperimentConfig& base, const std::string& text) {
  return apply_config_entries(parse_entries(text), base);
}

}  // namespace

ExperimentConfig desk_base_config(std::uint64_t seed) {
  ExperimentConfig c = parse_config(
      "seed = " + std::to_string(seed) + "\n"
      "model.arch = mini_skip\n"
      "model.width = 8\n"
      "data.seed = 7\n"
      "data.two_cue.train_count = 4000\n"
      "data.two_cue.val_count = 500\n"
      "data.two_cue.secondary_size = 9\n"
      "data.two_cue.secondary_contrast = 0.4\n"
      "data.two_cue.secondary_inset = 0\n"
      "preprocess.flip_prob = 0\n"
      "train.epochs = 14\n"
      "train.lr0 = 0.1\n"
      "train.lr_period = 10\n"
      "train.batch_size = 128\n");
  return c;
}

std::vector<std::pair<std::string, ExperimentConfig>> thesis_groups(std::uint64_t seed) {
  const ExperimentConfig base = desk_base_config(seed);
  const std::string hs = "occluder.kind = hide_seek\n"
                         "occluder.hide_seek.grid = 2\n"
                         "occluder.hide_seek.p_keep_patch = 0.5\n";
  return {{"plain", with(base, "plan.strategy = plain\n")},
          {"nonjoint", with(base, "plan.strategy = nonjoint\nplan.p_keep_image = 0.5\n" + hs)},
          {"joint", with(base, "plan.strategy = joint\n" + hs)}};
}

std::vector<std::pair<std::string, ExperimentConfig>> always_occluded_groups(
    std::uint64_t seed) {
  const ExperimentConfig base = desk_base_config(seed);
  const std::string ba = "plan.strategy = batch_augment\nplan.copies = 2\n"
                         "occluder.kind = cutout\noccluder.cutout.count = 1\n"
                         "occluder.cutout.side = 12\n";
  return {{"p_keep_image=0.0", with(base, ba + "plan.p_keep_image = 0.0\n")},
          {"p_keep_image=0.5", with(base, ba + "plan.p_keep_image = 0.5\n")}};
}

GroupedResult run_groups(const std::vector<std::pair<std::string, ExperimentConfig>>& groups,
                         const std::string& dir, int workers) {
  GroupedResult out;
  for (const auto& [name, config] : groups) {
    SweepSpec sweep;
    sweep.base = config;
    sweep.base.output_dir = dir + "/" + name;
    sweep.axes = {{"plan.strategy", {std::string(to_string(config.plan.strategy))}}};
    sweep.repeats = kDeskRepeats;
    sweep.workers = workers;
    const SweepResult r = run_sweep(sweep);
    GroupStats g;
    for (const auto& run : r.cells.at(0).runs) {
      if (!run.ok || run.log.empty()) {
        out.all_ok = false;
        continue;
      }
      const TrainLogRow& last = run.log.rows().back();
      g.val_runs.push_back(last.val_top1.value_or(0.0));
      g.val_occluded_runs.push_back(last.val_occluded_top1.value_or(0.0));
    }
    if (!g.val_runs.empty()) {
      g.val = mean_std(g.val_runs);
      g.val_occluded = mean_std(g.val_occluded_runs);
    }
    out.groups.emplace(name, std::move(g));
  }
  return out;
}

}  // namespace occaug
