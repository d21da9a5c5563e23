#include "occaug/experiment/runner.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "occaug/core/error.hpp"
#include "occaug/core/resample.hpp"
#include "occaug/data/two_cue.hpp"
#include "occaug/saliency/saliency.hpp"
#include "occaug/train/checkpoint.hpp"

namespace fs = std::filesystem;

namespace occaug {
namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

PreprocessParams preprocess_for(const ExperimentConfig& c, const ChannelStats& s) {
  PreprocessParams p;
  p.crop = c.crop;
  p.flip_prob = c.flip_prob;
  p.mean = s.mean;
  p.std = s.std;
  return p;
}

ArchSpec arch_for(const ExperimentConfig& c, const LabeledDataset& ds) {
  const auto crop = static_cast<std::size_t>(c.crop);
  return ArchSpec::make(c.arch, {ds.channels(), crop, crop}, ds.num_classes(), c.width);
}

RegularizerSpec regularizer_for(const ExperimentConfig& c) {
  RegularizerSpec r = c.regularizer;
  if (r.kind != RegularizerKind::none && r.placement.empty()) {
    r.placement = RegularizerSpec::default_placement(c.arch, r.kind);
  }
  return r;
}

std::string data_key(const ExperimentConfig& c) {
  std::string key;
  for (const auto& k : config_keys()) {
    if (k.rfind("data.", 0) == 0) key += k + "=" + config_value(c, k) + "\n";
  }
  return key;
}

/// Config text with the output directory blanked, for resume compatibility.
std::string resume_identity(ExperimentConfig c) {
  c.output_dir = "-";
  return serialize_config(c);
}

struct Metric {
  const char* name;
  std::optional<double> (*get)(const TrainLogRow&);
};

const std::vector<Metric>& metrics() {
  static const std::vector<Metric> m = {
      {"val_top1", [](const TrainLogRow& r) { return r.val_top1; }},
      {"val_top5", [](const TrainLogRow& r) { return r.val_top5; }},
      {"val_occluded_top1", [](const TrainLogRow& r) { return r.val_occluded_top1; }},
      {"val_occluded_top5", [](const TrainLogRow& r) { return r.val_occluded_top5; }},
      {"train_loss", [](const TrainLogRow& r) -> std::optional<double> { return r.train_loss; }},
  };
  return m;
}

std::string metric_header() {
  std::string h = "runs,failures";
  for (const auto& m : metrics()) h += std::string(",") + m.name + "_mean," + m.name + "_std";
  return h;
}

std::string metric_fields(const std::vector<const RunResult*>& runs) {
  std::size_t ok = 0;
  for (const auto* r : runs) ok += r->ok;
  std::string out = std::to_string(runs.size()) + "," + std::to_string(runs.size() - ok);
  for (const auto& m : metrics()) {
    std::vector<double> xs;
    for (const auto* r : runs) {
      if (!r->ok || r->log.empty()) continue;
      if (auto v = m.get(r->log.rows().back())) xs.push_back(*v);
    }
    if (xs.empty()) {
      out += ",,";
      continue;
    }
    const auto [mean, sd] = mean_std(xs);
    out += "," + fmt(mean) + "," + fmt(sd);
  }
  return out;
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  ExperimentData d;
  if (config.data_source == DataSource::two_cue) {
    TwoCueData g = generate_two_cue(config.two_cue, config.data_seed);
    d.train = std::move(g.train);
    d.val = std::move(g.val);
    d.val_occluded = std::move(g.val_occluded);
    return d;
  }
  d.train = load_binary_dataset(config.train_path, Split::train);
  d.val = load_binary_dataset(config.val_path, Split::val);
  if (!config.val_occluded_path.empty()) {
    d.val_occluded = load_binary_dataset(config.val_occluded_path, Split::val_occluded);
  }
  return d;
}

void generate_data(const TwoCueSpec& spec, std::uint64_t seed, const std::string& out_dir) {
  const TwoCueData d = generate_two_cue(spec, seed);
  ensure_dir(out_dir);
  save_binary_dataset(d.train, out_dir + "/train.lds");
  save_binary_dataset(d.val, out_dir + "/val.lds");
  save_binary_dataset(d.val_occluded, out_dir + "/val_occluded.lds");
  write_text(out_dir + "/manifest.txt", two_cue_manifest(spec, seed, d));
}

std::string summary_header() {
  return "arch,width,regularizer,strategy,copies,p_keep_image,occluder,epochs,seed,"
         "status,epochs_completed,batch_size,train_loss,train_top1,val_top1,val_top5,"
         "val_occluded_top1,val_occluded_top5";
}

std::string summary_row(const ExperimentConfig& c, const RunResult& r) {
  std::string status = r.status;
  for (auto& ch : status) {
    if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
  }
  std::string out = std::string(to_string(c.arch)) + "," + std::to_string(c.width) + "," +
                    std::string(to_string(c.regularizer.kind)) + "," +
                    std::string(to_string(c.plan.strategy)) + "," +
                    std::to_string(c.plan.copies) + "," + fmt(c.plan.p_keep_image) + "," +
                    std::string(to_string(c.plan.occluder)) + "," +
                    std::to_string(c.schedule.total_epochs) + "," + std::to_string(c.seed) +
                    "," + status + "," + std::to_string(r.log.rows().size());
  if (r.log.empty()) return out + ",,,,,,,";
  const TrainLogRow& last = r.log.rows().back();
  char loss[64];
  std::snprintf(loss, sizeof loss, "%.6f", last.train_loss);
  return out + "," + std::to_string(last.batch_size) + "," + loss + "," +
         fmt(last.train_top1) + "," + opt(last.val_top1) + "," + opt(last.val_top5) + "," +
         opt(last.val_occluded_top1) + "," + opt(last.val_occluded_top5);
}

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  if (auto v = validate_config(config); !v.empty()) throw ConfigError(std::move(v));
  ExperimentData owned;
  if (options.data == nullptr) owned = load_experiment_data(config);
  const ExperimentData& data = options.data ? *options.data : owned;

  const ChannelStats stats = dataset_mean_std(data.train);
  const PreprocessParams pre = preprocess_for(config, stats);
  Model<float> model(arch_for(config, data.train), regularizer_for(config), config.seed);

  Occluder<float> occluder;
  switch (config.plan.occluder) {
    case OccluderKind::none: break;
    case OccluderKind::hide_seek: occluder = Occluder<float>::hide_seek(config.hide_seek); break;
    case OccluderKind::cutout: occluder = Occluder<float>::cutout(config.cutout); break;
    case OccluderKind::saliency: occluder = Occluder<float>::saliency(config.saliency, model); break;
  }
  TrainerOptions topts;
  topts.batch_size = config.batch_size;
  topts.label_smoothing = config.label_smoothing;
  topts.schedule = config.schedule;
  topts.sgd = config.sgd;
  topts.seed = config.seed;
  Trainer<float> trainer(model, data.train, pre, config.plan, occluder, topts);

  RunResult result;
  if (!options.resume_from.empty()) {
    const Checkpoint ck = Checkpoint::load(options.resume_from);
    const ExperimentConfig saved = parse_config(ck.get_text("config"));
    if (resume_identity(saved) != resume_identity(config)) {
      throw ConfigError({"resume: checkpoint was written by a different configuration"});
    }
    TrainLog log = TrainLog::from_csv(ck.get_text("trainlog"));
    restore_training(ck, trainer);
    result.log = std::move(log);
  }

  ensure_dir(config.output_dir);
  const std::string dir = config.output_dir + "/";
  write_text(dir + "config.txt", serialize_config(config));

  const std::vector<int> ks{1, static_cast<int>(std::min<std::size_t>(5, data.train.num_classes()))};
  auto finish = [&](const std::string& status, bool ok) {
    result.status = status;
    result.ok = ok;
    Checkpoint ck = make_training_checkpoint(trainer, serialize_config(config));
    ck.put_text("trainlog", result.log.to_csv());
    ck.put_f64("preprocess/mean", {pre.mean.size()}, pre.mean);
    ck.put_f64("preprocess/std", {pre.std.size()}, pre.std);
    ck.save(dir + "checkpoint.ocsm");
    result.log.write(dir + "trainlog.csv");
    result.log.write_timing(dir + "timing.csv");
    write_text(dir + "summary.csv", summary_header() + "\n" + summary_row(config, result) + "\n");
  };

  while (!trainer.finished() &&
         (options.stop_after < 0 || trainer.next_epoch() < options.stop_after)) {
    TrainLogRow row;
    try {
      row = trainer.train_epoch();
    } catch (const NumericError& e) {
      result.log.append(trainer.diagnostic_row());
      finish(std::string("nan_loss: ") + e.what(), false);
      throw;
    }
    const auto val = evaluate_topk(model, data.val, pre, ks);
    row.val_top1 = val[0];
    row.val_top5 = val[1];
    if (data.val_occluded) {
      const auto occ = evaluate_topk(model, *data.val_occluded, pre, ks);
      row.val_occluded_top1 = occ[0];
      row.val_occluded_top5 = occ[1];
    }
    result.log.append(row);
  }
  finish(trainer.finished() ? "ok" : "stopped", true);
  return result;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw DomainError("mean_std: no values");
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::vector<ExperimentConfig> sweep_run_configs(const SweepSpec& sweep) {
  std::size_t cells = 1;
  for (const auto& a : sweep.axes) cells *= a.second.size();
  std::vector<ExperimentConfig> out;
  for (std::size_t c = 0; c < cells; ++c) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::size_t rest = c;
    for (std::size_t a = sweep.axes.size(); a-- > 0;) {
      const auto& values = sweep.axes[a].second;
      entries.emplace(entries.begin(), sweep.axes[a].first, values[rest % values.size()]);
      rest /= values.size();
    }
    const ExperimentConfig cell = apply_config_entries(entries, sweep.base);
    for (int r = 0; r < sweep.repeats; ++r) {
      const std::size_t i = c * static_cast<std::size_t>(sweep.repeats) + static_cast<std::size_t>(r);
      ExperimentConfig run = cell;
      run.seed = sweep.base.seed + i;
      run.has_seed = true;
      run.output_dir = sweep.base.output_dir + "/run_" + std::to_string(i);
      out.push_back(std::move(run));
    }
  }
  return out;
}

SweepResult run_sweep(const SweepSpec& sweep) {
  const std::vector<ExperimentConfig> configs = sweep_run_configs(sweep);
  const auto repeats = static_cast<std::size_t>(sweep.repeats);
  SweepResult out;
  for (const auto& a : sweep.axes) out.axes.push_back(a.first);
  out.cells.resize(configs.size() / repeats);
  for (std::size_t c = 0; c < out.cells.size(); ++c) {
    for (const auto& a : sweep.axes) {
      out.cells[c].values.push_back(config_value(configs[c * repeats], a.first));
    }
    out.cells[c].runs.resize(repeats);
  }

  // Distinct datasets are loaded once, up front.
  std::map<std::string, ExperimentData> datasets;
  std::map<std::string, std::string> data_errors;
  for (const auto& cfg : configs) {
    const std::string key = data_key(cfg);
    if (datasets.count(key) || data_errors.count(key)) continue;
    try {
      datasets.emplace(key, load_experiment_data(cfg));
    } catch (const std::exception& e) {
      data_errors.emplace(key, e.what());
    }
  }

  std::vector<RunResult> results(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      const std::string key = data_key(configs[i]);
      if (auto it = data_errors.find(key); it != data_errors.end()) {
        results[i].status = "data: " + it->second;
        continue;
      }
      RunOptions ro;
      ro.data = &datasets.at(key);
      try {
        results[i] = run_experiment(configs[i], ro);
      } catch (const std::exception& e) {
        results[i].ok = false;
        results[i].status = e.what();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, sweep.workers));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, configs.size()); ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto& cell = out.cells[i / repeats];
    cell.runs[i % repeats] = std::move(results[i]);
    cell.seeds.push_back(configs[i].seed);
  }
  ensure_dir(sweep.base.output_dir);
  write_text(sweep.base.output_dir + "/table.csv", sweep_table_csv(out));
  write_text(sweep.base.output_dir + "/curves.csv", sweep_curves_csv(out));
  return out;
}

std::string sweep_table_csv(const SweepResult& r) {
  std::string out = "cell";
  for (const auto& a : r.axes) out += "," + a;
  out += "," + metric_header() + "\n";
  for (std::size_t c = 0; c < r.cells.size(); ++c) {
    out += std::to_string(c);
    for (const auto& v : r.cells[c].values) out += "," + v;
    std::vector<const RunResult*> runs;
    for (const auto& run : r.cells[c].runs) runs.push_back(&run);
    out += "," + metric_fields(runs) + "\n";
  }
  return out;
}

std::string sweep_curves_csv(const SweepResult& r) {
  std::string out = "axis,value," + metric_header() + "\n";
  for (std::size_t a = 0; a < r.axes.size(); ++a) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const RunResult*>> groups;
    for (const auto& cell : r.cells) {
      const std::string& v = cell.values[a];
      if (!groups.count(v)) order.push_back(v);
      for (const auto& run : cell.runs) groups[v].push_back(&run);
    }
    for (const auto& v : order) out += r.axes[a] + "," + v + "," + metric_fields(groups[v]) + "\n";
  }
  return out;
}

std::vector<std::string> export_heatmaps(const std::string& checkpoint_path,
                                         const LabeledDataset& ds,
                                         const std::string& layer,
                                         std::size_t n, const std::string& out_dir) {
  const Checkpoint ck = Checkpoint::load(checkpoint_path);
  const ExperimentConfig config = parse_config(ck.get_text("config"));
  Model<float> model(arch_for(config, ds), RegularizerSpec{}, config.seed);
  restore_model(ck, model);
  model.eval();
  PreprocessParams pre;
  pre.crop = config.crop;
  pre.flip_prob = 0.0;
  pre.mean = ck.get_real<double>("preprocess/mean", {ds.channels()});
  pre.std = ck.get_real<double>("preprocess/std", {ds.channels()});

  ensure_dir(out_dir);
  std::vector<std::string> written;
  const auto crop = static_cast<std::size_t>(config.crop);
  const std::size_t top = (ds.height() - crop) / 2;
  const std::size_t left = (ds.width() - crop) / 2;
  for (std::size_t i = 0; i < std::min(n, ds.size()); ++i) {
    const RawImage raw = ds.image(i);
    const Tensor<float> img = preprocess_eval<float>(raw, pre);
    const Tensor<float> logits =
        model.predict(img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)}));
    std::size_t pred = 0;
    for (std::size_t k = 1; k < logits.size(); ++k) {
      if (logits[k] > logits[pred]) pred = k;
    }
    const SaliencyMap sal = saliency_map(model, img, ds.label(i), layer);
    const RawImage heat = heatmap_image(bilinear_upsample(sal.values, crop, crop));
    RawImage view(raw.channels, crop, crop);
    for (std::size_t c = 0; c < raw.channels; ++c) {
      for (std::size_t y = 0; y < crop; ++y) {
        for (std::size_t x = 0; x < crop; ++x) view.at(c, y, x) = raw.at(c, top + y, left + x);
      }
    }
    const std::string stem = out_dir + "/sample" + std::to_string(i) + "_true" +
                             std::to_string(ds.label(i)) + "_pred" + std::to_string(pred);
    const std::string ext = raw.channels == 3 ? ".ppm" : ".pgm";
    write_pnm(view, stem + "_image" + ext);
    write_pnm(heat, stem + "_heatmap.pgm");
    write_pnm(side_by_side({view, heat}), stem + "_composite" + ext);
    written.push_back(stem + "_image" + ext);
    written.push_back(stem + "_heatmap.pgm");
    written.push_back(stem + "_composite" + ext);
  }
  return written;
}

}  // namespace occaug
