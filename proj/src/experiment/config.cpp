#include "occaug/experiment/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "occaug/core/error.hpp"

namespace occaug {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string_view::npos ? s.size() : comma;
    std::string item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename I>
I parse_int(const std::string& v) {
  I out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) {
    throw DomainError("'" + v + "' is not a valid integer");
  }
  return out;
}

double parse_double(const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) {
    throw DomainError("'" + v + "' is not a valid number");
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

struct Key {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define OCCAUG_INT_KEY(key, field, type)                                           \
  Key{key, [](ExperimentConfig& c, const std::string& v) { c.field = parse_int<type>(v); }, \
      [](const ExperimentConfig& c) { return std::to_string(c.field); }}
#define OCCAUG_REAL_KEY(key, field)                                                \
  Key{key, [](ExperimentConfig& c, const std::string& v) { c.field = parse_double(v); }, \
      [](const ExperimentConfig& c) { return fmt_double(c.field); }}
#define OCCAUG_TEXT_KEY(key, field)                                                \
  Key{key, [](ExperimentConfig& c, const std::string& v) { c.field = v; },          \
      [](const ExperimentConfig& c) { return c.field; }}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"seed",
          [](ExperimentConfig& c, const std::string& v) {
            c.seed = parse_int<std::uint64_t>(v);
            c.has_seed = true;
          },
          [](const ExperimentConfig& c) { return c.has_seed ? std::to_string(c.seed) : std::string(); }},
      OCCAUG_TEXT_KEY("output_dir", output_dir),
      Key{"model.arch",
          [](ExperimentConfig& c, const std::string& v) { c.arch = parse_arch_name(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.arch)); }},
      OCCAUG_INT_KEY("model.width", width, std::size_t),
      Key{"regularizer.kind",
          [](ExperimentConfig& c, const std::string& v) { c.regularizer.kind = parse_regularizer_kind(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.regularizer.kind)); }},
      OCCAUG_REAL_KEY("regularizer.p_keep", regularizer.p_keep),
      OCCAUG_INT_KEY("regularizer.block_size", regularizer.block_size, int),
      Key{"regularizer.placement",
          [](ExperimentConfig& c, const std::string& v) {
            c.regularizer.placement = v == "default" ? std::vector<std::string>{} : split_list(v);
          },
          [](const ExperimentConfig& c) {
            if (c.regularizer.placement.empty()) return std::string("default");
            std::string out;
            for (const auto& p : c.regularizer.placement) out += (out.empty() ? "" : ", ") + p;
            return out;
          }},
      Key{"data.source",
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "two_cue") c.data_source = DataSource::two_cue;
            else if (v == "files") c.data_source = DataSource::files;
            else throw DomainError("'" + v + "' is not a data source (two_cue or files)");
          },
          [](const ExperimentConfig& c) {
            return std::string(c.data_source == DataSource::two_cue ? "two_cue" : "files");
          }},
      OCCAUG_TEXT_KEY("data.train", train_path),
      OCCAUG_TEXT_KEY("data.val", val_path),
      OCCAUG_TEXT_KEY("data.val_occluded", val_occluded_path),
      OCCAUG_INT_KEY("data.seed", data_seed, std::uint64_t),
      OCCAUG_INT_KEY("data.two_cue.num_classes", two_cue.num_classes, int),
      OCCAUG_INT_KEY("data.two_cue.image_side", two_cue.image_side, int),
      OCCAUG_INT_KEY("data.two_cue.dominant_cells", two_cue.dominant_cells, int),
      OCCAUG_INT_KEY("data.two_cue.dominant_size", two_cue.dominant_size, int),
      OCCAUG_REAL_KEY("data.two_cue.dominant_contrast", two_cue.dominant_contrast),
      OCCAUG_INT_KEY("data.two_cue.secondary_cells", two_cue.secondary_cells, int),
      OCCAUG_INT_KEY("data.two_cue.secondary_size", two_cue.secondary_size, int),
      OCCAUG_REAL_KEY("data.two_cue.secondary_contrast", two_cue.secondary_contrast),
      OCCAUG_INT_KEY("data.two_cue.secondary_inset", two_cue.secondary_inset, int),
      OCCAUG_REAL_KEY("data.two_cue.noise", two_cue.noise),
      OCCAUG_INT_KEY("data.two_cue.train_count", two_cue.train_count, std::size_t),
      OCCAUG_INT_KEY("data.two_cue.val_count", two_cue.val_count, std::size_t),
      OCCAUG_INT_KEY("preprocess.crop", crop, int),
      OCCAUG_REAL_KEY("preprocess.flip_prob", flip_prob),
      Key{"plan.strategy",
          [](ExperimentConfig& c, const std::string& v) { c.plan.strategy = parse_strategy(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.plan.strategy)); }},
      OCCAUG_INT_KEY("plan.copies", plan.copies, int),
      OCCAUG_REAL_KEY("plan.p_keep_image", plan.p_keep_image),
      Key{"occluder.kind",
          [](ExperimentConfig& c, const std::string& v) { c.plan.occluder = parse_occluder_kind(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.plan.occluder)); }},
      OCCAUG_INT_KEY("occluder.hide_seek.grid", hide_seek.grid, int),
      OCCAUG_REAL_KEY("occluder.hide_seek.p_keep_patch", hide_seek.p_keep_patch),
      OCCAUG_INT_KEY("occluder.cutout.count", cutout.count, int),
      OCCAUG_INT_KEY("occluder.cutout.side", cutout.side, int),
      Key{"occluder.saliency.layer",
          [](ExperimentConfig& c, const std::string& v) { c.saliency.layer = v == "default" ? "" : v; },
          [](const ExperimentConfig& c) {
            return c.saliency.layer.empty() ? std::string("default") : c.saliency.layer;
          }},
      OCCAUG_INT_KEY("occluder.saliency.side", saliency.side, int),
      OCCAUG_INT_KEY("occluder.saliency.jitter", saliency.jitter, int),
      OCCAUG_INT_KEY("occluder.saliency.stride", saliency.stride, int),
      OCCAUG_INT_KEY("train.epochs", schedule.total_epochs, int),
      OCCAUG_REAL_KEY("train.lr0", schedule.lr0),
      OCCAUG_REAL_KEY("train.lr_decay", schedule.decay),
      OCCAUG_INT_KEY("train.lr_period", schedule.period, int),
      OCCAUG_INT_KEY("train.batch_size", batch_size, std::size_t),
      OCCAUG_REAL_KEY("train.momentum", sgd.momentum),
      OCCAUG_REAL_KEY("train.weight_decay", sgd.weight_decay),
      OCCAUG_REAL_KEY("train.label_smoothing", label_smoothing),
  };
  return table;
}

const Key* find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

void check_prob(std::vector<std::string>& v, double p, const char* key) {
  if (!(p >= 0.0 && p <= 1.0)) v.push_back(std::string(key) + " must lie in [0, 1]");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_entries(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::vector<std::string> errors;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(n) + ": expected 'key = value'");
      continue;
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) {
      errors.push_back("line " + std::to_string(n) + ": empty key");
      continue;
    }
    out.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return out;
}

ExperimentConfig apply_config_entries(
    const std::vector<std::pair<std::string, std::string>>& entries,
    ExperimentConfig base) {
  std::vector<std::string> errors;
  std::set<std::string> seen;
  for (const auto& [key, value] : entries) {
    if (!seen.insert(key).second) {
      errors.push_back(key + ": given more than once");
      continue;
    }
    const Key* k = find_key(key);
    if (k == nullptr) {
      errors.push_back(key + ": unknown key");
      continue;
    }
    try {
      k->set(base, value);
    } catch (const Error& e) {
      errors.push_back(key + ": " + e.what());
    }
  }
  if (!seen.count("plan.copies") && seen.count("plan.strategy")) {
    base.plan.copies = base.plan.strategy == Strategy::joint ? 2 : 1;
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return base;
}

std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> v;
  if (!c.has_seed) v.push_back("seed: required");
  if (c.output_dir.empty()) v.push_back("output_dir: must not be empty");
  if (c.width < 1) v.push_back("model.width must be >= 1");
  if (c.regularizer.kind != RegularizerKind::none &&
      !(c.regularizer.p_keep > 0.0 && c.regularizer.p_keep <= 1.0)) {
    v.push_back("regularizer.p_keep must lie in (0, 1]");
  }
  if (c.regularizer.block_size < 1) v.push_back("regularizer.block_size must be >= 1");

  std::size_t num_classes = 0;
  if (c.data_source == DataSource::two_cue) {
    for (auto& s : c.two_cue.violations()) v.push_back("data." + s);
    num_classes = c.two_cue.num_classes > 0 ? static_cast<std::size_t>(c.two_cue.num_classes) : 0;
    if (c.two_cue.image_side > 0 && c.crop > c.two_cue.image_side) {
      v.push_back("preprocess.crop exceeds data.two_cue.image_side");
    }
  } else {
    if (c.train_path.empty()) v.push_back("data.train: required when data.source = files");
    if (c.val_path.empty()) v.push_back("data.val: required when data.source = files");
  }
  if (c.crop < 1) v.push_back("preprocess.crop must be >= 1");
  check_prob(v, c.flip_prob, "preprocess.flip_prob");

  for (auto& s : c.plan.violations()) v.push_back(s);
  if (c.plan.occluder == OccluderKind::hide_seek) {
    if (c.hide_seek.grid < 1) v.push_back("occluder.hide_seek.grid must be >= 1");
    else if (c.crop > 0 && c.crop % c.hide_seek.grid != 0) {
      v.push_back("occluder.hide_seek.grid must divide preprocess.crop");
    }
    check_prob(v, c.hide_seek.p_keep_patch, "occluder.hide_seek.p_keep_patch");
  }
  if (c.plan.occluder == OccluderKind::cutout) {
    if (c.cutout.count < 0) v.push_back("occluder.cutout.count must be >= 0");
    if (c.cutout.side < 1) v.push_back("occluder.cutout.side must be >= 1");
  }

  // Names that depend on the architecture.
  if (c.width >= 1 && num_classes >= 1 && c.crop >= 1) {
    try {
      const auto crop = static_cast<std::size_t>(c.crop);
      const ArchSpec arch = ArchSpec::make(c.arch, {3, crop, crop}, num_classes, c.width);
      for (const auto& p : c.regularizer.placement) {
        if (arch.find(p) == nullptr) v.push_back("regularizer.placement: unknown layer '" + p + "'");
      }
      if (c.plan.occluder == OccluderKind::saliency) {
        const std::string layer = c.saliency.layer.empty() ? default_saliency_layer(c.arch) : c.saliency.layer;
        const LayerDesc* l = arch.find(layer);
        if (layer != "input" && l == nullptr) {
          v.push_back("occluder.saliency.layer: unknown layer '" + layer + "'");
        } else if (l != nullptr && (l->kind == LayerKind::flatten || l->kind == LayerKind::linear ||
                                     l->kind == LayerKind::global_avg_pool)) {
          v.push_back("occluder.saliency.layer: '" + layer + "' has no spatial extent");
        }
      }
    } catch (const Error& e) {
      v.push_back(std::string("model: ") + e.what());
    }
  }
  if (c.plan.occluder == OccluderKind::saliency) {
    if (c.saliency.side < 1 || c.saliency.side > c.crop) v.push_back("occluder.saliency.side must lie in [1, crop]");
    if (c.saliency.jitter < 0) v.push_back("occluder.saliency.jitter must be >= 0");
    if (c.saliency.stride < 1) v.push_back("occluder.saliency.stride must be >= 1");
  }

  for (auto& s : c.schedule.violations()) v.push_back(s);
  if (c.batch_size < 1) v.push_back("train.batch_size must be >= 1");
  if (!(c.sgd.momentum >= 0.0 && c.sgd.momentum < 1.0)) v.push_back("train.momentum must lie in [0, 1)");
  if (!(c.sgd.weight_decay >= 0.0)) v.push_back("train.weight_decay must be >= 0");
  if (!(c.label_smoothing >= 0.0 && c.label_smoothing < 1.0)) {
    v.push_back("train.label_smoothing must lie in [0, 1)");
  }
  return v;
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c = apply_config_entries(parse_entries(text));
  if (auto v = validate_config(c); !v.empty()) throw ConfigError(std::move(v));
  return c;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_text_file(path));
}

std::string config_value(const ExperimentConfig& config, const std::string& key) {
  const Key* k = find_key(key);
  if (k == nullptr) throw DomainError("unknown config key '" + key + "'");
  return k->get(config);
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& k : keys()) {
    const std::string v = k.get(config);
    if (k.name == "seed" && !config.has_seed) continue;
    out += k.name + " = " + v + "\n";
  }
  return out;
}

SweepSpec parse_sweep(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> base;
  SweepSpec spec;
  std::vector<std::string> errors;
  const std::string axis_prefix = "sweep.axis.";
  for (auto& [key, value] : parse_entries(text)) {
    if (key.rfind(axis_prefix, 0) == 0) {
      std::string target = key.substr(axis_prefix.size());
      if (find_key(target) == nullptr) {
        errors.push_back(key + ": unknown config key '" + target + "'");
        continue;
      }
      if (target == "seed") {
        errors.push_back(key + ": seeds are derived per run and cannot be swept");
        continue;
      }
      auto values = split_list(value);
      if (values.empty()) errors.push_back(key + ": axis has no values");
      spec.axes.emplace_back(std::move(target), std::move(values));
    } else if (key == "sweep.repeats") {
      try {
        spec.repeats = parse_int<int>(value);
      } catch (const Error& e) {
        errors.push_back(key + ": " + e.what());
      }
    } else if (key == "sweep.workers") {
      try {
        spec.workers = parse_int<int>(value);
      } catch (const Error& e) {
        errors.push_back(key + ": " + e.what());
      }
    } else {
      base.emplace_back(key, value);
    }
  }
  if (spec.repeats < 1) errors.push_back("sweep.repeats must be >= 1");
  if (spec.workers < 1) errors.push_back("sweep.workers must be >= 1");
  std::set<std::string> axis_names;
  for (const auto& a : spec.axes) {
    if (!axis_names.insert(a.first).second) errors.push_back("sweep.axis." + a.first + ": given more than once");
  }
  try {
    spec.base = apply_config_entries(base);
    for (auto& s : validate_config(spec.base)) errors.push_back(s);
  } catch (const ConfigError& e) {
    for (const auto& s : e.violations()) errors.push_back(s);
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return spec;
}

SweepSpec load_sweep(const std::string& path) { return parse_sweep(read_text_file(path)); }

}  // namespace occaug
