#include "occaug/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "occaug/core/error.hpp"
#include "occaug/core/graph.hpp"
#include "occaug/nn/regularizers.hpp"

namespace occaug {
namespace {

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

/// Rank of `label` among the logits under the lower-index tie rule.
template <typename T>
std::size_t label_rank(std::span<const T> logits, int label) {
  const auto y = static_cast<std::size_t>(label);
  std::size_t rank = 0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (logits[c] > logits[y] || (logits[c] == logits[y] && c < y)) ++rank;
  }
  return rank;
}

}  // namespace

void TrainLog::append(const TrainLogRow& row) {
  if (!rows_.empty() && row.epoch <= rows_.back().epoch) {
    throw StateError("trainlog: epoch " + std::to_string(row.epoch) +
                     " does not follow " + std::to_string(rows_.back().epoch));
  }
  rows_.push_back(row);
}

std::string TrainLog::header() {
  return "epoch,lr,batch_size,train_loss,train_top1,val_top1,val_top5,"
         "val_occluded_top1,val_occluded_top5,seed";
}

std::string TrainLog::format_row(const TrainLogRow& r) {
  return std::to_string(r.epoch) + "," + fmt(r.lr, "%.10g") + "," +
         std::to_string(r.batch_size) + "," + fmt(r.train_loss, "%.6f") + "," +
         fmt(r.train_top1) + "," + opt(r.val_top1) + "," + opt(r.val_top5) + "," +
         opt(r.val_occluded_top1) + "," + opt(r.val_occluded_top5) + "," +
         std::to_string(r.seed);
}

std::string TrainLog::to_csv() const {
  std::string out = header() + "\n";
  for (const auto& r : rows_) out += format_row(r) + "\n";
  return out;
}

TrainLog TrainLog::from_csv(std::string_view text) {
  TrainLog log;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != header()) throw FormatError("trainlog: unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 10) throw FormatError("trainlog: row has " + std::to_string(f.size()) + " fields, expected 10");
    auto real = [&](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return std::stod(s);
    };
    try {
      TrainLogRow r;
      r.epoch = std::stoi(f[0]);
      r.lr = std::stod(f[1]);
      r.batch_size = std::stoul(f[2]);
      r.train_loss = std::stod(f[3]);
      r.train_top1 = std::stod(f[4]);
      r.val_top1 = real(f[5]);
      r.val_top5 = real(f[6]);
      r.val_occluded_top1 = real(f[7]);
      r.val_occluded_top5 = real(f[8]);
      r.seed = std::stoull(f[9]);
      log.append(r);
    } catch (const std::logic_error&) {
      throw FormatError("trainlog: malformed row '" + line + "'");
    }
  }
  return log;
}

std::string TrainLog::timing_csv() const {
  std::string out = "epoch,wall_seconds\n";
  for (const auto& r : rows_) {
    out += std::to_string(r.epoch) + "," + fmt(r.wall_seconds, "%.3f") + "\n";
  }
  return out;
}

void TrainLog::write(const std::string& path) const { write_text(path, to_csv()); }

void TrainLog::write_timing(const std::string& path) const {
  write_text(path, timing_csv());
}

template <typename T>
Trainer<T>::Trainer(Model<T>& model, const LabeledDataset& train,
                    PreprocessParams pre, BatchPlan plan, Occluder<T> occluder,
                    TrainerOptions options)
    : model_(&model),
      train_(&train),
      pre_(std::move(pre)),
      plan_(plan),
      occluder_(std::move(occluder)),
      options_(options),
      optimizer_(model, options.sgd),
      data_rng_(options.seed) {
  std::vector<std::string> v = plan_.violations();
  for (auto& s : options_.schedule.violations()) v.push_back(std::move(s));
  for (auto& s : pre_.violations(train.channels(), train.height(), train.width())) {
    v.push_back(std::move(s));
  }
  if (options_.batch_size == 0) v.push_back("train.batch_size must be >= 1");
  if (!(options_.label_smoothing >= 0.0 && options_.label_smoothing < 1.0)) {
    v.push_back("train.label_smoothing must lie in [0, 1)");
  }
  if (plan_.occluder != occluder_.kind()) {
    v.push_back("plan.occluder does not match the supplied occluder");
  }
  if (train.num_classes() != model.arch().num_classes) {
    v.push_back("dataset has " + std::to_string(train.num_classes()) +
                " classes, model expects " + std::to_string(model.arch().num_classes));
  }
  if (train.empty()) v.push_back("training split is empty");
  if (!v.empty()) throw ConfigError(std::move(v));
}

template <typename T>
TrainLogRow Trainer<T>::train_epoch() {
  if (finished()) throw StateError("trainer: all epochs already trained");
  const auto start = std::chrono::steady_clock::now();
  TrainLogRow row;
  row.epoch = epoch_;
  row.lr = lr_at_epoch(options_.schedule, epoch_);
  row.seed = options_.seed;
  model_->train();

  const auto batches =
      plan_epoch(plan_, train_->size(), options_.batch_size, data_rng_);
  const std::size_t k = model_->arch().num_classes;
  double loss_sum = 0.0;
  std::size_t seen = 0, correct = 0;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    Batch<T> b = assemble(plan_, *train_, batches[bi], pre_, occluder_, data_rng_);
    const Tensor<T> targets = label_smooth<T>(b.labels, k, options_.label_smoothing);
    Graph<T> graph;
    auto out = model_->forward(graph, graph.input(std::move(b.images)));
    Var<T> loss = softmax_cross_entropy(out.logits, targets);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      diagnostic_ = row;
      diagnostic_.train_loss = value;
      diagnostic_.batch_size = std::max(row.batch_size, b.size());
      diagnostic_.train_top1 = seen ? 100.0 * static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch_) +
                         ", batch " + std::to_string(bi));
    }
    model_->zero_grad();
    graph.backward(loss);
    optimizer_.step(row.lr);

    const Tensor<T>& logits = out.logits.value();
    for (std::size_t n = 0; n < b.size(); ++n) {
      std::span<const T> r(logits.ptr() + n * k, k);
      if (label_rank(r, b.labels[n]) == 0) ++correct;
    }
    loss_sum += value * static_cast<double>(b.size());
    seen += b.size();
    row.batch_size = std::max(row.batch_size, b.size());
  }
  row.train_loss = loss_sum / static_cast<double>(seen);
  row.train_top1 = 100.0 * static_cast<double>(correct) / static_cast<double>(seen);
  row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ++epoch_;
  return row;
}

template <typename T>
std::vector<bool> topk_hits(std::span<const T> logits, int label,
                            const std::vector<int>& ks) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw DomainError("topk: label " + std::to_string(label) + " out of range");
  }
  const std::size_t rank = label_rank(logits, label);
  std::vector<bool> out;
  for (int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) > logits.size()) {
      throw DomainError("topk: k = " + std::to_string(k) + " outside [1, " +
                        std::to_string(logits.size()) + "]");
    }
    out.push_back(rank < static_cast<std::size_t>(k));
  }
  return out;
}

template <typename T>
std::vector<double> evaluate_topk(Model<T>& model, const LabeledDataset& ds,
                                  const PreprocessParams& pre,
                                  const std::vector<int>& ks,
                                  std::size_t batch_size) {
  const std::size_t classes = model.arch().num_classes;
  for (int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) > classes) {
      throw DomainError("evaluate_topk: k = " + std::to_string(k) +
                        " exceeds the " + std::to_string(classes) + " classes");
    }
  }
  if (ds.empty()) throw DomainError("evaluate_topk: empty dataset");
  if (batch_size == 0) throw DomainError("evaluate_topk: batch_size must be >= 1");
  const bool was_training = model.is_training();
  model.eval();
  std::vector<std::size_t> hits(ks.size(), 0);
  try {
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < ds.size(); start += batch_size) {
      idx.clear();
      for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
      const Batch<T> b = assemble_eval<T>(ds, idx, pre);
      const Tensor<T> logits = model.predict(b.images);
      for (std::size_t n = 0; n < b.size(); ++n) {
        const auto h = topk_hits<T>(std::span<const T>(logits.ptr() + n * classes, classes),
                                    b.labels[n], ks);
        for (std::size_t j = 0; j < ks.size(); ++j) hits[j] += h[j];
      }
    }
  } catch (...) {
    if (was_training) model.train();
    throw;
  }
  if (was_training) model.train();
  std::vector<double> out;
  for (auto h : hits) out.push_back(100.0 * static_cast<double>(h) / static_cast<double>(ds.size()));
  return out;
}

template class Trainer<float>;
template class Trainer<double>;
template std::vector<double> evaluate_topk(Model<float>&, const LabeledDataset&,
                                           const PreprocessParams&,
                                           const std::vector<int>&, std::size_t);
template std::vector<double> evaluate_topk(Model<double>&, const LabeledDataset&,
                                           const PreprocessParams&,
                                           const std::vector<int>&, std::size_t);
template std::vector<bool> topk_hits(std::span<const float>, int, const std::vector<int>&);
template std::vector<bool> topk_hits(std::span<const double>, int, const std::vector<int>&);

}  // namespace occaug
