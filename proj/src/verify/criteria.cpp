#include "occaug/verify/criteria.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include "occaug/core/binary_io.hpp"
#include "occaug/core/error.hpp"
#include "occaug/core/gradcheck.hpp"
#include "occaug/core/graph.hpp"
#include "occaug/core/rng.hpp"
#include "occaug/data/dataset.hpp"
#include "occaug/data/two_cue.hpp"
#include "occaug/experiment/config.hpp"
#include "occaug/experiment/runner.hpp"
#include "occaug/nn/arch.hpp"
#include "occaug/nn/model.hpp"
#include "occaug/nn/regularizers.hpp"
#include "occaug/occlusion/mask.hpp"
#include "occaug/pipeline/pipeline.hpp"
#include "occaug/saliency/saliency.hpp"
#include "occaug/train/checkpoint.hpp"
#include "occaug/train/optim.hpp"
#include "occaug/verify/experiments.hpp"

namespace occaug {
namespace {

using Clock = std::chrono::steady_clock;

std::string num(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

Tensor<double> normal_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.storage()) v = scale * rng.normal();
  return t;
}

// ---------------------------------------------------------------------------
// 1. Gradient fidelity

using Builder =
    std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

struct OpCheck {
  std::string name;
  std::vector<Tensor<double>> inputs;
  Builder build;
};

/// Relative error between the tape gradient and central differences of
/// sum(out * w) with respect to every input, concatenated.
double op_error(OpCheck& c, Rng& rng) {
  std::vector<double> analytic;
  Tensor<double> w;
  {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (auto& t : c.inputs) vars.push_back(g.input(t, true));
    Var<double> out = c.build(g, vars);
    w = normal_tensor(out.shape(), rng);
    Var<double> loss = sum(mul(out, g.input(w)));
    g.backward(loss);
    for (auto& v : vars) {
      const Tensor<double> gr = g.grad(v);
      analytic.insert(analytic.end(), gr.storage().begin(), gr.storage().end());
    }
  }
  std::vector<double> flat;
  for (auto& t : c.inputs) flat.insert(flat.end(), t.storage().begin(), t.storage().end());
  auto f = [&](std::span<const double> p) {
    std::vector<Tensor<double>> probe = c.inputs;
    std::size_t k = 0;
    for (auto& t : probe) {
      for (auto& v : t.storage()) v = p[k++];
    }
    Graph<double> g(false);
    std::vector<Var<double>> vars;
    for (auto& t : probe) vars.push_back(g.input(t));
    const Tensor<double>& out = c.build(g, vars).value();
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
    return s;
  };
  const auto numeric = finite_difference_gradient(f, flat, 1e-6);
  return relative_error(analytic, numeric);
}

/// Values spaced at least 0.01 apart so no perturbation crosses a max-pool tie.
Tensor<double> distinct_tensor(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t i = 0; i < order.size(); ++i) {
    t[i] = 0.01 * static_cast<double>(order[i]) - 0.005 * static_cast<double>(order.size());
  }
  return t;
}

/// Normal entries pushed at least 0.05 away from the relu kink.
Tensor<double> off_kink_tensor(Shape shape, Rng& rng) {
  Tensor<double> t = normal_tensor(std::move(shape), rng);
  for (auto& v : t.storage()) v += v >= 0 ? 0.05 : -0.05;
  return t;
}

std::vector<OpCheck> op_checks(Rng& rng) {
  std::vector<OpCheck> out;
  out.push_back({"conv2d(stride 1, padding 1)",
                 {normal_tensor({2, 3, 6, 6}, rng), normal_tensor({4, 3, 3, 3}, rng),
                  normal_tensor({4}, rng)},
                 [](Graph<double>&, const auto& v) { return conv2d(v[0], v[1], v[2], 1, 1); }});
  out.push_back({"conv2d(stride 2, padding 0)",
                 {normal_tensor({2, 2, 7, 7}, rng), normal_tensor({3, 2, 3, 3}, rng),
                  normal_tensor({3}, rng)},
                 [](Graph<double>&, const auto& v) { return conv2d(v[0], v[1], v[2], 2, 0); }});
  out.push_back({"conv2d(stride 2, padding 2)",
                 {normal_tensor({1, 2, 5, 6}, rng), normal_tensor({2, 2, 4, 4}, rng),
                  normal_tensor({2}, rng)},
                 [](Graph<double>&, const auto& v) { return conv2d(v[0], v[1], v[2], 2, 2); }});
  out.push_back({"max_pool2d(2, 2)", {distinct_tensor({2, 3, 6, 6}, rng)},
                 [](Graph<double>&, const auto& v) { return max_pool2d(v[0], 2, 2); }});
  out.push_back({"max_pool2d(3, 2)", {distinct_tensor({1, 2, 7, 7}, rng)},
                 [](Graph<double>&, const auto& v) { return max_pool2d(v[0], 3, 2); }});
  out.push_back({"global_avg_pool2d", {normal_tensor({2, 3, 3, 4}, rng)},
                 [](Graph<double>&, const auto& v) { return global_avg_pool2d(v[0]); }});
  out.push_back({"linear",
                 {normal_tensor({3, 5}, rng), normal_tensor({4, 5}, rng), normal_tensor({4}, rng)},
                 [](Graph<double>&, const auto& v) { return linear(v[0], v[1], v[2]); }});
  out.push_back({"relu", {off_kink_tensor({2, 3, 4, 4}, rng)},
                 [](Graph<double>&, const auto& v) { return relu(v[0]); }});

  auto train_state = std::make_shared<BatchNormState<double>>(3);
  out.push_back({"batch_norm2d(train)",
                 {normal_tensor({4, 3, 3, 3}, rng), normal_tensor({3}, rng),
                  normal_tensor({3}, rng)},
                 [train_state](Graph<double>&, const auto& v) {
                   BatchNormOptions o;
                   o.update_running = false;
                   return batch_norm2d(v[0], v[1], v[2], *train_state, o);
                 }});
  auto eval_state = std::make_shared<BatchNormState<double>>(3);
  for (std::size_t c = 0; c < 3; ++c) {
    eval_state->running_mean[c] = rng.normal();
    eval_state->running_var[c] = rng.uniform(0.5, 2.0);
  }
  eval_state->initialized = true;
  out.push_back({"batch_norm2d(eval)",
                 {normal_tensor({2, 3, 3, 3}, rng), normal_tensor({3}, rng),
                  normal_tensor({3}, rng)},
                 [eval_state](Graph<double>&, const auto& v) {
                   BatchNormOptions o;
                   o.mode = BatchNormMode::eval;
                   return batch_norm2d(v[0], v[1], v[2], *eval_state, o);
                 }});
  out.push_back({"add", {normal_tensor({2, 3, 4}, rng), normal_tensor({2, 3, 4}, rng)},
                 [](Graph<double>&, const auto& v) { return add(v[0], v[1]); }});
  out.push_back({"mul", {normal_tensor({2, 3, 4}, rng), normal_tensor({2, 3, 4}, rng)},
                 [](Graph<double>&, const auto& v) { return mul(v[0], v[1]); }});
  const Tensor<double> factor = normal_tensor({2, 3, 4}, rng);
  out.push_back({"scale_by", {normal_tensor({2, 3, 4}, rng)},
                 [factor](Graph<double>&, const auto& v) { return scale_by(v[0], factor); }});
  out.push_back({"sum", {normal_tensor({3, 4}, rng)},
                 [](Graph<double>&, const auto& v) { return sum(v[0]); }});
  out.push_back({"reshape", {normal_tensor({2, 3, 4}, rng)},
                 [](Graph<double>&, const auto& v) { return reshape(v[0], {4, 6}); }});
  out.push_back({"flatten", {normal_tensor({2, 3, 2, 2}, rng)},
                 [](Graph<double>&, const auto& v) { return flatten(v[0]); }});
  const std::vector<int> labels{0, 3, 4, 1};
  const Tensor<double> targets = label_smooth<double>(labels, 5, 0.1);
  out.push_back({"softmax_cross_entropy", {normal_tensor({4, 5}, rng, 2.0)},
                 [targets](Graph<double>&, const auto& v) {
                   return softmax_cross_entropy(v[0], targets);
                 }});
  // A fresh generator per evaluation keeps the random factors fixed.
  out.push_back({"dropout(train)", {normal_tensor({2, 3, 4, 4}, rng)},
                 [](Graph<double>&, const auto& v) {
                   Rng r(11);
                   return dropout(v[0], 0.7, r, true);
                 }});
  out.push_back({"spatial_dropout(train)", {normal_tensor({4, 3, 3, 3}, rng)},
                 [](Graph<double>&, const auto& v) {
                   Rng r(12);
                   return spatial_dropout(v[0], 0.6, r, true);
                 }});
  out.push_back({"drop_block(train)", {normal_tensor({2, 2, 8, 8}, rng)},
                 [](Graph<double>&, const auto& v) {
                   Rng r(13);
                   return drop_block(v[0], 0.8, 3, r, true);
                 }});
  return out;
}

/// Full-model check: loss gradient over all parameters at once. Conv biases
/// ahead of train-mode batch norm have an exactly zero gradient, so a
/// per-tensor ratio would be meaningless for them.
double model_error(ArchName name, Rng& rng) {
  const ArchSpec arch = ArchSpec::make(name, {3, 16, 16}, 5, 4);
  Model<double> model(arch, RegularizerSpec{}, 3);
  model.train();
  const Tensor<double> x = normal_tensor({3, 3, 16, 16}, rng);
  const std::vector<int> labels{0, 2, 4};
  const Tensor<double> targets = label_smooth<double>(labels, 5, 0.0);
  ForwardOptions fo;
  fo.update_batch_norm = false;

  model.zero_grad();
  {
    Graph<double> g;
    auto out = model.forward(g, g.input(x), fo);
    g.backward(softmax_cross_entropy(out.logits, targets));
  }
  std::vector<double> analytic, numeric;
  for (auto& p : model.parameters()) {
    const auto& grad = p.tensor->grad();
    analytic.insert(analytic.end(), grad.begin(), grad.end());
    const std::vector<double> p0(p.tensor->data().begin(), p.tensor->data().end());
    auto f = [&](std::span<const double> v) {
      std::copy(v.begin(), v.end(), p.tensor->data().begin());
      Graph<double> g(false);
      auto out = model.forward(g, g.input(x), fo);
      return softmax_cross_entropy_value(out.logits.value(), targets);
    };
    const auto fd = finite_difference_gradient(f, p0, 1e-6);
    std::copy(p0.begin(), p0.end(), p.tensor->data().begin());
    numeric.insert(numeric.end(), fd.begin(), fd.end());
  }
  return relative_error(analytic, numeric);
}

CriterionResult gradient_fidelity(const VerifyOptions& o) {
  CriterionResult r;
  Rng rng(o.seed);
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  auto note = [&](const std::string& name, double e) {
    ++checked;
    if (!(e <= worst)) {
      worst = e;
      worst_name = name;
    }
  };
  for (auto& c : op_checks(rng)) note(c.name, op_error(c, rng));
  note("MiniPlain", model_error(ArchName::mini_plain, rng));
  note("MiniSkip", model_error(ArchName::mini_skip, rng));
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  r.passed = worst <= 1e-5 && secs < 120.0;
  r.detail = std::to_string(checked) + " checks, worst relative error " + num(worst, 3) +
             " (" + worst_name + "), " + num(secs, 3) + " s";
  return r;
}

// ---------------------------------------------------------------------------
// 2. Saliency identity

CriterionResult saliency_identity(const VerifyOptions& o) {
  CriterionResult r;
  Rng rng(o.seed + 2);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto c = static_cast<std::size_t>(rng.uniform_int(1, 64));
    const double gs = std::pow(10.0, rng.uniform(-4.0, 4.0));
    const double xs = std::pow(10.0, rng.uniform(-4.0, 4.0));
    const Tensor<double> g = normal_tensor({c, 1, 1}, rng, gs);
    const Tensor<double> x = normal_tensor({c, 1, 1}, rng, xs);
    double frob = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < c; ++j) frob += (g[i] * x[j]) * (g[i] * x[j]);
    }
    frob = std::sqrt(frob);
    const double s = saliency_from_hooks(x, g)[0];
    const double e = frob == 0.0 ? std::abs(s) : std::abs(s - frob) / frob;
    worst = std::max(worst, e);
  }
  r.passed = worst <= 1e-6;
  r.detail = "10000 channel vectors, worst relative error " + num(worst, 3);
  return r;
}

// ---------------------------------------------------------------------------
// 3. Mask statistics

CriterionResult mask_statistics(const VerifyOptions& o) {
  CriterionResult r;
  Rng rng(o.seed + 3);
  const std::size_t trials = 100000;
  HideSeekParams half{4, 0.5, 0.0};
  HideSeekParams light{4, 0.9, 0.0};
  const auto a = expected_occlusion_fraction(half, 224, 224, trials, rng);
  const auto b = expected_occlusion_fraction(light, 224, 224, trials, rng);
  const auto c = expected_occlusion_fraction(CutoutParams{1, 56}, 224, 224, trials, rng);
  const double analytic = cutout_expected_fraction(56, 224, 224);
  const bool ok_a = std::abs(a.mean - 0.5) <= 0.005;
  const bool ok_b = std::abs(b.mean - 0.1) <= 0.005;
  const bool ok_c = std::abs(c.mean - analytic) <= 0.002 && std::abs(analytic - 0.0549) <= 0.00005;
  r.passed = ok_a && ok_b && ok_c;
  r.detail = "H&S p=0.5: " + num(a.mean, 5) + ", H&S p=0.9: " + num(b.mean, 5) +
             ", Cutout S=56: " + num(c.mean, 5) + " vs analytic " + num(analytic, 5);
  return r;
}

// ---------------------------------------------------------------------------
// 4. Max-patch oracle

PatchPosition brute_force_patch(const Tensor<double>& map, int side, int stride) {
  const int h = static_cast<int>(map.dim(0)), w = static_cast<int>(map.dim(1));
  PatchPosition best;
  double best_sum = 0.0;
  bool first = true;
  for (int top = 0; top + side <= h; top += stride) {
    for (int left = 0; left + side <= w; left += stride) {
      double s = 0.0;
      for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
          s += map[static_cast<std::size_t>((top + i) * w + left + j)];
        }
      }
      if (first || s > best_sum) {
        best_sum = s;
        best = {top, left};
        first = false;
      }
    }
  }
  return best;
}

CriterionResult max_patch_oracle(const VerifyOptions& o) {
  CriterionResult r;
  Rng rng(o.seed + 4);
  int mismatches = 0, tied = 0;
  std::string first_bad;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto h = static_cast<std::size_t>(rng.uniform_int(4, 64));
    const auto w = static_cast<std::size_t>(rng.uniform_int(4, 64));
    const int side = static_cast<int>(
        rng.uniform_int(2, std::min<std::int64_t>(16, static_cast<std::int64_t>(std::min(h, w)))));
    const int stride = static_cast<int>(rng.uniform_int(1, 2));
    Tensor<double> map({h, w});
    // Every other map is small-integer valued, so window sums tie exactly and
    // the tie-break rule is exercised; integer sums are exact in any order.
    const bool integer = trial % 2 == 0;
    for (auto& v : map.storage()) {
      v = integer ? static_cast<double>(rng.uniform_int(0, 2)) : rng.uniform01();
    }
    if (trial % 10 == 0) std::fill(map.storage().begin(), map.storage().end(), 0.0);
    const PatchPosition got = extract_max_patch(map, side, stride);
    const PatchPosition want = brute_force_patch(map, side, stride);
    if (integer) ++tied;
    if (!(got == want)) {
      if (mismatches++ == 0) {
        first_bad = " (first: " + std::to_string(h) + "x" + std::to_string(w) + " S=" +
                    std::to_string(side) + " T=" + std::to_string(stride) + ")";
      }
    }
  }
  r.passed = mismatches == 0;
  r.detail = "1000 maps (" + std::to_string(tied) + " with tied sums), " +
             std::to_string(mismatches) + " mismatches" + first_bad;
  return r;
}

// ---------------------------------------------------------------------------
// 5. Batch-assembly contracts

LabeledDataset random_dataset(std::size_t count, Rng& rng) {
  LabeledDataset ds(4, 3, 12, 12, Split::train);
  std::vector<std::uint8_t> px(ds.image_size());
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& p : px) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    ds.add(px, static_cast<int>(i % 4));
  }
  return ds;
}

bool same_bits(const float* a, const float* b, std::size_t n) {
  return std::memcmp(a, b, n * sizeof(float)) == 0;
}

/// Joint contract: the first half is the input batch bit for bit; entry n+i
/// equals entry i where its mask keeps and the fill value 0 elsewhere.
std::string check_joint(const LabeledDataset& ds, const PreprocessParams& pre,
                        const Occluder<float>& occluder, Rng& rng) {
  for (const auto& idx : epoch_batches(ds.size(), 16, rng)) {
    const Batch<float> base = assemble_plain<float>(ds, idx, pre, rng);
    const Batch<float> j = assemble_joint(base, occluder, rng);
    const std::size_t n = base.size();
    const auto& s = base.images.shape();
    const std::size_t plane = s[2] * s[3], per = s[1] * plane;
    if (j.size() != 2 * n) return "joint batch size " + std::to_string(j.size());
    if (!same_bits(j.images.ptr(), base.images.ptr(), n * per)) return "joint first half altered";
    for (std::size_t i = 0; i < n; ++i) {
      if (j.labels[i] != base.labels[i] || j.labels[n + i] != base.labels[i] ||
          j.source[i] != base.source[i] || j.source[n + i] != base.source[i]) {
        return "joint labels or sources not duplicated";
      }
      if (j.occluded[i] != 0 || j.occluded[n + i] != 1) return "joint occlusion flags";
      const Mask& m = j.masks[n + i];
      if (!j.masks[i].all_kept()) return "joint first-half mask not all-kept";
      const float* a = base.images.ptr() + i * per;
      const float* b = j.images.ptr() + (n + i) * per;
      for (std::size_t c = 0; c < s[1]; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
          const float want = m.bits()[p] ? a[c * plane + p] : 0.0f;
          if (std::memcmp(&want, &b[c * plane + p], sizeof(float)) != 0) {
            return "joint second half differs at sample " + std::to_string(i);
          }
        }
      }
    }
  }
  return {};
}

std::string check_batch_augment(const LabeledDataset& ds, const ChannelStats& stats,
                                 Rng& rng) {
  PreprocessParams pre;
  pre.crop = static_cast<int>(ds.height());
  pre.flip_prob = 0.0;
  pre.mean = stats.mean;
  pre.std = stats.std;
  const auto occluder = Occluder<float>::cutout({1, 6});
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Batch<float> reference = assemble_eval<float>(ds, all, pre);
  const std::size_t per = ds.image_size();
  for (int m = 2; m <= 4; ++m) {
    const Batch<float> b = assemble_batch_augment(ds, all, pre, occluder, m, 1.0, rng);
    if (b.size() != all.size() * static_cast<std::size_t>(m)) return "batch_augment size";
    std::vector<int> seen(ds.size(), 0);
    for (std::size_t e = 0; e < b.size(); ++e) {
      const std::size_t src = b.source[e];
      ++seen[src];
      if (b.occluded[e] != 0) return "batch_augment occluded an entry at p_keep_image=1";
      if (b.labels[e] != ds.label(src)) return "batch_augment label mismatch";
      if (!same_bits(b.images.ptr() + e * per, reference.images.ptr() + src * per, per)) {
        return "batch_augment copy of image " + std::to_string(src) + " differs (M=" +
               std::to_string(m) + ")";
      }
    }
    for (int c : seen) {
      if (c != m) return "batch_augment copy count " + std::to_string(c);
    }
  }
  return {};
}

std::string check_dataset_augment(std::size_t count, Rng& rng) {
  for (int m = 1; m <= 4; ++m) {
    for (std::size_t bs = 1; bs <= count; ++bs) {
      std::vector<int> seen(count, 0);
      for (const auto& batch : dataset_augment_batches(count, bs, m, rng)) {
        if (batch.size() > bs) return "dataset_augment batch larger than batch_size";
        std::set<std::size_t> unique(batch.begin(), batch.end());
        if (unique.size() != batch.size()) {
          return "dataset_augment duplicate in one batch (M=" + std::to_string(m) +
                 ", batch_size=" + std::to_string(bs) + ")";
        }
        for (std::size_t i : batch) ++seen[i];
      }
      for (int c : seen) {
        if (c != m) return "dataset_augment presentation count " + std::to_string(c);
      }
    }
  }
  return {};
}

CriterionResult batch_contracts(const VerifyOptions& o) {
  CriterionResult r;
  Rng rng(o.seed + 5);
  const LabeledDataset ds = random_dataset(64, rng);
  const ChannelStats stats = dataset_mean_std(ds);
  PreprocessParams pre;
  pre.crop = 10;
  pre.mean = stats.mean;
  pre.std = stats.std;
  std::string err = check_joint(ds, pre, Occluder<float>::hide_seek({5, 0.5, 0.0}), rng);
  if (err.empty()) err = check_joint(ds, pre, Occluder<float>::cutout({2, 4}), rng);
  if (err.empty()) err = check_batch_augment(ds, stats, rng);
  if (err.empty()) err = check_dataset_augment(ds.size(), rng);
  r.passed = err.empty();
  r.detail = err.empty()
                 ? "joint (H&S, Cutout), batch_augment M=2..4, dataset_augment M=1..4 x "
                   "batch sizes 1..64 on 64 images"
                 : err;
  return r;
}

// ---------------------------------------------------------------------------
// 6. Determinism and checkpointing

std::string read_text(const std::string& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

/// Checkpoints written to different directories differ only in the stored
/// config text (output_dir), so that entry is skipped.
bool same_checkpoint_state(const std::string& a, const std::string& b) {
  const Checkpoint x = Checkpoint::load(a), y = Checkpoint::load(b);
  if (x.entries().size() != y.entries().size()) return false;
  for (std::size_t i = 0; i < x.entries().size(); ++i) {
    const auto& p = x.entries()[i];
    const auto& q = y.entries()[i];
    if (p.name != q.name) return false;
    if (p.name == "config") continue;
    if (p.dtype != q.dtype || p.shape != q.shape || p.payload != q.payload) return false;
  }
  return true;
}

CriterionResult determinism(const VerifyOptions& o) {
  CriterionResult r;
  const std::string root = o.work_dir + "/determinism";
  std::filesystem::remove_all(root);
  ExperimentConfig c = parse_config(
      "seed = " + std::to_string(o.seed) +
      "\nmodel.arch = mini_skip\nmodel.width = 4\n"
      "regularizer.kind = drop_block\nregularizer.p_keep = 0.9\nregularizer.block_size = 3\n"
      "data.seed = 5\ndata.two_cue.num_classes = 4\n"
      "data.two_cue.train_count = 96\ndata.two_cue.val_count = 32\n"
      "plan.strategy = joint\noccluder.kind = hide_seek\n"
      "train.epochs = 3\ntrain.lr_period = 2\ntrain.batch_size = 32\n"
      "train.label_smoothing = 0.1\n");
  const ExperimentData data = load_experiment_data(c);
  RunOptions ro;
  ro.data = &data;

  c.output_dir = root + "/a";
  run_experiment(c, ro);
  c.output_dir = root + "/b";
  run_experiment(c, ro);
  c.output_dir = root + "/split";
  RunOptions first = ro;
  first.stop_after = 1;
  run_experiment(c, first);
  RunOptions second = ro;
  second.resume_from = root + "/split/checkpoint.ocsm";
  run_experiment(c, second);

  const std::string log_a = read_text(root + "/a/trainlog.csv");
  const bool same_log = log_a == read_text(root + "/b/trainlog.csv");
  const bool same_summary =
      read_text(root + "/a/summary.csv") == read_text(root + "/b/summary.csv");
  const bool split_log = log_a == read_text(root + "/split/trainlog.csv");
  const bool split_state =
      same_checkpoint_state(root + "/a/checkpoint.ocsm", root + "/split/checkpoint.ocsm");
  r.passed = same_log && same_summary && split_log && split_state;
  r.detail = std::string("repeat trainlog ") + (same_log ? "identical" : "DIFFERS") +
             ", summary " + (same_summary ? "identical" : "DIFFERS") +
             ", resumed trainlog " + (split_log ? "identical" : "DIFFERS") +
             ", resumed checkpoint state " + (split_state ? "identical" : "DIFFERS");
  return r;
}

// ---------------------------------------------------------------------------
// 7. Schedule

CriterionResult schedule(const VerifyOptions&) {
  CriterionResult r;
  const Schedule s{0.1, 0.1, 30, 100};
  const int epochs[] = {0, 30, 60, 90};
  const double want[] = {0.1, 0.01, 0.001, 0.0001};
  bool ok = true;
  std::string got;
  for (int i = 0; i < 4; ++i) {
    const double lr = lr_at_epoch(s, epochs[i]);
    ok = ok && lr == want[i];
    got += (i ? ", " : "") + num(lr, 17);
  }
  // Constant between decay points.
  ok = ok && lr_at_epoch(s, 29) == 0.1 && lr_at_epoch(s, 59) == 0.01 &&
       lr_at_epoch(s, 99) == 0.0001;
  r.passed = ok;
  r.detail = "epochs 0/30/60/90 -> " + got;
  return r;
}

// ---------------------------------------------------------------------------
// 8 and 9. Desk-scale experiments

std::string group_detail(const std::string& name, const GroupStats& g, bool occluded) {
  std::string s = name + " val " + num(g.val.first, 4) + "±" + num(g.val.second, 2);
  if (occluded) s += " occ " + num(g.val_occluded.first, 4) + "±" + num(g.val_occluded.second, 2);
  return s;
}

CriterionResult thesis(const VerifyOptions& o) {
  CriterionResult r;
  const auto start = Clock::now();
  const std::string dir = o.work_dir + "/thesis";
  const GroupedResult t = run_groups(thesis_groups(o.seed), dir, o.workers);
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  const GroupStats& plain = t.groups.at("plain");
  const GroupStats& nonjoint = t.groups.at("nonjoint");
  const GroupStats& joint = t.groups.at("joint");
  const bool a = joint.val.first >= plain.val.first - 0.5;
  const bool b = joint.val_occluded.first >= plain.val_occluded.first + 5.0 &&
                 joint.val_occluded.first >= nonjoint.val_occluded.first + 5.0;
  // Qualitative side output: saliency of the baseline and joint models on
  // occluded validation samples.
  if (t.all_ok) {
    const ExperimentData data = load_experiment_data(thesis_groups(o.seed).front().second);
    for (const char* group : {"plain", "joint"}) {
      export_heatmaps(dir + "/" + group + "/run_0/checkpoint.ocsm", *data.val_occluded,
                      default_saliency_layer(ArchName::mini_skip), 4,
                      dir + "/heatmaps/" + group);
    }
  }
  r.passed = t.all_ok && a && b && secs < 900.0;
  r.detail = group_detail("plain", plain, true) + "; " + group_detail("nonjoint", nonjoint, true) +
             "; " + group_detail("joint", joint, true) + "; " + num(secs, 4) + " s" +
             (t.all_ok ? "" : "; a run failed");
  return r;
}

CriterionResult always_occluded(const VerifyOptions& o) {
  CriterionResult r;
  const GroupedResult t = run_groups(always_occluded_groups(o.seed), o.work_dir + "/always", o.workers);
  const GroupStats& never = t.groups.at("p_keep_image=0.5");
  const GroupStats& always = t.groups.at("p_keep_image=0.0");
  r.passed = t.all_ok && std::abs(always.val.first - never.val.first) <= 1.0;
  r.detail = group_detail("p_keep_image=0.0", always, false) + "; " +
             group_detail("p_keep_image=0.5", never, false) +
             (t.all_ok ? "" : "; a run failed");
  return r;
}

// ---------------------------------------------------------------------------
// 10. Regularizer sanity

CriterionResult regularizer_sanity(const VerifyOptions& o) {
  CriterionResult r;
  Rng rng(o.seed + 10);
  std::vector<std::string> failures;

  {
    Graph<double> g(false);
    const Tensor<double> x = normal_tensor({2, 3, 8, 8}, rng);
    Var<double> in = g.input(x);
    const Var<double> outs[] = {dropout(in, 0.5, rng, false),
                                spatial_dropout(in, 0.5, rng, false),
                                drop_block(in, 0.5, 3, rng, false)};
    for (const auto& v : outs) {
      if (v.value().storage() != x.storage()) failures.push_back("op not identity in eval");
    }
  }
  {
    const ArchSpec arch = ArchSpec::make(ArchName::mini_skip, {3, 32, 32}, 5, 4);
    const Tensor<float> x = [&] {
      Tensor<float> t({2, 3, 32, 32});
      for (auto& v : t.storage()) v = static_cast<float>(rng.normal());
      return t;
    }();
    Model<float> plain(arch, RegularizerSpec{}, 9);
    plain.train();
    plain.predict(x);  // populate batch-norm running statistics
    plain.eval();
    const Tensor<float> want = plain.predict(x);
    for (auto kind : {RegularizerKind::dropout, RegularizerKind::spatial_dropout,
                      RegularizerKind::drop_block}) {
      RegularizerSpec spec;
      spec.kind = kind;
      spec.p_keep = 0.5;
      spec.block_size = 3;
      spec.placement = RegularizerSpec::default_placement(ArchName::mini_skip, kind);
      Model<float> m(arch, spec, 9);
      m.train();
      ForwardOptions fo;
      fo.regularize = false;
      {
        Graph<float> g(false);
        m.forward(g, g.input(x), fo);
      }
      m.eval();
      if (m.predict(x).storage() != want.storage()) {
        failures.push_back(std::string(to_string(kind)) + " model not identity in eval");
      }
    }
  }

  std::string means;
  auto expect_one = [&](const std::string& name, const Tensor<double>& f) {
    double s = 0.0;
    for (double v : f.storage()) s += v;
    const double mean = s / static_cast<double>(f.size());
    means += (means.empty() ? "" : ", ") + name + " " + num(mean, 5);
    if (std::abs(mean - 1.0) > 0.01) failures.push_back(name + " scaling mean " + num(mean, 5));
  };
  for (double p : {0.5, 0.9}) {
    expect_one("dropout p=" + num(p, 2), dropout_mask<double>({1000000}, p, rng));
    expect_one("spatial p=" + num(p, 2),
               spatial_dropout_mask<double>({1000, 1000, 1, 1}, p, rng));
  }
  expect_one("drop_block p=0.9", drop_block_mask<double>({4000, 16, 8, 8}, 0.9, 3, rng));

  const std::vector<int> labels{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const Tensor<double> t = label_smooth<double>(labels, 10, 0.1);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t k = 0; k < 10; ++k) {
      if (t[i * 10 + k] != (i == k ? 0.91 : 0.01)) {
        failures.push_back("label_smooth row " + std::to_string(i));
        break;
      }
    }
  }
  r.passed = failures.empty();
  r.detail = failures.empty() ? "eval identity for 3 ops and 3 models; " + means +
                                    "; label_smooth rows exact"
                              : failures.front();
  return r;
}

}  // namespace

std::vector<CriterionResult> run_criteria(
    const VerifyOptions& options,
    const std::function<void(const CriterionResult&)>& on_result) {
  using Fn = CriterionResult (*)(const VerifyOptions&);
  struct Item {
    int id;
    const char* title;
    Fn fn;
  };
  std::vector<Item> items{{1, "gradient fidelity", gradient_fidelity},
                          {2, "saliency norm identity", saliency_identity},
                          {3, "mask statistics", mask_statistics},
                          {4, "max-patch oracle equivalence", max_patch_oracle},
                          {5, "batch-assembly contracts", batch_contracts},
                          {6, "determinism and checkpoint resume", determinism},
                          {7, "learning-rate schedule", schedule}};
  if (options.full) {
    items.push_back({8, "joint occlusion thesis", thesis});
    items.push_back({9, "always-occluded batch augmentation", always_occluded});
  }
  items.push_back({10, "regularizer sanity", regularizer_sanity});

  std::filesystem::create_directories(options.work_dir);
  std::vector<CriterionResult> out;
  for (const auto& item : items) {
    const auto start = Clock::now();
    CriterionResult r;
    try {
      r = item.fn(options);
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.id = item.id;
    r.title = item.title;
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_result(const CriterionResult& r) {
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.1f s", r.seconds);
  return std::string(r.passed ? "[PASS] " : "[FAIL] ") + std::to_string(r.id) + " " +
         r.title + ": " + r.detail + " (" + secs + ")";
}

}  // namespace occaug
