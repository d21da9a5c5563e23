#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "occaug/core/error.hpp"
#include "occaug/train/checkpoint.hpp"
#include "occaug/train/optim.hpp"
#include "occaug/train/trainer.hpp"

using namespace occaug;

namespace {

/// Two classes told apart by brightness, with pixel noise.
LabeledDataset brightness_dataset(std::size_t n, std::uint64_t seed) {
  LabeledDataset ds(2, 3, 8, 8);
  Rng rng(seed);
  RawImage img(3, 8, 8);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    for (auto& p : img.pixels) {
      const double v = (label ? 170.0 : 85.0) + 20.0 * rng.normal();
      p = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    ds.add(img, label);
  }
  return ds;
}

PreprocessParams small_pre() {
  PreprocessParams p;
  p.crop = 8;
  p.flip_prob = 0.5;
  p.mean = {0.5, 0.5, 0.5};
  p.std = {0.25, 0.25, 0.25};
  return p;
}

ArchSpec small_arch(std::size_t classes) {
  return ArchSpec::make(ArchName::mini_skip, {3, 8, 8}, classes, 4);
}

TrainerOptions small_options(int epochs, double lr0) {
  TrainerOptions o;
  o.batch_size = 16;
  o.schedule = {lr0, 0.1, 30, epochs};
  o.seed = 9;
  return o;
}

std::vector<float> flat_parameters(Model<float>& m) {
  std::vector<float> out;
  for (auto& p : m.parameters()) out.insert(out.end(), p.tensor->storage().begin(), p.tensor->storage().end());
  return out;
}

}  // namespace

TEST_CASE("step decay schedule") {
  CHECK(lr_at_epoch({0.01, 0.1, 30, 90}, 45) == doctest::Approx(0.001));
  CHECK(lr_at_epoch({0.01, 0.1, 30, 90}, 29) == doctest::Approx(0.01));
  for (int e = 0; e < 20; ++e) CHECK(lr_at_epoch({0.3, 1.0, 4, 20}, e) == 0.3);
  CHECK_THROWS_AS(lr_at_epoch({0.1, 0.1, 30, 90}, 90), DomainError);
  CHECK_FALSE(Schedule{0.1, 0.1, 0, 10}.violations().empty());
  CHECK_FALSE(Schedule{-0.1, 0.1, 3, 10}.violations().empty());
}

TEST_CASE("sgd momentum update") {
  std::vector<double> p{1.0}, g{0.5}, v{0.0};
  sgd_momentum_step<double>(p, g, v, 0.1, {0.9, 0.0});
  CHECK(p[0] == doctest::Approx(0.95));
  CHECK(v[0] == doctest::Approx(0.5));

  // against the recurrence written out by hand
  std::vector<double> q{2.0}, vel{0.0};
  double ref_p = 2.0, ref_v = 0.0;
  for (int t = 0; t < 50; ++t) {
    const double grad = std::sin(0.3 * t);
    std::vector<double> gt{grad};
    sgd_momentum_step<double>(q, gt, vel, 0.05, {0.9, 1e-4});
    ref_v = 0.9 * ref_v + grad + 1e-4 * ref_p;
    ref_p -= 0.05 * ref_v;
  }
  CHECK(std::abs(q[0] - ref_p) <= 1e-12);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto ds = brightness_dataset(16, 1);
  Model<float> model(small_arch(2), RegularizerSpec{}, 2);
  SgdMomentum<float> opt(model, {});
  const auto before = flat_parameters(model);
  Rng rng(3);
  std::vector<std::size_t> idx(16);
  for (std::size_t i = 0; i < 16; ++i) idx[i] = i;
  const auto batch = assemble_plain<float>(ds, idx, small_pre(), rng);
  Tensor<float> targets({16, 2});
  for (std::size_t i = 0; i < 16; ++i) targets[i * 2 + static_cast<std::size_t>(batch.labels[i])] = 1.0f;
  HookedForward<float> pass(model, batch.images, {}, true);
  const double loss = pass.backward(targets);
  CHECK(std::isfinite(loss));
  CHECK(loss > 0.0);
  opt.step(0.0);
  CHECK(flat_parameters(model) == before);
}

TEST_CASE("separable data is learned and training is deterministic") {
  const auto ds = brightness_dataset(64, 3);
  auto run = [&] {
    Model<float> model(small_arch(2), RegularizerSpec{}, 4);
    Trainer<float> trainer(model, ds, small_pre(), BatchPlan{}, Occluder<float>::none(),
                           small_options(50, 0.05));
    std::vector<TrainLogRow> rows;
    while (!trainer.finished()) rows.push_back(trainer.train_epoch());
    const auto acc = evaluate_topk(model, ds, small_pre(), {1});
    return std::make_pair(flat_parameters(model), acc[0]);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.second == 100.0);
  CHECK(a.first == b.first);
}

TEST_CASE("top-k ranking") {
  const std::vector<float> logits{0.1f, 0.7f, 0.2f, 0.7f};
  CHECK(topk_hits<float>(logits, 1, {1, 2}) == std::vector<bool>{true, true});
  CHECK(topk_hits<float>(logits, 3, {1, 2}) == std::vector<bool>{false, true});
  CHECK(topk_hits<float>(logits, 2, {1, 2, 3}) == std::vector<bool>{false, false, true});
  CHECK_THROWS_AS(topk_hits<float>(logits, 4, {1}), DomainError);
}

TEST_CASE("a constant head scores chance on balanced data") {
  LabeledDataset ds(10, 3, 8, 8);
  Rng rng(5);
  RawImage img(3, 8, 8);
  for (std::size_t i = 0; i < 200; ++i) {
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    ds.add(img, static_cast<int>(i % 10));
  }
  Model<float> model(small_arch(10), RegularizerSpec{}, 6);
  for (auto& p : model.parameters()) {
    if (p.name.rfind("fc.", 0) == 0) std::fill(p.tensor->storage().begin(), p.tensor->storage().end(), 0.0f);
  }
  model.train();
  {
    Graph<float> g(false);
    Rng rng(7);
    std::vector<std::size_t> idx(64);
    for (std::size_t i = 0; i < 64; ++i) idx[i] = i;
    model.forward(g, g.input(assemble_plain<float>(ds, idx, small_pre(), rng).images));
  }
  const auto acc = evaluate_topk(model, ds, small_pre(), {1, 5});
  CHECK(acc[0] == doctest::Approx(10.0));
  CHECK(acc[1] == doctest::Approx(50.0));
}

TEST_CASE("checkpoint round trip") {
  Checkpoint ck;
  const std::vector<float> f{1.5f, -2.0f, 3.25f, 0.0f, 7.0f, 8.0f};
  ck.put_f32("w", {2, 3}, f);
  ck.put_u64("state", std::vector<std::uint64_t>{1, 2, 0xffffffffffffffffULL});
  ck.put_text("config", "a = 1\n");
  const auto bytes = ck.encode();
  const auto back = Checkpoint::decode(bytes);
  CHECK(back.get_real<float>("w", {2, 3}) == f);
  CHECK(back.get_u64("state")[2] == 0xffffffffffffffffULL);
  CHECK(back.get_text("config") == "a = 1\n");
  CHECK(back.encode() == bytes);
  CHECK_THROWS_AS(back.get_real<float>("w", {3, 2}), FormatError);
  CHECK_THROWS(back.entry("missing"));

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(Checkpoint::decode(bad), FormatError);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(Checkpoint::decode(cut), FormatError);
}

TEST_CASE("model restore rejects a different architecture") {
  Model<float> a(small_arch(2), RegularizerSpec{}, 1);
  Model<float> b(small_arch(3), RegularizerSpec{}, 2);
  Checkpoint ck;
  store_model(ck, a);
  const auto before = flat_parameters(b);
  CHECK_THROWS(restore_model(ck, b));
  CHECK(flat_parameters(b) == before);
}

TEST_CASE("resume continues bit for bit") {
  const auto ds = brightness_dataset(48, 7);
  const auto opts = small_options(4, 0.05);
  Model<float> full(small_arch(2), RegularizerSpec{}, 8);
  Trainer<float> t_full(full, ds, small_pre(), BatchPlan{}, Occluder<float>::none(), opts);
  while (!t_full.finished()) t_full.train_epoch();

  Model<float> first(small_arch(2), RegularizerSpec{}, 8);
  Trainer<float> t_first(first, ds, small_pre(), BatchPlan{}, Occluder<float>::none(), opts);
  t_first.train_epoch();
  t_first.train_epoch();
  const auto path = (std::filesystem::temp_directory_path() / "occaug_resume_test.ocsm").string();
  make_training_checkpoint(t_first, "cfg").save(path);

  Model<float> second(small_arch(2), RegularizerSpec{}, 99);
  Trainer<float> t_second(second, ds, small_pre(), BatchPlan{}, Occluder<float>::none(), opts);
  restore_training(Checkpoint::load(path), t_second);
  CHECK(t_second.next_epoch() == 2);
  while (!t_second.finished()) t_second.train_epoch();
  CHECK(flat_parameters(second) == flat_parameters(full));
  std::filesystem::remove(path);
}

TEST_CASE("train log csv round trip") {
  TrainLog log;
  TrainLogRow r;
  r.epoch = 0;
  r.lr = 0.1;
  r.batch_size = 256;
  r.train_loss = 1.25;
  r.train_top1 = 40.5;
  r.val_top1 = 50.0;
  r.val_top5 = 90.0;
  r.seed = 3;
  r.wall_seconds = 2.5;
  log.append(r);
  r.epoch = 1;
  r.val_occluded_top1 = 12.0;
  r.val_occluded_top5 = 55.0;
  log.append(r);
  const auto csv = log.to_csv();
  CHECK(csv.rfind(TrainLog::header(), 0) == 0);
  const auto back = TrainLog::from_csv(csv);
  REQUIRE(back.rows().size() == 2);
  CHECK(back.rows()[1].val_occluded_top1 == 12.0);
  CHECK_FALSE(back.rows()[0].val_occluded_top1.has_value());
  CHECK(back.rows()[0].batch_size == 256);
  CHECK(back.rows()[0].wall_seconds == 0.0);
  CHECK(back.to_csv() == csv);
  CHECK_THROWS(TrainLog::from_csv("epoch,lr\n1,2\n"));
}
