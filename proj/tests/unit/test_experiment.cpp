#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "occaug/core/error.hpp"
#include "occaug/experiment/config.hpp"
#include "occaug/experiment/runner.hpp"
#include "occaug/train/checkpoint.hpp"

using namespace occaug;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("occaug_test_" + name);
  fs::remove_all(p);
  return p.string();
}

const char* kTiny =
    "seed = 5\n"
    "model.arch = mini_skip\n"
    "model.width = 4\n"
    "data.two_cue.train_count = 40\n"
    "data.two_cue.val_count = 20\n"
    "train.epochs = 2\n"
    "train.lr_period = 1\n"
    "train.batch_size = 20\n";

ExperimentConfig tiny(const std::string& out, const std::string& extra = "") {
  auto c = parse_config(std::string(kTiny) + extra);
  c.output_dir = out;
  return c;
}

std::string slurp(const std::string& path) { return read_text_file(path); }

/// Width and height from a binary PGM/PPM header.
std::pair<int, int> pnm_size(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w = 0, h = 0;
  in >> magic >> w >> h;
  return {w, h};
}

}  // namespace

TEST_CASE("config text round trip") {
  const auto c = parse_config(std::string(kTiny) +
                              "plan.strategy = joint\noccluder.kind = hide_seek\n"
                              "occluder.hide_seek.grid = 2\n# comment\n\n");
  CHECK(c.plan.copies == 2);
  CHECK(c.hide_seek.grid == 2);
  CHECK(c.width == 4);
  const auto text = serialize_config(c);
  CHECK(parse_config(text) == c);
  CHECK(serialize_config(parse_config(text)) == text);
  CHECK(config_keys().size() > 20);
  CHECK(config_value(c, "plan.strategy") == "joint");
}

TEST_CASE("config errors are collected") {
  try {
    parse_config("model.width = zero\nbogus.key = 1\ntrain.epochs = 3\ntrain.epochs = 4\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.violations().size() == 3);
  }
  try {
    parse_config("train.lr0 = -1\nplan.p_keep_image = 2\ndata.two_cue.train_count = 7\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.violations().size() >= 3);
  }
  CHECK_THROWS_AS(parse_entries("no equals sign here\n"), ConfigError);
  auto c = parse_config(kTiny);
  CHECK(validate_config(c).empty());
  c.batch_size = 0;
  CHECK_FALSE(validate_config(c).empty());
}

TEST_CASE("sweep grid, seeds and directories") {
  const auto s = parse_sweep(std::string(kTiny) +
                             "output_dir = /tmp/sw\n"
                             "sweep.axis.plan.strategy = plain, joint\n"
                             "sweep.axis.model.width = 4, 8, 16\n"
                             "sweep.repeats = 2\n");
  REQUIRE(s.axes.size() == 2);
  CHECK(s.repeats == 2);
  const auto runs = sweep_run_configs(s);
  REQUIRE(runs.size() == 12);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    CHECK(runs[i].seed == 5 + i);
    CHECK(runs[i].output_dir == "/tmp/sw/run_" + std::to_string(i));
  }
  CHECK(runs[0].width == runs[1].width);
  CHECK(runs[0].plan.strategy == Strategy::plain);
  CHECK(runs[11].plan.strategy == Strategy::joint);
  CHECK(runs[11].width == 16);
  CHECK_THROWS_AS(parse_sweep(std::string(kTiny) + "sweep.axis.nope = 1, 2\n"), ConfigError);
}

TEST_CASE("mean and sample standard deviation") {
  const auto [m, s] = mean_std({1.0, 2.0, 3.0});
  CHECK(m == doctest::Approx(2.0));
  CHECK(s == doctest::Approx(1.0));
  CHECK(mean_std({4.0}).second == 0.0);
  const auto r = mean_std({70.0, 72.0, 77.0});
  CHECK(r.first == doctest::Approx(73.0));
  CHECK(r.second == doctest::Approx(std::sqrt(13.0)));
}

TEST_CASE("identical configs give identical outputs") {
  const auto a = scratch("det_a"), b = scratch("det_b");
  const auto ra = run_experiment(tiny(a));
  const auto rb = run_experiment(tiny(b));
  CHECK(ra.ok);
  CHECK(ra.status == "ok");
  CHECK(slurp(a + "/trainlog.csv") == slurp(b + "/trainlog.csv"));
  CHECK(slurp(a + "/summary.csv") == slurp(b + "/summary.csv"));
  CHECK(slurp(a + "/summary.csv").rfind(summary_header(), 0) == 0);
  for (const char* f : {"config.txt", "timing.csv", "checkpoint.ocsm"}) CHECK(fs::exists(a + "/" + f));
  const auto log = TrainLog::from_csv(slurp(a + "/trainlog.csv"));
  REQUIRE(log.rows().size() == 2);
  CHECK(log.rows()[0].val_occluded_top1.has_value());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("joint runs log the doubled batch") {
  const auto dir = scratch("joint");
  const auto r = run_experiment(
      tiny(dir, "plan.strategy = joint\noccluder.kind = cutout\noccluder.cutout.side = 8\n"));
  REQUIRE(r.ok);
  for (const auto& row : r.log.rows()) CHECK(row.batch_size == 40);
  fs::remove_all(dir);
}

TEST_CASE("a one-cell sweep matches a single run") {
  const auto dir = scratch("sweep1");
  SweepSpec s;
  s.base = tiny(dir);
  s.repeats = 1;
  const auto res = run_sweep(s);
  REQUIRE(res.cells.size() == 1);
  const auto single = scratch("single");
  auto c = tiny(single);
  c.seed = 5;
  run_experiment(c);
  CHECK(slurp(dir + "/run_0/trainlog.csv") == slurp(single + "/trainlog.csv"));
  const auto table = slurp(dir + "/table.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);
  CHECK(fs::exists(dir + "/curves.csv"));
  fs::remove_all(dir);
  fs::remove_all(single);
}

TEST_CASE("sweep statistics over repeats") {
  const auto dir = scratch("sweep3");
  SweepSpec s;
  s.base = tiny(dir);
  s.base.schedule.total_epochs = 1;
  s.repeats = 3;
  const auto res = run_sweep(s);
  REQUIRE(res.cells[0].runs.size() == 3);
  CHECK(res.cells[0].seeds == std::vector<std::uint64_t>{5, 6, 7});
  std::vector<double> vals;
  for (const auto& r : res.cells[0].runs) vals.push_back(*r.log.rows().back().val_top1);
  const auto [m, sd] = mean_std(vals);
  std::istringstream table(slurp(dir + "/table.csv"));
  std::string header, row;
  std::getline(table, header);
  std::getline(table, row);
  auto field = [](const std::string& line, const std::string& head, const std::string& name) {
    std::vector<std::string> h, v;
    std::string tok;
    std::istringstream hs(head), vs(line);
    while (std::getline(hs, tok, ',')) h.push_back(tok);
    while (std::getline(vs, tok, ',')) v.push_back(tok);
    for (std::size_t i = 0; i < h.size(); ++i)
      if (h[i] == name) return std::stod(v.at(i));
    return -1.0;
  };
  CHECK(field(row, header, "val_top1_mean") == doctest::Approx(m).epsilon(1e-6));
  CHECK(field(row, header, "val_top1_std") == doctest::Approx(sd).epsilon(1e-6));
  fs::remove_all(dir);
}

TEST_CASE("heatmap export") {
  const auto dir = scratch("heat");
  REQUIRE(run_experiment(tiny(dir)).ok);
  const auto cfg = tiny(dir);
  const auto data = load_experiment_data(cfg);
  const auto files = export_heatmaps(dir + "/checkpoint.ocsm", *data.val_occluded,
                                     "stage2.relu2", 2, dir + "/maps");
  REQUIRE(files.size() == 6);
  for (const auto& f : files) CHECK(fs::exists(f));
  CHECK(pnm_size(files[0]) == std::make_pair(32, 32));
  CHECK(pnm_size(files[1]) == std::make_pair(32, 32));
  CHECK(pnm_size(files[2]) == std::make_pair(64, 32));

  // a head with zero weights has zero gradient everywhere: a black map
  auto ck = Checkpoint::load(dir + "/checkpoint.ocsm");
  Checkpoint zeroed;
  for (const auto& e : ck.entries()) {
    if (e.name.find("fc.weight") != std::string::npos) {
      std::size_t n = 1;
      for (auto d : e.shape) n *= d;
      zeroed.put_f32(e.name, e.shape, std::vector<float>(n, 0.0f));
    } else if (e.dtype == DType::f32) {
      zeroed.put_f32(e.name, e.shape, ck.get_real<float>(e.name, e.shape));
    } else if (e.dtype == DType::f64) {
      zeroed.put_f64(e.name, e.shape, ck.get_real<double>(e.name, e.shape));
    } else if (e.dtype == DType::u64) {
      zeroed.put_u64(e.name, ck.get_u64(e.name));
    } else {
      zeroed.put_text(e.name, ck.get_text(e.name));
    }
  }
  zeroed.save(dir + "/zeroed.ocsm");
  const auto zfiles =
      export_heatmaps(dir + "/zeroed.ocsm", data.val, "stage2.relu2", 1, dir + "/zero");
  std::ifstream in(zfiles[1], std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  std::vector<char> px(static_cast<std::size_t>(w * h));
  in.read(px.data(), static_cast<std::streamsize>(px.size()));
  for (char v : px) CHECK(v == 0);
  fs::remove_all(dir);
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"desk_plain.cfg", "desk_nonjoint.cfg", "desk_joint.cfg"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_config(std::string(OCCAUG_CONFIG_DIR) + "/" + name));
  }
  const auto s = load_sweep(std::string(OCCAUG_CONFIG_DIR) + "/desk_joint_patch.sweep");
  const auto runs = sweep_run_configs(s);
  REQUIRE(runs.size() == 9);
  CHECK(runs[8].plan.copies == 2);
  CHECK(runs[8].hide_seek.p_keep_patch == 0.75);
  for (const auto& r : runs) CHECK(validate_config(r).empty());
}
