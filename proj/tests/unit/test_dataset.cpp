#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "occaug/core/error.hpp"
#include "occaug/core/rng.hpp"
#include "occaug/data/dataset.hpp"
#include "occaug/data/two_cue.hpp"
#include "oracles.hpp"

using namespace occaug;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void put_u16(std::vector<std::uint8_t>& b, unsigned v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}

void put_u32(std::vector<std::uint8_t>& b, unsigned v) {
  put_u16(b, v & 0xffff);
  put_u16(b, v >> 16);
}

std::vector<std::uint8_t> header(unsigned k, unsigned count, unsigned c, unsigned h, unsigned w) {
  std::vector<std::uint8_t> b{'L', 'D', 'S', '1'};
  put_u32(b, k);
  put_u32(b, count);
  b.push_back(static_cast<std::uint8_t>(c));
  put_u16(b, h);
  put_u16(b, w);
  return b;
}

TwoCueSpec small_spec() {
  TwoCueSpec s;
  s.train_count = 200;
  s.val_count = 100;
  return s;
}

}  // namespace

TEST_CASE("hand-assembled file decodes") {
  auto bytes = header(10, 2, 3, 32, 32);
  put_u16(bytes, 7);
  for (int i = 0; i < 3 * 32 * 32; ++i) bytes.push_back(static_cast<std::uint8_t>(i % 251));
  put_u16(bytes, 0);
  for (int i = 0; i < 3 * 32 * 32; ++i) bytes.push_back(200);
  const auto ds = decode_dataset(bytes, Split::val);
  REQUIRE(ds.size() == 2);
  CHECK(ds.num_classes() == 10);
  CHECK(ds.split() == Split::val);
  CHECK(ds.label(0) == 7);
  CHECK(ds.label(1) == 0);
  CHECK(ds.pixels(0)[300] == 300 % 251);
  CHECK(ds.image(1).at(2, 31, 31) == 200);
  CHECK(encode_dataset(ds) == bytes);
}

TEST_CASE("malformed files are rejected") {
  auto bytes = header(4, 2, 1, 2, 2);
  for (int r = 0; r < 2; ++r) {
    put_u16(bytes, 1);
    for (int i = 0; i < 4; ++i) bytes.push_back(9);
  }
  CHECK_NOTHROW(decode_dataset(bytes));

  auto magic = bytes;
  magic[3] = '2';
  CHECK_THROWS_WITH_AS(decode_dataset(magic), "LDS1: bad magic", FormatError);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_WITH_AS(decode_dataset(truncated),
                       "LDS1: expected 29 bytes for 2 records, found 28", FormatError);

  auto label = bytes;
  label[17 + 6] = 4;
  CHECK_THROWS_WITH_AS(decode_dataset(label), "LDS1: record 1 has label 4 >= K = 4",
                       FormatError);

  const auto path = temp_path("occaug_truncated.lds");
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(truncated.data()),
                                              static_cast<std::streamsize>(truncated.size()));
  try {
    load_binary_dataset(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(path) == 0);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_binary_dataset(temp_path("occaug_missing.lds")), IoError);
}

TEST_CASE("save and load round trip") {
  LabeledDataset ds(3, 2, 4, 5);
  Rng rng(1);
  RawImage img(2, 4, 5);
  for (int i = 0; i < 6; ++i) {
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    ds.add(img, i % 3);
  }
  const auto path = temp_path("occaug_roundtrip.lds");
  save_binary_dataset(ds, path);
  CHECK(load_binary_dataset(path) == ds);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(ds.add(img, 3), DomainError);
  CHECK_THROWS_AS(ds.add(RawImage(2, 4, 4), 0), ShapeError);
}

TEST_CASE("channel mean and std") {
  LabeledDataset ds(2, 2, 1, 2);
  ds.add(std::vector<std::uint8_t>{0, 255, 51, 51}, 0);
  ds.add(std::vector<std::uint8_t>{0, 255, 51, 51}, 1);
  const auto s = dataset_mean_std(ds);
  CHECK(s.mean[0] == doctest::Approx(0.5));
  CHECK(s.std[0] == doctest::Approx(0.5));
  CHECK(s.mean[1] == doctest::Approx(0.2));
  CHECK(s.std[1] == 1e-6);
  CHECK_THROWS_AS(dataset_mean_std(LabeledDataset(2, 1, 1, 1)), DomainError);

  LabeledDataset big(4, 3, 6, 6);
  Rng rng(2);
  std::vector<std::vector<std::uint8_t>> raw;
  for (int i = 0; i < 50; ++i) {
    std::vector<std::uint8_t> px(3 * 36);
    for (auto& p : px) p = static_cast<std::uint8_t>(std::clamp(128.0 + 60.0 * rng.normal(), 0.0, 255.0));
    big.add(px, i % 4);
    raw.push_back(px);
  }
  std::vector<double> mean, sd;
  oracle::channel_stats(raw, 3, mean, sd);
  const auto got = dataset_mean_std(big);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(got.mean[c] == doctest::Approx(mean[c]).epsilon(1e-12));
    CHECK(got.std[c] == doctest::Approx(sd[c]).epsilon(1e-12));
  }
}

TEST_CASE("two-cue generation is deterministic and balanced") {
  const auto a = generate_two_cue(small_spec(), 3);
  const auto b = generate_two_cue(small_spec(), 3);
  const auto c = generate_two_cue(small_spec(), 4);
  CHECK(a.train == b.train);
  CHECK(a.val_occluded == b.val_occluded);
  CHECK_FALSE(a.train == c.train);
  for (auto n : a.train.class_histogram()) CHECK(n == 20);
  for (auto n : a.val.class_histogram()) CHECK(n == 10);
  CHECK(a.val_occluded.split() == Split::val_occluded);
}

TEST_CASE("two-cue val_occluded replaces exactly the dominant boxes") {
  const auto d = generate_two_cue(small_spec(), 5);
  const std::size_t side = 32;
  for (std::size_t n = 0; n < d.val.size(); ++n) {
    const auto v = d.val.pixels(n);
    const auto o = d.val_occluded.pixels(n);
    const CueBox& box = d.val_dominant[n];
    const CueBox& sec = d.val_secondary[n];
    CHECK_FALSE((box.top < sec.top + sec.size && sec.top < box.top + box.size &&
                 box.left < sec.left + sec.size && sec.left < box.left + box.size));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j) {
          const std::size_t k = (c * side + i) * side + j;
          if (box.contains(static_cast<int>(i), static_cast<int>(j))) {
            CHECK(o[k] == d.fill_colour[c]);
          } else {
            CHECK(o[k] == v[k]);
          }
        }
  }
}

TEST_CASE("without noise a template matcher on the dominant cue is perfect") {
  auto spec = small_spec();
  spec.noise = 0.0;
  const auto d = generate_two_cue(spec, 6);
  const int side = spec.image_side, g = spec.dominant_size;
  std::vector<std::vector<double>> glyphs;
  for (int k = 0; k < spec.num_classes; ++k) glyphs.push_back(render_dominant_glyph(d, spec, k));
  std::size_t correct = 0;
  for (std::size_t n = 0; n < d.val.size(); ++n) {
    const auto px = d.val.pixels(n);
    int best = -1;
    double best_ssd = std::numeric_limits<double>::infinity();
    for (int k = 0; k < spec.num_classes; ++k)
      for (int top = 0; top + g <= side; ++top)
        for (int left = 0; left + g <= side; ++left) {
          double ssd = 0.0;
          for (int i = 0; i < g && ssd < best_ssd; ++i)
            for (int j = 0; j < g; ++j) {
              const double diff = px[static_cast<std::size_t>((top + i) * side + left + j)] / 255.0 -
                                  glyphs[k][static_cast<std::size_t>(i * g + j)];
              ssd += diff * diff;
            }
          if (ssd < best_ssd) {
            best_ssd = ssd;
            best = k;
          }
        }
    correct += best == d.val.label(n);
  }
  CHECK(correct == d.val.size());
}

TEST_CASE("two-cue spec validation") {
  auto s = small_spec();
  CHECK(s.violations().empty());
  s.dominant_size = 24;
  s.secondary_size = 9;
  s.secondary_cells = 3;
  CHECK_THROWS_AS(generate_two_cue(s, 1), ConfigError);
  s = small_spec();
  s.secondary_contrast = 0.9;
  s.train_count = 15;
  try {
    generate_two_cue(s, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.violations().size() == 2);
  }
}
