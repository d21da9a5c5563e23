#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "occaug/core/error.hpp"
#include "occaug/saliency/saliency.hpp"

using namespace occaug;

namespace {

Tensor<double> map_of(std::size_t h, std::size_t w, double fill = 0.0) {
  return Tensor<double>({h, w}, fill);
}

}  // namespace

TEST_CASE("saliency is the product of channel norms") {
  Tensor<double> x({2, 1, 1}, std::vector<double>{1.0, 0.0});
  Tensor<double> g({2, 1, 1}, std::vector<double>{3.0, 4.0});
  const auto s = saliency_from_hooks(x, g);
  CHECK(s.shape() == Shape{1, 1});
  CHECK(s[0] == doctest::Approx(5.0));

  Tensor<float> a({1, 3, 2, 2}, 1.0f);
  Tensor<float> z({1, 3, 2, 2}, 0.0f);
  const auto zero = saliency_from_hooks(a, z);
  for (double v : zero.storage()) CHECK(v == 0.0);
  CHECK_THROWS_AS(saliency_from_hooks(a, Tensor<float>({1, 3, 2, 3})), ShapeError);
}

TEST_CASE("max patch on small maps") {
  auto m = map_of(4, 4);
  m[2 * 4 + 3] = 1.0;
  CHECK(extract_max_patch(m, 2, 1) == PatchPosition{1, 2});
  CHECK(extract_max_patch(map_of(5, 7, 0.3), 3, 1) == PatchPosition{0, 0});
  CHECK(extract_max_patch(map_of(6, 6, 1.0), 6, 1) == PatchPosition{0, 0});

  // stride restricts candidates to the grid
  auto g = map_of(8, 8);
  g[3 * 8 + 3] = 1.0;
  CHECK(extract_max_patch(g, 2, 2) == PatchPosition{2, 2});

  CHECK_THROWS_AS(extract_max_patch(map_of(4, 4), 5, 1), DomainError);
}

TEST_CASE("max patch picks the heavier of two windows") {
  auto m = map_of(10, 12);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      m[(1 + i) * 12 + (1 + j)] = 1.0;
      m[(6 + i) * 12 + (8 + j)] = 1.5;
    }
  CHECK(extract_max_patch(m, 3, 1) == PatchPosition{6, 8});
}

TEST_CASE("saliency patch placement clamps to the map") {
  Rng rng(1);
  auto m = map_of(32, 32);
  m[0] = 1.0;
  for (int t = 0; t < 200; ++t) {
    const auto p = place_saliency_patch(m, {"", 8, 4, 1}, rng);
    CHECK(p.peak == PatchPosition{0, 0});
    CHECK(p.placed.top == std::max(0, p.dy));
    CHECK(p.placed.left == std::max(0, p.dx));
  }
}

TEST_CASE("saliency patch jitter is uniform per axis") {
  Rng rng(2);
  auto m = map_of(80, 80);
  m[40 * 80 + 40] = 1.0;
  const int tau = 16;
  const std::size_t n = 6600;
  std::vector<double> dy(2 * tau + 1, 0.0), dx(2 * tau + 1, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const auto p = place_saliency_patch(m, {"", 8, tau, 1}, rng);
    REQUIRE(p.peak == PatchPosition{33, 33});
    CHECK(p.placed.top == p.peak.top + p.dy);
    dy[p.dy + tau] += 1.0;
    dx[p.dx + tau] += 1.0;
  }
  const double e = static_cast<double>(n) / (2 * tau + 1);
  boost::math::chi_squared dist(2 * tau);
  for (const auto* counts : {&dy, &dx}) {
    double stat = 0.0;
    for (double c : *counts) stat += (c - e) * (c - e) / e;
    CHECK(boost::math::cdf(boost::math::complement(dist, stat)) > 0.01);
  }
}

TEST_CASE("saliency occlusion mask covers exactly side x side") {
  ArchSpec arch = ArchSpec::make(ArchName::mini_skip, {3, 32, 32}, 4, 4);
  Model<double> model(arch, RegularizerSpec{}, 3);
  Rng rng(4);
  Tensor<double> img({3, 32, 32});
  for (auto& v : img.storage()) v = rng.normal();
  model.train();
  const auto before = model.parameters()[0].tensor->storage();
  for (int side : {4, 8, 13}) {
    const Mask mask = saliency_occlusion_mask(model, img, 1, {"", side, 3, 1}, rng);
    CHECK(mask.occluded_count() == static_cast<std::size_t>(side * side));
  }
  CHECK(model.parameters()[0].tensor->storage() == before);
  CHECK_FALSE(model.batch_norms()[0].state->initialized);
}

TEST_CASE("saliency map at a named layer") {
  ArchSpec arch = ArchSpec::make(ArchName::mini_skip, {3, 32, 32}, 4, 4);
  Model<double> model(arch, RegularizerSpec{}, 5);
  Tensor<double> img({3, 32, 32}, 0.25);
  const auto s = saliency_map(model, img, 2, default_saliency_layer(ArchName::mini_skip));
  CHECK(s.layer == "stage2.relu2");
  CHECK(s.values.shape() == Shape{8, 8});
  for (double v : s.values.storage()) CHECK(v >= 0.0);
  CHECK_THROWS_AS(saliency_map(model, img, 2, "fc"), DomainError);
  CHECK(default_saliency_layer(ArchName::mini_plain) == "relu2");
}

TEST_CASE("heatmap scaling") {
  auto m = map_of(2, 2);
  m[1] = 2.0;
  m[3] = 1.0;
  const RawImage img = heatmap_image(m);
  CHECK(img.at(0, 0, 1) == 255);
  CHECK(img.at(0, 1, 1) == 128);
  CHECK(img.at(0, 0, 0) == 0);
  const RawImage black = heatmap_image(map_of(3, 3));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(black.at(0, i, j) == 0);
}
