#include <doctest.h>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <random>

#include "occaug/core/error.hpp"
#include "occaug/occlusion/mask.hpp"
#include "oracles.hpp"

using namespace occaug;

namespace {

/// Pearson chi-square p-value; adjacent bins are merged until each expected
/// count reaches 5.
double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected) {
  std::vector<double> o, e;
  double ob = 0.0, eb = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    ob += observed[i];
    eb += expected[i];
    if (eb >= 5.0) {
      o.push_back(ob);
      e.push_back(eb);
      ob = eb = 0.0;
    }
  }
  if (eb > 0.0) {
    o.back() += ob;
    e.back() += eb;
  }
  double stat = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) stat += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
  boost::math::chi_squared dist(static_cast<double>(o.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

TEST_CASE("hide and seek degenerate probabilities") {
  Rng rng(1);
  CHECK(hide_and_seek_mask({4, 0.3, 1.0}, 32, 32, rng).all_kept());
  CHECK(hide_and_seek_mask({4, 0.0, 0.0}, 32, 32, rng).occluded_count() == 32 * 32);
  CHECK_THROWS_AS(hide_and_seek_mask({5, 0.5, 0.0}, 32, 32, rng), DomainError);
  CHECK_THROWS_AS(hide_and_seek_mask({4, 1.5, 0.0}, 32, 32, rng), DomainError);
}

TEST_CASE("hide and seek cells are all kept or all hidden") {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Mask m = hide_and_seek_mask({4, 0.5, 0.0}, 24, 32, rng);
    for (std::size_t gi = 0; gi < 4; ++gi)
      for (std::size_t gj = 0; gj < 4; ++gj) {
        const auto first = m.at(gi * 6, gj * 8);
        for (std::size_t i = 0; i < 6; ++i)
          for (std::size_t j = 0; j < 8; ++j) CHECK(m.at(gi * 6 + i, gj * 8 + j) == first);
      }
  }
}

TEST_CASE("hide and seek hidden-cell count is Binomial(16, 0.5)") {
  Rng rng(3);
  const std::size_t n = 100000;
  std::vector<double> counts(17, 0.0);
  double fraction = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const Mask m = hide_and_seek_mask({4, 0.5, 0.0}, 16, 16, rng);
    counts[m.occluded_count() / 16] += 1.0;
    fraction += m.occluded_fraction();
  }
  CHECK(fraction / n == doctest::Approx(0.5).epsilon(0.01));
  boost::math::binomial_distribution<double> bin(16, 0.5);
  std::vector<double> expected(17);
  for (int k = 0; k <= 16; ++k) expected[k] = n * boost::math::pdf(bin, k);
  CHECK(chi_square_p(counts, expected) > 0.01);
}

TEST_CASE("occlusion fraction estimates") {
  Rng rng(4);
  CHECK(expected_occlusion_fraction(HideSeekParams{4, 0.9, 0.0}, 32, 32, 100000, rng).mean ==
        doctest::Approx(0.1).epsilon(0.05));
  CHECK(expected_occlusion_fraction(HideSeekParams{4, 0.5, 0.5}, 32, 32, 100000, rng).mean ==
        doctest::Approx(0.25).epsilon(0.02));
  const auto c = expected_occlusion_fraction(CutoutParams{1, 56}, 224, 224, 20000, rng);
  CHECK(std::abs(c.mean - cutout_expected_fraction(56, 224, 224)) <= 0.002);
  CHECK(cutout_expected_fraction(56, 224, 224) == doctest::Approx(0.0549).epsilon(0.001));
  CHECK_THROWS_AS(cutout_expected_fraction(300, 224, 224), DomainError);
}

TEST_CASE("cutout degenerate cases") {
  Rng rng(5);
  CHECK(cutout_mask({0, 8}, 16, 16, rng).all_kept());
  for (int t = 0; t < 100; ++t) CHECK(cutout_mask({1, 64}, 20, 32, rng).occluded_count() == 20 * 32);
}

TEST_CASE("cutout squares are side x side, clipped at the border") {
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    const Mask m = cutout_mask({1, 7}, 20, 20, rng);
    std::size_t rows = 0, cols = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < 20; ++j) any = any || m.at(i, j) == 0;
      rows += any;
    }
    for (std::size_t j = 0; j < 20; ++j) {
      bool any = false;
      for (std::size_t i = 0; i < 20; ++i) any = any || m.at(i, j) == 0;
      cols += any;
    }
    CHECK(rows >= 4);
    CHECK(rows <= 7);
    CHECK(m.occluded_count() == rows * cols);
  }
}

TEST_CASE("cutout fraction agrees with an independent pixel-count simulation") {
  Rng rng(7);
  const auto lib = expected_occlusion_fraction(CutoutParams{6, 84}, 224, 224, 2000, rng);
  std::mt19937_64 gen(8);
  std::uniform_int_distribution<long> centre(0, 223);
  const int trials = 600;
  double sum = 0.0, sum_sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<std::pair<long, long>> centres;
    for (int k = 0; k < 6; ++k) centres.emplace_back(centre(gen), centre(gen));
    const double f = oracle::cutout_pixels(224, 224, 84, centres) / (224.0 * 224.0);
    sum += f;
    sum_sq += f * f;
  }
  const double mean = sum / trials;
  const double se = std::sqrt((sum_sq / trials - mean * mean) / trials);
  CHECK(std::abs(lib.mean - mean) <= 4.0 * std::sqrt(se * se + lib.std_error * lib.std_error));
}

TEST_CASE("apply mask") {
  Rng rng(9);
  Tensor<float> img({3, 8, 8});
  for (auto& v : img.storage()) v = static_cast<float>(rng.normal());
  CHECK(bit_equal(apply_mask(img, Mask(8, 8, 1)), img));
  CHECK(apply_mask(img, Mask(8, 8, 0)).storage() == std::vector<float>(img.size(), 0.0f));
  const Mask m = hide_and_seek_mask({2, 0.5, 0.0}, 8, 8, rng);
  const auto once = apply_mask(img, m);
  CHECK(bit_equal(apply_mask(once, m), once));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        CHECK(once[(c * 8 + i) * 8 + j] == (m.at(i, j) ? img[(c * 8 + i) * 8 + j] : 0.0f));
  const auto batched = apply_mask(img.reshaped({1, 3, 8, 8}), m);
  CHECK(batched.storage() == once.storage());
  CHECK_THROWS_AS(apply_mask(img, Mask(4, 8, 1)), ShapeError);
}
