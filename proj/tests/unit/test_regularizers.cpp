#include <doctest.h>

#include <cmath>

#include "occaug/core/error.hpp"
#include "occaug/nn/regularizers.hpp"

using namespace occaug;

namespace {

Tensor<double> ramp(Shape s) {
  Tensor<double> t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 1.0 + static_cast<double>(i % 7);
  return t;
}

double zero_fraction(const Tensor<double>& t) {
  std::size_t z = 0;
  for (double v : t.storage()) z += v == 0.0;
  return static_cast<double>(z) / static_cast<double>(t.size());
}

}  // namespace

TEST_CASE("p_keep = 1 and eval mode are identities") {
  Rng rng(1);
  const Tensor<double> x = ramp({2, 3, 6, 6});
  Graph<double> g(false);
  auto in = g.input(x);
  CHECK(dropout(in, 1.0, rng, true).value().storage() == x.storage());
  CHECK(spatial_dropout(in, 1.0, rng, true).value().storage() == x.storage());
  CHECK(drop_block(in, 1.0, 3, rng, true).value().storage() == x.storage());
  for (double p : {0.1, 0.5, 0.9}) {
    CHECK(dropout(in, p, rng, false).value().storage() == x.storage());
    CHECK(spatial_dropout(in, p, rng, false).value().storage() == x.storage());
    CHECK(drop_block(in, p, 3, rng, false).value().storage() == x.storage());
  }
}

TEST_CASE("probabilities outside (0, 1] are rejected") {
  Rng rng(1);
  CHECK_THROWS_AS(dropout_mask<double>({4}, 0.0, rng), DomainError);
  CHECK_THROWS_AS(dropout_mask<double>({4}, 1.5, rng), DomainError);
  CHECK_THROWS_AS(drop_block_mask<double>({1, 1, 4, 4}, 0.5, 5, rng), DomainError);
}

TEST_CASE("dropout expectation is preserved") {
  Rng rng(2);
  for (double p : {0.3, 0.7}) {
    const Tensor<double> m = dropout_mask<double>({1000000}, p, rng);
    double s = 0.0;
    for (double v : m.storage()) {
      CHECK((v == 0.0 || v == doctest::Approx(1.0 / p)));
      s += v;
    }
    CHECK(std::abs(s / 1000000.0 - 1.0) <= 0.01);
    CHECK(zero_fraction(m) == doctest::Approx(1.0 - p).epsilon(0.01));
  }
}

TEST_CASE("spatial dropout drops whole slices") {
  Rng rng(3);
  const Tensor<double> x = ramp({200, 500, 2, 2});
  Graph<double> g(false);
  const Tensor<double> y = spatial_dropout(g.input(x), 0.6, rng, true).value();
  std::size_t dropped = 0;
  const std::size_t slices = 200 * 500;
  for (std::size_t s = 0; s < slices; ++s) {
    bool zero = true, scaled = true;
    for (std::size_t i = 0; i < 4; ++i) {
      const double v = y[s * 4 + i], want = x[s * 4 + i] / 0.6;
      zero = zero && v == 0.0;
      scaled = scaled && std::abs(v - want) <= 1e-12 * want;
    }
    CHECK((zero || scaled));
    dropped += zero;
  }
  CHECK(static_cast<double>(dropped) / slices == doctest::Approx(0.4).epsilon(0.01));
}

TEST_CASE("drop block seed rate") {
  // ((1 - p) / b^2) * HW / ((H - b + 1)(W - b + 1)).
  CHECK(drop_block_gamma(0.9, 3, 8, 8) == doctest::Approx(0.1 / 9.0 * 64.0 / 36.0));
  CHECK(drop_block_gamma(0.5, 1, 5, 7) == doctest::Approx(0.5));
}

TEST_CASE("drop block with block size 1 zeroes about 1 - p_keep") {
  Rng rng(4);
  const Tensor<double> m = drop_block_mask<double>({100, 10, 10, 10}, 0.8, 1, rng);
  CHECK(zero_fraction(m) == doctest::Approx(0.2).epsilon(0.01));
}

TEST_CASE("drop block zeros are unions of whole blocks") {
  Rng rng(5);
  const int b = 3;
  const std::size_t h = 9, w = 11;
  const Tensor<double> m = drop_block_mask<double>({20, 4, h, w}, 0.7, b, rng);
  for (std::size_t s = 0; s < 80; ++s) {
    const double* p = m.ptr() + s * h * w;
    // Every zero must lie inside some fully zero b x b window.
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        if (p[i * w + j] != 0.0) continue;
        bool covered = false;
        for (long ti = static_cast<long>(i) - b + 1; ti <= static_cast<long>(i) && !covered; ++ti) {
          for (long tj = static_cast<long>(j) - b + 1; tj <= static_cast<long>(j) && !covered; ++tj) {
            if (ti < 0 || tj < 0 || ti + b > static_cast<long>(h) || tj + b > static_cast<long>(w)) continue;
            bool all = true;
            for (int u = 0; u < b && all; ++u)
              for (int v = 0; v < b && all; ++v) all = p[(ti + u) * w + tj + v] == 0.0;
            covered = all;
          }
        }
        CHECK(covered);
      }
    }
    // Survivors share one scale that restores the slice mean.
    double sum = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) sum += p[i];
    if (sum != 0.0) CHECK(sum / static_cast<double>(h * w) == doctest::Approx(1.0));
  }
}

TEST_CASE("label smoothing") {
  const std::vector<int> one{3};
  const Tensor<double> hot = label_smooth<double>(one, 10, 0.0);
  for (std::size_t k = 0; k < 10; ++k) CHECK(hot[k] == (k == 3 ? 1.0 : 0.0));
  const Tensor<double> s = label_smooth<double>(one, 10, 0.1);
  for (std::size_t k = 0; k < 10; ++k) CHECK(s[k] == (k == 3 ? 0.91 : 0.01));

  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(2, 50));
    std::vector<int> labels(5);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(k) - 1));
    const Tensor<double> t = label_smooth<double>(labels, k, rng.uniform(0.0, 0.9));
    for (std::size_t r = 0; r < 5; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < k; ++c) sum += t[r * k + c];
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
  const std::vector<int> bad{10};
  CHECK_THROWS_AS(label_smooth<double>(bad, 10, 0.1), DomainError);
  CHECK_THROWS_AS(label_smooth<double>(one, 10, 1.0), DomainError);
}
