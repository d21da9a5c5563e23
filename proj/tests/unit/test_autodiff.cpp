#include <doctest.h>

#include <cmath>
#include <random>

#include "occaug/core/error.hpp"
#include "occaug/core/gradcheck.hpp"
#include "occaug/core/graph.hpp"
#include "occaug/core/resample.hpp"
#include "occaug/core/rng.hpp"
#include "occaug/nn/regularizers.hpp"
#include "oracles.hpp"

using namespace occaug;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

Tensor<double> tensor(Shape s, std::uint64_t seed) {
  const std::size_t n = shape_numel(s);
  return Tensor<double>(std::move(s), random_values(n, seed));
}

}  // namespace

TEST_CASE("conv2d small cases") {
  Graph<double> g(false);
  auto ones = g.input(Tensor<double>({1, 1, 3, 3}, 1.0));
  auto y = conv2d(ones, ones, g.input(Tensor<double>({1}, 0.0)), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.value()[0] == 9.0);

  auto x = g.input(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  auto id = conv2d(x, g.input(Tensor<double>({1, 1, 1, 1}, 1.0)),
                   g.input(Tensor<double>({1}, 0.0)), 1, 0);
  CHECK(id.value().storage() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("conv2d matches the direct loop reference") {
  struct Case {
    std::size_t n, c, h, w, o, k;
    int stride, pad;
  };
  const Case cases[] = {{1, 2, 5, 5, 3, 3, 2, 1}, {2, 3, 7, 6, 4, 3, 1, 1},
                        {1, 1, 8, 8, 2, 5, 3, 2}, {3, 4, 4, 4, 2, 1, 1, 0}};
  std::uint64_t seed = 1;
  for (const auto& c : cases) {
    const Tensor<double> x = tensor({c.n, c.c, c.h, c.w}, seed++);
    const Tensor<double> w = tensor({c.o, c.c, c.k, c.k}, seed++);
    const Tensor<double> b = tensor({c.o}, seed++);
    Graph<double> g(false);
    auto y = conv2d(g.input(x), g.input(w), g.input(b), c.stride, c.pad);
    oracle::Nchw out{};
    const auto want = oracle::conv2d(x.storage(), {c.n, c.c, c.h, c.w}, w.storage(), c.o,
                                     c.k, b.storage(), c.stride, c.pad, out);
    REQUIRE(y.shape() == Shape{out.n, out.c, out.h, out.w});
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(y.value()[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d rejects mismatched channels") {
  Graph<double> g(false);
  CHECK_THROWS_AS(conv2d(g.input(Tensor<double>({1, 2, 4, 4})),
                         g.input(Tensor<double>({1, 3, 3, 3})),
                         g.input(Tensor<double>({1})), 1, 1),
                  ShapeError);
}

TEST_CASE("max_pool2d forward and tie rule") {
  Graph<double> g;
  auto x = g.input(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}), true);
  CHECK(max_pool2d(x, 2, 2).value()[0] == 4.0);

  Graph<double> h;
  auto c = h.input(Tensor<double>({1, 1, 2, 2}, 7.0), true);
  auto y = max_pool2d(c, 2, 2);
  CHECK(y.value()[0] == 7.0);
  h.backward(sum(y));
  CHECK(h.grad(c).storage() == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("max_pool2d matches the window scan and routes gradients to the argmax") {
  Rng rng(3);
  Tensor<double> x({2, 2, 6, 6});
  for (auto& v : x.storage()) v = static_cast<double>(rng.uniform_int(0, 4));
  for (auto [k, s] : {std::pair{2, 2}, std::pair{3, 1}, std::pair{3, 2}}) {
    Graph<double> g;
    auto in = g.input(x, true);
    auto y = max_pool2d(in, k, s);
    g.backward(sum(y));
    oracle::Nchw out{};
    std::vector<std::size_t> arg;
    const auto want = oracle::max_pool(x.storage(), {2, 2, 6, 6}, k, s, out, &arg);
    CHECK(y.value().storage() == want);
    std::vector<double> grad(x.size(), 0.0);
    for (std::size_t a : arg) grad[a] += 1.0;
    CHECK(g.grad(in).storage() == grad);
  }
}

TEST_CASE("linear") {
  Graph<double> g(false);
  auto y = linear(g.input(Tensor<double>({1, 2}, {1, 0})),
                  g.input(Tensor<double>({2, 2}, {2, 3, 4, 5})),
                  g.input(Tensor<double>({2}, 0.0)));
  CHECK(y.value().storage() == std::vector<double>{2, 4});
  auto bias_only = linear(g.input(Tensor<double>({1, 2}, 0.0)),
                          g.input(Tensor<double>({2, 2}, {2, 3, 4, 5})),
                          g.input(Tensor<double>({2}, {7, -1})));
  CHECK(bias_only.value().storage() == std::vector<double>{7, -1});

  const Tensor<double> x = tensor({4, 8}, 10), w = tensor({3, 8}, 11), b = tensor({3}, 12);
  auto r = linear(g.input(x), g.input(w), g.input(b));
  const auto want = oracle::linear(x.storage(), 4, 8, w.storage(), 3, b.storage());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(r.value()[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("relu and batch norm values") {
  Graph<double> g(false);
  CHECK(relu(g.input(Tensor<double>({3}, {-1, 0, 2}))).value().storage() ==
        std::vector<double>{0, 0, 2});

  BatchNormState<double> state(1);
  auto y = batch_norm2d(g.input(Tensor<double>({2, 1, 1, 1}, {1, 3})),
                        g.input(Tensor<double>({1}, 1.0)), g.input(Tensor<double>({1}, 0.0)),
                        state, {BatchNormMode::train, 0.1, 0.0, true});
  CHECK(y.value()[0] == doctest::Approx(-1.0));
  CHECK(y.value()[1] == doctest::Approx(1.0));
  // Running statistics fold in the unbiased variance: 0.9 * 1 + 0.1 * 2.
  CHECK(state.running_mean[0] == doctest::Approx(0.2));
  CHECK(state.running_var[0] == doctest::Approx(1.1));
  CHECK(state.initialized);
}

TEST_CASE("batch norm in eval mode before any statistics is rejected") {
  Graph<double> g(false);
  BatchNormState<double> state(2);
  BatchNormOptions o;
  o.mode = BatchNormMode::eval;
  CHECK_THROWS_AS(batch_norm2d(g.input(Tensor<double>({1, 2, 2, 2})),
                               g.input(Tensor<double>({2}, 1.0)),
                               g.input(Tensor<double>({2}, 0.0)), state, o),
                  StateError);
}

TEST_CASE("batch norm gradient against finite differences") {
  const Tensor<double> x0 = tensor({2, 3, 4, 4}, 20);
  const Tensor<double> gamma = tensor({3}, 21), beta = tensor({3}, 22);
  const Tensor<double> w = tensor({2, 3, 4, 4}, 23);
  BatchNormState<double> state(3);
  BatchNormOptions o;
  o.update_running = false;
  Graph<double> g;
  auto x = g.input(x0, true);
  g.backward(sum(mul(batch_norm2d(x, g.input(gamma), g.input(beta), state, o), g.input(w))));
  const Tensor<double> analytic = g.grad(x);
  auto f = [&](std::span<const double> p) {
    Graph<double> h(false);
    auto y = batch_norm2d(h.input(Tensor<double>(x0.shape(), {p.begin(), p.end()})),
                          h.input(gamma), h.input(beta), state, o);
    double s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) s += y.value()[i] * w[i];
    return s;
  };
  const auto numeric = finite_difference_gradient(f, x0.storage(), 1e-5);
  CHECK(relative_error(analytic.storage(), numeric) <= 1e-6);
}

TEST_CASE("softmax cross entropy values") {
  Graph<double> g(false);
  auto l = softmax_cross_entropy(g.input(Tensor<double>({1, 2}, 0.0)),
                                 Tensor<double>({1, 2}, {1, 0}));
  CHECK(l.value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  auto c = softmax_cross_entropy(g.input(Tensor<double>({1, 2}, {10, -10})),
                                 Tensor<double>({1, 2}, {1, 0}));
  CHECK(c.value()[0] == doctest::Approx(2.0611536e-9).epsilon(1e-6));

  const Tensor<double> logits = tensor({5, 7}, 30);
  Rng rng(31);
  std::vector<double> t(35, 0.0);
  for (std::size_t b = 0; b < 5; ++b) {
    double s = 0;
    for (std::size_t k = 0; k < 7; ++k) s += (t[b * 7 + k] = rng.uniform01());
    for (std::size_t k = 0; k < 7; ++k) t[b * 7 + k] /= s;
  }
  const double want = oracle::cross_entropy(logits.storage(), t, 5, 7);
  CHECK(softmax_cross_entropy_value(logits, Tensor<double>({5, 7}, t)) ==
        doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("softmax cross entropy rejects targets that are not distributions") {
  Graph<double> g(false);
  CHECK_THROWS_AS(softmax_cross_entropy(g.input(Tensor<double>({1, 2})),
                                        Tensor<double>({1, 2}, {0.5, 0.6})),
                  DomainError);
}

TEST_CASE("bilinear upsample") {
  const auto c = bilinear_upsample(Tensor<double>({1, 1}, 5.0), 3, 4);
  CHECK(c.storage() == std::vector<double>(12, 5.0));
  const auto r = bilinear_upsample(Tensor<double>({2, 2}, {0, 1, 0, 1}), 2, 4);
  CHECK(r.storage() == std::vector<double>{0, 0.25, 0.75, 1, 0, 0.25, 0.75, 1});
  const Tensor<double> m = tensor({3, 5}, 40);
  CHECK(bilinear_upsample(m, 3, 5).storage() == m.storage());
}

TEST_CASE("backward basics") {
  Graph<double> g;
  const Tensor<double> x = tensor({4}, 50);
  auto w = g.input(Tensor<double>({4}, 1.0), true);
  g.backward(sum(mul(w, g.input(x))));
  CHECK(g.grad(w).storage() == x.storage());

  // A dead relu unit passes no gradient.
  Graph<double> h;
  auto v = h.input(Tensor<double>({2}, {-1.0, 2.0}), true);
  h.backward(sum(relu(v)));
  CHECK(h.grad(v).storage() == std::vector<double>{0, 1});
}

TEST_CASE("parameter gradients accumulate until zeroed") {
  Tensor<double> p({2}, {1.0, 2.0});
  p.set_requires_grad(true);
  for (int i = 0; i < 2; ++i) {
    Graph<double> g;
    g.backward(sum(mul(g.parameter(p), g.input(Tensor<double>({2}, {3.0, 4.0})))));
  }
  CHECK(std::vector<double>(p.grad().begin(), p.grad().end()) == std::vector<double>{6, 8});
  p.zero_grad();
  CHECK(p.grad()[0] == 0.0);

  Graph<double> frozen(false);
  frozen.backward(sum(mul(frozen.parameter(p), frozen.input(Tensor<double>({2}, 1.0)))));
  CHECK(p.grad()[0] == 0.0);
}

TEST_CASE("reading a gradient before backward is a state error") {
  Graph<double> g;
  auto x = g.input(Tensor<double>({2}, 1.0), true);
  sum(x);
  CHECK_THROWS_AS(g.grad(x), StateError);
}

TEST_CASE("composite network gradient against finite differences") {
  Tensor<double> w1 = tensor({3, 2, 3, 3}, 60), b1 = tensor({3}, 61);
  Tensor<double> w2 = tensor({4, 3 * 5 * 5}, 62), b2 = tensor({4}, 63);
  const Tensor<double> x = tensor({2, 2, 5, 5}, 64);
  const std::vector<int> labels{1, 3};
  const Tensor<double> t = label_smooth<double>(labels, 4, 0.1);
  std::vector<Tensor<double>*> params{&w1, &b1, &w2, &b2};
  auto loss = [&](Graph<double>& g) {
    auto h = relu(conv2d(g.input(x), g.parameter(w1), g.parameter(b1), 1, 1));
    return softmax_cross_entropy(linear(flatten(h), g.parameter(w2), g.parameter(b2)), t);
  };
  for (auto* p : params) p->set_requires_grad(true);
  {
    Graph<double> g;
    g.backward(loss(g));
  }
  for (auto* p : params) {
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    const std::vector<double> p0 = p->storage();
    auto f = [&](std::span<const double> v) {
      std::copy(v.begin(), v.end(), p->storage().begin());
      Graph<double> g(false);
      return loss(g).value()[0];
    };
    const auto numeric = finite_difference_gradient(f, p0, 1e-5);
    p->storage() = p0;
    CHECK(relative_error(analytic, numeric) <= 1e-5);
  }
}

TEST_CASE("finite difference helper") {
  auto sq = [](std::span<const double> v) { return v[0] * v[0]; };
  const std::vector<double> x{3.0};
  CHECK(finite_difference_gradient(sq, x, 1e-4)[0] == doctest::Approx(6.0).epsilon(1e-7));
  auto constant = [](std::span<const double>) { return 4.0; };
  CHECK(finite_difference_gradient(constant, std::vector<double>{1, 2}, 1e-4) ==
        std::vector<double>{0, 0});
}

TEST_CASE("float and double graphs agree") {
  const Tensor<double> x = tensor({1, 2, 6, 6}, 70), w = tensor({3, 2, 3, 3}, 71), b = tensor({3}, 72);
  Graph<double> gd(false);
  Graph<float> gf(false);
  const auto yd = max_pool2d(relu(conv2d(gd.input(x), gd.input(w), gd.input(b), 1, 1)), 2, 2).value();
  const auto yf = max_pool2d(relu(conv2d(gf.input(x.cast<float>()), gf.input(w.cast<float>()),
                                         gf.input(b.cast<float>()), 1, 1)), 2, 2).value();
  for (std::size_t i = 0; i < yd.size(); ++i) CHECK(yf[i] == doctest::Approx(yd[i]).epsilon(1e-5));
}
