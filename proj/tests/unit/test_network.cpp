#include <doctest.h>

#include <cmath>

#include "occaug/core/error.hpp"
#include "occaug/nn/arch.hpp"
#include "occaug/nn/model.hpp"
#include "occaug/nn/regularizers.hpp"

using namespace occaug;

namespace {

Tensor<float> random_batch(std::size_t n, std::uint64_t seed, std::size_t side = 32) {
  Rng rng(seed);
  Tensor<float> t({n, 3, side, side});
  for (auto& v : t.storage()) v = static_cast<float>(rng.normal());
  return t;
}

}  // namespace

TEST_CASE("parameter counts follow the layer tables") {
  // MiniPlain w=16: conv 3->16, 16->32, 32->64 (3x3 + bias), fc 64*4*4 -> 10.
  const std::size_t plain = (3 * 16 * 9 + 16) + (16 * 32 * 9 + 32) + (32 * 64 * 9 + 64) +
                            (64 * 16 * 10 + 10);
  // MiniSkip w=16: stem conv + bn, three stages of two 16->16 convs with bn,
  // fc 16 -> 10 after global average pooling.
  const std::size_t skip = (3 * 16 * 9 + 16) + 2 * 16 + 3 * 2 * (16 * 16 * 9 + 16 + 2 * 16) +
                           (16 * 10 + 10);
  const auto a = ArchSpec::make(ArchName::mini_plain, {3, 32, 32}, 10, 16);
  const auto b = ArchSpec::make(ArchName::mini_skip, {3, 32, 32}, 10, 16);
  CHECK(a.parameter_count() == plain);
  CHECK(b.parameter_count() == skip);
  CHECK(Model<float>(a, {}, 1).parameter_count() == plain);
  CHECK(Model<float>(b, {}, 1).parameter_count() == skip);
}

TEST_CASE("layer names are stable") {
  const auto skip = ArchSpec::make(ArchName::mini_skip, {3, 32, 32}, 10, 8);
  for (const char* n : {"stem.conv", "stage1.relu2", "stage2.conv1", "stage3.join", "gap", "fc"}) {
    CHECK(skip.find(n) != nullptr);
  }
  const auto plain = ArchSpec::make(ArchName::mini_plain, {3, 32, 32}, 10, 8);
  for (const char* n : {"conv1", "relu2", "pool3", "flatten", "fc"}) CHECK(plain.find(n) != nullptr);
  CHECK(plain.find("stem.bn") == nullptr);
  CHECK(plain.hookable_layers().front() == "input");
  CHECK_THROWS_AS(parse_arch_name("resnet"), DomainError);
}

TEST_CASE("architecture rejects inputs too small to pool") {
  CHECK_THROWS_AS(ArchSpec::make(ArchName::mini_skip, {3, 4, 4}, 10, 8), ShapeError);
}

TEST_CASE("same seed gives bit-identical parameters") {
  const auto arch = ArchSpec::make(ArchName::mini_skip, {3, 32, 32}, 10, 8);
  Model<float> a(arch, {}, 5), b(arch, {}, 5), c(arch, {}, 6);
  bool same = true, differs = false;
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    same = same && bit_equal(*pa[i].tensor, *pb[i].tensor);
    differs = differs || !bit_equal(*pa[i].tensor, *pc[i].tensor);
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("forward checks the input shape") {
  Model<float> m(ArchSpec::make(ArchName::mini_plain, {3, 32, 32}, 10, 4), {}, 1);
  CHECK_THROWS_AS(m.predict(Tensor<float>({1, 3, 28, 32})), ShapeError);
  CHECK_THROWS_AS(m.predict(Tensor<float>({1, 1, 32, 32})), ShapeError);
}

TEST_CASE("MiniSkip on zero input gives finite logits in both modes") {
  Model<float> m(ArchSpec::make(ArchName::mini_skip, {3, 32, 32}, 10, 8), {}, 1);
  Model<float> fresh(ArchSpec::make(ArchName::mini_skip, {3, 32, 32}, 10, 8), {}, 1);
  fresh.eval();
  CHECK_THROWS_AS(fresh.predict(Tensor<float>({1, 3, 32, 32})), StateError);
  m.train();
  CHECK(m.predict(random_batch(4, 2)).all_finite());
  m.eval();
  const auto out = m.predict(Tensor<float>({2, 3, 32, 32}));
  CHECK(out.shape() == Shape{2, 10});
  CHECK(out.all_finite());
}

TEST_CASE("zeroed residual branches leave the identity path") {
  // With the second batch norm of every stage scaled to zero, each stage
  // reduces to relu(skip); stages then compose to the stem output because
  // the stem output is already non-negative.
  const auto arch = ArchSpec::make(ArchName::mini_skip, {3, 32, 32}, 10, 8);
  Model<double> m(arch, {}, 3);
  for (auto& p : m.parameters()) {
    if (p.name.find(".bn2.") != std::string::npos) {
      for (auto& v : p.tensor->storage()) v = 0.0;
    }
  }
  m.train();
  const Tensor<double> x = random_batch(2, 4).cast<double>();
  Graph<double> g(false);
  ForwardOptions fo;
  fo.hooks = {"stem.pool", "stage1.relu2", "stage2.pool", "stage2.relu2", "stage3.pool",
              "stage3.relu2"};
  auto out = m.forward(g, g.input(x), fo);
  CHECK(out.hooked.at("stage1.relu2").value().storage() ==
        out.hooked.at("stem.pool").value().storage());
  CHECK(out.hooked.at("stage2.relu2").value().storage() ==
        out.hooked.at("stage2.pool").value().storage());
  CHECK(out.hooked.at("stage3.relu2").value().storage() ==
        out.hooked.at("stage3.pool").value().storage());
}

TEST_CASE("hooks do not change logits and capture the input") {
  Model<float> m(ArchSpec::make(ArchName::mini_skip, {3, 32, 32}, 10, 8), {}, 1);
  m.train();
  const auto x = random_batch(2, 5);
  ForwardOptions fo;
  fo.update_batch_norm = false;
  Graph<float> a(false), b(false);
  const auto plain = m.forward(a, a.input(x), fo).logits.value();
  fo.hooks = {"input", "stage2.relu2"};
  const auto hooked = m.forward(b, b.input(x), fo);
  CHECK(bit_equal(plain, hooked.logits.value()));
  CHECK(bit_equal(hooked.hooked.at("input").value(), x));

  fo.hooks = {"nope"};
  Graph<float> c(false);
  CHECK_THROWS_AS(m.forward(c, c.input(x), fo), DomainError);
}

TEST_CASE("hooked gradient matches a hand chain rule") {
  // Through gap and fc, d loss / d a[c,i,j] = (1/HW) sum_k W[k,c] (p_k - t_k).
  const auto arch = ArchSpec::make(ArchName::mini_skip, {3, 16, 16}, 4, 4);
  Model<double> m(arch, {}, 7);
  m.train();
  const Tensor<double> x = random_batch(1, 6, 16).cast<double>();
  const std::vector<int> labels{2};
  HookedForward<double> pass(m, x, {{"stage3.relu2"}, false, true}, false);
  pass.backward(label_smooth<double>(labels, 4, 0.0));
  const Tensor<double> grad = pass.gradient("stage3.relu2");
  const Tensor<double> logits = pass.logits();
  double z = 0.0, mx = logits[0];
  for (std::size_t k = 1; k < 4; ++k) mx = std::max(mx, logits[k]);
  std::vector<double> p(4);
  for (std::size_t k = 0; k < 4; ++k) z += (p[k] = std::exp(logits[k] - mx));
  for (auto& v : p) v /= z;
  p[2] -= 1.0;
  const Tensor<double>* fc = nullptr;
  for (auto& q : m.parameters()) {
    if (q.name == "fc.weight") fc = q.tensor;
  }
  REQUIRE(fc != nullptr);
  const std::size_t hw = grad.dim(2) * grad.dim(3);
  for (std::size_t c = 0; c < 4; ++c) {
    double want = 0.0;
    for (std::size_t k = 0; k < 4; ++k) want += (*fc)[k * 4 + c] * p[k];
    want /= static_cast<double>(hw);
    for (std::size_t s = 0; s < hw; ++s) CHECK(grad[c * hw + s] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("regularizer placement is validated") {
  const auto arch = ArchSpec::make(ArchName::mini_skip, {3, 32, 32}, 10, 8);
  RegularizerSpec r;
  r.kind = RegularizerKind::drop_block;
  r.p_keep = 0.9;
  r.block_size = 5;
  r.placement = {"stage3.conv1"};
  CHECK_THROWS_AS(Model<float>(arch, r, 1), DomainError);
  r.placement = {"missing"};
  CHECK_THROWS_AS(Model<float>(arch, r, 1), DomainError);
  r.block_size = 3;
  r.placement = RegularizerSpec::default_placement(ArchName::mini_skip, r.kind);
  CHECK_NOTHROW(Model<float>(arch, r, 1));
  r.kind = RegularizerKind::dropout;
  r.placement = {"fc"};
  CHECK_NOTHROW(Model<float>(arch, r, 1));
}
