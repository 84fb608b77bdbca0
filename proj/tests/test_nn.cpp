#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tilenet/environment.hpp"
#include "tilenet/grad_check.hpp"
#include "tilenet/nn.hpp"

using namespace tilenet;

namespace {

Tensor random_tensor(Shape shape, SeededRng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal();
  return t;
}

Tensor eval(const std::function<Var(Tape&)>& f) {
  Tape t(false);
  return f(t).value();
}

Parameter readout_weights(Shape shape, SeededRng& rng) { return Parameter("readout", random_tensor(shape, rng)); }

}  // namespace

TEST_CASE("linear") {
  Tensor x = Tensor::row({1, 1});
  Tensor w({2, 2}, std::vector<double>{1, 0, 0, 2});
  Tensor b = Tensor::row({0, 1});
  const Tensor y = eval([&](Tape& t) { return linear(t.constant(x), t.constant(w), t.constant(b)); });
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 3.0);

  Tensor eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  const Tensor id = eval([&](Tape& t) {
    return linear(t.constant(Tensor::row({1, 2})), t.constant(eye), t.constant(Tensor::row({0, 0})));
  });
  CHECK(id == Tensor::row({1, 2}));

  CHECK_THROWS_AS(eval([&](Tape& t) { return linear(t.constant(Tensor::row({1, 2, 3})), t.constant(w), t.constant(b)); }),
                  ShapeError);

  SeededRng rng(1);
  Linear layer("lin", 4, 3, rng);
  Parameter read = readout_weights({3, 3}, rng);
  const Tensor x3 = random_tensor({3, 4}, rng);
  ParameterList ps;
  layer.collect(ps);
  ps.push_back(&read);
  const auto r = grad_check([&](Tape& t) { return sum(mul(layer.forward(t, t.constant(x3)), t.param(read))); }, ps);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("masked softmax") {
  const Tensor flat = softmax_masked(Tensor::row({2, 2, 2, 2}), {false, false, false, false});
  for (double p : flat.values()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

  const Tensor forced = softmax_masked(Tensor::row({5, -1, 0.3, 9}), {true, true, false, true});
  CHECK(forced == Tensor::row({0, 0, 1, 0}));

  const Tensor third = softmax_masked(Tensor::row({0, std::log(2.0)}), {false, false});
  CHECK(third[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(third[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));

  CHECK_THROWS_AS(softmax_masked(Tensor::row({1, 2}), {true, true}), std::invalid_argument);

  SeededRng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = random_tensor({1, 7}, rng);
    std::vector<bool> mask(7);
    for (std::size_t i = 0; i < 7; ++i) mask[i] = i != 3 && rng.bernoulli(0.4);
    const Tensor p = softmax_masked(logits, mask);
    double total = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
      if (mask[i]) CHECK(p[i] == 0.0);
      else CHECK(p[i] > 0.0);
      total += p[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
    Tensor shifted = logits;
    for (double& v : shifted.values()) v += 123.456;
    const Tensor q = softmax_masked(shifted, mask);
    for (std::size_t i = 0; i < 7; ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
  }
}

TEST_CASE("layer norm") {
  auto ln = [](Tensor x, Tensor g, Tensor b) {
    return eval([&](Tape& t) { return layer_norm(t.constant(x), t.constant(g), t.constant(b)); });
  };
  const Tensor zero = ln(Tensor::row({3, 3, 3}), Tensor::row({1, 1, 1}), Tensor::row({0, 0, 0}));
  for (double v : zero.values()) CHECK(std::abs(v) < 1e-12);

  const Tensor unit = ln(Tensor::row({-1, 1}), Tensor::row({1, 1}), Tensor::row({0, 0}));
  const double expect = 1.0 / std::sqrt(1.0 + kLayerNormEps);
  CHECK(unit[0] == doctest::Approx(-expect).epsilon(1e-14));
  CHECK(unit[1] == doctest::Approx(expect).epsilon(1e-14));

  const Tensor biased = ln(Tensor::row({7, 7}), Tensor::row({2, 2}), Tensor::row({0.5, -4}));
  CHECK(biased[0] == doctest::Approx(0.5));
  CHECK(biased[1] == doctest::Approx(-4));
}

TEST_CASE("self-attention") {
  SeededRng rng(4);
  AttentionConfig cfg{6, 8, 8, 1, 1};
  SelfAttention attn("attn", cfg, rng);

  SUBCASE("single row reduces to LayerNorm(V W_O + Q)") {
    const Tensor x = random_tensor({1, 6}, rng);
    std::vector<Tensor> weights;
    const Tensor out = eval([&](Tape& t) { return attn.forward(t, t.constant(x), &weights); });
    REQUIRE(weights.size() == 1);
    CHECK(weights[0] == Tensor::matrix(1, 1, 1.0));
    AttentionParams& p = attn.layers()[0];
    const Tensor q = matmul(x, p.w_query.value);
    const Tensor v = matmul(x, p.w_value.value);
    Tensor pre = matmul(v, p.w_out.value);
    pre.add_in_place(q);
    const Tensor expect = eval([&](Tape& t) {
      return layer_norm(t.constant(pre), t.constant(p.ln_gain.value), t.constant(p.ln_bias.value));
    });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }

  SUBCASE("permutation equivariance and duplicate rows") {
    Tensor x = random_tensor({5, 6}, rng);
    for (std::size_t c = 0; c < 6; ++c) x.at(4, c) = x.at(1, c);
    const std::vector<std::size_t> perm{3, 0, 4, 2, 1};
    Tensor px = Tensor::matrix(5, 6);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 6; ++c) px.at(r, c) = x.at(perm[r], c);
    const Tensor out = eval([&](Tape& t) { return attn.forward(t, t.constant(x)); });
    const Tensor pout = eval([&](Tape& t) { return attn.forward(t, t.constant(px)); });
    double worst = 0.0;
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < out.cols(); ++c) worst = std::max(worst, std::abs(pout.at(r, c) - out.at(perm[r], c)));
    CHECK(worst < 1e-12);
    for (std::size_t c = 0; c < out.cols(); ++c) CHECK(out.at(1, c) == out.at(4, c));
  }

  SUBCASE("gradients with several heads and layers") {
    SelfAttention deep("deep", AttentionConfig{6, 8, 8, 2, 2}, rng);
    const Tensor x = random_tensor({4, 6}, rng);
    Parameter read = readout_weights({4, 8}, rng);
    ParameterList ps;
    deep.collect(ps);
    ps.push_back(&read);
    const auto r = grad_check([&](Tape& t) { return sum(mul(deep.forward(t, t.constant(x)), t.param(read))); }, ps);
    CHECK(r.max_rel_error < 1e-5);
  }

  CHECK_THROWS_AS(eval([&](Tape& t) { return attn.forward(t, t.constant(Tensor::matrix(2, 5))); }), ShapeError);
}

TEST_CASE("lstm cell") {
  SeededRng rng(5);
  RecurrentCell cell("cell", CellKind::Lstm, 3, 4, rng);
  cell.weight().value.fill(0.0);
  cell.bias().value.fill(0.0);
  auto step = [&](const Tensor& h, const Tensor& c, const Tensor& x) {
    Tape t(false);
    auto [hn, cn] = cell.forward(t, t.constant(h), t.constant(c), t.constant(x));
    return std::pair<Tensor, Tensor>{hn.value(), cn.value()};
  };

  const auto [h0, c0] = step(Tensor::matrix(1, 4), Tensor::matrix(1, 4), Tensor::row({1, -2, 3}));
  for (double v : h0.values()) CHECK(v == 0.0);
  for (double v : c0.values()) CHECK(v == 0.0);

  const Tensor cprev = Tensor::row({1, -2, 0.5, 4});
  const auto [h1, c1] = step(Tensor::matrix(1, 4), cprev, Tensor::matrix(1, 3));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(c1[i] == doctest::Approx(0.5 * cprev[i]).epsilon(1e-15));
    CHECK(h1[i] == doctest::Approx(0.5 * std::tanh(0.5 * cprev[i])).epsilon(1e-15));
  }

  RecurrentCell live("live", CellKind::Lstm, 3, 4, rng);
  Tensor h = Tensor::matrix(1, 4), c = Tensor::matrix(1, 4);
  for (int i = 0; i < 20; ++i) {
    Tensor x = random_tensor({1, 3}, rng);
    for (double& v : x.values()) v *= 1000.0;
    Tape t(false);
    auto [hn, cn] = live.forward(t, t.constant(h), t.constant(c), t.constant(x));
    h = hn.value();
    c = cn.value();
    CHECK(h.all_finite());
    CHECK(c.all_finite());
    for (double v : h.values()) CHECK(std::abs(v) < 1.0);
  }

  for (CellKind kind : {CellKind::Lstm, CellKind::Rnn}) {
    RecurrentCell g("g", kind, 3, 4, rng);
    const Tensor x1 = random_tensor({1, 3}, rng), x2 = random_tensor({1, 3}, rng);
    Parameter read = readout_weights({1, 4}, rng);
    ParameterList ps;
    g.collect(ps);
    ps.push_back(&read);
    const auto r = grad_check(
        [&](Tape& t) {
          Var h0v = t.constant(Tensor::matrix(1, 4)), c0v = t.constant(Tensor::matrix(1, 4));
          auto [ha, ca] = g.forward(t, h0v, c0v, t.constant(x1));
          auto [hb, cb] = g.forward(t, ha, ca, t.constant(x2));
          return add(sum(mul(hb, t.param(read))), sum(cb));
        },
        ps);
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("mlp") {
  SeededRng rng(6);
  Mlp ident("id", 3, MlpSpec{{3}, {Activation::Identity}}, rng);
  ident.layers()[0].weight.value = Tensor({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  ident.layers()[0].bias.value.fill(0.0);
  CHECK(ident.evaluate(Tensor::row({0.5, -2, 7})) == Tensor::row({0.5, -2, 7}));
  CHECK_THROWS_AS(ident.evaluate(Tensor::row({1, 2})), ShapeError);
  CHECK_THROWS_AS(MlpSpec({{3, 2}, {Activation::Relu}}).validate(), std::invalid_argument);

  Mlp pref("pref", 16, preference_mlp_spec(), rng, 0.5);
  for (int i = 0; i < 50; ++i) {
    const double p = pref.evaluate(random_tensor({1, 16}, rng))[0];
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  const Tensor x = random_tensor({3, 16}, rng);
  ParameterList ps;
  pref.collect(ps);
  const auto r = grad_check([&](Tape& t) { return sum(pref.forward(t, t.constant(x))); }, ps);
  CHECK(r.max_rel_error < 1e-5);

  const Tensor taped = eval([&](Tape& t) { return pref.forward(t, t.constant(x)); });
  const Tensor direct = pref.evaluate(x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(taped[i] == doctest::Approx(direct[i]).epsilon(1e-14));
}
