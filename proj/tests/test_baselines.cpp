#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tilenet/baselines.hpp"

using namespace tilenet;

namespace {

PageInstance random_page(std::size_t n, GridShape grid, SeededRng& rng) {
  Tensor user = Tensor::matrix(1, 2), items = Tensor::matrix(n, 2);
  for (double& v : user.values()) v = rng.normal();
  for (double& v : items.values()) v = rng.normal();
  return PageInstance::make(user, items, grid);
}

// Label 1 exactly when the first feature is positive.
ClickDataset separable(std::size_t rows, std::uint64_t seed) {
  SeededRng rng(seed);
  ClickDataset d;
  d.features = Tensor::matrix(rows, 3);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < 3; ++c) d.features.at(r, c) = rng.normal();
    d.labels.push_back(d.features.at(r, 0) > 0.0 ? 1.0 : 0.0);
  }
  return d;
}

}  // namespace

TEST_CASE("fixed layout placement") {
  const GridShape grid{2, 2};
  const std::vector<double> scores{0.1, 0.9, 0.5, 0.7, 0.3};
  const Configuration c = fixed_layout_place(scores, FixedLayout::make(ScanKind::Col, grid), 4);
  CHECK(c.item_order == std::vector<std::size_t>{1, 3, 2, 4});
  CHECK(c.tile_order == std::vector<std::size_t>{0, 2, 1, 3});
  CHECK(c.item_on_tile(4) == std::vector<std::size_t>{1, 2, 3, 4});

  const Configuration tied = fixed_layout_place(std::vector<double>{1, 1, 1, 1}, FixedLayout::make(ScanKind::Row, grid), 4);
  CHECK(tied.item_order == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK_THROWS_AS(fixed_layout_place(std::vector<double>{1, 2, 3}, FixedLayout::make(ScanKind::Row, grid), 4),
                  std::invalid_argument);
  CHECK_THROWS_AS(fixed_layout_place(scores, FixedLayout::make(ScanKind::Row, {1, 3}), 4), std::invalid_argument);
  const std::vector<std::size_t> real{3, 1, 0, 2};
  CHECK(FixedLayout::make(ScanKind::Real, grid, real).order == real);
}

TEST_CASE("click log") {
  SeededRng rng(5);
  std::vector<PageInstance> pages;
  for (int p = 0; p < 10; ++p) pages.push_back(random_page(6, {2, 2}, rng));
  EnvironmentSpec spec;
  spec.preference = make_ground_truth_preference(1, 2, 2);
  const ClickDataset a = collect_click_log(pages, spec, 3);
  const ClickDataset b = collect_click_log(pages, spec, 3);
  CHECK(a.size() == 40);
  CHECK(a.features.shape() == Shape{40, 4});
  CHECK(a.labels == b.labels);
  CHECK(a.features == b.features);
  for (double l : a.labels) CHECK((l == 0.0 || l == 1.0));
  CHECK_THROWS_AS(collect_click_log({}, spec, 3), std::invalid_argument);
}

TEST_CASE("utility ranker") {
  RankerConfig cfg;
  cfg.hidden = {16, 8};
  cfg.seed = 2;

  SUBCASE("learns a separable rule") {
    UtilityRanker ranker(3, cfg);
    train_utility_ranker(ranker, separable(2000, 1));
    const ClickDataset held = separable(500, 2);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < held.size(); ++r) {
      const double s = ranker.score(held.features.row_span(r));
      CHECK(s > 0.0);
      CHECK(s < 1.0);
      if ((s > 0.5) == (held.labels[r] == 1.0)) ++correct;
    }
    CHECK(static_cast<double>(correct) / held.size() > 0.95);
  }
  SUBCASE("zero epochs leave the weights unchanged") {
    cfg.epochs = 0;
    UtilityRanker a(3, cfg), b(3, cfg);
    train_utility_ranker(a, separable(100, 1));
    CHECK(a.network().layers()[0].weight.value == b.network().layers()[0].weight.value);
  }
  SUBCASE("deterministic") {
    cfg.epochs = 3;
    UtilityRanker a(3, cfg), b(3, cfg);
    train_utility_ranker(a, separable(300, 1));
    train_utility_ranker(b, separable(300, 1));
    for (std::size_t l = 0; l < a.network().layers().size(); ++l) {
      CHECK(a.network().layers()[l].weight.value == b.network().layers()[l].weight.value);
      CHECK(a.network().layers()[l].bias.value == b.network().layers()[l].bias.value);
    }
  }
  SUBCASE("bad datasets") {
    UtilityRanker r(3, cfg);
    CHECK_THROWS_AS(train_utility_ranker(r, ClickDataset{}), std::invalid_argument);
    UtilityRanker wide(5, cfg);
    CHECK_THROWS_AS(train_utility_ranker(wide, separable(10, 1)), ShapeError);
  }
  SUBCASE("page scores match single scores") {
    UtilityRanker r(4, cfg);
    SeededRng rng(1);
    const PageInstance page = random_page(5, {2, 2}, rng);
    const auto s = r.scores(page);
    REQUIRE(s.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(s[i] == doctest::Approx(r.score(page.features.row_span(i))).epsilon(1e-14));
  }
}

TEST_CASE("pointer baseline") {
  SeededRng rng(8);
  const GridShape grid{2, 3};
  const FixedLayout layout = FixedLayout::make(ScanKind::Col, grid);
  PolicyConfig cfg = pointer_policy_config(4, layout, 6);
  cfg.attention_dim = 8;
  cfg.pointer_dim = 5;
  TilePolicy pointer(cfg, 1);
  const PageInstance page = random_page(8, grid, rng);

  for (int trial = 0; trial < 10; ++trial) {
    Tape tape;
    const RolloutResult r = pointer_baseline_rollout(tape, page, pointer, DecodeMode::Sample, rng);
    CHECK(r.configuration.tile_order == layout.order);
    // Tiles carry no probability mass choice, so the log-probability is the item head's alone.
    double items_only = 0.0;
    for (std::size_t t = 0; t < r.item_probs.size(); ++t)
      items_only += std::log(r.item_probs[t][r.configuration.item_order[t]]);
    CHECK(r.log_prob.item() == doctest::Approx(items_only).epsilon(1e-12));
  }

  SUBCASE("a single tile") {
    PolicyConfig one = pointer_policy_config(4, FixedLayout::make(ScanKind::Row, {1, 1}), 6);
    one.attention_dim = 8;
    one.pointer_dim = 5;
    TilePolicy p(one, 2);
    const PageInstance small = random_page(3, {1, 1}, rng);
    Tape tape;
    const RolloutResult r = pointer_baseline_rollout(tape, small, p, DecodeMode::Greedy, rng);
    CHECK(r.configuration.tile_order == std::vector<std::size_t>{0});
    CHECK(r.configuration.item_order.size() == 1);
  }
  SUBCASE("rejects a learned layout") {
    PolicyConfig learned = cfg;
    learned.fixed_layout.reset();
    TilePolicy tile(learned, 1);
    Tape tape;
    CHECK_THROWS_AS(pointer_baseline_rollout(tape, page, tile, DecodeMode::Greedy, rng), std::invalid_argument);
  }
}
