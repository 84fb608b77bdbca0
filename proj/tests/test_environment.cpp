#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "tilenet/environment.hpp"

using namespace tilenet;

namespace {

PageInstance page_with_items(std::vector<std::vector<double>> rows, GridShape grid) {
  Tensor items = Tensor::matrix(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) items.at(r, c) = rows[r][c];
  return PageInstance::make(Tensor::row({0.0}), items, grid);
}

PageInstance random_page(std::size_t n, GridShape grid, SeededRng& rng) {
  Tensor user = Tensor::matrix(1, 2), items = Tensor::matrix(n, 2);
  for (double& v : user.values()) v = rng.normal();
  for (double& v : items.values()) v = rng.normal();
  return PageInstance::make(user, items, grid);
}

Configuration identity(std::size_t k) {
  std::vector<std::size_t> o(k);
  std::iota(o.begin(), o.end(), 0);
  return {o, o};
}

Configuration random_configuration(std::size_t n, std::size_t k, SeededRng& rng) {
  std::vector<std::size_t> items = random_permutation(n, rng);
  items.resize(k);
  return {items, random_permutation(k, rng)};
}

}  // namespace

TEST_CASE("ground-truth preference") {
  const PreferenceModel a = make_ground_truth_preference(3, 8, 8);
  const PreferenceModel b = make_ground_truth_preference(3, 8, 8);
  SeededRng rng(11);
  std::vector<double> ps;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> u(8), v(8);
    for (double& x : u) x = rng.normal();
    for (double& x : v) x = rng.normal();
    const double p = click_probability(u, v, a);
    CHECK(p == click_probability(u, v, b));
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    ps.push_back(p);
  }
  const double mean = std::accumulate(ps.begin(), ps.end(), 0.0) / ps.size();
  double var = 0.0;
  for (double p : ps) var += (p - mean) * (p - mean);
  CHECK(var / (ps.size() - 1) > 1e-4);

  SUBCASE("zero weights give one half") {
    PreferenceModel z = make_ground_truth_preference(0, 2, 2);
    for (Linear& l : z.network.layers()) {
      l.weight.value.fill(0.0);
      l.bias.value.fill(0.0);
    }
    CHECK(click_probability(std::vector<double>{1, 2}, std::vector<double>{3, 4}, z) == 0.5);
  }
  SUBCASE("large weights saturate without overflow") {
    PreferenceModel big = make_ground_truth_preference(5, 2, 2);
    for (Linear& l : big.network.layers())
      for (double& w : l.weight.value.values()) w *= 100.0;
    const double p = click_probability(std::vector<double>{1, -1}, std::vector<double>{2, 0.5}, big);
    CHECK(std::isfinite(p));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(click_probability(std::vector<double>(7), std::vector<double>(8), a), ShapeError);
  }
  SUBCASE("constant model") {
    PreferenceModel c = make_ground_truth_preference(0, 2, 2);
    c.constant = 0.25;
    CHECK(click_probability(std::vector<double>{1, 2}, std::vector<double>{3, 4}, c) == 0.25);
  }
}

TEST_CASE("scan orders") {
  CHECK(scan_order(ScanKind::Row, {2, 3}) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  CHECK(scan_order(ScanKind::Col, {2, 3}) == std::vector<std::size_t>{0, 3, 1, 4, 2, 5});
  CHECK(scan_order(ScanKind::Z, {3, 3}) == std::vector<std::size_t>{4, 1, 3, 5, 7, 0, 2, 6, 8});
  const std::vector<std::size_t> real{2, 0, 3, 1};
  CHECK(scan_order(ScanKind::Real, {2, 2}, real) == real);
  CHECK_THROWS_AS(scan_order(ScanKind::Real, {2, 2}, std::vector<std::size_t>{0, 1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(scan_order(ScanKind::Real, {2, 2}, std::vector<std::size_t>{0, 1, 1, 3}),
                  std::invalid_argument);
  CHECK_THROWS_AS(scan_order(ScanKind::Real, {2, 2}, std::vector<std::size_t>{0, 1, 2, 4}),
                  std::invalid_argument);

  SUBCASE("every order is a bijection on tiles") {
    SeededRng rng(4);
    for (std::size_t r = 1; r <= 5; ++r)
      for (std::size_t c = 1; c <= 6; ++c) {
        const GridShape g{r, c};
        const auto perm = random_permutation(g.tiles(), rng);
        for (ScanKind kind : {ScanKind::Row, ScanKind::Col, ScanKind::Z, ScanKind::Real}) {
          std::vector<std::size_t> o = scan_order(kind, g, perm);
          std::sort(o.begin(), o.end());
          std::vector<std::size_t> expect(g.tiles());
          std::iota(expect.begin(), expect.end(), 0);
          CHECK(o == expect);
        }
      }
  }
}

TEST_CASE("observation probability") {
  CHECK(observation_prob(1, 0.05) == 1.0);
  CHECK(observation_prob(4, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(observation_prob(9, 0.0) == 1.0);
  CHECK_THROWS_AS(observation_prob(0, 0.05), std::invalid_argument);
  for (std::size_t i = 1; i < 50; ++i) CHECK(observation_prob(i + 1, 0.05) < observation_prob(i, 0.05));
}

TEST_CASE("similarity threshold") {
  Tensor same = Tensor::matrix(3, 2, 1.5);
  CHECK(similarity_threshold(same, 0.005) == 0.0);
  Tensor pair = Tensor::matrix(2, 2);
  pair.at(1, 0) = 3;
  pair.at(1, 1) = 4;
  CHECK(similarity_threshold(pair, 0.3) == 5.0);
  Tensor line = Tensor::matrix(4, 1);
  line.at(1, 0) = 1;
  line.at(2, 0) = 2;
  line.at(3, 0) = 4;
  CHECK(similarity_threshold(line, 0.5) == 2.0);
  CHECK_THROWS_AS(similarity_threshold(Tensor::matrix(1, 2), 0.5), std::invalid_argument);
  CHECK_THROWS_AS(similarity_threshold(line, 0.0), std::invalid_argument);
}

TEST_CASE("click simulation") {
  EnvironmentSpec spec;
  spec.eta = 0.0;
  SeededRng rng(1);

  SUBCASE("certain clicks everywhere") {
    const PageInstance page = page_with_items({{0}, {1}, {2}, {3}, {4}, {5}}, {2, 3});
    const std::vector<double> ones(6, 1.0);
    const ClickRecord rec = simulate_clicks(page, identity(6), spec, rng, ones);
    CHECK(rec.reward == 6.0);
    CHECK(rec.labels == std::vector<double>(6, 1.0));
    CHECK(rec.view_items == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  }
  SUBCASE("view order follows the scan") {
    const PageInstance page = page_with_items({{0}, {1}, {2}, {3}}, {2, 2});
    spec.scan = ScanKind::Col;
    const Configuration c{{3, 2, 1, 0}, {0, 1, 2, 3}};
    const ClickRecord rec = simulate_clicks(page, c, spec, rng, std::vector<double>(4, 0.5));
    CHECK(rec.view_items == std::vector<std::size_t>{3, 1, 2, 0});
  }
  SUBCASE("diverse dynamics suppress a similar item") {
    const PageInstance page = page_with_items({{1, 1}, {1, 1}}, {1, 2});
    spec.dynamics = Dynamics::Diverse;
    CHECK(simulate_clicks(page, identity(2), spec, rng, std::vector<double>{1, 1}).reward == 1.0);
  }
  SUBCASE("similar dynamics force a similar item") {
    const PageInstance page = page_with_items({{1, 1}, {1, 1}}, {1, 2});
    spec.dynamics = Dynamics::Similar;
    CHECK(simulate_clicks(page, identity(2), spec, rng, std::vector<double>{1, 0}).reward == 2.0);
  }
  SUBCASE("expected mode") {
    const PageInstance page = page_with_items({{0}, {1}}, {1, 2});
    spec.eta = 1.0;
    spec.click_mode = ClickMode::Expected;
    const ClickRecord rec = simulate_clicks(page, identity(2), spec, rng, std::vector<double>{0.4, 0.8});
    CHECK(rec.labels == std::vector<double>{0.4, 0.4});
    CHECK(rec.reward == doctest::Approx(0.8));
    CHECK(expected_reward_oracle(page, identity(2), spec, std::vector<double>{0.4, 0.8}) == rec.reward);
    spec.reward = RewardKind::Ndcg;
    CHECK(expected_reward_oracle(page, identity(2), spec, std::vector<double>{0.4, 0.8}) ==
          simulate_clicks(page, identity(2), spec, rng, std::vector<double>{0.4, 0.8}).reward);
    spec.dynamics = Dynamics::Diverse;
    CHECK_THROWS_AS(simulate_clicks(page, identity(2), spec, rng, std::vector<double>{0.4, 0.8}),
                    std::invalid_argument);
  }
  SUBCASE("invalid inputs") {
    const PageInstance page = page_with_items({{0}, {1}}, {1, 2});
    CHECK_THROWS_AS(simulate_clicks(page, Configuration{{0, 0}, {0, 1}}, spec, rng, std::vector<double>{1, 1}),
                    std::invalid_argument);
    CHECK_THROWS_AS(simulate_clicks(page, identity(2), spec, rng, std::vector<double>{1}), std::invalid_argument);
    CHECK_THROWS_AS(simulate_clicks(page, identity(2), spec, rng, std::vector<double>{1, std::nan("")}),
                    NumericError);
    CHECK_THROWS_AS(expected_reward_oracle(page, identity(2), spec, std::vector<double>{1.5, 0}), NumericError);
  }
}

TEST_CASE("oracle") {
  SeededRng rng(2);
  EnvironmentSpec spec;
  spec.preference = make_ground_truth_preference(1, 2, 2);

  SUBCASE("closed form without dynamics") {
    for (int trial = 0; trial < 20; ++trial) {
      const PageInstance page = random_page(8, {2, 3}, rng);
      const Configuration c = random_configuration(8, 6, rng);
      spec.scan = trial % 2 ? ScanKind::Col : ScanKind::Z;
      const auto probs = page_click_probabilities(page, spec.preference);
      const auto tiles = c.item_on_tile(6);
      const auto order = scan_order(spec, page.grid);
      double closed = 0.0;
      for (std::size_t i = 0; i < 6; ++i) closed += probs[tiles[order[i]]] * observation_prob(i + 1, spec.eta);
      CHECK(std::abs(expected_reward_oracle(page, c, spec) - closed) < 1e-12);
    }
  }
  SUBCASE("deterministic clicks match the simulation") {
    const PageInstance page = page_with_items({{0}, {0.1}, {5}, {9}}, {2, 2});
    const std::vector<double> probs{1, 0, 1, 1};
    spec.eta = 0.0;
    for (Dynamics d : {Dynamics::None, Dynamics::Diverse, Dynamics::Similar}) {
      spec.dynamics = d;
      spec.similarity_quantile = 0.2;
      CHECK(expected_reward_oracle(page, identity(4), spec, probs) ==
            simulate_clicks(page, identity(4), spec, rng, probs).reward);
    }
  }
  SUBCASE("diverse duplicates") {
    const PageInstance page = page_with_items({{1}, {1}}, {2, 1});
    spec.eta = 0.0;
    spec.dynamics = Dynamics::Diverse;
    CHECK(expected_reward_oracle(page, identity(2), spec, std::vector<double>{1, 1}) == 1.0);
  }
  SUBCASE("enumeration limit") {
    const PageInstance page = random_page(13, {1, 13}, rng);
    CHECK_THROWS_AS(expected_reward_oracle(page, identity(13), spec), std::invalid_argument);
  }
  SUBCASE("Monte Carlo agrees for every dynamics") {
    for (Dynamics d : {Dynamics::None, Dynamics::Diverse, Dynamics::Similar}) {
      spec.dynamics = d;
      spec.similarity_quantile = 0.3;
      for (RewardKind r : {RewardKind::Clicks, RewardKind::Ndcg}) {
        spec.reward = r;
        const PageInstance page = random_page(5, {2, 2}, rng);
        const Configuration c = random_configuration(5, 4, rng);
        const auto probs = page_click_probabilities(page, spec.preference);
        const double exact = expected_reward_oracle(page, c, spec, probs);
        const int episodes = 20000;
        double sum = 0.0, sq = 0.0;
        for (int e = 0; e < episodes; ++e) {
          const double v = simulate_clicks(page, c, spec, rng, probs).reward;
          sum += v;
          sq += v * v;
        }
        const double mean = sum / episodes;
        const double se = std::sqrt((sq / episodes - mean * mean) / episodes);
        CHECK(std::abs(mean - exact) < 4 * se + 1e-12);
      }
    }
  }
}
