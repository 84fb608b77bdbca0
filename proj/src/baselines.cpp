#include "tilenet/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tilenet {

FixedLayout FixedLayout::make(ScanKind kind, GridShape grid, std::span<const std::size_t> real_permutation) {
  return FixedLayout{kind, scan_order(kind, grid, real_permutation)};
}

Configuration fixed_layout_place(std::span<const double> scores, const FixedLayout& layout,
                                 std::size_t k) {
  if (scores.size() < k) {
    throw std::invalid_argument("fixed_layout_place: " + std::to_string(scores.size()) +
                                " candidates for " + std::to_string(k) + " tiles");
  }
  if (layout.order.size() != k) throw std::invalid_argument("fixed_layout_place: layout size mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  Configuration c;
  for (std::size_t t = 0; t < k; ++t) {
    c.item_order.push_back(idx[t]);
    c.tile_order.push_back(layout.order[t]);
  }
  c.validate(scores.size(), k);
  return c;
}

ClickDataset collect_click_log(std::span<const PageInstance> pages, const EnvironmentSpec& spec,
                               std::uint64_t seed) {
  if (pages.empty()) throw std::invalid_argument("collect_click_log: no pages");
  SeededRng root(seed, hash_string("click-log"));
  const std::size_t f = pages.front().feature_dim();
  std::vector<double> rows;
  ClickDataset out;
  for (std::size_t p = 0; p < pages.size(); ++p) {
    const PageInstance& page = pages[p];
    SeededRng rng = root.derive(p);
    const std::size_t k = page.num_tiles();
    std::vector<std::size_t> items = random_permutation(page.num_items(), rng);
    items.resize(k);
    Configuration c{items, random_permutation(k, rng)};
    const ClickRecord rec = simulate_clicks(page, c, spec, rng);
    for (std::size_t i = 0; i < k; ++i) {
      const auto r = page.features.row_span(rec.view_items[i]);
      rows.insert(rows.end(), r.begin(), r.end());
      out.labels.push_back(rec.labels[i]);
    }
  }
  out.features = Tensor({out.labels.size(), f}, std::move(rows));
  return out;
}

namespace {

MlpSpec ranker_spec(const RankerConfig& config) {
  MlpSpec spec;
  for (auto w : config.hidden) {
    spec.widths.push_back(w);
    spec.activations.push_back(Activation::Relu);
  }
  spec.widths.push_back(1);
  spec.activations.push_back(Activation::Sigmoid);
  return spec;
}

}  // namespace

UtilityRanker::UtilityRanker(std::size_t feature_dim, const RankerConfig& config) : config_(config) {
  SeededRng rng(config.seed, hash_string("ranker-init"));
  network_ = Mlp("ranker", feature_dim, ranker_spec(config), rng);
}

ParameterList UtilityRanker::parameters() {
  ParameterList out;
  network_.collect(out);
  return out;
}

std::vector<double> UtilityRanker::scores(const PageInstance& page) const {
  const Tensor s = network_.evaluate(page.features);
  return {s.values().begin(), s.values().end()};
}

double UtilityRanker::score(std::span<const double> features) const {
  return network_.evaluate(Tensor::row({features.begin(), features.end()}))[0];
}

void train_utility_ranker(UtilityRanker& ranker, const ClickDataset& data, AdamState* optimizer) {
  if (data.size() == 0) throw std::invalid_argument("train_utility_ranker: empty dataset");
  if (data.features.cols() != ranker.feature_dim()) {
    throw ShapeError("train_utility_ranker: dataset width does not match the ranker");
  }
  const RankerConfig& cfg = ranker.config();
  AdamState local;
  AdamState& state = optimizer ? *optimizer : local;
  state.config.learning_rate = cfg.learning_rate;
  ParameterList params = ranker.parameters();
  SeededRng root(cfg.seed, hash_string("ranker-train"));
  const std::size_t n = data.size(), f = data.features.cols();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    SeededRng rng = root.derive(epoch);
    const std::vector<std::size_t> order = random_permutation(n, rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, n - start);
      Tensor x = Tensor::matrix(b, f);
      Tensor y = Tensor::matrix(b, 1);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t r = order[start + i];
        for (std::size_t c = 0; c < f; ++c) x.at(i, c) = data.features.at(r, c);
        y[i] = data.labels[r];
      }
      zero_grads(params);
      Tape tape;
      Var loss = bce_with_logits(ranker.network().forward_logits(tape, tape.constant(std::move(x))), y);
      tape.backward(loss);
      adam_step(params, state);
    }
  }
}

PolicyConfig pointer_policy_config(std::size_t feature_dim, const FixedLayout& layout, std::size_t hidden) {
  PolicyConfig c;
  c.feature_dim = feature_dim;
  c.hidden = hidden;
  c.fixed_layout = layout.order;
  return c;
}

RolloutResult pointer_baseline_rollout(Tape& tape, const PageInstance& page, TilePolicy& pointer,
                                       DecodeMode mode, SeededRng& rng) {
  if (pointer.config().learns_layout()) {
    throw std::invalid_argument("pointer_baseline_rollout: policy has a learned tile head");
  }
  return pointer.rollout(tape, page, mode, rng);
}

}  // namespace tilenet
