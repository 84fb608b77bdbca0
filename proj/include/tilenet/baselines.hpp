#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tilenet/adam.hpp"
#include "tilenet/environment.hpp"
#include "tilenet/nn.hpp"
#include "tilenet/policy.hpp"

namespace tilenet {

// A hand-designed layout: tiles in the order the best-ranked items fill them.
struct FixedLayout {
  ScanKind kind = ScanKind::Row;
  std::vector<std::size_t> order;

  static FixedLayout make(ScanKind kind, GridShape grid, std::span<const std::size_t> real_permutation = {});
};

// Top-k candidates by score (ties to the lower index) placed best-first along
// the layout order.
Configuration fixed_layout_place(std::span<const double> scores, const FixedLayout& layout,
                                 std::size_t k);

// Rows of (features, click label) for pointwise ranker training.
struct ClickDataset {
  Tensor features;  // N x F
  std::vector<double> labels;
  std::size_t size() const { return labels.size(); }
};

// Logs clicks for uniformly random placements of each page, the way a
// production click log would be collected before any ranker exists.
ClickDataset collect_click_log(std::span<const PageInstance> pages, const EnvironmentSpec& spec,
                               std::uint64_t seed);

struct RankerConfig {
  std::vector<std::size_t> hidden = {128, 64};
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

// Pointwise CTR scorer: ReLU MLP over [user ; item] ending in a sigmoid.
class UtilityRanker {
 public:
  UtilityRanker(std::size_t feature_dim, const RankerConfig& config);
  UtilityRanker(const UtilityRanker&) = delete;
  UtilityRanker& operator=(const UtilityRanker&) = delete;

  const RankerConfig& config() const { return config_; }
  std::size_t feature_dim() const { return network_.input_dim(); }
  Mlp& network() { return network_; }
  ParameterList parameters();

  std::vector<double> scores(const PageInstance& page) const;
  double score(std::span<const double> features) const;

 private:
  RankerConfig config_;
  Mlp network_;
};

// Binary cross-entropy training with Adam, mini-batches drawn from a seeded
// per-epoch shuffle. Throws on an empty dataset.
void train_utility_ranker(UtilityRanker& ranker, const ClickDataset& data, AdamState* optimizer = nullptr);

// Pointer-network policy whose tile at step t is fixed by the layout.
PolicyConfig pointer_policy_config(std::size_t feature_dim, const FixedLayout& layout,
                                   std::size_t hidden = 128);

RolloutResult pointer_baseline_rollout(Tape& tape, const PageInstance& page, TilePolicy& pointer,
                                       DecodeMode mode, SeededRng& rng);

}  // namespace tilenet
