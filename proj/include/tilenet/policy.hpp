#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tilenet/autodiff.hpp"
#include "tilenet/nn.hpp"
#include "tilenet/page.hpp"
#include "tilenet/rng.hpp"

namespace tilenet {

struct PolicyConfig {
  std::size_t feature_dim = 16;
  std::size_t tile_dim = 2;
  std::size_t attention_dim = 128;
  std::size_t attention_heads = 1;
  std::size_t attention_layers = 1;
  std::size_t hidden = 64;
  std::size_t pointer_dim = 64;
  CellKind cell = CellKind::Lstm;
  // When set, tiles are not chosen by a learned head: step t fills
  // fixed_layout[t] with probability 1 (the pointer-network baseline).
  std::optional<std::vector<std::size_t>> fixed_layout;

  bool learns_layout() const { return !fixed_layout.has_value(); }
  bool operator==(const PolicyConfig&) const = default;
};

enum class DecodeMode { Sample, Greedy };

// Additive attention head: score_i = v . tanh(W1 h + W2 H_i).
struct PointerHead {
  Parameter w_query;  // hidden x pointer_dim
  Parameter w_key;    // encoder width x pointer_dim
  Parameter v;        // pointer_dim x 1
};

struct EncodedPage {
  Var item_hidden;  // n x attention_dim
  Var tile_hidden;  // k x attention_dim (unset for a fixed layout)
  Var item_keys;    // item_hidden W2
  Var tile_keys;
};

struct DecodeState {
  Var h;
  Var c;
  std::vector<bool> item_masked;
  std::vector<bool> tile_masked;
  std::size_t step = 0;  // number of completed placements
  std::optional<std::size_t> last_item;
  std::optional<std::size_t> last_tile;
};

struct StepDistribution {
  Var item_logits;
  Var tile_logits;  // unset for a fixed layout
  Tensor item_probs;
  Tensor tile_probs;  // one-hot on the layout tile for a fixed layout
};

struct RolloutResult {
  Configuration configuration;
  Var log_prob;
  Var entropy;  // summed entropy of every sampled head
  std::vector<Tensor> item_probs;
  std::vector<Tensor> tile_probs;
};

class TilePolicy {
 public:
  TilePolicy(const PolicyConfig& config, std::uint64_t seed);

  // Parameters hold addresses that the tape binds to, so instances are pinned.
  TilePolicy(const TilePolicy&) = delete;
  TilePolicy& operator=(const TilePolicy&) = delete;

  const PolicyConfig& config() const { return config_; }
  ParameterList parameters();

  Var encode_items(Tape& tape, const PageInstance& page);
  Var encode_tiles(Tape& tape, const PageInstance& page);
  EncodedPage encode(Tape& tape, const PageInstance& page);

  DecodeState initial_state(Tape& tape, const PageInstance& page);
  // Advances the recurrent state from the previous placement (start tokens at
  // the first step) and returns both head distributions under the current masks.
  StepDistribution decode_step(Tape& tape, DecodeState& state, const EncodedPage& enc,
                               const PageInstance& page);
  // Records a placement and updates the masks.
  void commit(DecodeState& state, std::size_t item, std::size_t tile) const;

  RolloutResult rollout(Tape& tape, const PageInstance& page, DecodeMode mode, SeededRng& rng);
  // Teacher-forced log-probability of a given configuration; same value as the
  // rollout that produced it.
  Var log_prob(Tape& tape, const PageInstance& page, const Configuration& configuration);

  // Convenience for evaluation: greedy rollout without gradient recording.
  Configuration greedy(const PageInstance& page);

  SelfAttention& item_encoder() { return item_encoder_; }
  SelfAttention& tile_encoder() { return tile_encoder_; }
  RecurrentCell& decoder() { return decoder_; }
  PointerHead& item_head() { return item_head_; }
  PointerHead& tile_head() { return tile_head_; }
  Parameter& start_item() { return start_item_; }
  Parameter& start_tile() { return start_tile_; }

 private:
  RolloutResult run(Tape& tape, const PageInstance& page, DecodeMode mode, SeededRng* rng,
                    const Configuration* forced);
  Var head_logits(Tape& tape, PointerHead& head, Var keys, Var h, std::size_t count);
  void check_page(const PageInstance& page) const;

  PolicyConfig config_;
  SelfAttention item_encoder_;
  SelfAttention tile_encoder_;
  RecurrentCell decoder_;
  PointerHead item_head_;
  PointerHead tile_head_;
  Parameter start_item_;
  Parameter start_tile_;
};

// Index of the largest entry among unmasked positions (lowest index on ties).
std::size_t argmax_unmasked(const Tensor& probs, const std::vector<bool>& masked);

// Mean greedy decode step (1-based) at which each tile is filled, min-max
// normalized to [0,1]. An all-equal result maps to zeros.
std::vector<double> tile_priority_heatmap(TilePolicy& policy, const std::vector<PageInstance>& pages);

}  // namespace tilenet
