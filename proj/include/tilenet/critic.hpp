#pragma once

#include <cstdint>
#include <span>

#include "tilenet/autodiff.hpp"
#include "tilenet/nn.hpp"
#include "tilenet/page.hpp"

namespace tilenet {

struct CriticConfig {
  std::size_t feature_dim = 16;
  std::size_t tile_dim = 2;
  std::size_t num_tiles = 30;
  std::size_t attention_dim = 128;
  std::size_t attention_heads = 1;
  std::size_t attention_layers = 1;
  std::size_t position_width = 16;

  bool operator==(const CriticConfig&) const = default;
};

enum class LossReduction { Mean, Sum };

// k x (feature_dim + tile_dim) matrix; row j is [X of the item on tile j ; Z_j].
Tensor critic_input(const PageInstance& page, const Configuration& configuration);

// Value network V(C | I): self-attention over placed (item, tile) rows,
// a position-wise ReLU layer, then one affine map of the tile-ordered
// concatenation to a scalar.
class Critic {
 public:
  Critic(const CriticConfig& config, std::uint64_t seed);
  Critic(const Critic&) = delete;
  Critic& operator=(const Critic&) = delete;

  const CriticConfig& config() const { return config_; }
  ParameterList parameters();

  Var forward(Tape& tape, const PageInstance& page, const Configuration& configuration);
  Var forward(Tape& tape, const Tensor& input);
  double estimate(const PageInstance& page, const Configuration& configuration);

  SelfAttention& encoder() { return encoder_; }
  Linear& position_layer() { return position_; }
  Linear& aggregate_layer() { return aggregate_; }

 private:
  CriticConfig config_;
  SelfAttention encoder_;
  Linear position_;
  Linear aggregate_;
};

double critic_loss(std::span<const double> estimates, std::span<const double> observed,
                   LossReduction reduction = LossReduction::Mean);
// Differentiable form over estimates recorded on one tape.
Var critic_loss(std::span<const Var> estimates, std::span<const double> observed,
                LossReduction reduction = LossReduction::Mean);

}  // namespace tilenet
