#include "tilenet/critic.hpp"

#include <stdexcept>
#include <string>

#include "tilenet/rng.hpp"

namespace tilenet {

Tensor critic_input(const PageInstance& page, const Configuration& configuration) {
  const std::size_t k = page.num_tiles();
  configuration.validate(page.num_items(), k);
  const std::vector<std::size_t> item_on_tile = configuration.item_on_tile(k);
  const std::size_t f = page.feature_dim(), z = page.tiles.cols();
  Tensor out = Tensor::matrix(k, f + z);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t item = item_on_tile[j];
    for (std::size_t c = 0; c < f; ++c) out.at(j, c) = page.features.at(item, c);
    for (std::size_t c = 0; c < z; ++c) out.at(j, f + c) = page.tiles.at(j, c);
  }
  return out;
}

Critic::Critic(const CriticConfig& config, std::uint64_t seed) : config_(config) {
  if (config.num_tiles == 0 || config.position_width == 0) {
    throw std::invalid_argument("critic dimensions must be positive");
  }
  SeededRng rng(seed, hash_string("critic-init"));
  AttentionConfig attn{config.feature_dim + config.tile_dim, config.attention_dim,
                       config.attention_dim, config.attention_heads, config.attention_layers};
  encoder_ = SelfAttention("critic.encoder", attn, rng);
  position_ = Linear("critic.position", config.attention_dim, config.position_width, rng);
  aggregate_ = Linear("critic.aggregate", config.num_tiles * config.position_width, 1, rng);
}

ParameterList Critic::parameters() {
  ParameterList out;
  encoder_.collect(out);
  position_.collect(out);
  aggregate_.collect(out);
  return out;
}

Var Critic::forward(Tape& tape, const Tensor& input) {
  if (input.rows() != config_.num_tiles) {
    throw ShapeError("critic expects " + std::to_string(config_.num_tiles) + " rows, got " +
                     std::to_string(input.rows()));
  }
  Var hidden = encoder_.forward(tape, tape.constant(input));
  Var per_tile = relu(position_.forward(tape, hidden));
  Var flat = reshape(per_tile, {1, config_.num_tiles * config_.position_width});
  return aggregate_.forward(tape, flat);
}

Var Critic::forward(Tape& tape, const PageInstance& page, const Configuration& configuration) {
  return forward(tape, critic_input(page, configuration));
}

double Critic::estimate(const PageInstance& page, const Configuration& configuration) {
  Tape tape(false);
  return forward(tape, page, configuration).item();
}

double critic_loss(std::span<const double> estimates, std::span<const double> observed,
                   LossReduction reduction) {
  if (estimates.size() != observed.size()) {
    throw std::invalid_argument("critic_loss: " + std::to_string(estimates.size()) +
                                " estimates vs " + std::to_string(observed.size()) + " rewards");
  }
  if (estimates.empty()) throw std::invalid_argument("critic_loss: empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double d = estimates[i] - observed[i];
    s += d * d;
  }
  return reduction == LossReduction::Mean ? s / static_cast<double>(estimates.size()) : s;
}

Var critic_loss(std::span<const Var> estimates, std::span<const double> observed,
                LossReduction reduction) {
  if (estimates.size() != observed.size()) {
    throw std::invalid_argument("critic_loss: " + std::to_string(estimates.size()) +
                                " estimates vs " + std::to_string(observed.size()) + " rewards");
  }
  if (estimates.empty()) throw std::invalid_argument("critic_loss: empty batch");
  Tape& tape = *estimates[0].tape();
  Var total = tape.constant(Tensor::scalar(0.0));
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    Var d = sub(estimates[i], tape.constant(Tensor::scalar(observed[i])));
    total = add(total, mul(d, d));
  }
  if (reduction == LossReduction::Mean) total = scale(total, 1.0 / static_cast<double>(estimates.size()));
  return total;
}

}  // namespace tilenet
