#include "tilenet/policy.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace tilenet {

namespace {

PointerHead make_head(const std::string& name, std::size_t hidden, std::size_t key_width,
                      std::size_t pointer_dim, SeededRng& rng) {
  PointerHead head;
  head.w_query = Parameter(name + ".w_query", glorot_uniform(hidden, pointer_dim, rng));
  head.w_key = Parameter(name + ".w_key", glorot_uniform(key_width, pointer_dim, rng));
  head.v = Parameter(name + ".v", glorot_uniform(pointer_dim, 1, rng));
  return head;
}

Tensor concat_rows_of(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
  Tensor out = Tensor::matrix(1, a.cols() + b.cols());
  for (std::size_t c = 0; c < a.cols(); ++c) out[c] = a.at(ra, c);
  for (std::size_t c = 0; c < b.cols(); ++c) out[a.cols() + c] = b.at(rb, c);
  return out;
}

}  // namespace

TilePolicy::TilePolicy(const PolicyConfig& config, std::uint64_t seed) : config_(config) {
  if (config.feature_dim == 0 || config.tile_dim == 0 || config.hidden == 0 ||
      config.pointer_dim == 0) {
    throw std::invalid_argument("policy dimensions must be positive");
  }
  SeededRng rng(seed, hash_string("policy-init"));
  AttentionConfig item_attn{config.feature_dim, config.attention_dim, config.attention_dim,
                            config.attention_heads, config.attention_layers};
  item_encoder_ = SelfAttention("policy.item_encoder", item_attn, rng);
  if (config.learns_layout()) {
    AttentionConfig tile_attn{config.tile_dim, config.attention_dim, config.attention_dim,
                              config.attention_heads, config.attention_layers};
    tile_encoder_ = SelfAttention("policy.tile_encoder", tile_attn, rng);
  }
  decoder_ = RecurrentCell("policy.decoder", config.cell, config.feature_dim + config.tile_dim,
                           config.hidden, rng);
  item_head_ = make_head("policy.item_head", config.hidden, config.attention_dim,
                         config.pointer_dim, rng);
  if (config.learns_layout()) {
    tile_head_ = make_head("policy.tile_head", config.hidden, config.attention_dim,
                           config.pointer_dim, rng);
  }
  start_item_ = Parameter("policy.start_item", uniform_tensor({1, config.feature_dim}, -0.1, 0.1, rng));
  start_tile_ = Parameter("policy.start_tile", uniform_tensor({1, config.tile_dim}, -0.1, 0.1, rng));
}

ParameterList TilePolicy::parameters() {
  ParameterList out;
  item_encoder_.collect(out);
  if (config_.learns_layout()) tile_encoder_.collect(out);
  decoder_.collect(out);
  out.push_back(&item_head_.w_query);
  out.push_back(&item_head_.w_key);
  out.push_back(&item_head_.v);
  if (config_.learns_layout()) {
    out.push_back(&tile_head_.w_query);
    out.push_back(&tile_head_.w_key);
    out.push_back(&tile_head_.v);
  }
  out.push_back(&start_item_);
  out.push_back(&start_tile_);
  return out;
}

void TilePolicy::check_page(const PageInstance& page) const {
  page.validate();
  if (page.feature_dim() != config_.feature_dim) {
    throw ShapeError("policy expects item features of width " + std::to_string(config_.feature_dim) +
                     ", page has " + std::to_string(page.feature_dim()));
  }
  if (page.tiles.cols() != config_.tile_dim) throw ShapeError("policy tile width mismatch");
  if (config_.fixed_layout) {
    const auto& layout = *config_.fixed_layout;
    if (layout.size() != page.num_tiles()) {
      throw std::invalid_argument("fixed layout covers " + std::to_string(layout.size()) +
                                  " tiles, page has " + std::to_string(page.num_tiles()));
    }
    std::vector<bool> seen(layout.size(), false);
    for (auto t : layout) {
      if (t >= layout.size() || seen[t]) throw std::invalid_argument("fixed layout is not a permutation");
      seen[t] = true;
    }
  }
}

Var TilePolicy::encode_items(Tape& tape, const PageInstance& page) {
  return item_encoder_.forward(tape, tape.constant(page.features));
}

Var TilePolicy::encode_tiles(Tape& tape, const PageInstance& page) {
  if (!config_.learns_layout()) throw std::logic_error("fixed-layout policy has no tile encoder");
  return tile_encoder_.forward(tape, tape.constant(page.tiles));
}

EncodedPage TilePolicy::encode(Tape& tape, const PageInstance& page) {
  EncodedPage enc;
  enc.item_hidden = encode_items(tape, page);
  enc.item_keys = matmul(enc.item_hidden, tape.param(item_head_.w_key));
  if (config_.learns_layout()) {
    enc.tile_hidden = encode_tiles(tape, page);
    enc.tile_keys = matmul(enc.tile_hidden, tape.param(tile_head_.w_key));
  }
  return enc;
}

DecodeState TilePolicy::initial_state(Tape& tape, const PageInstance& page) {
  DecodeState s;
  s.h = tape.constant(Tensor::matrix(1, config_.hidden));
  s.c = tape.constant(Tensor::matrix(1, config_.hidden));
  s.item_masked.assign(page.num_items(), false);
  s.tile_masked.assign(page.num_tiles(), false);
  return s;
}

Var TilePolicy::head_logits(Tape& tape, PointerHead& head, Var keys, Var h, std::size_t count) {
  Var query = matmul(h, tape.param(head.w_query));
  Var scores = matmul(tanh(add(keys, query)), tape.param(head.v));
  return reshape(scores, {1, count});
}

StepDistribution TilePolicy::decode_step(Tape& tape, DecodeState& state, const EncodedPage& enc,
                                         const PageInstance& page) {
  Var input;
  if (state.step == 0) {
    input = concat_cols(tape.param(start_item_), tape.param(start_tile_));
  } else {
    input = tape.constant(concat_rows_of(page.features, *state.last_item, page.tiles, *state.last_tile));
  }
  auto [h, c] = decoder_.forward(tape, state.h, state.c, input);
  state.h = h;
  state.c = c;

  StepDistribution d;
  d.item_logits = head_logits(tape, item_head_, enc.item_keys, h, page.num_items());
  d.item_probs = softmax_masked(d.item_logits.value(), state.item_masked);
  if (config_.learns_layout()) {
    d.tile_logits = head_logits(tape, tile_head_, enc.tile_keys, h, page.num_tiles());
    d.tile_probs = softmax_masked(d.tile_logits.value(), state.tile_masked);
  } else {
    const std::size_t tile = (*config_.fixed_layout).at(state.step);
    if (state.tile_masked.at(tile)) throw std::logic_error("fixed layout revisits a tile");
    d.tile_probs = Tensor::matrix(1, page.num_tiles());
    d.tile_probs[tile] = 1.0;
  }
  return d;
}

void TilePolicy::commit(DecodeState& state, std::size_t item, std::size_t tile) const {
  if (state.item_masked.at(item)) throw std::invalid_argument("item already placed");
  if (state.tile_masked.at(tile)) throw std::invalid_argument("tile already filled");
  state.item_masked[item] = true;
  state.tile_masked[tile] = true;
  state.last_item = item;
  state.last_tile = tile;
  ++state.step;
}

std::size_t argmax_unmasked(const Tensor& probs, const std::vector<bool>& masked) {
  std::size_t best = SIZE_MAX;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (masked[i]) continue;
    if (best == SIZE_MAX || probs[i] > probs[best]) best = i;
  }
  if (best == SIZE_MAX) throw std::invalid_argument("argmax over a fully masked distribution");
  return best;
}

RolloutResult TilePolicy::run(Tape& tape, const PageInstance& page, DecodeMode mode, SeededRng* rng,
                              const Configuration* forced) {
  check_page(page);
  const std::size_t n = page.num_items(), k = page.num_tiles();
  if (forced) {
    forced->validate(n, k);
    if (config_.fixed_layout && forced->tile_order != *config_.fixed_layout) {
      throw std::invalid_argument("configuration does not follow the policy's fixed layout");
    }
  }
  EncodedPage enc = encode(tape, page);
  DecodeState state = initial_state(tape, page);
  RolloutResult out;
  out.log_prob = tape.constant(Tensor::scalar(0.0));
  out.entropy = tape.constant(Tensor::scalar(0.0));
  for (std::size_t t = 0; t < k; ++t) {
    StepDistribution d = decode_step(tape, state, enc, page);
    std::size_t item, tile;
    if (forced) {
      item = forced->item_order[t];
      tile = forced->tile_order[t];
    } else if (mode == DecodeMode::Greedy) {
      item = argmax_unmasked(d.item_probs, state.item_masked);
      tile = argmax_unmasked(d.tile_probs, state.tile_masked);
    } else {
      item = categorical_sample(d.item_probs.values(), *rng);
      tile = config_.learns_layout() ? categorical_sample(d.tile_probs.values(), *rng)
                                     : (*config_.fixed_layout)[t];
    }
    out.log_prob = add(out.log_prob, log_softmax_masked_at(d.item_logits, state.item_masked, item));
    out.entropy = add(out.entropy, entropy_masked(d.item_logits, state.item_masked));
    if (config_.learns_layout()) {
      out.log_prob = add(out.log_prob, log_softmax_masked_at(d.tile_logits, state.tile_masked, tile));
      out.entropy = add(out.entropy, entropy_masked(d.tile_logits, state.tile_masked));
    }
    out.configuration.item_order.push_back(item);
    out.configuration.tile_order.push_back(tile);
    out.item_probs.push_back(std::move(d.item_probs));
    out.tile_probs.push_back(std::move(d.tile_probs));
    commit(state, item, tile);
  }
  return out;
}

RolloutResult TilePolicy::rollout(Tape& tape, const PageInstance& page, DecodeMode mode,
                                  SeededRng& rng) {
  return run(tape, page, mode, &rng, nullptr);
}

Var TilePolicy::log_prob(Tape& tape, const PageInstance& page, const Configuration& configuration) {
  return run(tape, page, DecodeMode::Greedy, nullptr, &configuration).log_prob;
}

Configuration TilePolicy::greedy(const PageInstance& page) {
  Tape tape(false);
  return run(tape, page, DecodeMode::Greedy, nullptr, nullptr).configuration;
}

std::vector<double> tile_priority_heatmap(TilePolicy& policy, const std::vector<PageInstance>& pages) {
  if (pages.empty()) throw std::invalid_argument("tile_priority_heatmap: empty page sample");
  const std::size_t k = pages.front().num_tiles();
  std::vector<double> mean_step(k, 0.0);
  for (const PageInstance& page : pages) {
    if (page.num_tiles() != k) throw std::invalid_argument("tile_priority_heatmap: mixed grid sizes");
    const Configuration c = policy.greedy(page);
    for (std::size_t t = 0; t < c.steps(); ++t) mean_step[c.tile_order[t]] += static_cast<double>(t + 1);
  }
  for (double& v : mean_step) v /= static_cast<double>(pages.size());
  const auto [lo, hi] = std::minmax_element(mean_step.begin(), mean_step.end());
  const double min = *lo, span = *hi - *lo;
  for (double& v : mean_step) v = span > 0.0 ? (v - min) / span : 0.0;
  return mean_step;
}

}  // namespace tilenet
