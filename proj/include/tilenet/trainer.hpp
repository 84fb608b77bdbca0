#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tilenet/adam.hpp"
#include "tilenet/checkpoint.hpp"
#include "tilenet/critic.hpp"
#include "tilenet/environment.hpp"
#include "tilenet/metrics.hpp"
#include "tilenet/policy.hpp"

namespace tilenet {

// Baseline: coefficient R - V(C|I). PaperLiteral: coefficient V(C|I), the
// critic's reward estimate used in place of the observed reward.
enum class AdvantageMode { Baseline, PaperLiteral };

AdvantageMode parse_advantage_mode(std::string_view s);
std::string_view to_string(AdvantageMode m);

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t steps = 100;
  double policy_lr = 1e-3;
  double critic_lr = 1e-3;
  AdvantageMode advantage = AdvantageMode::Baseline;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::size_t eval_every = 0;        // 0: no periodic evaluation
  std::vector<std::uint64_t> eval_seeds = {0};
  double entropy_coef = 0.0;
  bool normalize_advantage = false;
  LossReduction critic_reduction = LossReduction::Mean;
  double grad_clip = 0.0;  // global-norm clip per network; 0 disables
  EnvironmentSpec environment;
  std::optional<EnvironmentSpec> eval_environment;  // defaults to environment
  std::filesystem::path output_dir;                 // empty: nothing written
  std::string metadata;                             // stored in every checkpoint

  void validate() const;
};

struct EvalSnapshot {
  double ndcg = 0.0;
  double precision = 0.0;
  double clicks = 0.0;
};

struct TrainStatsRow {
  std::size_t step = 0;
  double reward_mean = 0.0;
  double policy_loss = 0.0;
  double critic_loss = 0.0;
  double policy_grad_norm = 0.0;
  double critic_grad_norm = 0.0;
  std::optional<EvalSnapshot> eval;
};

void write_stats_header(std::ostream& os);
void write_stats_row(std::ostream& os, const TrainStatsRow& row);

struct Episode {
  const PageInstance* page = nullptr;
  SeededRng rng{0};
  // Replaces the simulated reward when set (for analysis and tests).
  std::optional<double> reward_override;
  // Added to both the reward and the critic estimate.
  double shift = 0.0;
};

// One REINFORCE step over a batch. Zeroes and then fills the grads of both
// networks: the policy receives the mean over episodes of
// -coef * grad log p(C|I), the critic the gradient of its regression loss
// against the observed rewards. Coefficients are treated as constants.
// Throws NumericError on a non-finite reward, estimate or gradient.
TrainStatsRow reinforce_batch(TilePolicy& policy, Critic& critic, std::span<Episode> episodes,
                              const TrainConfig& config);

double global_grad_norm(const ParameterList& params);
void clip_grad_norm(const ParameterList& params, double max_norm);

struct TrainState {
  AdamState policy_opt;
  AdamState critic_opt;
  std::size_t step = 0;
};

Checkpoint make_checkpoint(TilePolicy& policy, Critic& critic, const TrainState& state,
                           const std::string& metadata);
void restore_checkpoint(const Checkpoint& ckpt, TilePolicy& policy, Critic* critic,
                        TrainState* state = nullptr);

struct TrainResult {
  std::vector<TrainStatsRow> stats;
  TrainState state;
  bool diverged = false;
  std::string error;
};

// Runs config.steps batches over train_pages (reshuffled each pass), with
// greedy validation at step 0, every eval_every steps and at the end. On a
// non-finite quantity the parameters keep their last good values, which are
// written to last_good.tnck, and the result is flagged as diverged.
TrainResult train(TilePolicy& policy, Critic& critic, std::span<const PageInstance> train_pages,
                  std::span<const PageInstance> validation_pages, const TrainConfig& config);

PlacementFn greedy_placement(TilePolicy& policy);

}  // namespace tilenet
