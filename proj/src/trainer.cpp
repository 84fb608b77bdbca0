#include "tilenet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <ostream>
#include <stdexcept>

namespace tilenet {

AdvantageMode parse_advantage_mode(std::string_view s) {
  if (s == "baseline") return AdvantageMode::Baseline;
  if (s == "paper-literal") return AdvantageMode::PaperLiteral;
  throw std::invalid_argument("unknown advantage mode '" + std::string(s) + "'");
}

std::string_view to_string(AdvantageMode m) {
  return m == AdvantageMode::Baseline ? "baseline" : "paper-literal";
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (!(policy_lr > 0.0) || !(critic_lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (entropy_coef < 0.0) throw std::invalid_argument("entropy_coef must be non-negative");
  if (grad_clip < 0.0) throw std::invalid_argument("grad_clip must be non-negative");
  if (eval_every > 0 && eval_seeds.empty()) throw std::invalid_argument("eval_seeds must not be empty");
}

void write_stats_header(std::ostream& os) {
  os << "step,reward_mean,policy_loss,critic_loss,policy_grad_norm,critic_grad_norm,"
        "eval_ndcg,eval_precision,eval_clicks\n";
}

void write_stats_row(std::ostream& os, const TrainStatsRow& r) {
  const auto old = os.precision(17);
  os << r.step << ',' << r.reward_mean << ',' << r.policy_loss << ',' << r.critic_loss << ','
     << r.policy_grad_norm << ',' << r.critic_grad_norm << ',';
  if (r.eval) {
    os << r.eval->ndcg << ',' << r.eval->precision << ',' << r.eval->clicks;
  } else {
    os << ",,";
  }
  os << '\n';
  os.precision(old);
}

double global_grad_norm(const ParameterList& params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.values()) sq += g * g;
  }
  return std::sqrt(sq);
}

void clip_grad_norm(const ParameterList& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm <= 0.0 || norm <= max_norm) return;
  const double s = max_norm / norm;
  for (Parameter* p : params) {
    for (double& g : p->grad.values()) g *= s;
  }
}

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

void require_finite_grads(const ParameterList& params) {
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient in " + p->name);
  }
}

}  // namespace

TrainStatsRow reinforce_batch(TilePolicy& policy, Critic& critic, std::span<Episode> episodes,
                              const TrainConfig& config) {
  if (episodes.empty()) throw std::invalid_argument("reinforce_batch: empty batch");
  const EnvironmentSpec& spec = config.environment;
  const ParameterList policy_params = policy.parameters();
  const ParameterList critic_params = critic.parameters();
  zero_grads(policy_params);
  zero_grads(critic_params);

  const std::size_t b = episodes.size();
  std::vector<std::unique_ptr<Tape>> tapes;
  std::vector<RolloutResult> rollouts;
  std::vector<Var> values;
  std::vector<double> rewards, estimates;
  tapes.reserve(b);
  for (Episode& ep : episodes) {
    if (ep.page == nullptr) throw std::invalid_argument("reinforce_batch: episode without a page");
    auto& tape = *tapes.emplace_back(std::make_unique<Tape>());
    RolloutResult roll = policy.rollout(tape, *ep.page, DecodeMode::Sample, ep.rng);
    double r;
    if (ep.reward_override) {
      r = *ep.reward_override;
    } else {
      const std::vector<double> probs = page_click_probabilities(*ep.page, spec.preference);
      r = simulate_clicks(*ep.page, roll.configuration, spec, ep.rng, probs).reward;
    }
    r += ep.shift;
    Var v = critic.forward(tape, *ep.page, roll.configuration);
    const double est = v.item() + ep.shift;
    require_finite(r, "reward");
    require_finite(est, "critic estimate");
    require_finite(roll.log_prob.item(), "log-probability");
    rewards.push_back(r);
    estimates.push_back(est);
    values.push_back(v);
    rollouts.push_back(std::move(roll));
  }

  std::vector<double> coef(b);
  for (std::size_t e = 0; e < b; ++e) {
    coef[e] = config.advantage == AdvantageMode::Baseline ? rewards[e] - estimates[e] : estimates[e];
  }
  if (config.normalize_advantage && b > 1) {
    double mean = 0.0, var = 0.0;
    for (double a : coef) mean += a;
    mean /= static_cast<double>(b);
    for (double a : coef) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(b - 1));
    for (double& a : coef) a = (a - mean) / (sd + 1e-8);
  }

  const double inv_b = 1.0 / static_cast<double>(b);
  const double critic_w = config.critic_reduction == LossReduction::Mean ? inv_b : 1.0;
  TrainStatsRow row;
  for (std::size_t e = 0; e < b; ++e) {
    Tape& tape = *tapes[e];
    Var root = scale(rollouts[e].log_prob, -coef[e] * inv_b);
    if (config.entropy_coef > 0.0) {
      root = add(root, scale(rollouts[e].entropy, -config.entropy_coef * inv_b));
    }
    Var diff = sub(values[e], tape.constant(Tensor::scalar(rewards[e] - episodes[e].shift)));
    root = add(root, scale(mul(diff, diff), critic_w));
    tape.backward(root);
    row.policy_loss -= coef[e] * rollouts[e].log_prob.item() * inv_b;
    row.reward_mean += rewards[e] * inv_b;
  }
  row.critic_loss = critic_loss(estimates, rewards, config.critic_reduction);
  require_finite_grads(policy_params);
  require_finite_grads(critic_params);
  row.policy_grad_norm = global_grad_norm(policy_params);
  row.critic_grad_norm = global_grad_norm(critic_params);
  return row;
}

Checkpoint make_checkpoint(TilePolicy& policy, Critic& critic, const TrainState& state,
                           const std::string& metadata) {
  Checkpoint ckpt;
  ckpt.step = state.step;
  ckpt.metadata = metadata;
  ckpt.groups.push_back(capture_group("policy", policy.parameters(), &state.policy_opt));
  ckpt.groups.push_back(capture_group("critic", critic.parameters(), &state.critic_opt));
  return ckpt;
}

void restore_checkpoint(const Checkpoint& ckpt, TilePolicy& policy, Critic* critic, TrainState* state) {
  restore_group(ckpt.group("policy"), policy.parameters(), state ? &state->policy_opt : nullptr);
  if (critic) {
    restore_group(ckpt.group("critic"), critic->parameters(), state ? &state->critic_opt : nullptr);
  }
  if (state) state->step = ckpt.step;
}

PlacementFn greedy_placement(TilePolicy& policy) {
  return [&policy](const PageInstance& page, std::size_t) { return policy.greedy(page); };
}

namespace {

class PageCursor {
 public:
  PageCursor(std::size_t n, const SeededRng& root) : n_(n), root_(root) { reshuffle(); }

  std::size_t next() {
    if (pos_ == order_.size()) reshuffle();
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    SeededRng rng = root_.derive("epoch", epoch_++);
    order_ = random_permutation(n_, rng);
    pos_ = 0;
  }

  std::size_t n_;
  SeededRng root_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

EvalSnapshot snapshot(TilePolicy& policy, std::span<const PageInstance> pages, const TrainConfig& config) {
  const EnvironmentSpec& spec = config.eval_environment ? *config.eval_environment : config.environment;
  const EvaluationReport rep = evaluate_policy(greedy_placement(policy), spec, pages, config.eval_seeds);
  return {rep.ndcg.mean, rep.precision.mean, rep.clicks.mean};
}

}  // namespace

TrainResult train(TilePolicy& policy, Critic& critic, std::span<const PageInstance> train_pages,
                  std::span<const PageInstance> validation_pages, const TrainConfig& config) {
  config.validate();
  if (train_pages.empty()) throw std::invalid_argument("train: no training pages");
  if (config.eval_every > 0 && validation_pages.empty()) {
    throw std::invalid_argument("train: evaluation requested without validation pages");
  }
  const ParameterList policy_params = policy.parameters();
  const ParameterList critic_params = critic.parameters();

  TrainResult result;
  TrainState& state = result.state;
  state.policy_opt.config.learning_rate = config.policy_lr;
  state.critic_opt.config.learning_rate = config.critic_lr;

  const bool writes = !config.output_dir.empty();
  std::ofstream stats_file;
  if (writes) {
    std::filesystem::create_directories(config.output_dir);
    stats_file.open(config.output_dir / "train_stats.csv", std::ios::binary | std::ios::trunc);
    if (!stats_file) throw std::runtime_error("cannot write " + (config.output_dir / "train_stats.csv").string());
    write_stats_header(stats_file);
  }
  auto emit = [&](TrainStatsRow row) {
    if (writes) write_stats_row(stats_file, row);
    result.stats.push_back(std::move(row));
  };
  auto save = [&](const std::string& file) {
    if (writes) save_checkpoint(config.output_dir / file, make_checkpoint(policy, critic, state, config.metadata));
  };

  const SeededRng root(config.seed, hash_string("train"));
  PageCursor cursor(train_pages.size(), root.derive("shuffle"));
  if (config.eval_every > 0) {
    TrainStatsRow initial;
    initial.eval = snapshot(policy, validation_pages, config);
    emit(initial);
  }

  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::vector<Episode> batch(config.batch_size);
    const SeededRng step_rng = root.derive("episode", step);
    for (std::size_t e = 0; e < batch.size(); ++e) {
      batch[e].page = &train_pages[cursor.next()];
      batch[e].rng = step_rng.derive(e);
    }
    TrainStatsRow row;
    try {
      row = reinforce_batch(policy, critic, batch, config);
      clip_grad_norm(policy_params, config.grad_clip);
      clip_grad_norm(critic_params, config.grad_clip);
      adam_step(policy_params, state.policy_opt);
      adam_step(critic_params, state.critic_opt);
    } catch (const NumericError& err) {
      result.diverged = true;
      result.error = "step " + std::to_string(step) + ": " + err.what();
      save("last_good.tnck");
      return result;
    }
    state.step = step;
    row.step = step;
    if (config.eval_every > 0 && (step % config.eval_every == 0 || step == config.steps)) {
      row.eval = snapshot(policy, validation_pages, config);
    }
    emit(row);
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
      save("checkpoint-" + std::to_string(step) + ".tnck");
    }
  }
  save("final.tnck");
  return result;
}

}  // namespace tilenet
