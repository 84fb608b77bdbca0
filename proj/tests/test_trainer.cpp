#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tilenet/trainer.hpp"

using namespace tilenet;
namespace fs = std::filesystem;

namespace {

PageInstance random_page(std::size_t n, GridShape grid, SeededRng& rng) {
  Tensor user = Tensor::matrix(1, 2), items = Tensor::matrix(n, 2);
  for (double& v : user.values()) v = rng.normal();
  for (double& v : items.values()) v = rng.normal();
  return PageInstance::make(user, items, grid);
}

PolicyConfig small_policy() {
  PolicyConfig c;
  c.feature_dim = 4;
  c.attention_dim = 8;
  c.hidden = 6;
  c.pointer_dim = 5;
  return c;
}

CriticConfig small_critic(std::size_t tiles) {
  CriticConfig c;
  c.feature_dim = 4;
  c.num_tiles = tiles;
  c.attention_dim = 8;
  c.position_width = 4;
  return c;
}

// Critic whose estimate is the constant `value` for every input.
void pin_critic(Critic& critic, double value) {
  critic.aggregate_layer().weight.value.fill(0.0);
  critic.aggregate_layer().bias.value.fill(value);
}

std::vector<Tensor> grads_of(const ParameterList& params) {
  std::vector<Tensor> out;
  for (const Parameter* p : params) out.push_back(p->grad);
  return out;
}

TrainConfig base_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.steps = 3;
  c.environment.preference = make_ground_truth_preference(1, 2, 2);
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tilenet_trainer_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("reinforce gradient") {
  SeededRng rng(3);
  const PageInstance page = random_page(4, {2, 2}, rng);
  TilePolicy policy(small_policy(), 1);
  Critic critic(small_critic(4), 2);
  const ParameterList params = policy.parameters();
  TrainConfig cfg = base_config();

  SUBCASE("a reward equal to the baseline gives no policy gradient") {
    pin_critic(critic, 0.5);
    Episode ep{&page, SeededRng(7), 0.5};
    reinforce_batch(policy, critic, std::span(&ep, 1), cfg);
    for (const Parameter* p : params)
      for (double g : p->grad.values()) CHECK(g == 0.0);
  }

  SUBCASE("single episode matches finite differences of -R log p") {
    pin_critic(critic, 0.0);
    const double reward = 1.5;
    Episode ep{&page, SeededRng(9), reward};
    SeededRng replay = ep.rng;
    reinforce_batch(policy, critic, std::span(&ep, 1), cfg);
    Configuration sampled;
    {
      Tape tape;
      sampled = policy.rollout(tape, page, DecodeMode::Sample, replay).configuration;
    }
    auto surrogate = [&] {
      Tape tape;
      return -reward * policy.log_prob(tape, page, sampled).item();
    };
    double worst = 0.0;
    for (Parameter* p : params) {
      const std::size_t count = p->value.size();
      for (std::size_t i = 0; i < count; i += 1 + count / 8) {
        const double saved = p->value[i];
        const double h = 1e-5;
        p->value[i] = saved + h;
        const double up = surrogate();
        p->value[i] = saved - h;
        const double down = surrogate();
        p->value[i] = saved;
        const double numeric = (up - down) / (2 * h);
        const double analytic = p->grad[i];
        worst = std::max(worst, std::abs(numeric - analytic) /
                                    std::max({1.0, std::abs(numeric), std::abs(analytic)}));
      }
    }
    CHECK(worst < 1e-4);
  }

  SUBCASE("a batch averages its episodes") {
    pin_critic(critic, 0.25);
    std::vector<Episode> pair{{&page, SeededRng(1), 2.0}, {&page, SeededRng(2), -1.0}};
    std::vector<Episode> first{pair[0]}, second{pair[1]};
    reinforce_batch(policy, critic, first, cfg);
    const auto g1 = grads_of(params);
    reinforce_batch(policy, critic, second, cfg);
    const auto g2 = grads_of(params);
    reinforce_batch(policy, critic, pair, cfg);
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < g1[k].size(); ++i)
        CHECK(std::abs(params[k]->grad[i] - 0.5 * (g1[k][i] + g2[k][i])) < 1e-12);
  }

  SUBCASE("shifting reward and baseline together changes nothing") {
    pin_critic(critic, 0.25);
    const ParameterList cparams = critic.parameters();
    std::vector<Episode> plain{{&page, SeededRng(4), 0.75}, {&page, SeededRng(5), 1.5}};
    std::vector<Episode> shifted = plain;
    for (Episode& e : shifted) e.shift = 8.0;
    const TrainStatsRow a = reinforce_batch(policy, critic, plain, cfg);
    const auto pa = grads_of(params), ca = grads_of(cparams);
    const TrainStatsRow b = reinforce_batch(policy, critic, shifted, cfg);
    CHECK(grads_of(params) == pa);
    CHECK(grads_of(cparams) == ca);
    CHECK(a.policy_loss == b.policy_loss);
    CHECK(a.critic_loss == b.critic_loss);
  }

  SUBCASE("paper-literal mode weights by the estimate") {
    pin_critic(critic, 0.5);
    cfg.advantage = AdvantageMode::PaperLiteral;
    Episode ep{&page, SeededRng(7), 0.5};
    reinforce_batch(policy, critic, std::span(&ep, 1), cfg);
    double norm = 0.0;
    for (const Parameter* p : params)
      for (double g : p->grad.values()) norm += g * g;
    CHECK(norm > 0.0);
  }

  SUBCASE("non-finite rewards are reported") {
    Episode ep{&page, SeededRng(7), std::nan("")};
    CHECK_THROWS_AS(reinforce_batch(policy, critic, std::span(&ep, 1), cfg), NumericError);
    CHECK_THROWS_AS(reinforce_batch(policy, critic, {}, cfg), std::invalid_argument);
  }
}

TEST_CASE("gradient clipping") {
  Parameter a("a", Tensor::row({0, 0})), b("b", Tensor::row({0}));
  a.grad = Tensor::row({3, 0});
  b.grad = Tensor::row({4});
  const ParameterList params{&a, &b};
  CHECK(global_grad_norm(params) == 5.0);
  clip_grad_norm(params, 10.0);
  CHECK(global_grad_norm(params) == 5.0);
  clip_grad_norm(params, 1.0);
  CHECK(global_grad_norm(params) == doctest::Approx(1.0));
  CHECK(a.grad[0] == doctest::Approx(0.6));
}

TEST_CASE("training loop") {
  SeededRng rng(6);
  std::vector<PageInstance> pages;
  for (int p = 0; p < 12; ++p) pages.push_back(random_page(5, {2, 2}, rng));
  const std::span<const PageInstance> train_pages(pages.data(), 8), val_pages(pages.data() + 8, 4);

  SUBCASE("zero steps store the initial parameters") {
    TrainConfig cfg = base_config();
    cfg.steps = 0;
    cfg.output_dir = scratch_dir("zero");
    TilePolicy policy(small_policy(), 1), fresh(small_policy(), 1);
    Critic critic(small_critic(4), 2), fresh_critic(small_critic(4), 2);
    train(policy, critic, train_pages, val_pages, cfg);
    const Checkpoint saved = load_checkpoint(cfg.output_dir / "final.tnck");
    CHECK(saved.group("policy").tensors == capture_group("policy", fresh.parameters()).tensors);
    CHECK(saved.group("critic").tensors == capture_group("critic", fresh_critic.parameters()).tensors);
    CHECK(saved.step == 0);
    fs::remove_all(cfg.output_dir);
  }

  SUBCASE("runs are reproducible and write their outputs") {
    TrainConfig cfg = base_config();
    cfg.eval_every = 2;
    cfg.checkpoint_every = 2;
    std::vector<Checkpoint> finals;
    std::vector<std::vector<TrainStatsRow>> stats;
    for (int run = 0; run < 2; ++run) {
      cfg.output_dir = scratch_dir("repeat" + std::to_string(run));
      TilePolicy policy(small_policy(), 1);
      Critic critic(small_critic(4), 2);
      const TrainResult r = train(policy, critic, train_pages, val_pages, cfg);
      CHECK_FALSE(r.diverged);
      CHECK(r.state.step == 3);
      CHECK(fs::exists(cfg.output_dir / "checkpoint-2.tnck"));
      CHECK(fs::exists(cfg.output_dir / "train_stats.csv"));
      finals.push_back(load_checkpoint(cfg.output_dir / "final.tnck"));
      stats.push_back(r.stats);
      fs::remove_all(cfg.output_dir);
    }
    CHECK(finals[0] == finals[1]);
    REQUIRE(stats[0].size() == stats[1].size());
    // Step 0, steps 1-3, with evaluations at 0, 2 and 3.
    CHECK(stats[0].size() == 4);
    for (std::size_t i = 0; i < stats[0].size(); ++i) {
      CHECK(stats[0][i].reward_mean == stats[1][i].reward_mean);
      CHECK(stats[0][i].eval.has_value() == stats[1][i].eval.has_value());
    }
    CHECK(stats[0][2].eval.has_value());
    CHECK_FALSE(stats[0][1].eval.has_value());
  }

  SUBCASE("restoring a checkpoint resumes the same parameters") {
    TrainConfig cfg = base_config();
    TilePolicy policy(small_policy(), 1), other(small_policy(), 5);
    Critic critic(small_critic(4), 2), other_critic(small_critic(4), 6);
    const TrainResult r = train(policy, critic, train_pages, {}, cfg);
    TrainState state;
    restore_checkpoint(make_checkpoint(policy, critic, r.state, "meta"), other, &other_critic, &state);
    CHECK(capture_group("p", other.parameters()) == capture_group("p", policy.parameters()));
    CHECK(capture_group("c", other_critic.parameters()) == capture_group("c", critic.parameters()));
    CHECK(state.step == r.state.step);
    CHECK(state.policy_opt == r.state.policy_opt);
  }

  SUBCASE("divergence keeps the last good parameters") {
    TrainConfig cfg = base_config();
    cfg.environment.preference.constant = std::nan("");
    cfg.output_dir = scratch_dir("diverge");
    TilePolicy policy(small_policy(), 1), fresh(small_policy(), 1);
    Critic critic(small_critic(4), 2);
    const TrainResult r = train(policy, critic, train_pages, {}, cfg);
    CHECK(r.diverged);
    CHECK(r.error.find("click probability") != std::string::npos);
    CHECK(fs::exists(cfg.output_dir / "last_good.tnck"));
    CHECK(load_checkpoint(cfg.output_dir / "last_good.tnck").group("policy").tensors ==
          capture_group("policy", fresh.parameters()).tensors);
    fs::remove_all(cfg.output_dir);
  }

  SUBCASE("invalid configurations") {
    TrainConfig cfg = base_config();
    TilePolicy policy(small_policy(), 1);
    Critic critic(small_critic(4), 2);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(policy, critic, train_pages, val_pages, cfg), std::invalid_argument);
    cfg = base_config();
    cfg.eval_every = 1;
    CHECK_THROWS_AS(train(policy, critic, train_pages, {}, cfg), std::invalid_argument);
    cfg = base_config();
    CHECK_THROWS_AS(train(policy, critic, {}, val_pages, cfg), std::invalid_argument);
  }
}

TEST_CASE("stats csv") {
  std::ostringstream os;
  write_stats_header(os);
  TrainStatsRow row;
  row.step = 2;
  row.reward_mean = 0.5;
  row.eval = EvalSnapshot{0.8, 0.4, 3};
  write_stats_row(os, row);
  const std::string s = os.str();
  CHECK(s.find("step") == 0);
  CHECK(s.find("\n2,0.5") != std::string::npos);
  CHECK(parse_advantage_mode("paper-literal") == AdvantageMode::PaperLiteral);
  CHECK(to_string(AdvantageMode::Baseline) == "baseline");
  CHECK_THROWS_AS(parse_advantage_mode("other"), std::invalid_argument);
}
