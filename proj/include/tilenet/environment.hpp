#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tilenet/nn.hpp"
#include "tilenet/page.hpp"
#include "tilenet/rng.hpp"

namespace tilenet {

enum class ScanKind { Row, Col, Z, Real };
enum class Dynamics { None, Diverse, Similar };
enum class RewardKind { Clicks, Ndcg };
enum class ClickMode { Stochastic, Expected };

ScanKind parse_scan_kind(std::string_view s);
Dynamics parse_dynamics(std::string_view s);
RewardKind parse_reward_kind(std::string_view s);
ClickMode parse_click_mode(std::string_view s);
std::string_view to_string(ScanKind k);
std::string_view to_string(Dynamics d);
std::string_view to_string(RewardKind r);
std::string_view to_string(ClickMode m);

// Ground-truth user-item click model: MLP over [user ; item] with hidden
// widths (32, 16, 8), activations (relu, relu, tanh) and a sigmoid output.
struct PreferenceModel {
  std::uint64_t seed = 0;
  std::size_t user_dim = 0;
  std::size_t item_dim = 0;
  Mlp network;
  // When set, every user-item pair clicks with this probability (trivial environments).
  std::optional<double> constant;
};

MlpSpec preference_mlp_spec();
// Weights and biases drawn from U(-0.5, 0.5) on a stream keyed by seed.
PreferenceModel make_ground_truth_preference(std::uint64_t seed, std::size_t user_dim,
                                             std::size_t item_dim);
double click_probability(std::span<const double> user, std::span<const double> item,
                         const PreferenceModel& model);
// Click probability of every candidate on a page, in item order.
std::vector<double> page_click_probabilities(const PageInstance& page, const PreferenceModel& model);

struct EnvironmentSpec {
  ScanKind scan = ScanKind::Row;
  std::vector<std::size_t> real_permutation;  // view order for ScanKind::Real
  double eta = 0.05;
  Dynamics dynamics = Dynamics::None;
  double similarity_quantile = 0.005;
  PreferenceModel preference;
  RewardKind reward = RewardKind::Clicks;
  ClickMode click_mode = ClickMode::Stochastic;

  void validate(std::size_t num_tiles) const;
};

// Tiles (row-major indices) in the order a simulated user views them.
std::vector<std::size_t> scan_order(ScanKind kind, GridShape grid,
                                    std::span<const std::size_t> real_permutation = {});
std::vector<std::size_t> scan_order(const EnvironmentSpec& spec, GridShape grid);
std::vector<std::size_t> random_permutation(std::size_t k, SeededRng& rng);

// 1 / i^eta for view position i >= 1.
double observation_prob(std::size_t view_index, double eta);

// q-quantile (linear interpolation) of all pairwise Euclidean distances among rows.
double similarity_threshold(const Tensor& item_rows, double q);

struct ClickRecord {
  std::vector<std::size_t> view_items;  // item shown at each view position
  std::vector<double> labels;           // 0/1 clicks, or click probabilities in expected mode
  std::vector<double> observation;      // observation probability per view position
  double reward = 0.0;
};

// Cascade simulation in scan order. In expected mode the labels are
// click x observation probabilities and an ndcg reward is taken over them
// directly (a deterministic surrogate, not the expectation of NDCG).
// item_click_probs overrides the preference model evaluation when non-empty
// (indexed by item).
ClickRecord simulate_clicks(const PageInstance& page, const Configuration& configuration,
                            const EnvironmentSpec& spec, SeededRng& rng,
                            std::span<const double> item_click_probs = {});

inline constexpr std::size_t kOracleMaxTiles = 12;

// Exact expected reward by enumerating every click sequence in view order.
// Limited to k <= kOracleMaxTiles.
double expected_reward_oracle(const PageInstance& page, const Configuration& configuration,
                              const EnvironmentSpec& spec,
                              std::span<const double> item_click_probs = {});

}  // namespace tilenet
