#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tilenet/baselines.hpp"
#include "tilenet/critic.hpp"
#include "tilenet/environment.hpp"
#include "tilenet/metrics.hpp"
#include "tilenet/policy.hpp"
#include "tilenet/trainer.hpp"

namespace tilenet {

// Invalid user input: bad config, missing or malformed files, bad flags.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::filesystem::path dir = "data";
  std::uint64_t seed = 0;  // generation and the train/validation/test split
  std::size_t users = 200;
  std::size_t items = 500;
  std::size_t user_dim = 8;
  std::size_t item_dim = 8;
  std::size_t pages = 2000;
  std::size_t candidates = 50;
  GridShape grid{5, 6};
};

struct EnvironmentConfig {
  ScanKind scan = ScanKind::Row;
  std::vector<std::size_t> real_permutation;    // inline; empty means file or seeded
  std::filesystem::path real_permutation_file;  // one-line CSV of tile indices
  std::uint64_t real_seed = 0;
  double eta = 0.05;
  Dynamics dynamics = Dynamics::None;
  double similarity_quantile = 0.005;
  std::uint64_t preference_seed = 0;
  std::optional<double> constant_click_probability;
  RewardKind reward = RewardKind::Clicks;
  ClickMode click_mode = ClickMode::Stochastic;
};

enum class ModelKind { Tile, Pointer, Utility };

ModelKind parse_model_kind(std::string_view s);
std::string_view to_string(ModelKind k);

struct ModelConfig {
  ModelKind kind = ModelKind::Tile;
  ScanKind layout = ScanKind::Row;  // pointer only
  std::size_t attention_dim = 128;
  std::size_t attention_heads = 1;
  std::size_t attention_layers = 1;
  std::optional<std::size_t> hidden;  // 64 for tile networks, 128 for pointers
  std::size_t pointer_dim = 64;
  CellKind cell = CellKind::Lstm;
  std::size_t critic_position_width = 16;
};

struct TrainSection {
  TrainConfig train;
  // Training-time overrides of the environment's click mode and reward.
  std::optional<ClickMode> click_mode;
  std::optional<RewardKind> reward;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  EnvironmentConfig environment;
  ModelConfig model;
  TrainSection train;
  RankerConfig ranker;
  std::size_t eval_pages = 0;  // 0: whole split
  std::filesystem::path output_dir = "runs";
};

// Parses JSON text. Unknown keys, wrong types and out-of-range values raise
// UserError prefixed with the field path (e.g. "train.batch_size"); syntax
// errors report the line and column. Relative paths resolve against base_dir.
ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct Dataset {
  Tensor users;                                  // U x user_dim
  Tensor items;                                  // I x item_dim
  std::vector<std::size_t> page_users;           // per page
  std::vector<std::vector<std::size_t>> pages;   // per page, candidate item ids
  GridShape grid;

  PageInstance page(std::size_t index) const;
  std::vector<PageInstance> instances(std::span<const std::size_t> indices) const;
};

struct DatasetFiles {
  std::filesystem::path users;
  std::filesystem::path items;
  std::filesystem::path pages;
};

DatasetFiles dataset_files(const std::filesystem::path& dir);

// Standard-normal features, candidates drawn without replacement per page.
Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed);
DatasetFiles gen_dataset(const DatasetConfig& config, std::uint64_t seed);
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const DatasetConfig& config);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Seeded shuffle, then 70% / 15% / remainder.
DatasetSplit split_dataset(std::size_t pages, std::uint64_t seed);

std::vector<std::size_t> resolve_real_permutation(const EnvironmentConfig& config, GridShape grid);
EnvironmentSpec make_environment(const EnvironmentConfig& config, const DatasetConfig& data);

PolicyConfig policy_config(const ModelConfig& model, const DatasetConfig& data,
                           const std::vector<std::size_t>& layout_order);
CriticConfig critic_config(const ModelConfig& model, const DatasetConfig& data);

// A model restored from a checkpoint whose metadata describes its architecture.
struct LoadedModel {
  ModelKind kind = ModelKind::Tile;
  ScanKind layout = ScanKind::Row;
  GridShape grid;
  std::unique_ptr<TilePolicy> policy;
  std::unique_ptr<Critic> critic;
  std::unique_ptr<UtilityRanker> ranker;

  // Display name, e.g. "Tile Networks", "Col-Pointer", "Z-Ranker".
  std::string name(std::optional<ScanKind> ranker_layout = std::nullopt) const;
  // Greedy placement; utility rankers need the layout to place by.
  PlacementFn placement(std::optional<ScanKind> ranker_layout = std::nullopt) const;
};

std::string model_metadata(ModelKind kind, ScanKind layout, GridShape grid, const PolicyConfig* policy,
                           const CriticConfig* critic, const RankerConfig* ranker, std::size_t feature_dim);
LoadedModel load_model(const std::filesystem::path& checkpoint);

struct TrainOutcome {
  std::filesystem::path checkpoint;
  EvaluationReport validation;
  bool diverged = false;
  std::string error;
};

// Trains the configured model on the training split and writes the final
// checkpoint, train_stats.csv (policies) and validation_report.csv.
TrainOutcome run_training(const ExperimentConfig& config);

// CSV and SVG renderings of a row-major priority grid (0 = viewed first).
void write_heatmap_csv(std::ostream& os, GridShape grid, std::span<const double> priority);
void write_heatmap_svg(std::ostream& os, GridShape grid, std::span<const double> priority);

}  // namespace tilenet
