#include "tilenet/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "tilenet/metrics.hpp"

namespace tilenet {

ScanKind parse_scan_kind(std::string_view s) {
  if (s == "row") return ScanKind::Row;
  if (s == "col") return ScanKind::Col;
  if (s == "z") return ScanKind::Z;
  if (s == "real") return ScanKind::Real;
  throw std::invalid_argument("unknown scan order '" + std::string(s) + "' (row|col|z|real)");
}

Dynamics parse_dynamics(std::string_view s) {
  if (s == "none") return Dynamics::None;
  if (s == "diverse") return Dynamics::Diverse;
  if (s == "similar") return Dynamics::Similar;
  throw std::invalid_argument("unknown dynamics '" + std::string(s) + "' (none|diverse|similar)");
}

RewardKind parse_reward_kind(std::string_view s) {
  if (s == "clicks") return RewardKind::Clicks;
  if (s == "ndcg") return RewardKind::Ndcg;
  throw std::invalid_argument("unknown reward '" + std::string(s) + "' (clicks|ndcg)");
}

ClickMode parse_click_mode(std::string_view s) {
  if (s == "stochastic") return ClickMode::Stochastic;
  if (s == "expected") return ClickMode::Expected;
  throw std::invalid_argument("unknown click mode '" + std::string(s) + "' (stochastic|expected)");
}

std::string_view to_string(ScanKind k) {
  switch (k) {
    case ScanKind::Row: return "row";
    case ScanKind::Col: return "col";
    case ScanKind::Z: return "z";
    case ScanKind::Real: return "real";
  }
  return "?";
}

std::string_view to_string(Dynamics d) {
  switch (d) {
    case Dynamics::None: return "none";
    case Dynamics::Diverse: return "diverse";
    case Dynamics::Similar: return "similar";
  }
  return "?";
}

std::string_view to_string(RewardKind r) { return r == RewardKind::Clicks ? "clicks" : "ndcg"; }
std::string_view to_string(ClickMode m) { return m == ClickMode::Stochastic ? "stochastic" : "expected"; }

MlpSpec preference_mlp_spec() {
  return MlpSpec{{32, 16, 8, 1},
                 {Activation::Relu, Activation::Relu, Activation::Tanh, Activation::Sigmoid}};
}

PreferenceModel make_ground_truth_preference(std::uint64_t seed, std::size_t user_dim,
                                             std::size_t item_dim) {
  if (user_dim + item_dim == 0) throw std::invalid_argument("preference model needs features");
  SeededRng rng(seed, hash_string("ground-truth-preference"));
  PreferenceModel m;
  m.seed = seed;
  m.user_dim = user_dim;
  m.item_dim = item_dim;
  m.network = Mlp("preference", user_dim + item_dim, preference_mlp_spec(), rng, 0.5);
  return m;
}

double click_probability(std::span<const double> user, std::span<const double> item,
                         const PreferenceModel& model) {
  if (user.size() != model.user_dim || item.size() != model.item_dim) {
    throw ShapeError("click_probability: expected widths " + std::to_string(model.user_dim) + "+" +
                     std::to_string(model.item_dim) + ", got " + std::to_string(user.size()) + "+" +
                     std::to_string(item.size()));
  }
  if (model.constant) return *model.constant;
  std::vector<double> x(user.begin(), user.end());
  x.insert(x.end(), item.begin(), item.end());
  return model.network.evaluate(Tensor::row(std::move(x)))[0];
}

std::vector<double> page_click_probabilities(const PageInstance& page, const PreferenceModel& model) {
  if (page.user.cols() != model.user_dim || page.items.cols() != model.item_dim) {
    throw ShapeError("page feature widths do not match the preference model");
  }
  if (model.constant) return std::vector<double>(page.num_items(), *model.constant);
  const Tensor p = model.network.evaluate(page.features);
  return {p.values().begin(), p.values().end()};
}

void EnvironmentSpec::validate(std::size_t num_tiles) const {
  if (!(eta >= 0.0)) throw std::invalid_argument("environment: eta must be >= 0");
  if (!(similarity_quantile > 0.0 && similarity_quantile < 1.0)) {
    throw std::invalid_argument("environment: similarity quantile must lie in (0,1)");
  }
  if (click_mode == ClickMode::Expected && dynamics != Dynamics::None) {
    throw std::invalid_argument("environment: expected click mode requires dynamics 'none'");
  }
  if (scan == ScanKind::Real) (void)scan_order(ScanKind::Real, GridShape{1, num_tiles}, real_permutation);
}

std::vector<std::size_t> scan_order(ScanKind kind, GridShape grid,
                                    std::span<const std::size_t> real_permutation) {
  const std::size_t k = grid.tiles();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  switch (kind) {
    case ScanKind::Row:
      break;
    case ScanKind::Col:
      for (std::size_t c = 0, i = 0; c < grid.cols; ++c)
        for (std::size_t r = 0; r < grid.rows; ++r) order[i++] = r * grid.cols + c;
      break;
    case ScanKind::Z: {
      // Squared distance to the centre, doubled to stay in integers.
      auto dist = [&](std::size_t t) {
        const long dr = 2 * static_cast<long>(grid.row_of(t)) - static_cast<long>(grid.rows - 1);
        const long dc = 2 * static_cast<long>(grid.col_of(t)) - static_cast<long>(grid.cols - 1);
        return dr * dr + dc * dc;
      };
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return dist(a) < dist(b); });
      break;
    }
    case ScanKind::Real: {
      if (real_permutation.size() != k) {
        throw std::invalid_argument("real scan permutation has " +
                                    std::to_string(real_permutation.size()) + " entries for " +
                                    std::to_string(k) + " tiles");
      }
      std::vector<bool> seen(k, false);
      for (std::size_t t : real_permutation) {
        if (t >= k || seen[t]) throw std::invalid_argument("real scan order is not a permutation of tiles");
        seen[t] = true;
      }
      order.assign(real_permutation.begin(), real_permutation.end());
      break;
    }
  }
  return order;
}

std::vector<std::size_t> scan_order(const EnvironmentSpec& spec, GridShape grid) {
  return scan_order(spec.scan, grid, spec.real_permutation);
}

std::vector<std::size_t> random_permutation(std::size_t k, SeededRng& rng) {
  std::vector<std::size_t> p(k);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = k; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

double observation_prob(std::size_t view_index, double eta) {
  if (view_index < 1) throw std::invalid_argument("observation_prob: view index must be >= 1");
  return std::pow(static_cast<double>(view_index), -eta);
}

namespace {

double row_distance(const Tensor& rows, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t c = 0; c < rows.cols(); ++c) {
    const double d = rows.at(a, c) - rows.at(b, c);
    s += d * d;
  }
  return std::sqrt(s);
}

// Everything about a (page, configuration, spec) triple the click process needs.
struct CascadeSetup {
  std::vector<std::size_t> view_items;
  std::vector<double> click_prob;   // per view position
  std::vector<double> observe_prob;  // per view position
  std::vector<std::vector<bool>> similar;  // between view positions
};

CascadeSetup prepare(const PageInstance& page, const Configuration& configuration,
                     const EnvironmentSpec& spec, std::span<const double> item_click_probs) {
  const std::size_t k = page.num_tiles();
  configuration.validate(page.num_items(), k);
  spec.validate(k);
  std::vector<double> own_probs;
  if (item_click_probs.empty()) {
    own_probs = page_click_probabilities(page, spec.preference);
    item_click_probs = own_probs;
  } else if (item_click_probs.size() != page.num_items()) {
    throw std::invalid_argument("click probability override must cover every item");
  }
  const std::vector<std::size_t> item_on_tile = configuration.item_on_tile(k);
  const std::vector<std::size_t> order = scan_order(spec, page.grid);

  CascadeSetup s;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t item = item_on_tile[order[i]];
    if (!(item_click_probs[item] >= 0.0 && item_click_probs[item] <= 1.0)) {
      throw NumericError("click probability of item " + std::to_string(item) + " is " +
                         std::to_string(item_click_probs[item]));
    }
    s.view_items.push_back(item);
    s.click_prob.push_back(item_click_probs[item]);
    s.observe_prob.push_back(observation_prob(i + 1, spec.eta));
  }
  if (spec.dynamics != Dynamics::None && k >= 2) {
    Tensor placed = Tensor::matrix(k, page.items.cols());
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < placed.cols(); ++c) placed.at(i, c) = page.items.at(s.view_items[i], c);
    const double threshold = similarity_threshold(placed, spec.similarity_quantile);
    s.similar.assign(k, std::vector<bool>(k, false));
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        s.similar[a][b] = a != b && row_distance(placed, a, b) <= threshold;
  }
  return s;
}

bool similar_to_clicked(const CascadeSetup& s, std::size_t pos, const std::vector<double>& labels) {
  if (s.similar.empty()) return false;
  for (std::size_t j = 0; j < pos; ++j)
    if (labels[j] > 0.5 && s.similar[pos][j]) return true;
  return false;
}

double reward_of(RewardKind kind, const std::vector<double>& labels) {
  if (kind == RewardKind::Ndcg) return ndcg(labels);
  double s = 0.0;
  for (double l : labels) s += l;
  return s;
}

}  // namespace

double similarity_threshold(const Tensor& item_rows, double q) {
  const std::size_t n = item_rows.rows();
  if (n < 2) throw std::invalid_argument("similarity_threshold: need at least two items");
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("similarity_threshold: q must lie in (0,1)");
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) d.push_back(row_distance(item_rows, a, b));
  std::sort(d.begin(), d.end());
  const double pos = q * static_cast<double>(d.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
}

ClickRecord simulate_clicks(const PageInstance& page, const Configuration& configuration,
                            const EnvironmentSpec& spec, SeededRng& rng,
                            std::span<const double> item_click_probs) {
  const CascadeSetup s = prepare(page, configuration, spec, item_click_probs);
  const std::size_t k = s.view_items.size();
  ClickRecord rec;
  rec.view_items = s.view_items;
  rec.observation = s.observe_prob;
  rec.labels.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (spec.click_mode == ClickMode::Expected) {
      rec.labels[i] = s.click_prob[i] * s.observe_prob[i];
      continue;
    }
    const bool observed = rng.bernoulli(s.observe_prob[i]);
    const bool preferred = rng.bernoulli(s.click_prob[i]);
    if (!observed) continue;
    if (spec.dynamics != Dynamics::None && similar_to_clicked(s, i, rec.labels)) {
      rec.labels[i] = spec.dynamics == Dynamics::Similar ? 1.0 : 0.0;
    } else {
      rec.labels[i] = preferred ? 1.0 : 0.0;
    }
  }
  rec.reward = reward_of(spec.reward, rec.labels);
  return rec;
}

double expected_reward_oracle(const PageInstance& page, const Configuration& configuration,
                              const EnvironmentSpec& spec, std::span<const double> item_click_probs) {
  if (page.num_tiles() > kOracleMaxTiles) {
    throw std::invalid_argument("expected_reward_oracle: " + std::to_string(page.num_tiles()) +
                                " tiles exceeds the enumeration limit of " +
                                std::to_string(kOracleMaxTiles));
  }
  const CascadeSetup s = prepare(page, configuration, spec, item_click_probs);
  const std::size_t k = s.view_items.size();
  if (spec.click_mode == ClickMode::Expected) {
    std::vector<double> expected(k);
    for (std::size_t i = 0; i < k; ++i) expected[i] = s.click_prob[i] * s.observe_prob[i];
    return reward_of(spec.reward, expected);
  }
  std::vector<double> labels(k, 0.0);
  double expectation = 0.0;
  // Depth-first over click outcomes; each branch carries its path probability.
  auto recurse = [&](auto&& self, std::size_t pos, double weight) -> void {
    if (weight == 0.0) return;
    if (pos == k) {
      expectation += weight * reward_of(spec.reward, labels);
      return;
    }
    double p_click = s.click_prob[pos] * s.observe_prob[pos];
    if (spec.dynamics != Dynamics::None && similar_to_clicked(s, pos, labels)) {
      p_click = spec.dynamics == Dynamics::Similar ? s.observe_prob[pos] : 0.0;
    }
    labels[pos] = 1.0;
    self(self, pos + 1, weight * p_click);
    labels[pos] = 0.0;
    self(self, pos + 1, weight * (1.0 - p_click));
  };
  recurse(recurse, 0, 1.0);
  return expectation;
}

}  // namespace tilenet
