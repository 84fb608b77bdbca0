#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tilenet/environment.hpp"
#include "tilenet/page.hpp"

namespace tilenet {

// DCG / IDCG over labels in view order with gain 2^rel - 1 and discount
// log2(i + 1). All-zero labels give 0.
double ndcg(std::span<const double> labels);
// Fraction of the first k view positions that were clicked.
double pre_at_k(std::span<const double> labels, std::size_t k);

inline constexpr std::size_t kDefaultPrecisionK = 10;

struct MetricSummary {
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance across episodes
  bool operator==(const MetricSummary&) const = default;
};

struct EvaluationReport {
  MetricSummary ndcg;
  MetricSummary precision;
  MetricSummary clicks;
  std::size_t precision_k = 0;
  std::size_t episodes = 0;
  bool operator==(const EvaluationReport&) const = default;
};

MetricSummary summarize(std::span<const double> values);

// Placement under evaluation; page_index identifies the page within the sample.
using PlacementFn = std::function<Configuration(const PageInstance& page, std::size_t page_index)>;

// Each page is placed once and simulated once per seed; Pre@K uses
// K = min(10, k).
EvaluationReport evaluate_policy(const PlacementFn& place, const EnvironmentSpec& spec,
                                 std::span<const PageInstance> pages,
                                 std::span<const std::uint64_t> seeds);

struct ReportRow {
  std::string model;
  std::string environment;
  EvaluationReport report;
};

void write_report_csv(std::ostream& os, std::span<const ReportRow> rows);
// Models as rows, environments as column groups of (NDCG, Pre@K).
void write_report_table(std::ostream& os, std::span<const ReportRow> rows);

}  // namespace tilenet
