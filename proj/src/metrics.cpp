#include "tilenet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace tilenet {

namespace {

double dcg(std::span<const double> labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    s += (std::exp2(labels[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  }
  return s;
}

}  // namespace

double ndcg(std::span<const double> labels) {
  std::vector<double> ideal(labels.begin(), labels.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double best = dcg(ideal);
  if (best <= 0.0) return 0.0;
  return dcg(labels) / best;
}

double pre_at_k(std::span<const double> labels, std::size_t k) {
  if (k == 0 || k > labels.size()) {
    throw std::invalid_argument("pre_at_k: K=" + std::to_string(k) + " outside [1, " +
                                std::to_string(labels.size()) + "]");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += labels[i];
  return s / static_cast<double>(k);
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary m;
  if (values.empty()) return m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    for (double v : values) m.variance += (v - m.mean) * (v - m.mean);
    m.variance /= static_cast<double>(values.size() - 1);
  }
  return m;
}

EvaluationReport evaluate_policy(const PlacementFn& place, const EnvironmentSpec& spec,
                                 std::span<const PageInstance> pages,
                                 std::span<const std::uint64_t> seeds) {
  if (pages.empty()) throw std::invalid_argument("evaluate_policy: no pages");
  if (seeds.empty()) throw std::invalid_argument("evaluate_policy: no seeds");
  std::vector<double> ndcgs, precisions, clicks;
  const std::size_t k = std::min(kDefaultPrecisionK, pages.front().num_tiles());
  for (std::size_t p = 0; p < pages.size(); ++p) {
    const PageInstance& page = pages[p];
    const Configuration c = place(page, p);
    const std::vector<double> probs = page_click_probabilities(page, spec.preference);
    for (std::uint64_t seed : seeds) {
      SeededRng rng = SeededRng(seed, hash_string("evaluate")).derive(p);
      const ClickRecord rec = simulate_clicks(page, c, spec, rng, probs);
      ndcgs.push_back(ndcg(rec.labels));
      precisions.push_back(pre_at_k(rec.labels, std::min(k, rec.labels.size())));
      double total = 0.0;
      for (double l : rec.labels) total += l;
      clicks.push_back(total);
    }
  }
  EvaluationReport r;
  r.ndcg = summarize(ndcgs);
  r.precision = summarize(precisions);
  r.clicks = summarize(clicks);
  r.precision_k = k;
  r.episodes = ndcgs.size();
  return r;
}

void write_report_csv(std::ostream& os, std::span<const ReportRow> rows) {
  os << "model,environment,episodes,ndcg_mean,ndcg_var,precision_k,precision_mean,precision_var,"
        "clicks_mean,clicks_var\n";
  os << std::setprecision(17);
  for (const ReportRow& r : rows) {
    const EvaluationReport& e = r.report;
    os << r.model << ',' << r.environment << ',' << e.episodes << ',' << e.ndcg.mean << ','
       << e.ndcg.variance << ',' << e.precision_k << ',' << e.precision.mean << ','
       << e.precision.variance << ',' << e.clicks.mean << ',' << e.clicks.variance << '\n';
  }
}

void write_report_table(std::ostream& os, std::span<const ReportRow> rows) {
  std::vector<std::string> models, envs;
  for (const ReportRow& r : rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    if (std::find(envs.begin(), envs.end(), r.environment) == envs.end()) envs.push_back(r.environment);
  }
  std::size_t name_w = 9;
  for (const auto& m : models) name_w = std::max(name_w, m.size());
  const std::size_t k = rows.empty() ? kDefaultPrecisionK : rows.front().report.precision_k;
  const std::string pre = "Pre@" + std::to_string(k);
  os << std::left << std::setw(static_cast<int>(name_w)) << "" << " ";
  for (const auto& e : envs) os << "| " << std::setw(17) << e;
  os << "\n" << std::setw(static_cast<int>(name_w)) << "Algorithm" << " ";
  for (std::size_t i = 0; i < envs.size(); ++i) os << "| " << std::setw(8) << "NDCG" << std::setw(9) << pre;
  os << "\n" << std::string(name_w + 1 + envs.size() * 19, '-') << "\n";
  for (const auto& m : models) {
    os << std::setw(static_cast<int>(name_w)) << m << " ";
    for (const auto& e : envs) {
      auto it = std::find_if(rows.begin(), rows.end(),
                             [&](const ReportRow& r) { return r.model == m && r.environment == e; });
      std::ostringstream a, b;
      if (it != rows.end()) {
        a << std::fixed << std::setprecision(3) << it->report.ndcg.mean;
        b << std::fixed << std::setprecision(3) << it->report.precision.mean;
      } else {
        a << "-";
        b << "-";
      }
      os << "| " << std::setw(8) << a.str() << std::setw(9) << b.str();
    }
    os << "\n";
  }
  os << std::right;
}

}  // namespace tilenet
