#pragma once

#include "cfbench/metrics/metrics.hpp"
#include "cfbench/study/stats.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cfbench::study {

inline constexpr const char* kGroundTruthSource = "ground_truth";

/// Display name used in report rows ("Min-Edit", ..., "GroundTruth").
std::string source_label(const std::string& source);

struct ReportInput {
  std::string dataset;
  std::vector<std::string> item_ids;  // sampling order; defines the item blocks
  std::vector<std::string> sources;   // row order
  std::vector<metrics::MetricRecord> records;
  std::map<std::string, std::optional<double>> substitutability;  // R%-Sub by source
  double reference_accuracy = 0.0;
  bool welch = false;
  int blocks = 10;
  nlohmann::json config = nlohmann::json::object();  // echoed as config.json
};

/// Per-item metric names in report column order.
const std::vector<std::string>& per_item_metrics();
double metric_value(const metrics::MetricRecord& r, const std::string& metric);

/// Covered values of one metric for one source, in item order.
std::vector<double> metric_values(const ReportInput& in, const std::string& source, const std::string& metric);
/// Means of covered values over `blocks` contiguous item blocks (empty blocks skipped).
std::vector<double> block_means(const ReportInput& in, const std::string& source, const std::string& metric);

/// One-way ANOVA per metric on per-item values and on block means, plus
/// t-tests of every method against the ground truth with Holm correction.
std::vector<std::pair<std::string, StatResult>> compute_stats(const ReportInput& in);

/// File name -> content. Output is a pure function of the input.
std::map<std::string, std::string> render_report(const ReportInput& in);

}  // namespace cfbench::study
