#pragma once

#include "cfbench/core.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace cfbench::study {

struct StatResult {
  std::string test;
  std::vector<std::string> groups;
  double statistic = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;  // 0 for single-df tests
  double p = 1.0;
  double p_adjusted = 1.0;  // equals p when no correction applies
  std::string warning;
};

nlohmann::json to_json(const StatResult& r);

double mean(std::span<const double> v);
/// Sample variance (n - 1 denominator).
double sample_variance(std::span<const double> v);
/// Standard error of the mean: sample std / sqrt(n).
double sem(std::span<const double> v);

/// Two-sided two-sample t-test of a against b: pooled-variance Student test,
/// or Welch's unequal-variance test when `welch` is set.
StatResult two_sample_ttest(std::span<const double> a, std::span<const double> b, bool welch = false,
                            const std::string& label_a = "a", const std::string& label_b = "b");

StatResult one_way_anova(const std::vector<std::vector<double>>& groups, const std::vector<std::string>& labels = {});

/// Holm step-down adjusted p-values, returned in the input order.
std::vector<double> holm_adjust(std::span<const double> p);

/// t-tests of every group against groups[baseline], Holm-adjusted.
std::vector<StatResult> pairwise_tests_holm(const std::vector<std::vector<double>>& groups,
                                            const std::vector<std::string>& labels, std::size_t baseline,
                                            bool welch = false);

}  // namespace cfbench::study
