#include "cfbench/study/stats.hpp"

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cfbench::study {

nlohmann::json to_json(const StatResult& r) {
  return {{"test", r.test}, {"groups", r.groups}, {"statistic", r.statistic}, {"df1", r.df1},
          {"df2", r.df2},   {"p", r.p},           {"p_adjusted", r.p_adjusted}, {"warning", r.warning}};
}

double mean(std::span<const double> v) {
  if (v.empty()) throw Error("mean of an empty list");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw Error("sample variance needs at least two values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

double sem(std::span<const double> v) { return std::sqrt(sample_variance(v) / static_cast<double>(v.size())); }

StatResult two_sample_ttest(std::span<const double> a, std::span<const double> b, bool welch,
                            const std::string& label_a, const std::string& label_b) {
  if (a.size() < 2 || b.size() < 2) throw Error("t-test: each sample needs at least two values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b), va = sample_variance(a), vb = sample_variance(b);
  StatResult r;
  r.test = welch ? "welch_t" : "student_t";
  r.groups = {label_a, label_b};
  double se = 0.0;
  if (welch) {
    se = std::sqrt(va / na + vb / nb);
    const double num = (va / na + vb / nb) * (va / na + vb / nb);
    const double den = (va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0);
    r.df1 = den > 0.0 ? num / den : na + nb - 2.0;
  } else {
    const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    r.df1 = na + nb - 2.0;
  }
  if (se == 0.0) {
    if (ma != mb) throw Error("t-test: zero variance in both samples with different means");
    r.statistic = 0.0;
    r.p = r.p_adjusted = 1.0;
    r.warning = "zero variance";
    return r;
  }
  r.statistic = (ma - mb) / se;
  const boost::math::students_t dist(r.df1);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.statistic))));
  r.p_adjusted = r.p;
  return r;
}

StatResult one_way_anova(const std::vector<std::vector<double>>& groups, const std::vector<std::string>& labels) {
  if (groups.size() < 2) throw Error("anova: need at least two groups");
  std::size_t n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error("anova: every group needs at least two values");
    n += g.size();
    grand += std::accumulate(g.begin(), g.end(), 0.0);
  }
  grand /= static_cast<double>(n);
  double ss_between = 0.0, ss_within = 0.0;
  for (const auto& g : groups) {
    const double m = mean(g);
    ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double x : g) ss_within += (x - m) * (x - m);
  }
  StatResult r;
  r.test = "one_way_anova";
  r.groups = labels;
  r.df1 = static_cast<double>(groups.size() - 1);
  r.df2 = static_cast<double>(n - groups.size());
  const double ms_between = ss_between / r.df1, ms_within = ss_within / r.df2;
  if (ms_within == 0.0) {
    if (ms_between == 0.0) {
      r.statistic = 0.0;
      r.p = r.p_adjusted = 1.0;
      r.warning = "all groups constant and equal; F defined as 0";
      return r;
    }
    r.statistic = std::numeric_limits<double>::infinity();
    r.p = r.p_adjusted = 0.0;
    r.warning = "zero within-group variance";
    return r;
  }
  r.statistic = ms_between / ms_within;
  const boost::math::fisher_f dist(r.df1, r.df2);
  r.p = boost::math::cdf(boost::math::complement(dist, r.statistic));
  r.p_adjusted = r.p;
  return r;
}

std::vector<double> holm_adjust(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double running = 0.0;
  for (std::size_t rank = 0; rank < m; ++rank) {
    const double v = std::min(1.0, static_cast<double>(m - rank) * p[order[rank]]);
    running = std::max(running, v);
    adj[order[rank]] = running;
  }
  return adj;
}

std::vector<StatResult> pairwise_tests_holm(const std::vector<std::vector<double>>& groups,
                                            const std::vector<std::string>& labels, std::size_t baseline, bool welch) {
  if (groups.size() < 2) throw Error("pairwise tests: need at least two groups");
  if (labels.size() != groups.size()) throw Error("pairwise tests: one label per group required");
  if (baseline >= groups.size()) throw Error("pairwise tests: baseline index out of range");
  std::vector<StatResult> out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g == baseline) continue;
    out.push_back(two_sample_ttest(groups[g], groups[baseline], welch, labels[g], labels[baseline]));
  }
  std::vector<double> raw;
  for (const auto& r : out) raw.push_back(r.p);
  const auto adj = holm_adjust(raw);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].p_adjusted = adj[i];
  return out;
}

}  // namespace cfbench::study
