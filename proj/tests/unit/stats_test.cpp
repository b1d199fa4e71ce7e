#include "cfbench/study/report.hpp"
#include "cfbench/study/stats.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace cfbench;
using namespace cfbench::study;

TEST(TTest, HandFixture) {
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  const auto r = two_sample_ttest(a, b);
  EXPECT_NEAR(r.statistic, -3.0 / std::sqrt(2.0 / 3.0), 1e-12);
  EXPECT_NEAR(r.statistic, -3.674, 1e-3);
  EXPECT_NEAR(r.statistic, oracle::pooled_t(a, b), 1e-9);
  EXPECT_EQ(r.df1, 4.0);
  EXPECT_NEAR(r.p, oracle::t4_two_sided_p(r.statistic), 1e-9);
}

TEST(TTest, RandomSamplesMatchPooledOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a, b;
    for (int i = 0; i < 3; ++i) a.push_back(standard_normal(rng));
    for (int i = 0; i < 3; ++i) b.push_back(1.0 + standard_normal(rng));
    const auto r = two_sample_ttest(a, b);
    EXPECT_NEAR(r.statistic, oracle::pooled_t(a, b), 1e-9);
    EXPECT_NEAR(r.p, oracle::t4_two_sided_p(r.statistic), 1e-9);
  }
}

TEST(TTest, IdenticalSamplesAndAntisymmetry) {
  const std::vector<double> a{1.5, 2.0, 4.0, 3.5}, b{0.5, 2.5, 1.0, 1.2};
  const auto same = two_sample_ttest(a, a);
  EXPECT_EQ(same.statistic, 0.0);
  EXPECT_NEAR(same.p, 1.0, 1e-12);
  const auto ab = two_sample_ttest(a, b), ba = two_sample_ttest(b, a);
  EXPECT_DOUBLE_EQ(ab.statistic, -ba.statistic);
  EXPECT_DOUBLE_EQ(ab.p, ba.p);
  const auto w = two_sample_ttest(a, b, true);
  EXPECT_DOUBLE_EQ(w.statistic, ab.statistic);  // equal sizes
  EXPECT_LE(w.df1, 6.0);
}

TEST(TTest, Errors) {
  const std::vector<double> one{1.0}, two{1.0, 2.0}, c1{1, 1, 1}, c2{2, 2, 2};
  EXPECT_THROW(two_sample_ttest(one, two), Error);
  EXPECT_THROW(two_sample_ttest(c1, c2), Error);
  EXPECT_EQ(two_sample_ttest(c1, c1).warning, "zero variance");
}

TEST(Anova, HandFixture) {
  const std::vector<std::vector<double>> g{{2, 3, 4, 5}, {6, 8, 7, 9}, {1, 2, 2, 3}};
  const auto r = one_way_anova(g);
  const auto h = oracle::anova_by_hand(g);
  EXPECT_NEAR(r.statistic, h.f, 1e-9);
  EXPECT_EQ(r.df1, 2.0);
  EXPECT_EQ(r.df2, 9.0);
  EXPECT_NEAR(r.p, oracle::f2_survival(r.statistic, 9.0), 1e-9);
  // SSB = 4*((3.5-4.333)^2 + (7.5-4.333)^2 + (2-4.333)^2), SSW = 5 + 5 + 2
  EXPECT_NEAR(h.ss_between, 4.0 * (25.0 / 36.0 + 361.0 / 36.0 + 196.0 / 36.0), 1e-12);
  EXPECT_NEAR(h.ss_within, 12.0, 1e-12);
}

TEST(Anova, RandomGroupsMatchHand) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<double>> g(5);
    for (std::size_t k = 0; k < g.size(); ++k)
      for (int i = 0; i < 10; ++i) g[k].push_back(0.3 * static_cast<double>(k) + standard_normal(rng));
    const auto r = one_way_anova(g);
    EXPECT_NEAR(r.statistic, oracle::anova_by_hand(g).f, 1e-9);
    EXPECT_EQ(r.df1, 4.0);
    EXPECT_EQ(r.df2, 45.0);
    EXPECT_GE(r.p, 0.0);
    EXPECT_LE(r.p, 1.0);
  }
  std::vector<std::vector<double>> three(3);
  for (auto& v : three)
    for (int i = 0; i < 6; ++i) v.push_back(standard_normal(rng));
  const auto r3 = one_way_anova(three);
  EXPECT_NEAR(r3.p, oracle::f2_survival(r3.statistic, 15.0), 1e-9);
}

TEST(Anova, DegenerateInputs) {
  const auto r = one_way_anova({{1, 1}, {1, 1}, {1, 1}});
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_FALSE(r.warning.empty());
  EXPECT_THROW(one_way_anova({{1, 2}}), Error);
  EXPECT_THROW(one_way_anova({{1, 2}, {3}}), Error);
  const auto inf = one_way_anova({{1, 1}, {2, 2}});
  EXPECT_TRUE(std::isinf(inf.statistic));
}

TEST(Holm, HandFixtureAndSingle) {
  const std::vector<double> p{0.01, 0.02, 0.04};
  const auto adj = holm_adjust(p);
  EXPECT_NEAR(adj[0], 0.03, 1e-12);
  EXPECT_NEAR(adj[1], 0.04, 1e-12);
  EXPECT_NEAR(adj[2], 0.04, 1e-12);
  const std::vector<double> one{0.2};
  EXPECT_EQ(holm_adjust(one)[0], 0.2);
  const std::vector<double> unsorted{0.04, 0.01, 0.3, 0.02};
  const auto u = holm_adjust(unsorted);
  EXPECT_NEAR(u[1], 0.04, 1e-12);
  EXPECT_NEAR(u[3], 0.06, 1e-12);
  EXPECT_NEAR(u[0], 0.08, 1e-12);
  EXPECT_NEAR(u[2], 0.3, 1e-12);
}

TEST(Holm, MonotoneAndBounded) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p;
    for (int i = 0; i < 6; ++i) p.push_back(uniform01(rng));
    const auto adj = holm_adjust(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_GE(adj[i], p[i]);
      EXPECT_LE(adj[i], 1.0);
      for (std::size_t j = 0; j < p.size(); ++j)
        if (p[i] <= p[j]) EXPECT_LE(adj[i], adj[j]);
    }
  }
}

TEST(Pairwise, AgainstBaselineHolmAdjusted) {
  const std::vector<std::vector<double>> g{{1, 2, 3}, {4, 5, 6}, {1, 3, 2.5}};
  const auto rs = pairwise_tests_holm(g, {"A", "B", "GT"}, 2);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(rs[0].groups, (std::vector<std::string>{"A", "GT"}));
  std::vector<double> raw{rs[0].p, rs[1].p};
  const auto adj = holm_adjust(raw);
  EXPECT_DOUBLE_EQ(rs[0].p_adjusted, adj[0]);
  EXPECT_DOUBLE_EQ(rs[1].p_adjusted, adj[1]);
  EXPECT_THROW(pairwise_tests_holm(g, {"A"}, 0), Error);
}

TEST(Descriptive, SemByHand) {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(mean(v), 5.0);
  EXPECT_NEAR(sample_variance(v), 32.0 / 7.0, 1e-12);
  EXPECT_NEAR(sem(v), std::sqrt(32.0 / 7.0) / std::sqrt(8.0), 1e-12);
  EXPECT_THROW(mean(std::vector<double>{}), Error);
}

namespace {

ReportInput make_input(std::uint64_t seed, int items = 50) {
  Rng rng(seed);
  ReportInput in;
  in.dataset = "mnist";
  in.sources = {"minedit", "cem", "vlk", "revise", kGroundTruthSource};
  for (int i = 0; i < items; ++i) in.item_ids.push_back("mnist-" + std::to_string(i));
  for (std::size_t s = 0; s < in.sources.size(); ++s)
    for (int i = 0; i < items; ++i) {
      metrics::MetricRecord r;
      r.item_id = in.item_ids[static_cast<std::size_t>(i)];
      r.source = in.sources[s];
      r.covered = !(in.sources[s] == "revise" && i % 7 == 3);
      if (!r.covered) {
        r.reason = "no valid point";
        in.records.push_back(r);
        continue;
      }
      r.l1 = 5.0 * static_cast<double>(s + 1) + uniform01(rng);
      r.l2 = std::sqrt(r.l1);
      r.mc_mean = uniform01(rng);
      r.mc_std = 0.1 * uniform01(rng);
      r.im1 = 1.0 + uniform01(rng);
      r.lof10 = -uniform01(rng);
      r.grad_cos = 2.0 * uniform01(rng) - 1.0;
      in.records.push_back(r);
    }
  for (const auto& s : in.sources) in.substitutability[s] = 40.0;
  in.substitutability["revise"] = std::nullopt;
  in.reference_accuracy = 0.75;
  return in;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Report, Table1HasOneRowPerSource) {
  const auto files = render_report(make_input(1));
  const auto t = lines(files.at("table1.csv"));
  ASSERT_EQ(t.size(), 6u);
  EXPECT_EQ(t[1].rfind("Min-Edit,", 0), 0u);
  EXPECT_EQ(t[5].rfind("GroundTruth,", 0), 0u);
  EXPECT_NE(t[4].find(",43/50"), std::string::npos);
  for (const char* f : {"fig4_bars.csv", "coverage.csv", "stats.csv", "records.csv", "fig4_l1.svg", "fig4_l2.svg",
                        "fig6_grad_cos.svg", "config.json"})
    EXPECT_TRUE(files.count(f)) << f;
}

TEST(Report, DeterministicBytes) {
  EXPECT_EQ(render_report(make_input(2)), render_report(make_input(2)));
  EXPECT_NE(render_report(make_input(2)).at("table1.csv"), render_report(make_input(3)).at("table1.csv"));
}

TEST(Report, BarsCarryHandSem) {
  const auto in = make_input(4);
  const auto bars = lines(render_report(in).at("fig4_bars.csv"));
  std::vector<double> v;
  for (const auto& r : in.records)
    if (r.source == "cem" && r.covered) v.push_back(r.l1);
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double want = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  bool found = false;
  for (const auto& l : bars)
    if (l.rfind("mnist,l1,CEM,", 0) == 0) {
      found = true;
      const double got = std::stod(l.substr(l.rfind(',') + 1));
      EXPECT_NEAR(got, want, 1e-12);
    }
  EXPECT_TRUE(found);
}

TEST(Report, CoverageListsFailedItems) {
  const auto cov = lines(render_report(make_input(5)).at("coverage.csv"));
  ASSERT_EQ(cov.size(), 6u);
  EXPECT_NE(cov[4].find("Revise,50,43,7,"), std::string::npos);
  EXPECT_NE(cov[4].find("mnist-3;mnist-10"), std::string::npos);
}

TEST(Report, BlockMeansAverageContiguousBlocks) {
  const auto in = make_input(6);
  const auto bm = block_means(in, "minedit", "l1");
  ASSERT_EQ(bm.size(), 10u);
  for (std::size_t b = 0; b < 10; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) s += in.records[b * 5 + i].l1;
    EXPECT_NEAR(bm[b], s / 5.0, 1e-12);
  }
}

TEST(Report, StatsCoverBothAggregations) {
  const auto in = make_input(7);
  const auto st = compute_stats(in);
  std::size_t per_item_anova = 0, block_anova = 0, pairs = 0;
  for (const auto& [tag, r] : st) {
    if (r.test == "one_way_anova") {
      (tag.find("/per_item") != std::string::npos ? per_item_anova : block_anova) += 1;
      if (tag == "l1/per_item") {
        EXPECT_EQ(r.df1, 4.0);
        EXPECT_EQ(r.df2, 250.0 - 7.0 - 5.0);
      }
      if (tag == "l1/block_means") EXPECT_EQ(r.df2, 45.0);
    } else {
      ++pairs;
      EXPECT_EQ(r.groups.back(), "GroundTruth");
    }
  }
  EXPECT_EQ(per_item_anova, per_item_metrics().size());
  EXPECT_EQ(block_anova, per_item_metrics().size());
  EXPECT_EQ(pairs, 4 * per_item_metrics().size());
}
