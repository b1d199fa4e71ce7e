#include "cfbench/prototypes/prototypes.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

#include <gtest/gtest.h>

using namespace cfbench;
using namespace cfbench::prototypes;

namespace {

Mat<double> random_points(Eigen::Index dim, Eigen::Index n, Rng& rng, double scale = 1.0) {
  Mat<double> m(dim, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * standard_normal(rng);
  return m;
}

}  // namespace

TEST(Kernel, SelfSimilarityAndHandValue) {
  Rng rng(1);
  const Vec<double> x = flat(fixtures::random_image(rng));
  EXPECT_DOUBLE_EQ(rbf_kernel(x, x, {1.0, false}), 1.0);
  Vec<double> a = Vec<double>::Zero(4), b = Vec<double>::Zero(4);
  b[2] = 2.0;
  EXPECT_NEAR(rbf_kernel(a, b, {1.0, false}), std::exp(-2.0), 1e-15);
  EXPECT_NEAR(rbf_kernel(a, b, {1.0, false}), 0.1353, 1e-4);
  EXPECT_NEAR(rbf_kernel(a, b, {1.0, true}), std::exp(-4.0), 1e-15);
}

TEST(Kernel, MonotoneInDistanceAndInUnitInterval) {
  Vec<double> a = Vec<double>::Zero(3);
  double prev = 1.0;
  for (int i = 1; i < 20; ++i) {
    Vec<double> b = Vec<double>::Zero(3);
    b[0] = 0.3 * i;
    const double k = rbf_kernel(a, b, {0.7, false});
    EXPECT_GT(k, 0.0);
    EXPECT_LT(k, prev);
    prev = k;
  }
  EXPECT_THROW((KernelConfig{0.0, false}.validate()), ConfigError);
}

TEST(Mmd, IdenticalSetsGiveZero) {
  Rng rng(2);
  const Mat<double> d = random_points(5, 12, rng);
  EXPECT_NEAR(mmd_squared(d, d, {0.5, false}), 0.0, 1e-12);
}

TEST(Mmd, PermutationInvariantAndMatchesTripleSum) {
  Rng rng(3);
  const Mat<double> d = random_points(6, 15, rng);
  const Mat<double> p = d(Eigen::all, std::vector<Eigen::Index>{3, 7, 11});
  const Mat<double> p_perm = d(Eigen::all, std::vector<Eigen::Index>{11, 3, 7});
  Mat<double> d_perm = d;
  d_perm.col(0).swap(d_perm.col(9));
  const KernelConfig cfg{0.4, false};
  const double v = mmd_squared(p, d, cfg);
  EXPECT_NEAR(mmd_squared(p_perm, d_perm, cfg), v, 1e-12);
  EXPECT_NEAR(v, oracle::mmd2(d, {3, 7, 11}, cfg), 1e-12);
  EXPECT_THROW(mmd_squared(Mat<double>(6, 0), d, cfg), Error);
}

TEST(Greedy, FirstPrototypeIsExhaustiveArgmin) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto n = static_cast<Eigen::Index>(3 + uniform_index(rng, 28));
    const Mat<double> d = random_points(4, n, rng);
    const KernelConfig cfg{median_heuristic_gamma(d), seed % 2 == 1};
    const auto sel = select_prototypes_greedy(d, 1, cfg);
    ASSERT_EQ(sel.size(), 1u);
    EXPECT_EQ(sel[0], oracle::exhaustive_first_prototype(d, cfg)) << "seed " << seed << " n " << n;
  }
}

TEST(Greedy, PicksFromDenseCluster) {
  Rng rng(5);
  Mat<double> d(3, 10);
  for (int j = 0; j < 9; ++j) d.col(j) = Vec<double>::Constant(3, 1.0) + 0.01 * fixtures::random_vector(3, rng);
  d.col(9) = Vec<double>::Constant(3, -5.0);
  const auto sel = select_prototypes_greedy(d, 1, {1.0, false});
  EXPECT_LT(sel[0], 9u);
}

TEST(Greedy, SelectingEveryPointReachesZero) {
  Rng rng(6);
  const Mat<double> d = random_points(3, 8, rng);
  const KernelConfig cfg{1.0, false};
  const auto sel = select_prototypes_greedy(d, 8, cfg);
  std::vector<std::size_t> sorted = sel;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NEAR(oracle::mmd2(d, sel, cfg), 0.0, 1e-12);
  EXPECT_THROW(select_prototypes_greedy(d, 9, cfg), Error);
}

TEST(Greedy, EachStepMinimizesMmd) {
  Rng rng(7);
  const Mat<double> d = random_points(3, 14, rng);
  const KernelConfig cfg{0.8, false};
  const auto sel = select_prototypes_greedy(d, 4, cfg);
  for (std::size_t step = 0; step < sel.size(); ++step) {
    std::vector<std::size_t> prefix(sel.begin(), sel.begin() + static_cast<std::ptrdiff_t>(step));
    double best = INFINITY;
    for (std::size_t c = 0; c < 14; ++c) {
      if (std::find(prefix.begin(), prefix.end(), c) != prefix.end()) continue;
      auto with = prefix;
      with.push_back(c);
      best = std::min(best, oracle::mmd2(d, with, cfg));
    }
    auto chosen = prefix;
    chosen.push_back(sel[step]);
    EXPECT_NEAR(oracle::mmd2(d, chosen, cfg), best, 1e-12);
  }
}

TEST(MedianHeuristic, EvenCountAveragesMiddle) {
  Mat<double> d(1, 3);
  d << 0.0, 1.0, 3.0;  // pairwise distances 1, 2, 3
  EXPECT_DOUBLE_EQ(median_heuristic_gamma(d), 0.5);
  Mat<double> e(1, 4);
  e << 0.0, 1.0, 3.0, 7.0;  // 1 2 3 4 6 7
  EXPECT_DOUBLE_EQ(median_heuristic_gamma(e), 1.0 / 3.5);
}

TEST(NearestNeighbor, MatchesBruteForceScan) {
  Rng rng(8);
  const Mat<double> ref = random_points(5, 20, rng);
  std::vector<int> labels;
  for (int j = 0; j < 20; ++j) labels.push_back(static_cast<int>(uniform_index(rng, 4)));
  const Mat<double> q = random_points(5, 50, rng);
  const auto r = nearest_neighbor_classify(ref, labels, q);
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    EXPECT_EQ(r.predicted[static_cast<std::size_t>(j)], oracle::brute_nearest(ref, labels, q.col(j).data()));
}

TEST(NearestNeighbor, TiesGoToLowestLabel) {
  Mat<double> ref(1, 2);
  ref << 1.0, -1.0;
  const std::vector<int> labels{3, 1};
  Mat<double> q = Mat<double>::Zero(1, 1);
  EXPECT_EQ(nearest_neighbor_classify(ref, labels, q).predicted[0], 1);
}

TEST(PrototypeSet, PrototypesClassifyAsTheirOwnClass) {
  data::DatasetSplit s;
  s.name = "toy";
  s.class_names = fixtures::class_names(3);
  Rng rng(9);
  const int per = 12;
  s.train_images.resize(kPixels, 3 * per);
  for (int c = 0; c < 3; ++c)
    for (int j = 0; j < per; ++j) {
      auto col = s.train_images.col(c * per + j);
      for (int i = 0; i < kPixels; ++i)
        col[i] = static_cast<std::uint8_t>((i % 3 == c ? 200 : 20) + uniform_index(rng, 40));
      s.train_labels.push_back(c);
    }
  s.test_images = s.train_images;
  s.test_labels = s.train_labels;
  const auto set = select_prototypes(s, 2);
  ASSERT_EQ(set.classes.size(), 3u);
  const Mat<double> protos = set.matrix();
  const auto labels = set.labels();
  const auto r = prototype_1nn_classify(set, protos, labels);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  for (const auto& cp : set.classes)
    for (std::size_t idx : cp.train_indices) EXPECT_EQ(s.train_labels[idx], cp.label);

  const auto back = prototypes_from_json(to_json(set), s);
  EXPECT_TRUE(back.matrix() == protos);
  EXPECT_EQ(back.labels(), labels);
}
