#include "cfbench/metrics/metrics.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

#include <gtest/gtest.h>

using namespace cfbench;
using namespace cfbench::metrics;

namespace {

Mat<double> random_points(Eigen::Index dim, Eigen::Index n, Rng& rng) {
  Mat<double> m(dim, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

// Autoencoder whose output is `image` for every input.
Autoencoder constant_autoencoder(const Image& image) {
  auto enc = nn::Network<double>::initialized(models::encoder_architecture(2), 1);
  nn::Network<double> dec(models::decoder_architecture(2));
  dec.parameters().setZero();
  const nn::LayerSpec* last = nullptr;
  for (const auto& l : dec.architecture().layers())
    if (l.kind == nn::LayerKind::Dense) last = &l;
  const auto bias = static_cast<Eigen::Index>(last->param_offset + last->weight_count());
  for (int i = 0; i < kPixels; ++i) {
    const double s = image.data()[i] + 0.5;
    dec.parameters()[bias + i] = std::log(s / (1.0 - s));
  }
  return Autoencoder(enc, dec, "constant");
}

prototypes::PrototypeSet single_prototype_set(int k, const std::vector<Image>& images) {
  prototypes::PrototypeSet set;
  set.dataset = "toy";
  set.per_class = 1;
  for (int c = 0; c < k; ++c) {
    prototypes::ClassPrototypes cp;
    cp.label = c;
    cp.train_indices = {static_cast<std::size_t>(c)};
    cp.images = {images[static_cast<std::size_t>(c)]};
    set.classes.push_back(cp);
  }
  return set;
}

}  // namespace

TEST(Distance, HandValues) {
  const Image lo = Image::Constant(-0.5), hi = Image::Constant(0.5);
  EXPECT_DOUBLE_EQ(l1_distance(lo, hi), 784.0);
  EXPECT_DOUBLE_EQ(l2_distance(lo, hi), 28.0);
  EXPECT_EQ(l1_distance(lo, lo), 0.0);
  EXPECT_EQ(l2_distance(hi, hi), 0.0);
}

TEST(Distance, AxiomsOnRandomTriples) {
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    const Image a = fixtures::random_image(rng), b = fixtures::random_image(rng), c = fixtures::random_image(rng);
    const double ab1 = l1_distance(a, b), ab2 = l2_distance(a, b);
    ASSERT_NEAR(ab1, oracle::direct_l1(a.data(), b.data(), kPixels), 1e-9);
    ASSERT_NEAR(ab2, oracle::direct_l2(a.data(), b.data(), kPixels), 1e-9);
    ASSERT_GE(ab1, 0.0);
    ASSERT_EQ(ab1, l1_distance(b, a));
    ASSERT_EQ(ab2, l2_distance(b, a));
    ASSERT_LE(ab1, l1_distance(a, c) + l1_distance(c, b) + 1e-12);
    ASSERT_LE(ab2, l2_distance(a, c) + l2_distance(c, b) + 1e-12);
    ASSERT_LE(ab2, ab1);
  }
}

TEST(Lof, MatchesTextbookOnRandomSets) {
  Rng rng(2);
  for (Eigen::Index n : {11, 20, 50, 100}) {
    const Mat<double> ref = random_points(5, n, rng);
    const LofModel model(ref, 10);
    const oracle::BruteLof brute{ref, 10};
    for (Eigen::Index i = 0; i < n; ++i) {
      ASSERT_NEAR(model.k_distances()[i], brute.k_distance(i), 1e-12);
      ASSERT_NEAR(model.lof_in_sample(i), brute.lof_in_sample(i), 1e-9);
    }
    for (int q = 0; q < 10; ++q) {
      const Vec<double> x = fixtures::random_vector(5, rng, 1.5);
      ASSERT_NEAR(model.lof(x), brute.lof(x), 1e-9);
    }
  }
}

TEST(Lof, TiesAndDuplicatesMatchTextbook) {
  // integer lattice points have many equal distances, and column 0 repeats
  Mat<double> ref(2, 30);
  for (int j = 0; j < 30; ++j) {
    ref(0, j) = j % 6;
    ref(1, j) = j / 6;
  }
  ref.col(29) = ref.col(0);
  const LofModel model(ref, 10);
  const oracle::BruteLof brute{ref, 10};
  for (Eigen::Index i = 0; i < 30; ++i) ASSERT_NEAR(model.lof_in_sample(i), brute.lof_in_sample(i), 1e-9);
  Vec<double> x(2);
  x << 2.5, 2.0;
  EXPECT_NEAR(model.lof(x), brute.lof(x), 1e-9);
}

TEST(Lof, GridInteriorNearZeroAndOutlierNegative) {
  Mat<double> grid(kPixels, 100);
  grid.setConstant(-0.4);
  for (int j = 0; j < 100; ++j) {
    grid(0, j) = -0.4 + 0.01 * (j % 10);
    grid(1, j) = -0.4 + 0.01 * (j / 10);
  }
  const LofModel model(grid, kLofNeighbours);
  Image interior = Image::Constant(-0.4);
  interior.data()[0] = -0.4 + 0.045;
  interior.data()[1] = -0.4 + 0.045;
  EXPECT_NEAR(lof10_score(interior, model), 0.0, 0.1);
  EXPECT_LT(lof10_score(Image::Constant(0.5), model), 0.0);
  const oracle::BruteLof brute{grid, 10};
  EXPECT_NEAR(model.lof(flat(interior)), brute.lof(flat(interior)), 1e-9);
}

TEST(Lof, TooFewPointsRejected) {
  Rng rng(3);
  EXPECT_THROW(LofModel(random_points(3, 10, rng), 10), Error);
}

TEST(Im1, IdenticalAutoencodersGiveOne) {
  const auto ae = fixtures::random_autoencoder(4, 5);
  Rng rng(6);
  EXPECT_NEAR(im1(fixtures::random_image(rng), ae, ae), 1.0, 1e-9);
}

TEST(Im1, PerfectTargetReconstructionGivesZero) {
  Rng rng(7);
  Image img = fixtures::random_image(rng) * 0.9;
  const auto perfect = constant_autoencoder(img);
  const auto other = constant_autoencoder(Image::Constant(0.3));
  EXPECT_LT(im1(img, perfect, other), 1e-9);
  EXPECT_GT(im1(img, other, perfect), 1e6);
}

TEST(Substitutability, PrototypesScoreHundred) {
  Rng rng(8);
  std::vector<Image> protos;
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 2; ++r) {
      protos.push_back(fixtures::random_image(rng));
      labels.push_back(c);
    }
  Mat<double> test(kPixels, 60);
  std::vector<int> test_labels;
  for (int j = 0; j < 60; ++j) {
    test.col(j) = flat(fixtures::random_image(rng));
    test_labels.push_back(j % 3);
  }
  Mat<double> ref(kPixels, 6);
  for (int j = 0; j < 6; ++j) ref.col(j) = flat(protos[static_cast<std::size_t>(j)]);
  const double a_ref = prototypes::nearest_neighbor_classify(ref, labels, test, test_labels).accuracy;
  ASSERT_GT(a_ref, 0.0);
  EXPECT_DOUBLE_EQ(substitutability(protos, labels, test, test_labels, a_ref), 100.0);
}

TEST(Substitutability, SingleExplanationGivesClassPrevalence) {
  Rng rng(9);
  Mat<double> test(kPixels, 40);
  std::vector<int> test_labels;
  for (int j = 0; j < 40; ++j) {
    test.col(j) = flat(fixtures::random_image(rng));
    test_labels.push_back(j < 10 ? 2 : j % 2);
  }
  const std::vector<int> one{2};
  EXPECT_DOUBLE_EQ(substitutability({fixtures::random_image(rng)}, one, test, test_labels, 0.5), 100.0 * 0.25 / 0.5);
  EXPECT_THROW(substitutability({}, {}, test, test_labels, 0.5), Error);
}

TEST(GradCos, SelfIsOneAndRangeHolds) {
  const auto m = fixtures::conv_classifier(4, 10);
  Rng rng(11);
  const Image a = fixtures::random_image(rng);
  EXPECT_NEAR(grad_cos(m, a, 1, a, 1), 1.0, 1e-12);
  for (int i = 0; i < 10; ++i) {
    const double v = grad_cos(m, fixtures::random_image(rng), i % 4, fixtures::random_image(rng), (i + 1) % 4);
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(GradCos, OppositeGradientsOnLinearModel) {
  // zero weights give uniform probabilities, so swapping the label of a
  // two-class model negates the cross-entropy gradient
  auto m = fixtures::linear_classifier(2, 1);
  m.network().parameters().setZero();
  Rng rng(12);
  const Image a = fixtures::random_image(rng);
  EXPECT_NEAR(grad_cos(m, a, 0, a, 1), -1.0, 1e-12);
}

TEST(GradCos, ZeroGradientIsAnError) {
  auto m = fixtures::linear_classifier(2, 1);
  m.network().parameters().setZero();
  m.network().parameters()[2 * kPixels] = 1000.0;  // class 0 bias saturates the softmax
  const Image a = Image::Constant(0.1);
  EXPECT_THROW(grad_cos(m, a, 0, a, 0), Error);
}

TEST(GradCos, ImageEqualToSinglePrototype) {
  const auto m = fixtures::conv_classifier(3, 13);
  Rng rng(14);
  std::vector<Image> imgs{fixtures::random_image(rng), fixtures::random_image(rng), fixtures::random_image(rng)};
  const auto set = single_prototype_set(3, imgs);
  EXPECT_NEAR(grad_cos_to_prototypes(m, imgs[1], 1, set), 1.0, 1e-12);
}

TEST(Evaluate, CoveredAndUncoveredRecords) {
  const int k = 3;
  const auto model = fixtures::conv_classifier(k, 15);
  Rng rng(16);
  std::vector<Autoencoder> aes{fixtures::random_autoencoder(3, 17), fixtures::random_autoencoder(3, 18),
                               fixtures::random_autoencoder(3, 19)};
  std::vector<LofModel> lofs;
  for (int c = 0; c < k; ++c) {
    Mat<double> ref(kPixels, 12);
    for (int j = 0; j < 12; ++j) ref.col(j) = flat(fixtures::random_image(rng));
    lofs.emplace_back(ref, kLofNeighbours);
  }
  std::vector<Image> pimgs{fixtures::random_image(rng), fixtures::random_image(rng), fixtures::random_image(rng)};
  const auto set = single_prototype_set(k, pimgs);
  EvaluationContext ctx{&model, &aes, &lofs, &set, {10, 1}, false};

  const Image query = fixtures::random_image(rng);
  const Image cf = fixtures::random_image(rng);
  const auto r = evaluate(ctx, "it", "minedit", query, 0, 2, cf);
  EXPECT_TRUE(r.covered);
  EXPECT_DOUBLE_EQ(r.l1, l1_distance(cf, query));
  EXPECT_DOUBLE_EQ(r.l2, l2_distance(cf, query));
  EXPECT_DOUBLE_EQ(r.im1, im1(cf, aes[2], aes[0]));
  EXPECT_DOUBLE_EQ(r.lof10, lof10_score(cf, lofs[2]));
  EXPECT_DOUBLE_EQ(r.grad_cos, grad_cos_to_prototypes(model, cf, 2, set));
  EXPECT_DOUBLE_EQ(r.mc_mean, mc_uncertainty(model, cf, 2, {10, 1}).mean);

  const auto miss = evaluate(ctx, "it", "revise", query, 0, 2, std::nullopt, "budget");
  EXPECT_FALSE(miss.covered);
  EXPECT_EQ(miss.reason, "budget");

  const auto back = record_from_json(to_json(r));
  EXPECT_EQ(to_csv_row(back), to_csv_row(r));
  auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  EXPECT_EQ(count(to_csv_row(r)), count(csv_header()));
  EXPECT_EQ(count(to_csv_row(miss)), count(csv_header()));

  ctx.binarize = true;
  const auto b = evaluate(ctx, "it", "ground_truth", query, 0, 2, cf);
  const Image bin = cf.unaryExpr([](double v) { return v > 0.0 ? 0.5 : -0.5; });
  EXPECT_DOUBLE_EQ(b.l1, l1_distance(bin, query));
}

TEST(FormatDouble, RoundTrips) {
  Rng rng(20);
  for (int i = 0; i < 200; ++i) {
    const double v = standard_normal(rng) * std::pow(10.0, static_cast<double>(uniform_index(rng, 20)) - 10.0);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}
