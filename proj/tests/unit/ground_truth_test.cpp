#include "cfbench/ground_truth/oracle.hpp"
#include "cfbench/ground_truth/rasterize.hpp"
#include "cfbench/ground_truth/session.hpp"
#include "cfbench/io.hpp"

#include "../support/fixtures.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace cfbench;
using namespace cfbench::ground_truth;

namespace {

// Fractional-coverage downsample computed in floating point over the
// painted canvas, independent of the integer-weight implementation.
Image reference_raster(const Image& original, const std::vector<Stroke>& strokes) {
  std::vector<int> layer(static_cast<std::size_t>(kCanvasSide) * kCanvasSide, 0);
  bool any = false;
  for (const Stroke& s : strokes) {
    if (s.tool == Tool::Reset) {
      std::fill(layer.begin(), layer.end(), 0);
      any = false;
      continue;
    }
    any = true;
    const int v = s.tool == Tool::Draw ? 1 : -1;
    for (int y = 0; y < kCanvasSide; ++y)
      for (int x = 0; x < kCanvasSide; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        bool hit = false;
        for (std::size_t i = 0; i < s.points.size() && !hit; ++i) {
          const Point a = s.points[i];
          const Point b = s.points.size() == 1 ? a : s.points[std::min(i + 1, s.points.size() - 1)];
          if (s.points.size() > 1 && i + 1 == s.points.size()) break;
          // closest point on segment ab by projection
          const double vx = b.x - a.x, vy = b.y - a.y;
          const double l2 = vx * vx + vy * vy;
          double t = l2 == 0.0 ? 0.0 : ((px - a.x) * vx + (py - a.y) * vy) / l2;
          t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
          const double dx = a.x + t * vx - px, dy = a.y + t * vy - py;
          hit = std::hypot(dx, dy) <= s.radius;
        }
        if (hit) layer[static_cast<std::size_t>(y) * kCanvasSide + static_cast<std::size_t>(x)] = v;
      }
  }
  if (!any) return original;
  const double cell = static_cast<double>(kCanvasSide) / kImageSide;
  Image out;
  for (int r = 0; r < kImageSide; ++r)
    for (int c = 0; c < kImageSide; ++c) {
      const double y0 = r * cell, y1 = (r + 1) * cell, x0 = c * cell, x1 = (c + 1) * cell;
      double acc = 0.0, painted = 0.0;
      for (int y = static_cast<int>(y0); y < static_cast<int>(std::ceil(y1)); ++y)
        for (int x = static_cast<int>(x0); x < static_cast<int>(std::ceil(x1)); ++x) {
          const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
          const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
          const int v = layer[static_cast<std::size_t>(y) * kCanvasSide + static_cast<std::size_t>(x)];
          if (v == 0 || wx <= 0.0 || wy <= 0.0) continue;
          painted += wx * wy;
          acc += wx * wy * 0.5 * v;
        }
      out(r, c) = painted == 0.0 ? original(r, c) : (acc + original(r, c) * (cell * cell - painted)) / (cell * cell);
    }
  return out;
}

Stroke stroke(Tool tool, std::vector<Point> pts, double radius = kDefaultPenRadius) {
  Stroke s;
  s.tool = tool;
  s.points = std::move(pts);
  s.radius = radius;
  return s;
}

Study make_study(int items, int practice, std::uint64_t seed = 1) {
  Rng rng(seed);
  Study st;
  st.class_names = fixtures::class_names(10);
  for (int i = 0; i < items; ++i)
    st.items.push_back({"item" + std::to_string(i), fixtures::random_image(rng), i % 10, (i + 3) % 10});
  for (int i = 0; i < practice; ++i)
    st.practice_pool.push_back({"practice" + std::to_string(i), fixtures::random_image(rng), 1, 2});
  return st;
}

}  // namespace

TEST(Rasterize, EmptyStrokeListIsIdentity) {
  Rng rng(1);
  const Image img = fixtures::random_image(rng);
  EXPECT_TRUE(rasterize_edits(img, {}) == img);
}

TEST(Rasterize, ResetRestoresOriginal) {
  Rng rng(2);
  const Image img = fixtures::random_image(rng);
  const std::vector<Stroke> s{stroke(Tool::Draw, {{100, 100}, {300, 400}}), stroke(Tool::Erase, {{50, 50}}),
                              stroke(Tool::Reset, {})};
  EXPECT_TRUE(rasterize_edits(img, s) == img);
}

TEST(Rasterize, FullCanvasDrawSaturates) {
  Rng rng(3);
  const Image img = fixtures::random_image(rng);
  const auto out = rasterize_edits(img, {stroke(Tool::Draw, {{300, 300}}, 500.0)});
  EXPECT_EQ(out.minCoeff(), 0.5);
  EXPECT_EQ(out.maxCoeff(), 0.5);
  const auto erased = rasterize_edits(img, {stroke(Tool::Erase, {{0, 0}, {600, 600}}, 900.0)});
  EXPECT_EQ(erased.maxCoeff(), -0.5);
}

TEST(Rasterize, MatchesFloatingPointCoverageOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 4; ++trial) {
    const Image img = fixtures::random_image(rng);
    std::vector<Stroke> strokes;
    const int n = 1 + static_cast<int>(uniform_index(rng, 3));
    for (int k = 0; k < n; ++k) {
      std::vector<Point> pts;
      const int np = 1 + static_cast<int>(uniform_index(rng, 4));
      for (int p = 0; p < np; ++p) pts.push_back({600.0 * uniform01(rng), 600.0 * uniform01(rng)});
      strokes.push_back(stroke(k % 2 == 0 ? Tool::Draw : Tool::Erase, pts, 5.0 + 30.0 * uniform01(rng)));
    }
    const Image got = rasterize_edits(img, strokes);
    const Image want = reference_raster(img, strokes);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12) << "trial " << trial;
    EXPECT_TRUE(in_pixel_range(got));
  }
}

TEST(Rasterize, UntouchedPixelsUnchanged) {
  Rng rng(5);
  const Image img = fixtures::random_image(rng);
  const auto out = rasterize_edits(img, {stroke(Tool::Draw, {{10, 10}}, 3.0)});
  EXPECT_NE(out(0, 0), img(0, 0));
  EXPECT_EQ(out(27, 27), img(27, 27));
  EXPECT_EQ(out(10, 10), img(10, 10));
}

TEST(Stroke, ValidationAndJson) {
  EXPECT_THROW(stroke(Tool::Draw, {{601, 0}}).validate(), Error);
  EXPECT_THROW(stroke(Tool::Draw, {{1, 1}}, 0.0).validate(), Error);
  EXPECT_THROW(stroke(Tool::Draw, {}).validate(), Error);
  EXPECT_NO_THROW(stroke(Tool::Reset, {}).validate());
  const Stroke s = stroke(Tool::Erase, {{1, 2}, {3, 4}}, 7.5);
  const Stroke back = stroke_from_json(to_json(s));
  EXPECT_EQ(back.tool, Tool::Erase);
  ASSERT_EQ(back.points.size(), 2u);
  EXPECT_EQ(back.points[1].y, 4.0);
  EXPECT_EQ(back.radius, 7.5);
  EXPECT_THROW(stroke_from_json({{"tool", "PAINT"}}), Error);
}

TEST(Session, OrderHasPracticeThenPermutedItems) {
  const Study st = make_study(50, 5);
  const auto order = session_order(st, 11);
  ASSERT_EQ(order.size(), 53u);
  for (int i = 0; i < kPracticeItems; ++i) EXPECT_TRUE(st.is_practice(order[static_cast<std::size_t>(i)]));
  std::set<std::string> rest(order.begin() + 3, order.end());
  EXPECT_EQ(rest.size(), 50u);
  for (const auto& it : st.items) EXPECT_TRUE(rest.count(it.item_id));
  EXPECT_EQ(session_order(st, 11), order);
  EXPECT_NE(session_order(st, 12), order);
}

TEST(Session, InstructionTexts) {
  EXPECT_NE(instruction_text(Condition::MinEdit, "five").find("smallest possible changes needed"), std::string::npos);
  EXPECT_NE(instruction_text(Condition::Normal, "five")
                .find("make changes or edits to the image, to help the program correctly label the image"),
            std::string::npos);
  EXPECT_EQ(condition_from_string("MIN_EDIT"), Condition::MinEdit);
  EXPECT_THROW(condition_from_string("FAST"), Error);
}

TEST(Session, StudyValidation) {
  EXPECT_THROW(make_study(5, 2).validate(), ConfigError);
  Study dup = make_study(5, 3);
  dup.items[1].item_id = dup.items[0].item_id;
  EXPECT_THROW(dup.validate(), ConfigError);
}

TEST(Session, SubmitAdvancesCursorAndEnds) {
  const auto dir = fixtures::temp_dir("session");
  SessionStore store(make_study(4, 3), dir.string());
  const auto s = store.start_session("p1", Condition::MinEdit, 3);
  EXPECT_THROW(store.start_session("p1", Condition::Normal, 4), Conflict);
  std::size_t expected = 0;
  while (auto next = store.next_item(s.session_id)) {
    EXPECT_EQ(next->position, expected);
    EXPECT_EQ(next->practice, expected < 3);
    const auto sub = store.submit_final(s.session_id, next->item_id, {stroke(Tool::Draw, {{300, 300}}, 20)}, {});
    EXPECT_EQ(sub.practice, expected < 3);
    EXPECT_EQ(sub.revision, 1);
    ++expected;
  }
  EXPECT_EQ(expected, 7u);
  EXPECT_TRUE(store.snapshot(s.session_id).ended);
  // the participant may start again once the previous session has ended
  EXPECT_NO_THROW(store.start_session("p1", Condition::Normal, 5));

  std::ifstream log(dir / (s.session_id + ".jsonl"));
  std::string line, last;
  int lines = 0;
  while (std::getline(log, line)) {
    ++lines;
    last = line;
  }
  EXPECT_EQ(lines, 1 + 7 + 1);
  EXPECT_NE(last.find("session_end"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Session, ResubmissionOverwritesWithAudit) {
  SessionStore store(make_study(4, 3));
  const auto s = store.start_session("p2", Condition::Normal, 1);
  const auto first = store.next_item(s.session_id)->item_id;
  store.submit_final(s.session_id, first, {stroke(Tool::Draw, {{100, 100}})}, {});
  const auto again = store.submit_final(s.session_id, first, {stroke(Tool::Erase, {{100, 100}})}, {});
  EXPECT_EQ(again.revision, 2);
  const auto snap = store.snapshot(s.session_id);
  ASSERT_EQ(snap.audit.size(), 1u);
  EXPECT_EQ(snap.audit[0].item_id, first);
  EXPECT_EQ(snap.audit[0].replaced_revision, 1);
  EXPECT_EQ(snap.cursor, 1u);
  EXPECT_TRUE(snap.submissions.at(first).final_image ==
              rasterize_edits(store.study().find(first)->image, {stroke(Tool::Erase, {{100, 100}})}));
}

TEST(Session, ClientMismatchFlagged) {
  SessionStore store(make_study(4, 3));
  const auto s = store.start_session("p3", Condition::Normal, 1);
  const auto id = store.next_item(s.session_id)->item_id;
  const std::vector<Stroke> strokes{stroke(Tool::Draw, {{200, 200}, {250, 260}})};
  const Image server = rasterize_edits(store.study().find(id)->image, strokes);
  const auto ok = store.submit_final(s.session_id, id, strokes, server);
  EXPECT_FALSE(ok.protocol_warning);
  Image off = server;
  off(0, 0) += 0.01;
  const auto bad = store.submit_final(s.session_id, id, strokes, off);
  EXPECT_TRUE(bad.protocol_warning);
  EXPECT_NEAR(bad.max_client_difference, 0.01, 1e-12);
  EXPECT_EQ(store.protocol_warnings(), 1);
}

TEST(Session, ErrorsCarryCodes) {
  SessionStore store(make_study(4, 3));
  try {
    store.next_item("missing");
    FAIL();
  } catch (const NotFound& e) {
    EXPECT_EQ(e.code(), "unknown_session");
  }
  const auto s = store.start_session("p4", Condition::Normal, 1);
  try {
    store.submit_final(s.session_id, "nope", {}, {});
    FAIL();
  } catch (const NotFound& e) {
    EXPECT_EQ(e.code(), "unknown_item");
  }
  const auto order = store.snapshot(s.session_id).order;
  try {
    store.submit_final(s.session_id, order.back(), {}, {});
    FAIL();
  } catch (const Conflict& e) {
    EXPECT_EQ(e.code(), "item_not_current");
  }
}

TEST(Session, PracticeExcludedFromAnalysis) {
  SessionStore store(make_study(4, 3));
  for (const char* pid : {"a", "b"}) {
    const auto s = store.start_session(pid, Condition::MinEdit, 7);
    while (auto next = store.next_item(s.session_id))
      store.submit_final(s.session_id, next->item_id, {stroke(Tool::Draw, {{300, 300}})}, {});
  }
  EXPECT_EQ(store.analysis_finals("item0").size(), 2u);
  const auto order = session_order(store.study(), 7);
  EXPECT_TRUE(store.analysis_finals(order[0]).empty());
}

TEST(Session, DistinctParticipantsGetIndependentSessions) {
  SessionStore store(make_study(10, 3));
  const auto a = store.start_session("x", Condition::Normal, 1);
  const auto b = store.start_session("y", Condition::Normal, 2);
  EXPECT_NE(a.session_id, b.session_id);
  EXPECT_NE(a.order, b.order);
  store.submit_final(a.session_id, a.order[0], {}, {});
  EXPECT_EQ(store.snapshot(b.session_id).cursor, 0u);
}

TEST(Pixels, JsonRoundTripOnGrid) {
  Image img;
  for (int i = 0; i < kPixels; ++i) img.data()[i] = (i % 256) / 255.0 - 0.5;
  EXPECT_LT((pixels_from_json(pixels_to_json(img)) - img).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(pixels_from_json(nlohmann::json::array({1, 2, 3})), Error);
}

TEST(Centroid, Cases) {
  Rng rng(6);
  const Image a = fixtures::random_image(rng), b = fixtures::random_image(rng);
  EXPECT_LT((compute_centroid("i", {a, a, a}).image - a).cwiseAbs().maxCoeff(), 1e-15);
  const auto two = compute_centroid("i", {a, b});
  for (int i = 0; i < kPixels; ++i) EXPECT_DOUBLE_EQ(two.image.data()[i], (a.data()[i] + b.data()[i]) / 2.0);
  std::vector<Image> many;
  for (int k = 0; k < 42; ++k) many.push_back(fixtures::random_image(rng));
  const auto c = compute_centroid("i", many);
  EXPECT_EQ(c.contributors, 42);
  for (int i = 0; i < kPixels; ++i) {
    double s = 0.0;
    for (const auto& m : many) s += m.data()[i];
    EXPECT_NEAR(c.image.data()[i], s / 42.0, 1e-12);
  }
  EXPECT_THROW(compute_centroid("i", {}), Error);
}

namespace {

struct OracleFixture {
  cf::Classifier model = fixtures::linear_classifier(3, 77, 0.05);
  prototypes::PrototypeSet set;

  OracleFixture() {
    set.dataset = "toy";
    set.per_class = 2;
    Rng rng(78);
    for (int c = 0; c < 3; ++c) {
      prototypes::ClassPrototypes cp;
      cp.label = c;
      while (cp.images.size() < 2) {
        const Image img = fixtures::random_image(rng);
        if (model.predict(flat(img)) == c) {
          cp.images.push_back(img);
          cp.train_indices.push_back(cp.train_indices.size());
        }
      }
      set.classes.push_back(cp);
    }
  }
};

}  // namespace

TEST(Oracle, ReturnsMinimalValidBlend) {
  OracleFixture f;
  Rng rng(79);
  for (int trial = 0; trial < 10; ++trial) {
    const Image q = fixtures::random_image(rng);
    const int pred = f.model.predict(flat(q));
    const int truth = (pred + 1 + trial % 2) % 3;
    const auto item = fixtures::make_item(q, pred, truth);
    const auto e = synthetic_oracle_edit(item, f.model, f.set, 1e-3);
    ASSERT_FALSE(e.degenerate);
    const auto& protos = f.set.of(truth).images;
    // nearest true-class prototype
    double best = INFINITY;
    std::size_t best_rank = 0;
    for (std::size_t r = 0; r < protos.size(); ++r)
      if ((protos[r] - q).norm() < best) {
        best = (protos[r] - q).norm();
        best_rank = r;
      }
    EXPECT_EQ(e.prototype_rank, best_rank);
    const Image& p = protos[best_rank];
    auto blend = [&](double a) { return Image((1.0 - a) * q + a * p); };
    EXPECT_FALSE(cf::check_validity(f.model, blend(0.0), truth));
    EXPECT_TRUE(cf::check_validity(f.model, blend(1.0), truth));
    EXPECT_TRUE(cf::check_validity(f.model, e.image, truth));
    EXPECT_TRUE((e.image - blend(e.alpha)).cwiseAbs().maxCoeff() < 1e-12);
    EXPECT_FALSE(cf::check_validity(f.model, blend(std::max(0.0, e.alpha - 2e-3)), truth));
    EXPECT_GT(e.alpha, 0.0);
    EXPECT_LE(e.alpha, 1.0);
  }
}

TEST(Oracle, DegeneratePrototypeFlagged) {
  OracleFixture f;
  Rng rng(80);
  const Image q = fixtures::random_image(rng);
  const int pred = f.model.predict(flat(q));
  const int truth = (pred + 1) % 3;
  // every true-class prototype replaced by one the model assigns elsewhere
  for (auto& img : f.set.classes[static_cast<std::size_t>(truth)].images) img = q;
  const auto e = synthetic_oracle_edit(fixtures::make_item(q, pred, truth), f.model, f.set);
  EXPECT_TRUE(e.degenerate);
}
