#include "cfbench/ground_truth/rasterize.hpp"
#include "cfbench/study/server.hpp"

#include "../support/fixtures.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <thread>

using namespace cfbench;
using nlohmann::json;
namespace gt = cfbench::ground_truth;

namespace {

gt::Study small_study() {
  Rng rng(1);
  gt::Study st;
  st.class_names = fixtures::class_names(10);
  for (int i = 0; i < 5; ++i) st.items.push_back({"item" + std::to_string(i), fixtures::random_image(rng), 3, 8});
  for (int i = 0; i < 3; ++i) st.practice_pool.push_back({"practice" + std::to_string(i), fixtures::random_image(rng), 1, 7});
  return st;
}

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    study::register_routes(server_, store_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  json post(const std::string& path, const std::string& body, int expect) {
    auto r = client_->Post(path, body, "application/json");
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    return json::parse(r->body);
  }
  json get(const std::string& path, int expect) {
    auto r = client_->Get(path);
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    return json::parse(r->body);
  }

  gt::SessionStore store_{small_study()};
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

json stroke_json(double x, double y) {
  return {{"tool", "DRAW"}, {"points", json::array({json::array({x, y})})}, {"radius", 15}};
}

}  // namespace

TEST_F(ServerTest, Health) { EXPECT_EQ(get("/healthz", 200)["status"], "ok"); }

TEST_F(ServerTest, FullSessionWalkthrough) {
  const json s = post("/sessions", R"({"participant_id":"p1","condition":"MIN_EDIT","seed":5})", 201);
  const std::string sid = s["session_id"];
  EXPECT_EQ(s["total"], 8);
  EXPECT_NE(s["item"]["instruction_text"].get<std::string>().find("smallest possible changes"), std::string::npos);
  EXPECT_EQ(s["item"]["pixels"].size(), 784u);

  int analysed = 0;
  for (int pos = 0; pos < 8; ++pos) {
    const json item = get("/sessions/" + sid + "/items/next", 200);
    ASSERT_FALSE(item["done"].get<bool>());
    EXPECT_EQ(item["position"], pos);
    EXPECT_EQ(item["practice"], pos < 3);
    const std::string iid = item["item_id"];
    const json strokes = {{"strokes", {stroke_json(300, 300)}}};
    EXPECT_EQ(post("/sessions/" + sid + "/items/" + iid + "/strokes", strokes.dump(), 200)["accepted"], 1);
    // client replay sent back as fractional 0..255 values
    const Image server_final = gt::rasterize_edits(store_.study().find(iid)->image,
                                                   {gt::stroke_from_json(stroke_json(300, 300))});
    json pixels = json::array();
    for (int i = 0; i < kPixels; ++i) pixels.push_back((server_final.data()[i] + 0.5) * 255.0);
    json body = strokes;
    body["final_pixels"] = pixels;
    const json sub = post("/sessions/" + sid + "/items/" + iid + "/submit", body.dump(), 200);
    EXPECT_EQ(sub["revision"], 1);
    EXPECT_FALSE(sub["protocol_warning"].get<bool>());
    if (!sub["practice"].get<bool>()) ++analysed;
  }
  EXPECT_EQ(analysed, 5);
  const json end = get("/sessions/" + sid + "/items/next", 200);
  EXPECT_TRUE(end["done"].get<bool>());
  EXPECT_TRUE(end["end_of_study"].get<bool>());
}

TEST_F(ServerTest, NotFoundCodes) {
  EXPECT_EQ(get("/sessions/nope/items/next", 404)["error"]["code"], "unknown_session");
  const std::string sid = post("/sessions", R"({"participant_id":"p2","condition":"NORMAL"})", 201)["session_id"];
  EXPECT_EQ(post("/sessions/" + sid + "/items/ghost/submit", R"({"strokes":[]})", 404)["error"]["code"],
            "unknown_item");
  EXPECT_EQ(get("/nowhere", 404)["error"]["code"], "not_found");
}

TEST_F(ServerTest, BadRequests) {
  EXPECT_EQ(post("/sessions", "{not json", 400)["error"]["code"], "malformed_body");
  EXPECT_EQ(post("/sessions", R"({"participant_id":"p"})", 400)["error"]["code"], "malformed_body");
  EXPECT_EQ(post("/sessions", R"({"participant_id":"p","condition":"FAST"})", 400)["error"]["code"],
            "unknown_condition");
  const json s = post("/sessions", R"({"participant_id":"p3","condition":"NORMAL"})", 201);
  const std::string path = "/sessions/" + s["session_id"].get<std::string>() + "/items/" +
                           s["item"]["item_id"].get<std::string>();
  EXPECT_EQ(post(path + "/strokes", R"({"strokes":[{"tool":"DRAW","points":[[-4,1]]}]})", 400)["error"]["code"],
            "malformed_stroke");
  EXPECT_EQ(post(path + "/strokes", R"({"strokes":[{"tool":"SPRAY"}]})", 400)["error"]["code"], "malformed_stroke");
  EXPECT_EQ(post(path + "/submit", R"({"strokes":[],"final_pixels":[1,2]})", 400)["error"]["code"],
            "malformed_pixels");
}

TEST_F(ServerTest, Conflicts) {
  const json s = post("/sessions", R"({"participant_id":"p4","condition":"NORMAL","seed":1})", 201);
  EXPECT_EQ(post("/sessions", R"({"participant_id":"p4","condition":"NORMAL"})", 409)["error"]["code"],
            "duplicate_session");
  const auto order = store_.snapshot(s["session_id"]).order;
  const std::string path = "/sessions/" + s["session_id"].get<std::string>() + "/items/" + order.back() + "/submit";
  EXPECT_EQ(post(path, R"({"strokes":[]})", 409)["error"]["code"], "item_not_current");
}

TEST_F(ServerTest, ResubmitOverwrites) {
  const json s = post("/sessions", R"({"participant_id":"p5","condition":"NORMAL"})", 201);
  const std::string path = "/sessions/" + s["session_id"].get<std::string>() + "/items/" +
                           s["item"]["item_id"].get<std::string>() + "/submit";
  post(path, json{{"strokes", {stroke_json(100, 100)}}}.dump(), 200);
  EXPECT_EQ(post(path, json{{"strokes", {stroke_json(400, 400)}}}.dump(), 200)["revision"], 2);
  EXPECT_EQ(store_.snapshot(s["session_id"]).audit.size(), 1u);
}
