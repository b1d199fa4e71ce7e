#include "cfbench/study/server.hpp"

#include "cfbench/hash.hpp"

#include <httplib.h>

namespace cfbench::study {

using nlohmann::json;
namespace gt = ground_truth;

namespace {

class BadRequest : public Error {
 public:
  BadRequest(std::string code, const std::string& what) : Error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw BadRequest("malformed_body", "request body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw BadRequest("malformed_body", std::string("request body is not valid JSON: ") + e.what());
  }
}

std::vector<gt::Stroke> parse_strokes(const json& body) {
  if (!body.contains("strokes") || !body.at("strokes").is_array())
    throw BadRequest("malformed_body", "expected a 'strokes' array");
  std::vector<gt::Stroke> out;
  try {
    for (const auto& s : body.at("strokes")) out.push_back(gt::stroke_from_json(s));
  } catch (const json::exception& e) {
    throw BadRequest("malformed_stroke", e.what());
  } catch (const Error& e) {
    throw BadRequest("malformed_stroke", e.what());
  }
  return out;
}

// Maps library exceptions onto HTTP statuses.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const BadRequest& e) {
      send_error(res, 400, e.code(), e.what());
    } catch (const gt::NotFound& e) {
      send_error(res, 404, e.code(), e.what());
    } catch (const gt::Conflict& e) {
      send_error(res, 409, e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "malformed_body", e.what());
    } catch (const Error& e) {
      send_error(res, 400, "invalid_request", e.what());
    }
  };
}

std::uint64_t default_seed(const std::string& participant_id) {
  return std::stoull(sha256_hex(participant_id).substr(0, 15), nullptr, 16);
}

}  // namespace

json item_payload(const gt::SessionStore& store, const gt::EditSession& session,
                  const std::optional<gt::NextItem>& next) {
  if (!next) return {{"session_id", session.session_id}, {"done", true}, {"end_of_study", true}};
  const auto& names = store.study().class_names;
  const gt::StudyItem& item = *next->item;
  return {{"session_id", session.session_id},
          {"done", false},
          {"item_id", item.item_id},
          {"position", next->position},
          {"total", session.order.size()},
          {"practice", next->practice},
          {"pixels", gt::pixels_to_json(item.image)},
          {"predicted_label", item.predicted_label},
          {"true_label", item.true_label},
          {"predicted_label_name", names.at(static_cast<std::size_t>(item.predicted_label))},
          {"true_label_name", names.at(static_cast<std::size_t>(item.true_label))},
          {"instruction_text", gt::instruction_text(session.condition, names.at(static_cast<std::size_t>(item.true_label)))}};
}

void register_routes(httplib::Server& server, gt::SessionStore& store, const std::string& static_dir) {
  server.Get("/healthz", guarded([](const httplib::Request&, httplib::Response& res) {
               send(res, 200, {{"status", "ok"}});
             }));

  server.Post("/sessions", guarded([&store](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                if (!body.contains("participant_id") || !body.at("participant_id").is_string())
                  throw BadRequest("malformed_body", "participant_id (string) is required");
                if (!body.contains("condition") || !body.at("condition").is_string())
                  throw BadRequest("malformed_body", "condition (NORMAL or MIN_EDIT) is required");
                gt::Condition condition;
                try {
                  condition = gt::condition_from_string(body.at("condition").get<std::string>());
                } catch (const Error& e) {
                  throw BadRequest("unknown_condition", e.what());
                }
                const auto participant = body.at("participant_id").get<std::string>();
                const std::uint64_t seed =
                    body.contains("seed") ? body.at("seed").get<std::uint64_t>() : default_seed(participant);
                const auto s = store.start_session(participant, condition, seed);
                json out = {{"session_id", s.session_id},
                            {"participant_id", s.participant_id},
                            {"condition", gt::to_string(s.condition)},
                            {"total", s.order.size()},
                            {"practice_items", gt::kPracticeItems},
                            {"item", item_payload(store, s, store.next_item(s.session_id))}};
                send(res, 201, out);
              }));

  server.Get("/sessions/:id/items/next", guarded([&store](const httplib::Request& req, httplib::Response& res) {
               const auto& id = req.path_params.at("id");
               const auto next = store.next_item(id);
               send(res, 200, item_payload(store, store.snapshot(id), next));
             }));

  server.Post("/sessions/:id/items/:item/strokes",
              guarded([&store](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                const auto strokes = parse_strokes(body);
                store.append_strokes(req.path_params.at("id"), req.path_params.at("item"), strokes);
                send(res, 200, {{"accepted", strokes.size()}});
              }));

  server.Post("/sessions/:id/items/:item/submit",
              guarded([&store](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                const auto strokes = parse_strokes(body);
                std::optional<Image> client;
                if (body.contains("final_pixels") && !body.at("final_pixels").is_null()) {
                  try {
                    client = gt::pixels_from_json(body.at("final_pixels"));
                  } catch (const Error& e) {
                    throw BadRequest("malformed_pixels", e.what());
                  }
                }
                const auto& id = req.path_params.at("id");
                const auto sub = store.submit_final(id, req.path_params.at("item"), strokes, client);
                json out = {{"item_id", sub.item_id},
                            {"revision", sub.revision},
                            {"practice", sub.practice},
                            {"protocol_warning", sub.protocol_warning},
                            {"max_client_difference", sub.max_client_difference},
                            {"final_pixels", gt::pixels_to_json(sub.final_image)}};
                send(res, 200, out);
              }));

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      const std::string code = res.status == 404 ? "not_found" : "http_" + std::to_string(res.status);
      send_error(res, res.status, code, "no such endpoint");
    }
  });

  if (!static_dir.empty() && !server.set_mount_point("/", static_dir))
    throw Error("cannot serve static files from " + static_dir);
}

void serve_api(gt::SessionStore& store, const std::string& host, int port, const std::string& static_dir) {
  httplib::Server server;
  register_routes(server, store, static_dir);
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace cfbench::study
