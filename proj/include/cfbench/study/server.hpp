#pragma once

#include "cfbench/ground_truth/session.hpp"

#include <json.hpp>

#include <string>

namespace httplib {
class Server;
}

namespace cfbench::study {

/// Item payload for the editor, or the end-of-study marker when `next` is empty.
nlohmann::json item_payload(const ground_truth::SessionStore& store, const ground_truth::EditSession& session,
                            const std::optional<ground_truth::NextItem>& next);

/// Installs the study endpoints:
///   GET  /healthz
///   POST /sessions                                {participant_id, condition, seed?}
///   GET  /sessions/{id}/items/next
///   POST /sessions/{id}/items/{item_id}/strokes   {strokes: [...]}
///   POST /sessions/{id}/items/{item_id}/submit    {strokes: [...], final_pixels?: [784]}
/// Errors are JSON {"error": {"code", "message"}} with 400, 404 or 409.
/// `static_dir`, when non-empty, is served at /.
void register_routes(httplib::Server& server, ground_truth::SessionStore& store, const std::string& static_dir = "");

/// Blocking; returns when the server stops.
void serve_api(ground_truth::SessionStore& store, const std::string& host, int port,
               const std::string& static_dir = "");

}  // namespace cfbench::study
