#pragma once

#include "cfbench/core.hpp"
#include "cfbench/ground_truth/rasterize.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace cfbench::ground_truth {

enum class Condition { Normal, MinEdit };

std::string to_string(Condition c);
Condition condition_from_string(const std::string& s);

/// Task sentence shown to participants for a given condition and class name.
std::string instruction_text(Condition c, const std::string& class_name);

inline constexpr int kPracticeItems = 3;

struct StudyItem {
  std::string item_id;
  Image image;
  int predicted_label = 0;
  int true_label = 0;
};

struct Study {
  std::vector<std::string> class_names;
  std::vector<StudyItem> items;
  std::vector<StudyItem> practice_pool;  // at least three, disjoint from items

  const StudyItem* find(const std::string& item_id) const;
  bool is_practice(const std::string& item_id) const;
  void validate() const;
};

struct AuditEntry {
  std::string item_id;
  int replaced_revision = 0;
  std::string timestamp;
};

struct Submission {
  std::string item_id;
  std::vector<Stroke> strokes;
  Image final_image;
  bool practice = false;  // stored but excluded from analysis
  bool protocol_warning = false;
  double max_client_difference = 0.0;
  int revision = 1;
  std::string timestamp;
};

struct EditSession {
  std::string session_id;
  std::string participant_id;
  Condition condition = Condition::Normal;
  std::uint64_t seed = 0;
  std::vector<std::string> order;  // practice items first
  std::size_t cursor = 0;          // index of the next item to present
  std::map<std::string, std::vector<Stroke>> stroke_log;
  std::map<std::string, Submission> submissions;
  std::vector<AuditEntry> audit;
  std::string started_at;
  bool ended = false;
};

/// Seed-deterministic order: three practice items drawn from the pool, then a
/// shuffle of the study items.
std::vector<std::string> session_order(const Study& study, std::uint64_t seed);

struct NextItem {
  std::string item_id;
  std::size_t position = 0;
  bool practice = false;
  const StudyItem* item = nullptr;
};

/// Lookup failures carry a machine-readable code for the HTTP layer.
class NotFound : public Error {
 public:
  NotFound(std::string code, const std::string& what) : Error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Request that is well-formed but not allowed in the session's state.
class Conflict : public Error {
 public:
  Conflict(std::string code, const std::string& what) : Error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

std::string iso8601_now();

inline constexpr double kClientTolerance = 1e-6;

/// Thread-safe session store. Each session has its own lock; the store lock
/// only guards the session table. When `log_dir` is set every event is
/// appended to <log_dir>/<session_id>.jsonl.
class SessionStore {
 public:
  using Clock = std::function<std::string()>;

  explicit SessionStore(Study study, std::string log_dir = "", Clock clock = iso8601_now);

  const Study& study() const { return study_; }

  EditSession start_session(const std::string& participant_id, Condition condition, std::uint64_t seed);
  /// Current item, or nullopt once every item has been submitted.
  std::optional<NextItem> next_item(const std::string& session_id) const;
  void append_strokes(const std::string& session_id, const std::string& item_id, const std::vector<Stroke>& strokes);
  /// Stores the server-side rasterization. Resubmitting an earlier item
  /// overwrites it and records an audit entry.
  Submission submit_final(const std::string& session_id, const std::string& item_id, const std::vector<Stroke>& strokes,
                          const std::optional<Image>& client_rendered);
  EditSession snapshot(const std::string& session_id) const;

  /// Non-practice final images for an item across all sessions.
  std::vector<Image> analysis_finals(const std::string& item_id) const;
  int protocol_warnings() const;

 private:
  struct Entry {
    mutable std::mutex mu;
    EditSession session;
  };
  std::shared_ptr<Entry> entry(const std::string& session_id) const;
  void log_event(const EditSession& s, nlohmann::json event) const;

  Study study_;
  std::string log_dir_;
  Clock clock_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::map<std::string, std::string> active_by_participant_;
  std::uint64_t counter_ = 0;
  std::uint64_t nonce_ = 0;
};

/// Final image encoded as 784 integers 0..255 (row-major).
nlohmann::json pixels_to_json(const Image& image);
Image pixels_from_json(const nlohmann::json& j);

struct CentroidExplanation {
  std::string item_id;
  Image image;
  int contributors = 0;
};

CentroidExplanation compute_centroid(const std::string& item_id, const std::vector<Image>& finals);

}  // namespace cfbench::ground_truth
