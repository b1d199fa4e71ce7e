#include "cfbench/ground_truth/session.hpp"

#include "cfbench/hash.hpp"
#include "cfbench/rng.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

namespace cfbench::ground_truth {

std::string to_string(Condition c) { return c == Condition::Normal ? "NORMAL" : "MIN_EDIT"; }

Condition condition_from_string(const std::string& s) {
  if (s == "NORMAL") return Condition::Normal;
  if (s == "MIN_EDIT") return Condition::MinEdit;
  throw Error("unknown condition '" + s + "' (expected NORMAL or MIN_EDIT)");
}

std::string instruction_text(Condition c, const std::string& class_name) {
  if (c == Condition::Normal)
    return "Your task is to make changes or edits to the image, to help the program correctly label the image as a " +
           class_name + ".";
  return "Your task is to make the smallest possible changes needed, to help the program correctly label the image "
         "as a " +
         class_name + ".";
}

const StudyItem* Study::find(const std::string& item_id) const {
  for (const auto& it : items)
    if (it.item_id == item_id) return &it;
  for (const auto& it : practice_pool)
    if (it.item_id == item_id) return &it;
  return nullptr;
}

bool Study::is_practice(const std::string& item_id) const {
  for (const auto& it : practice_pool)
    if (it.item_id == item_id) return true;
  return false;
}

void Study::validate() const {
  if (practice_pool.size() < static_cast<std::size_t>(kPracticeItems))
    throw ConfigError("study: practice pool needs at least three items");
  std::set<std::string> ids;
  for (const auto* list : {&items, &practice_pool})
    for (const auto& it : *list) {
      if (!ids.insert(it.item_id).second) throw ConfigError("study: duplicate item id " + it.item_id);
      if (it.true_label < 0 || it.true_label >= static_cast<int>(class_names.size()))
        throw ConfigError("study: item " + it.item_id + " has an unknown label");
    }
}

std::vector<std::string> session_order(const Study& study, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> order;
  const auto practice = permutation(study.practice_pool.size(), rng);
  for (int i = 0; i < kPracticeItems; ++i) order.push_back(study.practice_pool[practice[static_cast<std::size_t>(i)]].item_id);
  for (std::size_t j : permutation(study.items.size(), rng)) order.push_back(study.items[j].item_id);
  return order;
}

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  const std::size_t n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof buf - n, ".%03dZ", static_cast<int>(ms));
  return buf;
}

nlohmann::json pixels_to_json(const Image& image) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < kPixels; ++i) {
    const double v = std::clamp((image.data()[i] - kPixelMin) * 255.0, 0.0, 255.0);
    a.push_back(static_cast<int>(std::lround(v)));
  }
  return a;
}

Image pixels_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(kPixels))
    throw Error("pixels: expected an array of 784 values on the 0..255 scale");
  Image out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error("pixels: non-numeric value at index " + std::to_string(i));
    const double v = j[i].get<double>();
    if (!(v >= 0.0 && v <= 255.0)) throw Error("pixels: value out of 0..255 at index " + std::to_string(i));
    out.data()[i] = v / 255.0 + kPixelMin;
  }
  return out;
}

SessionStore::SessionStore(Study study, std::string log_dir, Clock clock)
    : study_(std::move(study)), log_dir_(std::move(log_dir)), clock_(std::move(clock)) {
  study_.validate();
  if (!log_dir_.empty()) std::filesystem::create_directories(log_dir_);
  nonce_ = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
}

std::shared_ptr<SessionStore::Entry> SessionStore::entry(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFound("unknown_session", "no session with id '" + session_id + "'");
  return it->second;
}

void SessionStore::log_event(const EditSession& s, nlohmann::json event) const {
  if (log_dir_.empty()) return;
  event["session_id"] = s.session_id;
  if (!event.contains("timestamp")) event["timestamp"] = clock_();
  std::ofstream out(std::filesystem::path(log_dir_) / (s.session_id + ".jsonl"), std::ios::app);
  if (!out) throw Error("cannot append to the log of session " + s.session_id);
  out << event.dump() << '\n';
}

EditSession SessionStore::start_session(const std::string& participant_id, Condition condition, std::uint64_t seed) {
  if (participant_id.empty()) throw Error("participant id must not be empty");
  auto e = std::make_shared<Entry>();
  {
    std::lock_guard lock(mu_);
    const auto active = active_by_participant_.find(participant_id);
    if (active != active_by_participant_.end()) {
      const auto& other = sessions_.at(active->second);
      std::lock_guard other_lock(other->mu);
      if (!other->session.ended)
        throw Conflict("duplicate_session", "participant '" + participant_id + "' already has an active session");
    }
    EditSession& s = e->session;
    s.session_id = sha256_hex(participant_id + "\n" + std::to_string(seed) + "\n" + std::to_string(counter_++) + "\n" +
                              std::to_string(nonce_))
                       .substr(0, 24);
    s.participant_id = participant_id;
    s.condition = condition;
    s.seed = seed;
    s.order = session_order(study_, seed);
    s.started_at = clock_();
    sessions_[s.session_id] = e;
    active_by_participant_[participant_id] = s.session_id;
  }
  std::lock_guard lock(e->mu);
  const EditSession& s = e->session;
  log_event(s, {{"event", "session_start"},
                {"timestamp", s.started_at},
                {"participant_id", s.participant_id},
                {"condition", to_string(s.condition)},
                {"seed", s.seed},
                {"order", s.order}});
  return s;
}

std::optional<NextItem> SessionStore::next_item(const std::string& session_id) const {
  const auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  const EditSession& s = e->session;
  if (s.cursor >= s.order.size()) return std::nullopt;
  NextItem n;
  n.item_id = s.order[s.cursor];
  n.position = s.cursor;
  n.practice = s.cursor < static_cast<std::size_t>(kPracticeItems);
  n.item = study_.find(n.item_id);
  return n;
}

namespace {

void check_item_in_session(const EditSession& s, const std::string& item_id) {
  if (std::find(s.order.begin(), s.order.end(), item_id) == s.order.end())
    throw NotFound("unknown_item", "item '" + item_id + "' is not part of session " + s.session_id);
}

}  // namespace

void SessionStore::append_strokes(const std::string& session_id, const std::string& item_id,
                                  const std::vector<Stroke>& strokes) {
  for (const Stroke& st : strokes) st.validate();
  const auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  EditSession& s = e->session;
  check_item_in_session(s, item_id);
  auto& log = s.stroke_log[item_id];
  for (const Stroke& st : strokes) {
    log.push_back(st);
    log_event(s, {{"event", "stroke"}, {"item_id", item_id}, {"stroke", to_json(st)}});
  }
}

Submission SessionStore::submit_final(const std::string& session_id, const std::string& item_id,
                                      const std::vector<Stroke>& strokes, const std::optional<Image>& client_rendered) {
  for (const Stroke& st : strokes) st.validate();
  const auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  EditSession& s = e->session;
  check_item_in_session(s, item_id);
  const auto pos = static_cast<std::size_t>(std::find(s.order.begin(), s.order.end(), item_id) - s.order.begin());
  if (pos > s.cursor)
    throw Conflict("item_not_current", "item '" + item_id + "' has not been presented yet in session " + s.session_id);
  const StudyItem* item = study_.find(item_id);

  Submission sub;
  sub.item_id = item_id;
  sub.strokes = strokes;
  sub.final_image = rasterize_edits(item->image, strokes);
  sub.practice = study_.is_practice(item_id);
  sub.timestamp = clock_();
  if (client_rendered) {
    sub.max_client_difference = (*client_rendered - sub.final_image).cwiseAbs().maxCoeff();
    sub.protocol_warning = sub.max_client_difference > kClientTolerance;
  }
  const auto previous = s.submissions.find(item_id);
  if (previous != s.submissions.end()) {
    sub.revision = previous->second.revision + 1;
    s.audit.push_back({item_id, previous->second.revision, sub.timestamp});
    log_event(s, {{"event", "overwrite"},
                  {"timestamp", sub.timestamp},
                  {"item_id", item_id},
                  {"replaced_revision", previous->second.revision}});
  }
  s.submissions[item_id] = sub;
  if (pos == s.cursor) ++s.cursor;

  nlohmann::json strokes_json = nlohmann::json::array();
  for (const Stroke& st : strokes) strokes_json.push_back(to_json(st));
  log_event(s, {{"event", "submit"},
                {"timestamp", sub.timestamp},
                {"item_id", item_id},
                {"revision", sub.revision},
                {"practice", sub.practice},
                {"protocol_warning", sub.protocol_warning},
                {"strokes", strokes_json},
                {"final_pixels", pixels_to_json(sub.final_image)},
                {"pixel_scale", "value = pixel / 255 - 0.5"}});
  if (s.cursor == s.order.size() && !s.ended) {
    s.ended = true;
    log_event(s, {{"event", "session_end"}});
  }
  return sub;
}

EditSession SessionStore::snapshot(const std::string& session_id) const {
  const auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  return e->session;
}

std::vector<Image> SessionStore::analysis_finals(const std::string& item_id) const {
  std::vector<std::shared_ptr<Entry>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, e] : sessions_) all.push_back(e);
  }
  std::vector<Image> out;
  for (const auto& e : all) {
    std::lock_guard lock(e->mu);
    const auto it = e->session.submissions.find(item_id);
    if (it != e->session.submissions.end() && !it->second.practice) out.push_back(it->second.final_image);
  }
  return out;
}

int SessionStore::protocol_warnings() const {
  std::vector<std::shared_ptr<Entry>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, e] : sessions_) all.push_back(e);
  }
  int n = 0;
  for (const auto& e : all) {
    std::lock_guard lock(e->mu);
    for (const auto& [id, sub] : e->session.submissions) n += sub.protocol_warning ? 1 : 0;
  }
  return n;
}

CentroidExplanation compute_centroid(const std::string& item_id, const std::vector<Image>& finals) {
  if (finals.empty()) throw Error("centroid for item " + item_id + ": no submissions");
  Image sum = Image::Zero();
  for (const Image& im : finals) sum += im;
  CentroidExplanation c;
  c.item_id = item_id;
  c.image = (sum / static_cast<double>(finals.size())).cwiseMax(kPixelMin).cwiseMin(kPixelMax);
  c.contributors = static_cast<int>(finals.size());
  return c;
}

}  // namespace cfbench::ground_truth
