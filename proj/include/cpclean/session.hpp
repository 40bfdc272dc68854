#pragma once

// Interactive cleaning sessions: the server picks the next row, a human
// supplies its true value. Sessions are journaled as JSON lines so that a
// restarted server can replay them.
//
// Endpoints (all bodies JSON, errors {code, message, field?}):
//   POST /sessions                  {dataset, val, params?} -> 201 {id, status}
//   GET  /sessions/{id}/suggestion  200 suggestion | 202 selecting | 409 nothing to clean
//   POST /sessions/{id}/answer      {row, step?, candidate | value} -> 200
//   GET  /sessions/{id}/status
//   GET  /sessions/{id}/export

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpclean/cleaning.hpp"
#include "cpclean/cp_engine.hpp"
#include "cpclean/dataset.hpp"
#include "cpclean/error.hpp"

namespace cpclean {

enum class SessionStatus { selecting, awaiting_answer, converged, budget_exhausted };

inline std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::selecting: return "selecting";
    case SessionStatus::awaiting_answer: return "awaiting_answer";
    case SessionStatus::converged: return "converged";
    case SessionStatus::budget_exhausted: return "budget_exhausted";
  }
  return "?";
}

struct SessionParams {
  std::size_t k = 3;
  SimilarityKernel kernel = SimilarityKernel::negative_euclidean;
  Engine engine = Engine::ss_dc;
  std::optional<std::size_t> budget;
};

inline nlohmann::json to_json(const SessionParams& p) {
  return {{"k", p.k},
          {"kernel", to_string(p.kernel)},
          {"engine", to_string(p.engine)},
          {"budget", p.budget ? nlohmann::json(*p.budget) : nlohmann::json(nullptr)}};
}

inline SessionParams session_params_from_json(const nlohmann::json& j) {
  SessionParams p;
  if (j.is_null()) return p;
  if (!j.is_object()) fail(ErrorKind::parse, "params must be an object", "params");
  if (j.contains("k")) {
    if (!j["k"].is_number_unsigned()) fail(ErrorKind::parse, "k must be a positive integer", "params.k");
    p.k = j["k"].get<std::size_t>();
  }
  if (j.contains("kernel") && j["kernel"] != "negative_euclidean")
    fail(ErrorKind::invalid_argument, "unknown kernel", "params.kernel");
  if (j.contains("engine")) {
    if (!j["engine"].is_string()) fail(ErrorKind::parse, "engine must be a string", "params.engine");
    try {
      p.engine = parse_engine(j["engine"].get<std::string>());
    } catch (const Error& e) {
      fail(ErrorKind::invalid_argument, e.what(), "params.engine");
    }
  }
  if (j.contains("budget") && !j["budget"].is_null()) {
    if (!j["budget"].is_number_unsigned()) fail(ErrorKind::parse, "budget must be a nonnegative integer", "params.budget");
    p.budget = j["budget"].get<std::size_t>();
  }
  return p;
}

// An answer names a candidate index or supplies a value.
struct SessionAnswer {
  std::size_t row = 0;
  std::optional<std::size_t> step;
  std::optional<std::size_t> candidate;
  std::optional<FeatureVector> value;
};

inline SessionAnswer session_answer_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::parse, "answer must be a JSON object");
  SessionAnswer a;
  if (!j.contains("row") || !j["row"].is_number_unsigned()) fail(ErrorKind::parse, "answer needs a row index", "row");
  a.row = j["row"].get<std::size_t>();
  if (j.contains("step") && !j["step"].is_null()) {
    if (!j["step"].is_number_unsigned()) fail(ErrorKind::parse, "step must be a nonnegative integer", "step");
    a.step = j["step"].get<std::size_t>();
  }
  const bool has_candidate = j.contains("candidate") && !j["candidate"].is_null();
  const bool has_value = j.contains("value") && !j["value"].is_null();
  if (has_candidate == has_value) fail(ErrorKind::parse, "answer needs exactly one of 'candidate' or 'value'", "candidate");
  if (has_candidate) {
    if (!j["candidate"].is_number_integer() || j["candidate"].get<long long>() < 0)
      fail(ErrorKind::invalid_argument, "candidate must be a nonnegative integer", "candidate");
    a.candidate = j["candidate"].get<std::size_t>();
  } else {
    a.value = feature_vector_from_json(j["value"], "value");
  }
  return a;
}

inline nlohmann::json to_json(const SessionAnswer& a) {
  nlohmann::json j{{"row", a.row}};
  if (a.step) j["step"] = *a.step;
  if (a.candidate) j["candidate"] = *a.candidate;
  if (a.value) j["value"] = *a.value;
  return j;
}

struct PendingSelection {
  std::size_t row = 0;
  double expected_entropy = 0;
};

// One session. Thread-safe; selection runs on a worker thread, at most one at a
// time, and answers are refused while it runs.
class CleaningSession {
 public:
  CleaningSession(std::string id, IncompleteDataset data, std::vector<FeatureVector> val, SessionParams params,
                  std::string journal_path = {})
      : id_(std::move(id)),
        data_(std::move(data)),
        val_(std::move(val)),
        params_(params),
        journal_path_(std::move(journal_path)) {
    validate(data_);
    for (std::size_t p = 0; p < val_.size(); ++p)
      if (val_[p].size() != data_.dimension)
        fail(ErrorKind::invalid_argument, "validation point has the wrong dimension", "val[" + std::to_string(p) + "]");
    if (params_.k < 1 || params_.k > data_.size())
      fail(ErrorKind::invalid_argument, "k out of range [1, " + std::to_string(data_.size()) + "]", "params.k");
    CleaningConfig cc;
    cc.k = params_.k;
    cc.kernel = params_.kernel;
    cc.engine = params_.engine;
    if (params_.engine == Engine::mm) {
      // Certainty checks already use MM for binary labels; entropy needs counts.
      if (data_.num_labels != 2) fail(ErrorKind::invalid_argument, "MM requires binary labels", "params.engine");
      cc.engine = Engine::ss_dc;
    }
    eval_ = std::make_unique<EntropyEvaluator>(data_, val_, cc);
    pct_cp_history_.push_back(eval_->pct_cp());
  }

  ~CleaningSession() {
    if (worker_.joinable()) worker_.join();
  }

  CleaningSession(const CleaningSession&) = delete;
  CleaningSession& operator=(const CleaningSession&) = delete;

  const std::string& id() const { return id_; }

  // Writes the creation event and starts the first selection.
  void open(bool write_journal = true) {
    if (write_journal)
      journal({{"event", "create"}, {"id", id_}, {"dataset", to_json(data_)}, {"val", val_}, {"params", to_json(params_)}});
    std::unique_lock lock(mu_);
    advance(lock);
  }

  SessionStatus status() const {
    std::lock_guard lock(mu_);
    return status_;
  }

  // Blocks until no selection is running.
  void wait_idle() const {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return status_ != SessionStatus::selecting; });
  }

  // nullopt while selecting (after waiting up to `wait`).
  std::optional<nlohmann::json> suggestion(std::chrono::milliseconds wait = std::chrono::milliseconds(0)) const {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, wait, [&] { return status_ != SessionStatus::selecting; });
    if (status_ == SessionStatus::selecting) return std::nullopt;
    if (status_ == SessionStatus::converged)
      fail(ErrorKind::conflict, "nothing to clean: every validation point is certainly predicted");
    if (status_ == SessionStatus::budget_exhausted) fail(ErrorKind::conflict, "nothing to clean: budget exhausted");
    const auto& row = data_.rows[pending_->row];
    const auto profile = eval_->profile();
    return nlohmann::json{{"row", pending_->row},
                          {"step", history_.size()},
                          {"preview", {{"row", pending_->row}, {"label", row.label}}},
                          {"candidates", row.candidates},
                          {"expected_entropy", pending_->expected_entropy},
                          {"pct_cp", eval_->pct_cp()},
                          {"mean_entropy", profile.mean}};
  }

  nlohmann::json answer(const SessionAnswer& a, bool write_journal = true) {
    std::unique_lock lock(mu_);
    const std::size_t step = a.step.value_or(history_.size());
    if (step < history_.size()) {
      // Replay of an earlier answer: same content returns the stored response.
      if (same_answer(answers_[step], a)) return responses_[step];
      fail(ErrorKind::conflict, "stale answer for step " + std::to_string(step), "step");
    }
    if (step > history_.size()) fail(ErrorKind::conflict, "answer for a future step " + std::to_string(step), "step");
    if (status_ == SessionStatus::selecting) fail(ErrorKind::conflict, "selection in progress; retry shortly");
    if (status_ != SessionStatus::awaiting_answer) fail(ErrorKind::conflict, "nothing to clean");
    if (a.row != pending_->row)
      fail(ErrorKind::conflict,
           "row " + std::to_string(a.row) + " is not the pending suggestion (row " + std::to_string(pending_->row) + ")",
           "row");
    auto& row = data_.rows[a.row];
    std::size_t chosen = 0;
    bool free_form = false;
    if (a.candidate) {
      if (*a.candidate >= row.size())
        fail(ErrorKind::invalid_argument,
             "candidate " + std::to_string(*a.candidate) + " out of range [0, " + std::to_string(row.size()) + ")",
             "candidate");
      chosen = *a.candidate;
    } else {
      if (a.value->size() != data_.dimension)
        fail(ErrorKind::invalid_argument, "value has the wrong dimension", "value");
      for (double v : *a.value)
        if (!std::isfinite(v)) fail(ErrorKind::invalid_argument, "value entries must be finite", "value");
      auto it = std::find(row.candidates.begin(), row.candidates.end(), *a.value);
      chosen = static_cast<std::size_t>(it - row.candidates.begin());
      if (it == row.candidates.end()) {
        row.candidates.push_back(*a.value);
        free_form = true;
      }
    }
    if (write_journal) {
      SessionAnswer logged = a;
      logged.step = step;
      journal({{"event", "answer"}, {"answer", to_json(logged)}});
    }
    const FeatureVector x = row.candidates[chosen];
    const double expected = pending_->expected_entropy;
    if (free_form) eval_->pin_value(a.row, x);
    else eval_->pin(a.row, chosen);
    row.candidates = {x};

    StepRecord rec;
    rec.step = history_.size() + 1;
    rec.selected_row = a.row;
    rec.chosen_candidate = chosen;
    rec.expected_entropy = expected;
    rec.realized_mean_entropy = eval_->profile().mean;
    rec.pct_val_cp = eval_->pct_cp();
    rec.cleaned_count = history_.size() + 1;
    rec.free_form = free_form;
    history_.push_back(rec);
    pct_cp_history_.push_back(rec.pct_val_cp);
    SessionAnswer stored = a;
    stored.step = step;
    answers_.push_back(stored);
    pending_.reset();
    advance(lock);
    nlohmann::json response{{"status", to_string(status_)}, {"record", to_json(rec)}};
    responses_.push_back(response);
    return response;
  }

  nlohmann::json status_json() const {
    std::lock_guard lock(mu_);
    nlohmann::json history = nlohmann::json::array();
    for (const auto& r : history_) history.push_back(to_json(r));
    const auto profile = eval_->profile();
    return {{"id", id_},
            {"status", to_string(status_)},
            {"params", to_json(params_)},
            {"per_point_cp", eval_->cp_flags()},
            {"per_point_entropy", profile.per_point},
            {"pct_cp", eval_->pct_cp()},
            {"pct_cp_history", pct_cp_history_},
            {"mean_entropy", profile.mean},
            {"cleaned_count", history_.size()},
            {"history", std::move(history)}};
  }

  nlohmann::json export_json() const {
    std::lock_guard lock(mu_);
    const bool converged = status_ == SessionStatus::converged;
    nlohmann::json j{{"dataset", to_json(data_)}, {"converged", converged}, {"not_converged", !converged}};
    if (converged) j["world"] = data_.world(std::vector<std::size_t>(data_.size(), 0));
    return j;
  }

  IncompleteDataset dataset() const {
    std::lock_guard lock(mu_);
    return data_;
  }

  const std::vector<FeatureVector>& validation() const { return val_; }
  const SessionParams& params() const { return params_; }

 private:
  static bool same_answer(const SessionAnswer& x, const SessionAnswer& y) {
    return x.row == y.row && x.candidate == y.candidate && x.value == y.value;
  }

  void journal(const nlohmann::json& event) {
    if (journal_path_.empty()) return;
    std::ofstream out(journal_path_, std::ios::app);
    if (!out) fail(ErrorKind::io, "cannot write session journal '" + journal_path_ + "'");
    out << event.dump() << '\n';
    out.flush();
  }

  // Moves to the next state after creation or an answer. Caller holds the lock.
  void advance(std::unique_lock<std::mutex>& lock) {
    if (eval_->all_cp()) {
      status_ = SessionStatus::converged;
      cv_.notify_all();
      return;
    }
    const auto dirty = data_.dirty_rows();
    if (dirty.empty() || (params_.budget && history_.size() >= *params_.budget)) {
      status_ = SessionStatus::budget_exhausted;
      cv_.notify_all();
      return;
    }
    status_ = SessionStatus::selecting;
    if (worker_.joinable()) {
      // The previous worker has published its result; it is at most finishing.
      lock.unlock();
      worker_.join();
      lock.lock();
    }
    // The evaluator and dataset are read-only while selecting: answers are
    // refused until the worker publishes.
    worker_ = std::thread([this, dirty] {
      std::optional<PendingSelection> picked;
      std::exception_ptr error;
      try {
        const Selection s = select_among(*eval_, dirty);
        picked = PendingSelection{s.row, s.expected_entropy};
      } catch (...) {
        error = std::current_exception();
      }
      std::lock_guard guard(mu_);
      if (picked) {
        pending_ = picked;
        status_ = SessionStatus::awaiting_answer;
      } else {
        status_ = SessionStatus::budget_exhausted;
      }
      cv_.notify_all();
    });
  }

  std::string id_;
  IncompleteDataset data_;
  std::vector<FeatureVector> val_;
  SessionParams params_;
  std::string journal_path_;
  std::unique_ptr<EntropyEvaluator> eval_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::thread worker_;
  SessionStatus status_ = SessionStatus::selecting;
  std::optional<PendingSelection> pending_;
  std::vector<StepRecord> history_;
  std::vector<SessionAnswer> answers_;
  std::vector<nlohmann::json> responses_;
  std::vector<double> pct_cp_history_;
};

// ---- manager ----------------------------------------------------------------

class SessionManager {
 public:
  // Empty `journal_dir` keeps sessions in memory only.
  explicit SessionManager(std::string journal_dir = {}) : dir_(std::move(journal_dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  std::shared_ptr<CleaningSession> create(const nlohmann::json& body) {
    if (!body.is_object()) fail(ErrorKind::parse, "request body must be a JSON object");
    if (!body.contains("dataset")) fail(ErrorKind::parse, "missing 'dataset'", "dataset");
    if (!body.contains("val")) fail(ErrorKind::parse, "missing 'val'", "val");
    IncompleteDataset data;
    try {
      data = dataset_from_json(body["dataset"]);
    } catch (const Error& e) {
      fail(e.kind(), e.what(), "dataset." + e.field());
    }
    auto val = points_from_json(body["val"]);
    auto params = session_params_from_json(body.value("params", nlohmann::json()));
    std::string id;
    {
      std::lock_guard lock(mu_);
      id = "s" + std::to_string(++counter_);
    }
    auto session = std::make_shared<CleaningSession>(id, std::move(data), std::move(val), params, journal_path(id));
    session->open();
    std::lock_guard lock(mu_);
    sessions_[id] = session;
    return session;
  }

  std::shared_ptr<CleaningSession> get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorKind::not_found, "no session '" + id + "'");
    return it->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
  }

  // Rebuilds every journaled session by replaying its events. Returns the count.
  std::size_t recover() {
    if (dir_.empty()) return 0;
    std::size_t n = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (entry.path().extension() != ".jsonl") continue;
      auto session = replay(entry.path().string());
      const auto& id = session->id();
      std::lock_guard lock(mu_);
      if (id.size() > 1 && id[0] == 's') counter_ = std::max(counter_, std::stoul(id.substr(1)));
      sessions_[id] = std::move(session);
      ++n;
    }
    return n;
  }

  static std::shared_ptr<CleaningSession> replay(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open session journal '" + path + "'");
    std::string line;
    std::shared_ptr<CleaningSession> session;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json ev;
      try {
        ev = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::parse, "journal '" + path + "' line " + std::to_string(lineno) + " is not JSON");
      }
      if (ev.at("event") == "create") {
        session = std::make_shared<CleaningSession>(ev.at("id").get<std::string>(), dataset_from_json(ev.at("dataset")),
                                                    points_from_json(ev.at("val")),
                                                    session_params_from_json(ev.at("params")), path);
        session->open(false);
      } else if (ev.at("event") == "answer") {
        if (!session) fail(ErrorKind::parse, "journal '" + path + "' answers before create");
        session->wait_idle();
        session->answer(session_answer_from_json(ev.at("answer")), false);
      }
    }
    if (!session) fail(ErrorKind::parse, "journal '" + path + "' has no create event");
    return session;
  }

  void wait_idle() const {
    std::vector<std::shared_ptr<CleaningSession>> all;
    {
      std::lock_guard lock(mu_);
      for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    for (const auto& s : all) s->wait_idle();
  }

 private:
  std::string journal_path(const std::string& id) const {
    return dir_.empty() ? std::string() : (std::filesystem::path(dir_) / (id + ".jsonl")).string();
  }

  std::string dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<CleaningSession>> sessions_;
  unsigned long counter_ = 0;
};

// ---- request routing --------------------------------------------------------

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

inline int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::parse: return 400;
    case ErrorKind::limit: return 413;
    case ErrorKind::conflict: return 409;
    case ErrorKind::not_found: return 404;
    case ErrorKind::io: return 500;
  }
  return 500;
}

inline std::string_view error_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::parse: return "parse_error";
    case ErrorKind::limit: return "limit_exceeded";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::io: return "io_error";
  }
  return "error";
}

inline ApiResponse error_response(const Error& e) {
  nlohmann::json body{{"code", error_code(e.kind())}, {"message", e.what()}};
  if (!e.field().empty()) body["field"] = e.field();
  return {http_status(e.kind()), std::move(body)};
}

// Transport-independent handler: the HTTP server and the tests both call it.
class SessionApi {
 public:
  explicit SessionApi(SessionManager& manager, std::chrono::milliseconds suggestion_wait = std::chrono::milliseconds(0))
      : manager_(manager), wait_(suggestion_wait) {}

  ApiResponse handle(const std::string& method, const std::string& path, const std::string& body) {
    try {
      return route(method, path, body);
    } catch (const Error& e) {
      return error_response(e);
    } catch (const nlohmann::json::exception& e) {
      return error_response(Error(ErrorKind::parse, e.what()));
    } catch (const std::exception& e) {
      return {500, {{"code", "internal"}, {"message", e.what()}}};
    }
  }

 private:
  static nlohmann::json parse_body(const std::string& body) {
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::parse, std::string("request body is not JSON: ") + e.what());
    }
  }

  ApiResponse route(const std::string& method, const std::string& path, const std::string& body) {
    std::vector<std::string> parts;
    for (std::size_t pos = 0; pos < path.size();) {
      auto next = path.find('/', pos);
      if (next == std::string::npos) next = path.size();
      if (next > pos) parts.push_back(path.substr(pos, next - pos));
      pos = next + 1;
    }
    if (parts.empty() || parts[0] != "sessions") fail(ErrorKind::not_found, "unknown path '" + path + "'");
    if (parts.size() == 1) {
      if (method != "POST") fail(ErrorKind::not_found, "use POST /sessions");
      auto s = manager_.create(parse_body(body));
      return {201, {{"id", s->id()}, {"status", to_string(s->status())}}};
    }
    if (parts.size() != 3) fail(ErrorKind::not_found, "unknown path '" + path + "'");
    auto s = manager_.get(parts[1]);
    const auto& op = parts[2];
    if (op == "suggestion" && method == "GET") {
      auto sug = s->suggestion(wait_);
      if (!sug) return {202, {{"status", "selecting"}, {"retry_after_ms", 100}}};
      return {200, *sug};
    }
    if (op == "answer" && method == "POST") return {200, s->answer(session_answer_from_json(parse_body(body)))};
    if (op == "status" && method == "GET") return {200, s->status_json()};
    if (op == "export" && method == "GET") return {200, s->export_json()};
    fail(ErrorKind::not_found, "unknown endpoint " + method + " " + path);
  }

  SessionManager& manager_;
  std::chrono::milliseconds wait_;
};

}  // namespace cpclean
