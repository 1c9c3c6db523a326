#include "zeta/service.hpp"

#include <mutex>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "zeta/error.hpp"
#include "zeta/text.hpp"
#include "zeta/util.hpp"

namespace zeta::service {

using nlohmann::json;
namespace fs = std::filesystem;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownCandidate:
    case ErrorCode::UnknownCondition:
    case ErrorCode::NotFound:
    case ErrorCode::MissingKey:
      return 404;
    case ErrorCode::AlreadyRejected:
    case ErrorCode::Conflict:
      return 409;
    case ErrorCode::Usage:
      return 400;
    default:
      break;
  }
  switch (classify(code)) {
    case ErrorClass::Validation: return 422;
    case ErrorClass::Remote: return 502;
    default: return 500;
  }
}

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_problem(httplib::Response& res, int status, std::string_view code, std::string_view detail) {
  res.status = status;
  const json body{{"type", "about:blank"},
                  {"title", httplib::status_message(status)},
                  {"status", status},
                  {"code", code},
                  {"detail", detail}};
  res.set_content(body.dump(), "application/problem+json");
}

json parse_body(const httplib::Request& req) {
  if (trim(req.body).empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) fail(ErrorCode::WrongShape, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedJson, fmt::format("request body: {}", e.what()));
  }
}

// Wraps a handler so library errors become problem-details responses.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_problem(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
      send_problem(res, 422, to_string(ErrorCode::InvalidFormat), e.what());
    }
  };
}

json candidate_summary(const kb::CandidatePool& pool) {
  struct Counts {
    std::string display_name;
    std::size_t total = 0, pending = 0, accepted = 0, rejected = 0, revised = 0;
  };
  std::map<std::string, Counts> by_code;
  for (const auto& c : pool.candidates) {
    auto& n = by_code[c.condition.code];
    n.display_name = c.condition.display_name;
    ++n.total;
    if (c.status == kb::ReviewStatus::Pending) ++n.pending;
    if (c.status == kb::ReviewStatus::Accepted) ++n.accepted;
    if (c.status == kb::ReviewStatus::Rejected) ++n.rejected;
    if (std::any_of(c.history.begin(), c.history.end(),
                    [](const kb::HistoryEntry& h) { return h.action == kb::ReviewAction::Revise; })) {
      ++n.revised;
    }
  }
  json out = json::array();
  for (const auto& [code, n] : by_code) {
    out.push_back(json{{"code", code},
                       {"display_name", n.display_name},
                       {"candidates", n.total},
                       {"pending", n.pending},
                       {"accepted", n.accepted},
                       {"rejected", n.rejected},
                       {"revised", n.revised}});
  }
  return out;
}

}  // namespace

Service::Service(ServiceConfig config, std::unique_ptr<embed::EmbeddingProvider> provider)
    : config_(std::move(config)), provider_(std::move(provider)), server_(std::make_unique<httplib::Server>()) {
  config_.inference.validate();
  fs::create_directories(config_.data_dir);
  load_pool();
  if (fs::exists(export_path())) {
    kb_ = std::make_shared<kb::KnowledgeBase>(kb::read_kb(export_path()));
  } else if (config_.kb_path) {
    kb_ = std::make_shared<kb::KnowledgeBase>(kb::read_kb(*config_.kb_path));
  }
  routes();
}

Service::~Service() { stop(); }

fs::path Service::review_log_path() const { return config_.data_dir / "review_events.jsonl"; }
fs::path Service::snapshot_path() const { return config_.data_dir / "pool.snapshot.json"; }
fs::path Service::export_path() const { return config_.data_dir / "kb.json"; }
fs::path Service::session_dir(std::string_view session) const {
  return config_.data_dir / "study" / std::string(session);
}

kb::CandidatePool Service::pool() const {
  std::shared_lock lock(mu_);
  return pool_;
}

void Service::load_pool() {
  const auto log = fs::exists(review_log_path()) ? kb::read_review_log(review_log_path())
                                                 : std::vector<kb::ReviewEvent>{};
  kb::CandidatePool base = kb::read_pool(config_.pool_path);
  const std::size_t base_events = base.events.size();

  // A snapshot is usable when its events are the base events followed by a
  // prefix of the log.
  if (fs::exists(snapshot_path())) {
    try {
      auto snap = kb::pool_from_json(json::parse(read_file(snapshot_path())));
      const std::size_t logged = snap.events.size() - std::min(snap.events.size(), base_events);
      const bool prefix = snap.events.size() >= base_events && logged <= log.size() &&
                          std::equal(snap.events.begin() + static_cast<std::ptrdiff_t>(base_events),
                                     snap.events.end(), log.begin());
      if (prefix) {
        std::vector<kb::ReviewEvent> tail(log.begin() + static_cast<std::ptrdiff_t>(logged), log.end());
        spdlog::info("restoring pool from snapshot ({} events) + {} logged events", snap.events.size(),
                     tail.size());
        pool_ = kb::replay(std::move(snap), std::move(tail));
        return;
      }
      spdlog::warn("snapshot does not match the review log; replaying from the base pool");
    } catch (const std::exception& e) {
      spdlog::warn("ignoring unreadable snapshot: {}", e.what());
    }
  }
  pool_ = kb::replay(std::move(base), log);
  if (!log.empty()) spdlog::info("replayed {} review events", log.size());
}

void Service::maybe_snapshot() {
  if (config_.snapshot_every == 0 || ++events_since_snapshot_ < config_.snapshot_every) return;
  write_file(snapshot_path(), kb::to_json(pool_).dump() + "\n");
  events_since_snapshot_ = 0;
}

study::StudyState& Service::session(const std::string& id) {
  if (const auto it = sessions_.find(id); it != sessions_.end()) return *it->second;
  if (id.empty() || id.find("..") != std::string::npos || id.find('/') != std::string::npos) {
    fail(ErrorCode::NotFound, fmt::format("invalid session id '{}'", id));
  }
  const auto dir = session_dir(id);
  if (!fs::exists(dir / "session.json")) fail(ErrorCode::NotFound, fmt::format("no study session '{}'", id));
  auto state = std::make_unique<study::StudyState>(study::read_session(dir / "session.json"));
  for (const auto& a : study::read_answer_log(dir / "answers.jsonl")) state->record(a);
  return *sessions_.emplace(id, std::move(state)).first->second;
}

void Service::routes() {
  auto& srv = *server_;

  srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::info("{} {} -> {}", req.method, req.path, res.status);
  });

  if (!config_.bearer_token.empty()) {
    srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (req.path.rfind("/api/", 0) != 0) return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("Authorization") == "Bearer " + config_.bearer_token) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      send_problem(res, 401, "UNAUTHORIZED", "missing or invalid bearer token");
      return httplib::Server::HandlerResponse::Handled;
    });
  }

  srv.Get("/api/conditions", guarded([this](const httplib::Request&, httplib::Response& res) {
    std::shared_lock lock(mu_);
    send_json(res, 200, json{{"conditions", candidate_summary(pool_)}});
  }));

  srv.Get("/api/candidates", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string condition = req.get_param_value("condition");
    std::optional<kb::ReviewStatus> status;
    if (req.has_param("status")) status = kb::status_from_string(req.get_param_value("status"));
    std::shared_lock lock(mu_);
    json out = json::array();
    for (const auto& c : pool_.candidates) {
      if (!condition.empty() && c.condition.code != condition) continue;
      if (status && c.status != *status) continue;
      out.push_back(kb::to_json(c));
    }
    send_json(res, 200, json{{"candidates", std::move(out)}});
  }));

  srv.Get(R"(/api/candidates/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::shared_lock lock(mu_);
    const auto* c = pool_.find(req.matches[1].str());
    if (c == nullptr) fail(ErrorCode::UnknownCandidate, fmt::format("unknown candidate '{}'", req.matches[1].str()));
    send_json(res, 200, kb::to_json(*c));
  }));

  srv.Post(R"(/api/candidates/(.+)/review)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    kb::ReviewEvent e;
    e.candidate_id = req.matches[1].str();
    e.action = kb::action_from_string(body.at("action").get<std::string>());
    if (body.contains("revised_text") && !body.at("revised_text").is_null()) {
      e.revised_text = body.at("revised_text").get<std::string>();
    }
    for (const auto& r : body.value("reasons", json::array())) {
      e.reasons.push_back(kb::reason_from_string(r.get<std::string>()));
    }
    e.reviewer = body.value("reviewer", "");
    e.note = body.value("note", "");
    e.timestamp = utc_now();

    std::unique_lock lock(mu_);
    kb::apply_review(pool_, e);
    const kb::ReviewEvent& applied = pool_.events.back();
    append_line(review_log_path(), kb::to_json(applied).dump());
    maybe_snapshot();
    send_json(res, 200, json{{"sequence", applied.sequence}, {"candidate", kb::to_json(*pool_.find(e.candidate_id))}});
  }));

  srv.Post("/api/kb/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    const bool unreviewed = body.value("include_unreviewed", false);
    std::optional<std::size_t> limit;
    if (body.contains("limit") && !body.at("limit").is_null()) limit = body.at("limit").get<std::size_t>();
    std::unique_lock lock(mu_);
    auto kb = std::make_shared<kb::KnowledgeBase>(unreviewed ? kb::export_candidates(pool_, limit)
                                                             : kb::export_reviewed(pool_));
    kb::write_kb(export_path(), *kb);
    kb_ = kb;
    bank_.reset();
    send_json(res, 200, json{{"version", kb->version},
                             {"path", export_path().string()},
                             {"conditions", kb->conditions.size()}});
  }));

  srv.Post("/api/score", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    const std::string ecg_id = body.at("ecg_id").get<std::string>();
    std::vector<std::string> conditions = body.value("conditions", std::vector<std::string>{});
    std::shared_ptr<const kb::KnowledgeBase> kb;
    std::shared_ptr<const infer::ObservationBank> bank;
    {
      std::unique_lock lock(mu_);
      if (!provider_) fail(ErrorCode::InvalidConfig, "scoring needs an embedding provider");
      if (!kb_) fail(ErrorCode::InvalidConfig, "no knowledge base loaded; export one first");
      if (!bank_) bank_ = std::make_shared<infer::ObservationBank>(*kb_, *provider_);
      kb = kb_;
      bank = bank_;
    }
    if (conditions.empty()) {
      for (const auto& [code, _] : kb->conditions) conditions.push_back(code);
    }
    const auto ecg = provider_->get_ecg(ecg_id);
    json scores = json::array();
    json predicted = json::array();
    for (const auto& c : conditions) {
      const auto s = infer::score_condition(ecg, c, *kb, *bank, config_.inference);
      if (s.possibility > config_.inference.threshold) predicted.push_back(c);
      json row = infer::to_json(ecg_id, s);
      row["display_name"] = kb->find(c)->display_name;
      scores.push_back(std::move(row));
    }
    send_json(res, 200, json{{"ecg_id", ecg_id},
                             {"kb_version", kb->version},
                             {"tau", config_.inference.tau},
                             {"threshold", config_.inference.threshold},
                             {"predicted", std::move(predicted)},
                             {"scores", std::move(scores)}});
  }));

  srv.Get(R"(/api/study/([^/]+)/next)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string expert = req.get_param_value("expert_id");
    if (trim(expert).empty()) fail(ErrorCode::InvalidFormat, "expert_id query parameter is required");
    std::unique_lock lock(mu_);
    const auto& st = session(req.matches[1].str());
    const auto next = st.next_for(expert);
    if (!next) {
      send_json(res, 200, json{{"session_id", st.session().session_id}, {"done", true}});
      return;
    }
    json item = st.blinded_item(*next);
    item["done"] = false;
    send_json(res, 200, item);
  }));

  srv.Post(R"(/api/study/([^/]+)/answer)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    std::unique_lock lock(mu_);
    auto& st = session(req.matches[1].str());
    json j = body;
    if (!j.contains("condition") && j.contains("sample_id")) {
      // Infer the condition when the sample id alone is unambiguous.
      std::vector<std::string> matches;
      for (const auto& it : st.session().items) {
        if (it.sample_id == j.at("sample_id").get<std::string>()) matches.push_back(it.condition);
      }
      if (matches.size() == 1) j["condition"] = matches.front();
    }
    study::StudyAnswer a = study::answer_from_json(j);
    a.session_id = st.session().session_id;
    a.timestamp = utc_now();
    const auto outcome = st.record(a);
    if (outcome == study::RecordOutcome::Recorded) {
      append_line(session_dir(a.session_id) / "answers.jsonl", study::to_json(st.answers().back()).dump());
    }
    send_json(res, outcome == study::RecordOutcome::Recorded ? 201 : 200,
              json{{"status", outcome == study::RecordOutcome::Recorded ? "recorded" : "duplicate"},
                   {"session_id", a.session_id},
                   {"condition", a.condition},
                   {"sample_id", a.sample_id},
                   {"expert_id", a.expert_id}});
  }));

  srv.Get(R"(/api/study/([^/]+)/report)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    eval::Averaging avg = eval::Averaging::Weighted;
    if (req.has_param("averaging")) avg = eval::averaging_from_string(req.get_param_value("averaging"));
    std::unique_lock lock(mu_);
    const auto& st = session(req.matches[1].str());
    json report = study::to_json(study::build_report(st, avg));
    report["session_id"] = st.session().session_id;
    send_json(res, 200, report);
  }));

  if (config_.static_dir) {
    if (!srv.set_mount_point("/", config_.static_dir->string())) {
      fail(ErrorCode::Io, fmt::format("static directory '{}' does not exist", config_.static_dir->string()));
    }
  }
}

int Service::start() {
  int port = config_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(config_.host);
  } else if (!server_->bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) fail(ErrorCode::Io, fmt::format("cannot bind {}:{}", config_.host, config_.port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  spdlog::info("serving on http://{}:{}", config_.host, port);
  return port;
}

void Service::run() {
  spdlog::info("serving on http://{}:{}", config_.host, config_.port);
  if (!server_->listen(config_.host, config_.port)) {
    fail(ErrorCode::Io, fmt::format("cannot listen on {}:{}", config_.host, config_.port));
  }
}

void Service::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace zeta::service
