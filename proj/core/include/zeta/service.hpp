#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "zeta/embed.hpp"
#include "zeta/error.hpp"
#include "zeta/infer.hpp"
#include "zeta/kb.hpp"
#include "zeta/study.hpp"

namespace httplib {
class Server;
}

namespace zeta::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "zeta-data";
  std::filesystem::path pool_path;        // initial candidate pool
  std::optional<std::filesystem::path> kb_path;  // scoring KB until the first export
  std::optional<std::filesystem::path> static_dir;
  std::string bearer_token;               // empty = no authentication
  infer::InferenceConfig inference;
  std::size_t snapshot_every = 50;        // review events between pool snapshots
};

// Problem-details status for an error code.
int http_status(ErrorCode code);

// Review, export, scoring and study state behind the HTTP API. State lives in
// append-only logs under data_dir and is rebuilt from them on construction.
//
// Files under data_dir:
//   review_events.jsonl          review event log
//   pool.snapshot.json           pool state as of a log prefix
//   kb.json                      last export
//   study/<session>/session.json study plan (written offline)
//   study/<session>/answers.jsonl
class Service {
 public:
  Service(ServiceConfig config, std::unique_ptr<embed::EmbeddingProvider> provider = nullptr);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread. Returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();

  // Current pool (copy), for tests and tools.
  kb::CandidatePool pool() const;

  // Paths.
  std::filesystem::path review_log_path() const;
  std::filesystem::path snapshot_path() const;
  std::filesystem::path export_path() const;
  std::filesystem::path session_dir(std::string_view session) const;

 private:
  void routes();
  void load_pool();
  void maybe_snapshot();
  study::StudyState& session(const std::string& id);  // caller holds the write lock

  ServiceConfig config_;
  std::unique_ptr<embed::EmbeddingProvider> provider_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;

  mutable std::shared_mutex mu_;
  kb::CandidatePool pool_;
  std::shared_ptr<const kb::KnowledgeBase> kb_;
  std::shared_ptr<const infer::ObservationBank> bank_;
  std::map<std::string, std::unique_ptr<study::StudyState>> sessions_;
  std::size_t events_since_snapshot_ = 0;
};

}  // namespace zeta::service
