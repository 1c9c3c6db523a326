#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zeta/embed.hpp"
#include "zeta/kb.hpp"

namespace zeta::test {

std::filesystem::path fixtures_dir();
std::filesystem::path golden_dir();
std::filesystem::path cli_path();

// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs `args` (shell-quoted here) with an optional environment prefix.
CommandResult run_command(const std::vector<std::string>& args, const std::string& env_prefix = {});
CommandResult run_cli(const std::vector<std::string>& args, const std::string& env_prefix = {});

// Wraps a provider and counts calls per key.
class CountingProvider final : public embed::EmbeddingProvider {
 public:
  explicit CountingProvider(std::shared_ptr<const embed::EmbeddingProvider> inner) : inner_(std::move(inner)) {}

  std::size_t dim() const override { return inner_->dim(); }
  embed::Embedding get_text(std::string_view text) const override;
  embed::Embedding get_ecg(std::string_view id) const override;

  std::size_t text_calls() const { return text_calls_; }
  std::size_t ecg_calls() const { return ecg_calls_; }
  std::map<std::string, std::size_t> text_counts() const;

 private:
  std::shared_ptr<const embed::EmbeddingProvider> inner_;
  mutable std::atomic<std::size_t> text_calls_{0};
  mutable std::atomic<std::size_t> ecg_calls_{0};
  mutable std::mutex mu_;
  mutable std::map<std::string, std::size_t> per_text_;
};

// Provider backed by explicit vectors (returned as given, no normalization).
class MapProvider final : public embed::EmbeddingProvider {
 public:
  explicit MapProvider(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  embed::Embedding get_text(std::string_view text) const override;
  embed::Embedding get_ecg(std::string_view id) const override;

  std::map<std::string, embed::Embedding, std::less<>> texts;
  std::map<std::string, embed::Embedding, std::less<>> ecgs;

 private:
  std::size_t dim_;
};

// Parsed fixture responses for `code` from every model directory that has one.
std::vector<std::vector<kb::ObservationCandidate>> fixture_responses(const kb::ConditionId& condition);

kb::ConditionId condition(const std::string& code);

// Fixture responses for every condition, pooled and reviewed with the
// scripted pipeline log, then exported.
kb::CandidatePool fixture_pool();
kb::KnowledgeBase pipeline_kb();

std::string read_text(const std::filesystem::path& p);

// Runs the offline fixture pipeline through the CLI (generate, preprocess,
// review replay, kb export, embed-texts, embed-ecgs, score, evaluate),
// writing into `work`. Returns "" or the first failing step.
std::string run_fixture_pipeline(const std::filesystem::path& work);

// Structural equality; numbers compare within `tol`. Returns "" or the path
// of the first difference.
std::string json_diff(const nlohmann::json& a, const nlohmann::json& b, double tol = 1e-9,
                      const std::string& where = "");

}  // namespace zeta::test
