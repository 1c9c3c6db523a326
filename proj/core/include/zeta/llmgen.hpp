#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "zeta/kb.hpp"

namespace zeta::llmgen {

inline constexpr std::string_view kPromptTemplateVersion = "observations-v1";
inline constexpr std::string_view kConditionPlaceholder = "${Condition}";

std::string_view prompt_template();

// Substitutes the display name for every placeholder. Throws EmptyCondition.
std::string render_prompt(const kb::ConditionId& condition);

struct ModelConfig {
  std::string name;
  std::string endpoint;   // full chat-completions URL
  std::string token_env;  // env var holding the bearer token; empty = none
  double temperature = 0.0;
  double timeout_seconds = 60.0;
};

std::vector<ModelConfig> models_from_json(const nlohmann::json& j);
std::vector<ModelConfig> read_model_configs(const std::filesystem::path& path);

struct RetryPolicy {
  int max_attempts = 5;
  double base_seconds = 1.0;
  double factor = 2.0;
  double jitter = 0.25;  // each delay is scaled by a factor in [1, 1 + jitter)

  // Delay before attempt `attempt + 1` (attempt is 1-based), jitter drawn
  // from `u` in [0, 1).
  double delay(int attempt, double u) const;
};

struct CallResult {
  std::string content;
  int attempts = 1;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual CallResult complete(const ModelConfig& model, const kb::ConditionId& condition,
                              const std::string& prompt) const = 0;
};

using Sleeper = std::function<void(std::chrono::duration<double>)>;

// OpenAI-style chat completions: {"model", "messages":[{"role":"user",...}],
// "temperature"} -> choices[0].message.content. Retries 429, 5xx and
// transport failures; 401/403 fail immediately with AuthError.
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(RetryPolicy policy = {}, Sleeper sleeper = {}, std::uint64_t seed = 42);

  CallResult complete(const ModelConfig& model, const kb::ConditionId& condition,
                      const std::string& prompt) const override;

 private:
  RetryPolicy policy_;
  Sleeper sleeper_;
  std::uint64_t seed_;
};

// Offline replay. Looks up `<dir>/<model>/<CODE>.txt`, or the raw response of
// a GenRecord archive entry for (model, condition code).
class FixtureChatBackend final : public ChatBackend {
 public:
  static FixtureChatBackend from_directory(std::filesystem::path dir);
  static FixtureChatBackend from_archive(const std::filesystem::path& archive);

  CallResult complete(const ModelConfig& model, const kb::ConditionId& condition,
                      const std::string& prompt) const override;

 private:
  std::filesystem::path dir_;
  std::map<std::pair<std::string, std::string>, std::string> archived_;
};

struct GenError {
  std::string code;
  std::string message;
};

struct GenRecord {
  kb::ConditionId condition;
  std::string model;
  std::string template_version;
  double temperature = 0.0;
  std::string fingerprint;  // sha256 of (template version, model, temperature, prompt)
  std::string raw_response;
  std::optional<std::vector<kb::ObservationCandidate>> parsed;
  std::optional<GenError> error;
  int attempts = 0;
  std::string timestamp;

  bool ok() const { return parsed.has_value(); }
};

nlohmann::json to_json(const GenRecord& r);
GenRecord gen_record_from_json(const nlohmann::json& j);
void append_gen_records(const std::filesystem::path& path, const std::vector<GenRecord>& records);
std::vector<GenRecord> read_gen_archive(const std::filesystem::path& path);

using Parser = std::function<std::vector<kb::ObservationCandidate>(
    std::string_view raw, const kb::ConditionId&, std::string_view model)>;

struct GenerateOptions {
  std::size_t concurrency = 3;
  Parser parser;  // defaults to kb::parse_llm_response
};

struct GenerationResult {
  std::vector<GenRecord> records;  // model order
  bool all_failed() const;
  std::vector<std::vector<kb::ObservationCandidate>> responses() const;
};

// render -> call -> parse per model. A failing model yields an error record
// and never aborts the others. Throws NoModels when `models` is empty.
GenerationResult generate_condition(const kb::ConditionId& condition,
                                    const std::vector<ModelConfig>& models,
                                    const ChatBackend& backend, const GenerateOptions& opts = {});

}  // namespace zeta::llmgen
