#include "zeta/llmgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "http_util.hpp"
#include "zeta/error.hpp"
#include "zeta/text.hpp"
#include "zeta/util.hpp"

namespace zeta::llmgen {

using nlohmann::json;

namespace {

constexpr std::string_view kTemplate =
    "Your job is to list observations cardiologists make when looking at ECG. Provided with a "
    "diagnosis, you have to extract key observations that are only relevant to the given diagnosis "
    "label. Delete observations that have the same symptoms and cannot be distinguished from a normal "
    "ECG. When generating observations, please do not include words like \"suggest\". For example, "
    "if an observation is \"suggests ischaemia or left ventricular strain\", you should generate: "
    "\"ischaemia or left ventricular strain\".\n"
    "\n"
    "Diagnosis: ${Condition}\n"
    "\n"
    "Your output should be a JSON object with exactly 5 unique observations for both positive and "
    "negative cases:\n"
    "{\n"
    "    \"${Condition}\": {\n"
    "        \"Positive\": [...],\n"
    "        \"Negative\": [...]\n"
    "    }\n"
    "}\n";

}  // namespace

std::string_view prompt_template() { return kTemplate; }

std::string render_prompt(const kb::ConditionId& condition) {
  if (trim(condition.display_name).empty()) {
    fail(ErrorCode::EmptyCondition, fmt::format("condition '{}' has no display name", condition.code));
  }
  std::string out;
  std::string_view rest = kTemplate;
  for (auto pos = rest.find(kConditionPlaceholder); pos != std::string_view::npos;
       pos = rest.find(kConditionPlaceholder)) {
    out.append(rest.substr(0, pos));
    out.append(condition.display_name);
    rest.remove_prefix(pos + kConditionPlaceholder.size());
  }
  out.append(rest);
  return out;
}

std::vector<ModelConfig> models_from_json(const json& j) {
  if (!j.is_array()) fail(ErrorCode::InvalidFormat, "model config must be a JSON array");
  std::vector<ModelConfig> out;
  for (const auto& m : j) {
    ModelConfig c;
    try {
      c.name = m.at("name").get<std::string>();
      c.endpoint = m.value("endpoint", "");
      c.token_env = m.value("token_env", "");
      c.temperature = m.value("temperature", 0.0);
      c.timeout_seconds = m.value("timeout_seconds", 60.0);
    } catch (const json::exception& e) {
      fail(ErrorCode::InvalidFormat, fmt::format("model config: {}", e.what()));
    }
    if (c.name.empty()) fail(ErrorCode::InvalidFormat, "model config: empty name");
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<ModelConfig> read_model_configs(const std::filesystem::path& path) {
  try {
    return models_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedJson, fmt::format("{}: {}", path.string(), e.what()));
  }
}

double RetryPolicy::delay(int attempt, double u) const {
  return base_seconds * std::pow(factor, attempt - 1) * (1.0 + jitter * u);
}

// ---------------------------------------------------------------------------

HttpChatBackend::HttpChatBackend(RetryPolicy policy, Sleeper sleeper, std::uint64_t seed)
    : policy_(policy), sleeper_(std::move(sleeper)), seed_(seed) {
  if (policy_.max_attempts < 1) fail(ErrorCode::InvalidConfig, "max_attempts must be at least 1");
  if (!sleeper_) sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
}

CallResult HttpChatBackend::complete(const ModelConfig& model, const kb::ConditionId& condition,
                                     const std::string& prompt) const {
  if (model.endpoint.empty()) {
    fail(ErrorCode::InvalidConfig, fmt::format("model '{}' has no endpoint", model.name));
  }
  const auto headers = detail::auth_headers(model.token_env);
  const std::string body =
      json{{"model", model.name},
           {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
           {"temperature", model.temperature}}
          .dump();
  std::mt19937_64 rng(hash_key(seed_, model.name + "/" + condition.code));

  detail::HttpResult res;
  int attempt = 1;
  for (;; ++attempt) {
    res = detail::http_post_json(model.endpoint, body, headers, model.timeout_seconds);
    if (res.status == 401 || res.status == 403) {
      fail(ErrorCode::AuthError, fmt::format("{}: {} returned {}", model.name, model.endpoint, res.status));
    }
    const bool retryable = res.status == 0 || res.status == 429 || res.status >= 500;
    if (!retryable || attempt >= policy_.max_attempts) break;
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double wait = policy_.delay(attempt, u);
    spdlog::warn("{}: attempt {} failed ({}), retrying in {:.2f}s", model.name, attempt,
                 res.status == 0 ? res.error : std::to_string(res.status), wait);
    sleeper_(std::chrono::duration<double>(wait));
  }

  if (res.status == 0) {
    fail(ErrorCode::TransportError,
         fmt::format("{}: {} after {} attempts: {}", model.name, model.endpoint, attempt, res.error));
  }
  if (res.status == 429) {
    fail(ErrorCode::RateLimited, fmt::format("{}: still rate limited after {} attempts", model.name, attempt));
  }
  if (res.status < 200 || res.status >= 300) {
    fail(ErrorCode::HttpError, fmt::format("{}: {} returned {} after {} attempts: {}", model.name,
                                           model.endpoint, res.status, attempt, detail::excerpt(res.body)));
  }
  std::string content;
  try {
    const json j = json::parse(res.body);
    const json& msg = j.at("choices").at(0).at("message").at("content");
    if (msg.is_string()) content = msg.get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::EmptyResponse, fmt::format("{}: malformed completion: {}", model.name, e.what()));
  }
  if (trim(content).empty()) fail(ErrorCode::EmptyResponse, fmt::format("{}: empty completion", model.name));
  return {std::move(content), attempt};
}

// ---------------------------------------------------------------------------

FixtureChatBackend FixtureChatBackend::from_directory(std::filesystem::path dir) {
  if (!std::filesystem::is_directory(dir)) {
    fail(ErrorCode::Io, fmt::format("fixture directory '{}' does not exist", dir.string()));
  }
  FixtureChatBackend b;
  b.dir_ = std::move(dir);
  return b;
}

FixtureChatBackend FixtureChatBackend::from_archive(const std::filesystem::path& archive) {
  FixtureChatBackend b;
  for (auto& r : read_gen_archive(archive)) {
    if (r.raw_response.empty()) continue;
    // Later entries win, so a re-run archive replays its newest response.
    b.archived_[{r.model, r.condition.code}] = std::move(r.raw_response);
  }
  return b;
}

CallResult FixtureChatBackend::complete(const ModelConfig& model, const kb::ConditionId& condition,
                                        const std::string&) const {
  if (!dir_.empty()) {
    const auto path = dir_ / model.name / (condition.code + ".txt");
    if (!std::filesystem::exists(path)) {
      fail(ErrorCode::Io, fmt::format("no fixture response at {}", path.string()));
    }
    return {read_file(path), 1};
  }
  const auto it = archived_.find({model.name, condition.code});
  if (it == archived_.end()) {
    fail(ErrorCode::Io, fmt::format("archive has no response for ({}, {})", model.name, condition.code));
  }
  return {it->second, 1};
}

// ---------------------------------------------------------------------------

json to_json(const GenRecord& r) {
  json j{{"condition", {{"code", r.condition.code}, {"display_name", r.condition.display_name}}},
         {"model", r.model},
         {"template_version", r.template_version},
         {"temperature", r.temperature},
         {"fingerprint", r.fingerprint},
         {"raw_response", r.raw_response},
         {"attempts", r.attempts},
         {"timestamp", r.timestamp}};
  if (r.parsed) {
    json arr = json::array();
    for (const auto& c : *r.parsed) arr.push_back(kb::to_json(c));
    j["parsed"] = std::move(arr);
  }
  if (r.error) j["error"] = {{"code", r.error->code}, {"message", r.error->message}};
  return j;
}

GenRecord gen_record_from_json(const json& j) {
  GenRecord r;
  try {
    r.condition.code = j.at("condition").at("code").get<std::string>();
    r.condition.display_name = j.at("condition").value("display_name", "");
    r.model = j.at("model").get<std::string>();
    r.template_version = j.value("template_version", "");
    r.temperature = j.value("temperature", 0.0);
    r.fingerprint = j.value("fingerprint", "");
    r.raw_response = j.value("raw_response", "");
    r.attempts = j.value("attempts", 0);
    r.timestamp = j.value("timestamp", "");
    if (j.contains("parsed")) {
      std::vector<kb::ObservationCandidate> cs;
      for (const auto& c : j.at("parsed")) cs.push_back(kb::candidate_from_json(c));
      r.parsed = std::move(cs);
    }
    if (j.contains("error")) {
      r.error = GenError{j.at("error").value("code", ""), j.at("error").value("message", "")};
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, fmt::format("gen record: {}", e.what()));
  }
  return r;
}

void append_gen_records(const std::filesystem::path& path, const std::vector<GenRecord>& records) {
  for (const auto& r : records) append_line(path, to_json(r).dump());
}

std::vector<GenRecord> read_gen_archive(const std::filesystem::path& path) {
  std::vector<GenRecord> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(gen_record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::MalformedJson, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

bool GenerationResult::all_failed() const {
  return std::none_of(records.begin(), records.end(), [](const GenRecord& r) { return r.ok(); });
}

std::vector<std::vector<kb::ObservationCandidate>> GenerationResult::responses() const {
  std::vector<std::vector<kb::ObservationCandidate>> out;
  for (const auto& r : records) {
    if (r.parsed) out.push_back(*r.parsed);
  }
  return out;
}

GenerationResult generate_condition(const kb::ConditionId& condition,
                                    const std::vector<ModelConfig>& models,
                                    const ChatBackend& backend, const GenerateOptions& opts) {
  if (models.empty()) fail(ErrorCode::NoModels, "no models configured");
  const std::string prompt = render_prompt(condition);
  const Parser parser = opts.parser ? opts.parser : Parser(kb::parse_llm_response);

  GenerationResult result;
  result.records.resize(models.size());
  parallel_for(models.size(), std::max<std::size_t>(opts.concurrency, 1), [&](std::size_t i) {
    const ModelConfig& m = models[i];
    GenRecord& r = result.records[i];
    r.condition = condition;
    r.model = m.name;
    r.template_version = std::string(kPromptTemplateVersion);
    r.temperature = m.temperature;
    r.fingerprint = sha256_hex(fmt::format("{}\n{}\n{}\n{}", kPromptTemplateVersion, m.name,
                                           m.temperature, prompt));
    r.timestamp = utc_now();
    try {
      auto call = backend.complete(m, condition, prompt);
      r.raw_response = std::move(call.content);
      r.attempts = call.attempts;
      r.parsed = parser(r.raw_response, condition, m.name);
    } catch (const Error& e) {
      r.error = GenError{std::string(to_string(e.code())), e.what()};
      spdlog::warn("{} / {}: {}", condition.code, m.name, e.what());
    }
  });
  return result;
}

}  // namespace zeta::llmgen
