#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "http_util.hpp"
#include "zeta/embed.hpp"
#include "zeta/error.hpp"

namespace zeta::embed {

using nlohmann::json;

FileProvider::FileProvider(std::shared_ptr<const EmbeddingStore> ecg_store,
                           std::shared_ptr<const EmbeddingStore> text_store, bool normalize_text)
    : ecg_(std::move(ecg_store)), text_(std::move(text_store)), normalize_text_(normalize_text) {
  if (!ecg_ && !text_) fail(ErrorCode::InvalidConfig, "file provider needs at least one store");
  if (ecg_ && text_ && ecg_->dim() != text_->dim()) {
    fail(ErrorCode::DimMismatch, fmt::format("ECG store dim {} does not match text store dim {}",
                                             ecg_->dim(), text_->dim()));
  }
  dim_ = ecg_ ? ecg_->dim() : text_->dim();
}

Embedding FileProvider::get_text(std::string_view text) const {
  const Embedding* v = text_ ? text_->find(text) : nullptr;
  if (v == nullptr) fail(ErrorCode::MissingKey, fmt::format("no text embedding for '{}'", text));
  return normalize_text_ ? l2_normalize(*v) : *v;
}

Embedding FileProvider::get_ecg(std::string_view id) const {
  const Embedding* v = ecg_ ? ecg_->find(id) : nullptr;
  if (v == nullptr) fail(ErrorCode::MissingKey, fmt::format("no ECG embedding for '{}'", id));
  return l2_normalize(*v);
}

// ---------------------------------------------------------------------------

HttpProvider::HttpProvider(HttpProviderConfig config)
    : config_(std::move(config)),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(config_.max_in_flight, 1, 64))) {
  if (config_.base_url.empty()) fail(ErrorCode::InvalidConfig, "http provider needs base_url");
  while (!config_.base_url.empty() && config_.base_url.back() == '/') config_.base_url.pop_back();
}

std::size_t HttpProvider::requests_sent() const {
  std::lock_guard lock(mu_);
  return requests_;
}

Embedding HttpProvider::get_text(std::string_view text) const {
  return fetch("/encode/text", json{{"text", text}}, "text:" + std::string(text),
               config_.normalize_text);
}

Embedding HttpProvider::get_ecg(std::string_view id) const {
  return fetch("/encode/ecg", json{{"id", id}}, "ecg:" + std::string(id), true);
}

Embedding HttpProvider::fetch(const std::string& route, const json& body,
                              const std::string& cache_key, bool normalize) const {
  {
    std::lock_guard lock(mu_);
    if (const auto it = cache_.find(cache_key); it != cache_.end()) return it->second;
    ++requests_;
  }
  const auto headers = detail::auth_headers(config_.token_env);
  in_flight_.acquire();
  detail::HttpResult res;
  try {
    res = detail::http_post_json(config_.base_url + route, body.dump(), headers,
                                 config_.timeout_seconds);
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();

  if (res.status == 0) {
    fail(ErrorCode::TransportError, fmt::format("{}{}: {}", config_.base_url, route, res.error));
  }
  if (res.status < 200 || res.status >= 300) {
    fail(ErrorCode::HttpError,
         fmt::format("{}{} returned {}: {}", config_.base_url, route, res.status, detail::excerpt(res.body)));
  }
  Embedding values;
  std::size_t dim = 0;
  try {
    const json j = json::parse(res.body);
    dim = j.at("dim").get<std::size_t>();
    values = j.at("values").get<Embedding>();
  } catch (const json::exception& e) {
    fail(ErrorCode::HttpError, fmt::format("{}{}: malformed response: {}", config_.base_url, route, e.what()));
  }
  if (dim != config_.dim || values.size() != config_.dim) {
    fail(ErrorCode::DimMismatch,
         fmt::format("encoder returned dim {} ({} values), expected {}", dim, values.size(), config_.dim));
  }
  if (normalize) {
    const double norm = l2_norm(values);
    if (std::abs(norm - 1.0) > 1e-5) {
      spdlog::warn("encoder response for {} had norm {:.6f}; normalizing locally", cache_key, norm);
    }
    values = l2_normalize(values);
  }
  std::lock_guard lock(mu_);
  return cache_.emplace(cache_key, std::move(values)).first->second;
}

// ---------------------------------------------------------------------------

std::unique_ptr<EmbeddingProvider> make_provider(const json& config,
                                                 std::shared_ptr<const kb::KnowledgeBase> kb,
                                                 std::map<std::string, std::string> planted) {
  const std::string kind = config.value("kind", "");
  const bool normalize_text = config.value("normalize_text", true);
  if (kind == "file") {
    std::shared_ptr<const EmbeddingStore> ecg;
    std::shared_ptr<const EmbeddingStore> text;
    if (config.contains("ecg_store")) {
      ecg = std::make_shared<EmbeddingStore>(read_store(config.at("ecg_store").get<std::string>()));
    }
    if (config.contains("text_store")) {
      text = std::make_shared<EmbeddingStore>(read_store(config.at("text_store").get<std::string>()));
    }
    return std::make_unique<FileProvider>(std::move(ecg), std::move(text), normalize_text);
  }
  if (kind == "synthetic") {
    SyntheticConfig sc;
    sc.seed = config.value<std::uint64_t>("seed", 42);
    sc.dim = config.value<std::size_t>("dim", 64);
    sc.sigma = config.value("sigma", 0.0);
    return std::make_unique<SyntheticProvider>(sc, std::move(kb), std::move(planted));
  }
  if (kind == "http") {
    HttpProviderConfig hc;
    hc.base_url = config.value("base_url", "");
    hc.timeout_seconds = config.value("timeout_seconds", 30.0);
    hc.token_env = config.value("token_env", "");
    hc.dim = config.value<std::size_t>("dim", kDefaultDim);
    hc.max_in_flight = config.value<std::size_t>("max_in_flight", 4);
    hc.normalize_text = normalize_text;
    return std::make_unique<HttpProvider>(std::move(hc));
  }
  fail(ErrorCode::InvalidConfig, fmt::format("unknown provider kind '{}'", kind));
}

}  // namespace zeta::embed
