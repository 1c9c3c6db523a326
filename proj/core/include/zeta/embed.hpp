#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "zeta/kb.hpp"

namespace zeta::embed {

using Embedding = std::vector<float>;

inline constexpr std::uint32_t kDefaultDim = 768;

// Returns v / ||v||, accumulated in double. Throws ZeroVector when ||v|| <= 1e-12.
Embedding l2_normalize(std::span<const float> v);
double l2_norm(std::span<const float> v);

enum class StoreKind { Ecg, Text };

// Insertion-ordered id -> vector map with a fixed dimension. Immutable once
// loaded; concurrent reads are safe.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::uint32_t dim = kDefaultDim, StoreKind kind = StoreKind::Ecg);

  std::uint32_t dim() const { return dim_; }
  StoreKind kind() const { return kind_; }
  void set_kind(StoreKind kind) { kind_ = kind; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  void add(std::string id, Embedding values);
  const Embedding* find(std::string_view id) const;
  const std::vector<std::pair<std::string, Embedding>>& entries() const { return entries_; }

  // Bit-exact comparison of values (NaN payloads included).
  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b);

 private:
  std::uint32_t dim_;
  StoreKind kind_;
  std::vector<std::pair<std::string, Embedding>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// "ZEB1" binary layout, all integers little-endian:
//   0..3   'Z' 'E' 'B' '1'
//   4..7   record count (u32)
//   8..11  dim (u32)
//   then per record: u16 id byte length, id bytes (UTF-8), dim x binary32.
std::string encode_binary(const EmbeddingStore& store);
EmbeddingStore decode_binary(std::string_view bytes,
                             std::optional<std::uint32_t> expected_dim = std::nullopt);

// JSON Lines: header {"zeb_jsonl": 1, "dim": n} then {"id", "values"} per line.
std::string encode_jsonl(const EmbeddingStore& store);
EmbeddingStore decode_jsonl(std::string_view text,
                            std::optional<std::uint32_t> expected_dim = std::nullopt);

// Format chosen by extension (".jsonl" -> JSON Lines, otherwise binary).
void write_store(const std::filesystem::path& path, const EmbeddingStore& store);
// Format detected from the leading bytes.
EmbeddingStore read_store(const std::filesystem::path& path,
                          std::optional<std::uint32_t> expected_dim = std::nullopt);

// Deterministic unit vector keyed by (seed, key): i.i.d. standard normal
// components from a keyed mt19937_64 stream, then normalized.
Embedding synthetic_embed(std::string_view key, std::uint64_t seed, std::size_t dim);

// ---------------------------------------------------------------------------
// Providers stand in for the frozen encoders. Every returned vector is
// L2-normalized (text side optional) and of length dim(). Implementations are
// safe to call from several threads.

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual Embedding get_text(std::string_view text) const = 0;
  virtual Embedding get_ecg(std::string_view id) const = 0;
};

class FileProvider final : public EmbeddingProvider {
 public:
  FileProvider(std::shared_ptr<const EmbeddingStore> ecg_store,
               std::shared_ptr<const EmbeddingStore> text_store, bool normalize_text = true);

  std::size_t dim() const override { return dim_; }
  Embedding get_text(std::string_view text) const override;
  Embedding get_ecg(std::string_view id) const override;

 private:
  std::shared_ptr<const EmbeddingStore> ecg_;
  std::shared_ptr<const EmbeddingStore> text_;
  std::size_t dim_;
  bool normalize_text_;
};

struct SyntheticConfig {
  std::uint64_t seed = 42;
  std::size_t dim = 64;
  double sigma = 0.0;
};

// Texts and unplanted ECG ids map through synthetic_embed. An ECG id planted
// with condition c yields normalize(mean of c's positive-observation
// embeddings + noise), noise i.i.d. N(0, sigma^2) keyed by (seed, id).
class SyntheticProvider final : public EmbeddingProvider {
 public:
  explicit SyntheticProvider(SyntheticConfig config,
                             std::shared_ptr<const kb::KnowledgeBase> kb = nullptr,
                             std::map<std::string, std::string> planted = {});

  std::size_t dim() const override { return config_.dim; }
  Embedding get_text(std::string_view text) const override;
  Embedding get_ecg(std::string_view id) const override;

  const SyntheticConfig& config() const { return config_; }

 private:
  SyntheticConfig config_;
  std::shared_ptr<const kb::KnowledgeBase> kb_;
  std::map<std::string, std::string> planted_;
};

struct HttpProviderConfig {
  std::string base_url;          // e.g. http://127.0.0.1:9000
  double timeout_seconds = 30.0;
  std::string token_env;         // name of the env var holding a bearer token
  std::size_t dim = kDefaultDim;
  std::size_t max_in_flight = 4;
  bool normalize_text = true;
};

// POST /encode/text {"text"} and POST /encode/ecg {"id"}; responses
// {"dim", "values"}. Responses are cached per key for the provider's lifetime.
class HttpProvider final : public EmbeddingProvider {
 public:
  explicit HttpProvider(HttpProviderConfig config);

  std::size_t dim() const override { return config_.dim; }
  Embedding get_text(std::string_view text) const override;
  Embedding get_ecg(std::string_view id) const override;

  std::size_t requests_sent() const;

 private:
  Embedding fetch(const std::string& route, const nlohmann::json& body,
                  const std::string& cache_key, bool normalize) const;

  HttpProviderConfig config_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, Embedding> cache_;
  mutable std::size_t requests_ = 0;
  mutable std::counting_semaphore<64> in_flight_;
};

// Builds a provider from a JSON description:
//   {"kind": "file", "ecg_store": path, "text_store": path}
//   {"kind": "synthetic", "seed": 42, "dim": 64, "sigma": 0.1}
//   {"kind": "http", "base_url": ..., "timeout_seconds": 30, "token_env": ..., "dim": 768}
// "normalize_text": false disables text-side normalization (file/http).
std::unique_ptr<EmbeddingProvider> make_provider(
    const nlohmann::json& config, std::shared_ptr<const kb::KnowledgeBase> kb = nullptr,
    std::map<std::string, std::string> planted = {});

}  // namespace zeta::embed
