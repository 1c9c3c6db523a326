#include "zeta/embed.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "zeta/error.hpp"
#include "zeta/text.hpp"
#include "zeta/util.hpp"

namespace zeta::embed {

using nlohmann::json;

double l2_norm(std::span<const float> v) {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sum);
}

Embedding l2_normalize(std::span<const float> v) {
  const double norm = l2_norm(v);
  if (!(norm > 1e-12)) fail(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  Embedding out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(v[i]) / norm);
  }
  return out;
}

// ---------------------------------------------------------------------------
// EmbeddingStore

EmbeddingStore::EmbeddingStore(std::uint32_t dim, StoreKind kind) : dim_(dim), kind_(kind) {
  if (dim == 0) fail(ErrorCode::InvalidConfig, "embedding dim must be positive");
}

void EmbeddingStore::add(std::string id, Embedding values) {
  if (values.size() != dim_) {
    fail(ErrorCode::DimMismatch,
         fmt::format("vector for '{}' has dim {}, store dim is {}", id, values.size(), dim_));
  }
  if (id.size() > 0xFFFF) fail(ErrorCode::InvalidFormat, "embedding id longer than 65535 bytes");
  if (index_.count(id) != 0) fail(ErrorCode::DuplicateId, fmt::format("duplicate embedding id '{}'", id));
  index_.emplace(id, entries_.size());
  entries_.emplace_back(std::move(id), std::move(values));
}

const Embedding* EmbeddingStore::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
  if (a.dim_ != b.dim_ || a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& [ida, va] = a.entries_[i];
    const auto& [idb, vb] = b.entries_[i];
    if (ida != idb) return false;
    if (std::memcmp(va.data(), vb.data(), va.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// ZEB1 binary

namespace {

constexpr char kMagic[4] = {'Z', 'E', 'B', '1'};

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void need(std::size_t n, std::string_view what) const {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorCode::TruncatedFile,
           fmt::format("truncated store: need {} bytes for {} at offset {}, {} left", n, what,
                       pos_, bytes_.size() - pos_));
    }
  }

  std::uint32_t u32(std::string_view what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint16_t u16(std::string_view what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(byte(pos_) | (byte(pos_ + 1) << 8));
    pos_ += 2;
    return v;
  }

  std::string_view take(std::size_t n, std::string_view what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::uint32_t byte(std::size_t i) const { return static_cast<unsigned char>(bytes_[i]); }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_binary(const EmbeddingStore& store) {
  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(store.size()));
  put_u32(out, store.dim());
  for (const auto& [id, values] : store.entries()) {
    put_u16(out, static_cast<std::uint16_t>(id.size()));
    out += id;
    for (float x : values) put_u32(out, std::bit_cast<std::uint32_t>(x));
  }
  return out;
}

EmbeddingStore decode_binary(std::string_view bytes, std::optional<std::uint32_t> expected_dim) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorCode::BadMagic, "not a ZEB1 embedding store");
  }
  Reader r(bytes.substr(4));
  const std::uint32_t count = r.u32("record count");
  const std::uint32_t dim = r.u32("dim");
  if (dim == 0) fail(ErrorCode::InvalidFormat, "store header declares dim 0");
  if (expected_dim && *expected_dim != dim) {
    fail(ErrorCode::DimMismatch, fmt::format("store dim {} does not match expected dim {}", dim, *expected_dim));
  }
  EmbeddingStore store(dim);
  for (std::uint32_t rec = 0; rec < count; ++rec) {
    const std::uint16_t id_len = r.u16("id length");
    std::string id(r.take(id_len, "id"));
    const auto payload = r.take(static_cast<std::size_t>(dim) * 4, "values");
    Embedding values(dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[i * 4 + b])) << (8 * b);
      }
      values[i] = std::bit_cast<float>(bits);
    }
    store.add(std::move(id), std::move(values));
  }
  if (r.remaining() != 0) {
    fail(ErrorCode::TrailingData, fmt::format("{} unexpected bytes after the last record", r.remaining()));
  }
  return store;
}

// ---------------------------------------------------------------------------
// JSON Lines

std::string encode_jsonl(const EmbeddingStore& store) {
  std::string out = json{{"zeb_jsonl", 1}, {"dim", store.dim()}}.dump();
  out.push_back('\n');
  for (const auto& [id, values] : store.entries()) {
    json line{{"id", id}, {"values", values}};
    out += line.dump();
    out.push_back('\n');
  }
  return out;
}

EmbeddingStore decode_jsonl(std::string_view text, std::optional<std::uint32_t> expected_dim) {
  const auto lines = split(text, '\n');
  std::size_t i = 0;
  while (i < lines.size() && trim(lines[i]).empty()) ++i;
  if (i == lines.size()) fail(ErrorCode::BadMagic, "empty JSONL store");
  json header;
  try {
    header = json::parse(lines[i]);
  } catch (const json::parse_error&) {
    fail(ErrorCode::BadMagic, "JSONL store header is not JSON");
  }
  if (!header.is_object() || header.value("zeb_jsonl", 0) != 1 || !header.contains("dim")) {
    fail(ErrorCode::BadMagic, "missing {\"zeb_jsonl\": 1, \"dim\": n} header");
  }
  const auto dim = header.at("dim").get<std::uint32_t>();
  if (expected_dim && *expected_dim != dim) {
    fail(ErrorCode::DimMismatch, fmt::format("store dim {} does not match expected dim {}", dim, *expected_dim));
  }
  EmbeddingStore store(dim);
  for (++i; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      const json rec = json::parse(lines[i]);
      store.add(rec.at("id").get<std::string>(), rec.at("values").get<Embedding>());
    } catch (const json::exception& e) {
      fail(ErrorCode::InvalidFormat, fmt::format("JSONL store line {}: {}", i + 1, e.what()));
    }
  }
  return store;
}

void write_store(const std::filesystem::path& path, const EmbeddingStore& store) {
  write_file(path, path.extension() == ".jsonl" ? encode_jsonl(store) : encode_binary(store));
}

EmbeddingStore read_store(const std::filesystem::path& path, std::optional<std::uint32_t> expected_dim) {
  const std::string bytes = read_file(path);
  const auto first = bytes.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && bytes[first] == '{') return decode_jsonl(bytes, expected_dim);
  return decode_binary(bytes, expected_dim);
}

// ---------------------------------------------------------------------------
// synthetic

namespace {

// Box-Muller over mt19937_64 output; both are fully specified, unlike
// std::normal_distribution.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t key) : gen_(key) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace

Embedding synthetic_embed(std::string_view key, std::uint64_t seed, std::size_t dim) {
  if (dim < 2) fail(ErrorCode::InvalidConfig, "synthetic embeddings need dim >= 2");
  GaussianStream g(hash_key(seed, key));
  Embedding raw(dim);
  for (auto& x : raw) x = static_cast<float>(g.next());
  return l2_normalize(raw);
}

SyntheticProvider::SyntheticProvider(SyntheticConfig config,
                                     std::shared_ptr<const kb::KnowledgeBase> kb,
                                     std::map<std::string, std::string> planted)
    : config_(config), kb_(std::move(kb)), planted_(std::move(planted)) {
  if (config_.dim < 2) fail(ErrorCode::InvalidConfig, "synthetic provider needs dim >= 2");
  if (config_.sigma < 0) fail(ErrorCode::InvalidConfig, "synthetic noise sigma must be >= 0");
  if (!planted_.empty() && !kb_) {
    fail(ErrorCode::InvalidConfig, "planted synthetic ECGs need a knowledge base");
  }
  for (const auto& [id, condition] : planted_) {
    if (kb_->find(condition) == nullptr) {
      fail(ErrorCode::UnknownCondition,
           fmt::format("ECG '{}' is planted with condition '{}' which is not in the knowledge base",
                       id, condition));
    }
  }
}

Embedding SyntheticProvider::get_text(std::string_view text) const {
  return synthetic_embed(text, config_.seed, config_.dim);
}

Embedding SyntheticProvider::get_ecg(std::string_view id) const {
  const auto it = planted_.find(std::string(id));
  if (it == planted_.end()) return synthetic_embed(id, config_.seed, config_.dim);

  const auto& positives = kb_->find(it->second)->positives;
  std::vector<double> acc(config_.dim, 0.0);
  for (const auto& text : positives) {
    const Embedding e = get_text(text);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += e[i];
  }
  const double n = static_cast<double>(positives.size());
  GaussianStream noise(hash_key(config_.seed, "noise:" + std::string(id)));
  double norm2 = 0.0;
  for (auto& x : acc) {
    x /= n;
    if (config_.sigma > 0) x += config_.sigma * noise.next();
    norm2 += x * x;
  }
  const double norm = std::sqrt(norm2);
  if (!(norm > 1e-12)) fail(ErrorCode::ZeroVector, fmt::format("planted ECG '{}' has a zero embedding", id));
  Embedding v(config_.dim);
  for (std::size_t i = 0; i < acc.size(); ++i) v[i] = static_cast<float>(acc[i] / norm);
  return v;
}

}  // namespace zeta::embed
