#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace zeta::kb {

struct ConditionId {
  std::string code;
  std::string display_name;

  friend bool operator==(const ConditionId&, const ConditionId&) = default;
};

enum class Polarity { Positive, Negative };

std::string_view to_string(Polarity p);
Polarity polarity_from_string(std::string_view s);

struct PoolKind {
  enum class Kind { DSCP, CDCP };

  Kind kind = Kind::DSCP;
  std::string dataset_id;  // empty for CDCP

  static PoolKind dscp(std::string dataset_id) { return {Kind::DSCP, std::move(dataset_id)}; }
  static PoolKind cdcp() { return {Kind::CDCP, {}}; }

  friend bool operator==(const PoolKind&, const PoolKind&) = default;
};

enum class ReviewAction { Accept, Revise, Reject };
enum class ReviewReason { Correctness, Clarity, Directness, Contrast };
enum class ReviewStatus { Pending, Accepted, Rejected };

std::string_view to_string(ReviewAction a);
std::string_view to_string(ReviewReason r);
std::string_view to_string(ReviewStatus s);
ReviewAction action_from_string(std::string_view s);
ReviewReason reason_from_string(std::string_view s);
ReviewStatus status_from_string(std::string_view s);

struct ReviewEvent {
  std::uint64_t sequence = 0;  // 0 = assign on append
  std::string candidate_id;
  ReviewAction action = ReviewAction::Accept;
  std::optional<std::string> revised_text;
  std::vector<ReviewReason> reasons;
  std::string reviewer;
  std::string timestamp;
  std::string note;

  friend bool operator==(const ReviewEvent&, const ReviewEvent&) = default;
};

// One step in a candidate's review history.
struct HistoryEntry {
  std::uint64_t sequence = 0;
  ReviewAction action = ReviewAction::Accept;
  std::string text_before;
  std::string text_after;
  std::vector<ReviewReason> reasons;

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct ObservationCandidate {
  std::string id;
  ConditionId condition;
  Polarity polarity = Polarity::Positive;
  std::string text;
  std::string normalized_text;
  std::string source_model;
  PoolKind source_pool;
  // Condition label the candidate was generated under, before alias mapping.
  std::string origin;
  std::optional<int> pair_index;
  // Ids of candidates collapsed into this one by de-duplication.
  std::vector<std::string> merged_from;
  ReviewStatus status = ReviewStatus::Pending;
  std::vector<HistoryEntry> history;

  friend bool operator==(const ObservationCandidate&, const ObservationCandidate&) = default;
};

struct CandidatePool {
  PoolKind kind;
  std::map<std::string, std::string> alias_map;
  std::vector<ObservationCandidate> candidates;
  std::vector<ReviewEvent> events;

  const ObservationCandidate* find(std::string_view id) const;
  ObservationCandidate* find(std::string_view id);

  friend bool operator==(const CandidatePool&, const CandidatePool&) = default;
};

struct ConditionEntry {
  std::string display_name;
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
  bool paired = false;

  friend bool operator==(const ConditionEntry&, const ConditionEntry&) = default;
};

// Read-only after construction; safe to share across threads.
struct KnowledgeBase {
  std::string version;
  std::map<std::string, ConditionEntry> conditions;
  std::vector<std::string> provenance;

  const ConditionEntry* find(std::string_view code) const;

  friend bool operator==(const KnowledgeBase&, const KnowledgeBase&) = default;
};

// LLM output -> 5 positive + 5 negative candidates. Code fences and prose
// around the JSON object are stripped. The object key must match either the
// condition code or its display name.
std::vector<ObservationCandidate> parse_llm_response(std::string_view raw,
                                                     const ConditionId& condition,
                                                     std::string_view source_model);

// Concatenates all responses per canonical condition and collapses duplicates
// (same condition, polarity, normalized text), keeping the earliest candidate
// by (source_model, pair_index). The result does not depend on the order of
// `responses`.
CandidatePool build_pool(const std::vector<std::vector<ObservationCandidate>>& responses,
                         const PoolKind& kind,
                         const std::map<std::string, std::string>& alias_map = {});

// Number of positive candidates whose negative partner is present.
std::size_t pair_count(const CandidatePool& pool, std::string_view condition_code);

// Validates and applies one event in place. On error the pool is unchanged.
void apply_review(CandidatePool& pool, ReviewEvent event);

// Pure fold of `events` (in sequence order) over `initial`.
CandidatePool replay(CandidatePool initial, std::vector<ReviewEvent> events);

// Accepted (possibly revised) observations only.
KnowledgeBase export_reviewed(const CandidatePool& pool);

// Every non-rejected candidate, reviewed or not. `limit` caps each
// (condition, polarity) list.
KnowledgeBase export_candidates(const CandidatePool& pool,
                                std::optional<std::size_t> limit = std::nullopt);

// ---- serialization ----

nlohmann::json to_json(const ObservationCandidate& c);
ObservationCandidate candidate_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CandidatePool& pool);
CandidatePool pool_from_json(const nlohmann::json& j);
void write_pool(const std::filesystem::path& path, const CandidatePool& pool);
CandidatePool read_pool(const std::filesystem::path& path);

nlohmann::json to_json(const ReviewEvent& e);
ReviewEvent event_from_json(const nlohmann::json& j);
std::vector<ReviewEvent> read_review_log(const std::filesystem::path& path);
void append_review_log(const std::filesystem::path& path, const ReviewEvent& e);

nlohmann::json to_json(const KnowledgeBase& kb);
KnowledgeBase kb_from_json(const nlohmann::json& j);
std::string serialize_kb(const KnowledgeBase& kb);
void write_kb(const std::filesystem::path& path, const KnowledgeBase& kb);
KnowledgeBase read_kb(const std::filesystem::path& path);

// Condition list file: JSON array of {"code", "display_name"}.
std::vector<ConditionId> read_conditions(const std::filesystem::path& path);

}  // namespace zeta::kb
