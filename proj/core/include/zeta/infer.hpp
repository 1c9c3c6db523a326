#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "zeta/embed.hpp"
#include "zeta/kb.hpp"

namespace zeta::infer {

enum class AggregationMode { Pooled, Paired };

std::string_view to_string(AggregationMode m);
AggregationMode mode_from_string(std::string_view s);

struct InferenceConfig {
  double tau = 0.5;
  AggregationMode mode = AggregationMode::Pooled;
  double threshold = 0.5;
  // When false, text embeddings are used unnormalized and similarities are
  // raw dot products (no clamping).
  bool text_normalized = true;

  // Throws InvalidConfig unless tau > 0 and threshold is in (0, 1).
  void validate() const;
};

struct ObservationScore {
  std::string text;
  kb::Polarity polarity = kb::Polarity::Positive;
  double similarity = 0.0;
  // Paired mode: the pair's two-way softmax share for this observation.
  std::optional<double> scaled;
};

struct ConditionScore {
  std::string condition;
  std::vector<ObservationScore> per_observation;  // kb order, positives first
  double positive_score = 0.0;
  double negative_score = 0.0;
  double possibility = 0.5;
  AggregationMode mode_used = AggregationMode::Pooled;
};

double logistic(double x);

// Sum of products accumulated in double.
double dot(std::span<const float> a, std::span<const float> b);

// Dot product of two unit vectors, clamped to [-1, 1]. Throws DimMismatch.
double similarity(std::span<const float> ecg, std::span<const float> obs);

// exp(p/tau) / (exp(p/tau) + exp(n/tau)), evaluated as logistic((p - n) / tau).
double pair_probability(double s_pos, double s_neg, double tau);

struct Aggregate {
  double positive_score = 0.0;
  double negative_score = 0.0;
  double possibility = 0.5;
  std::vector<double> pair_probabilities;  // Paired only
};

// Reasoning step over precomputed similarities. Paired mode requires equally
// sized lists aligned by index (PairingUnavailable otherwise).
Aggregate aggregate(std::span<const double> positive, std::span<const double> negative,
                    const InferenceConfig& cfg);

// Text embeddings for every observation of a knowledge base, computed once and
// shared read-only across scoring threads.
class ObservationBank {
 public:
  ObservationBank(const kb::KnowledgeBase& kb, const embed::EmbeddingProvider& provider,
                  std::size_t jobs = 1);

  const embed::Embedding& get(std::string_view text) const;
  std::size_t size() const { return vectors_.size(); }
  std::size_t dim() const { return dim_; }

 private:
  std::unordered_map<std::string, embed::Embedding> vectors_;
  std::size_t dim_ = 0;
};

ConditionScore score_condition(std::span<const float> ecg, std::string_view condition,
                               const kb::KnowledgeBase& kb, const ObservationBank& bank,
                               const InferenceConfig& cfg);

ConditionScore score_condition(std::string_view ecg_id, std::string_view condition,
                               const kb::KnowledgeBase& kb,
                               const embed::EmbeddingProvider& provider,
                               const InferenceConfig& cfg);

struct Classification {
  std::string ecg_id;
  std::vector<std::string> predicted;   // possibility > threshold, code order
  std::vector<ConditionScore> scores;   // every condition, code order
};

Classification classify(std::string_view ecg_id, std::span<const float> ecg,
                        const kb::KnowledgeBase& kb, const ObservationBank& bank,
                        const InferenceConfig& cfg);

Classification classify(std::string_view ecg_id, const kb::KnowledgeBase& kb,
                        const embed::EmbeddingProvider& provider, const InferenceConfig& cfg);

// Scores every ECG against every condition, embedding observation texts once.
// Output order follows `ecg_ids`.
std::vector<Classification> classify_batch(const std::vector<std::string>& ecg_ids,
                                           const kb::KnowledgeBase& kb,
                                           const embed::EmbeddingProvider& provider,
                                           const InferenceConfig& cfg, std::size_t jobs = 1);

// ---- score table (JSONL, one line per (ecg_id, condition)) ----

struct ScoreRow {
  std::string ecg_id;
  std::string condition;
  double positive_score = 0.0;
  double negative_score = 0.0;
  double possibility = 0.0;
  AggregationMode mode = AggregationMode::Pooled;
  std::vector<ObservationScore> observations;
};

nlohmann::json to_json(std::string_view ecg_id, const ConditionScore& score);
ScoreRow score_row_from_json(const nlohmann::json& j);

std::string serialize_score_table(const std::vector<Classification>& results);
void write_score_table(const std::filesystem::path& path, const std::vector<Classification>& results);
std::vector<ScoreRow> read_score_table(const std::filesystem::path& path);

}  // namespace zeta::infer
