#include "zeta/infer.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "zeta/error.hpp"
#include "zeta/text.hpp"
#include "zeta/util.hpp"

namespace zeta::infer {

using nlohmann::json;

std::string_view to_string(AggregationMode m) {
  return m == AggregationMode::Pooled ? "pooled" : "paired";
}

AggregationMode mode_from_string(std::string_view s) {
  if (s == "pooled" || s == "Pooled") return AggregationMode::Pooled;
  if (s == "paired" || s == "Paired") return AggregationMode::Paired;
  fail(ErrorCode::InvalidConfig, fmt::format("unknown aggregation mode '{}'", s));
}

void InferenceConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    fail(ErrorCode::InvalidConfig, fmt::format("tau must be positive, got {}", tau));
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    fail(ErrorCode::InvalidConfig, fmt::format("threshold must lie in (0, 1), got {}", threshold));
  }
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::DimMismatch, fmt::format("cannot compare vectors of dim {} and {}", a.size(), b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return sum;
}

double similarity(std::span<const float> ecg, std::span<const float> obs) {
  return std::clamp(dot(ecg, obs), -1.0, 1.0);
}

double pair_probability(double s_pos, double s_neg, double tau) {
  return logistic((s_pos - s_neg) / tau);
}

namespace {

double mean(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

Aggregate aggregate(std::span<const double> positive, std::span<const double> negative,
                    const InferenceConfig& cfg) {
  if (positive.empty() || negative.empty()) {
    fail(ErrorCode::EmptyPolarity, "aggregation needs at least one positive and one negative similarity");
  }
  Aggregate out;
  out.positive_score = mean(positive);
  out.negative_score = mean(negative);
  if (cfg.mode == AggregationMode::Pooled) {
    out.possibility = logistic((out.positive_score - out.negative_score) / cfg.tau);
    return out;
  }
  if (positive.size() != negative.size()) {
    fail(ErrorCode::PairingUnavailable,
         fmt::format("paired aggregation needs equal counts, got {} positive / {} negative",
                     positive.size(), negative.size()));
  }
  out.pair_probabilities.reserve(positive.size());
  for (std::size_t i = 0; i < positive.size(); ++i) {
    out.pair_probabilities.push_back(pair_probability(positive[i], negative[i], cfg.tau));
  }
  out.possibility = mean(out.pair_probabilities);
  return out;
}

// ---------------------------------------------------------------------------

ObservationBank::ObservationBank(const kb::KnowledgeBase& kb,
                                 const embed::EmbeddingProvider& provider, std::size_t jobs)
    : dim_(provider.dim()) {
  std::set<std::string> unique;
  for (const auto& [_, entry] : kb.conditions) {
    unique.insert(entry.positives.begin(), entry.positives.end());
    unique.insert(entry.negatives.begin(), entry.negatives.end());
  }
  const std::vector<std::string> texts(unique.begin(), unique.end());
  std::vector<embed::Embedding> vectors(texts.size());
  parallel_for(texts.size(), jobs, [&](std::size_t i) { vectors[i] = provider.get_text(texts[i]); });
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (vectors[i].size() != dim_) {
      fail(ErrorCode::DimMismatch, fmt::format("text embedding for '{}' has dim {}, provider dim is {}",
                                               texts[i], vectors[i].size(), dim_));
    }
    vectors_.emplace(texts[i], std::move(vectors[i]));
  }
}

const embed::Embedding& ObservationBank::get(std::string_view text) const {
  const auto it = vectors_.find(std::string(text));
  if (it == vectors_.end()) fail(ErrorCode::MissingKey, fmt::format("observation '{}' was not embedded", text));
  return it->second;
}

ConditionScore score_condition(std::span<const float> ecg, std::string_view condition,
                               const kb::KnowledgeBase& kb, const ObservationBank& bank,
                               const InferenceConfig& cfg) {
  const kb::ConditionEntry* entry = kb.find(condition);
  if (entry == nullptr) fail(ErrorCode::UnknownCondition, fmt::format("unknown condition '{}'", condition));
  if (cfg.mode == AggregationMode::Paired && !entry->paired) {
    fail(ErrorCode::PairingUnavailable,
         fmt::format("condition '{}' has no index-aligned observation pairs", condition));
  }
  if (ecg.size() != bank.dim()) {
    fail(ErrorCode::DimMismatch,
         fmt::format("ECG embedding dim {} does not match text embedding dim {}", ecg.size(), bank.dim()));
  }

  auto sim = [&](const std::string& text) {
    const auto& v = bank.get(text);
    return cfg.text_normalized ? similarity(ecg, v) : dot(ecg, v);
  };

  ConditionScore out;
  out.condition = std::string(condition);
  out.mode_used = cfg.mode;
  std::vector<double> pos;
  std::vector<double> neg;
  for (const auto& text : entry->positives) {
    pos.push_back(sim(text));
    out.per_observation.push_back({text, kb::Polarity::Positive, pos.back(), std::nullopt});
  }
  for (const auto& text : entry->negatives) {
    neg.push_back(sim(text));
    out.per_observation.push_back({text, kb::Polarity::Negative, neg.back(), std::nullopt});
  }
  const Aggregate agg = aggregate(pos, neg, cfg);
  out.positive_score = agg.positive_score;
  out.negative_score = agg.negative_score;
  out.possibility = agg.possibility;
  if (cfg.mode == AggregationMode::Paired) {
    const std::size_t n = agg.pair_probabilities.size();
    for (std::size_t i = 0; i < n; ++i) {
      out.per_observation[i].scaled = agg.pair_probabilities[i];
      out.per_observation[n + i].scaled = 1.0 - agg.pair_probabilities[i];
    }
  }
  return out;
}

ConditionScore score_condition(std::string_view ecg_id, std::string_view condition,
                               const kb::KnowledgeBase& kb,
                               const embed::EmbeddingProvider& provider,
                               const InferenceConfig& cfg) {
  cfg.validate();
  const kb::ConditionEntry* entry = kb.find(condition);
  if (entry == nullptr) fail(ErrorCode::UnknownCondition, fmt::format("unknown condition '{}'", condition));
  kb::KnowledgeBase single;
  single.conditions.emplace(std::string(condition), *entry);
  const ObservationBank bank(single, provider);
  const auto ecg = provider.get_ecg(ecg_id);
  return score_condition(ecg, condition, kb, bank, cfg);
}

Classification classify(std::string_view ecg_id, std::span<const float> ecg,
                        const kb::KnowledgeBase& kb, const ObservationBank& bank,
                        const InferenceConfig& cfg) {
  if (kb.conditions.empty()) fail(ErrorCode::EmptyKnowledgeBase, "knowledge base has no conditions");
  Classification out;
  out.ecg_id = std::string(ecg_id);
  for (const auto& [code, _] : kb.conditions) {
    out.scores.push_back(score_condition(ecg, code, kb, bank, cfg));
    if (out.scores.back().possibility > cfg.threshold) out.predicted.push_back(code);
  }
  return out;
}

Classification classify(std::string_view ecg_id, const kb::KnowledgeBase& kb,
                        const embed::EmbeddingProvider& provider, const InferenceConfig& cfg) {
  cfg.validate();
  if (kb.conditions.empty()) fail(ErrorCode::EmptyKnowledgeBase, "knowledge base has no conditions");
  const ObservationBank bank(kb, provider);
  const auto ecg = provider.get_ecg(ecg_id);
  return classify(ecg_id, ecg, kb, bank, cfg);
}

std::vector<Classification> classify_batch(const std::vector<std::string>& ecg_ids,
                                           const kb::KnowledgeBase& kb,
                                           const embed::EmbeddingProvider& provider,
                                           const InferenceConfig& cfg, std::size_t jobs) {
  cfg.validate();
  if (kb.conditions.empty()) fail(ErrorCode::EmptyKnowledgeBase, "knowledge base has no conditions");
  const ObservationBank bank(kb, provider, jobs);
  std::vector<Classification> out(ecg_ids.size());
  parallel_for(ecg_ids.size(), jobs, [&](std::size_t i) {
    try {
      const auto ecg = provider.get_ecg(ecg_ids[i]);
      out[i] = classify(ecg_ids[i], ecg, kb, bank, cfg);
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("ECG '{}': {}", ecg_ids[i], e.what()));
    }
  });
  return out;
}

// ---------------------------------------------------------------------------

json to_json(std::string_view ecg_id, const ConditionScore& score) {
  json observations = json::array();
  for (const auto& o : score.per_observation) {
    json item{{"text", o.text}, {"polarity", kb::to_string(o.polarity)}, {"similarity", o.similarity}};
    if (o.scaled) item["scaled"] = *o.scaled;
    observations.push_back(std::move(item));
  }
  return json{{"ecg_id", ecg_id},
              {"condition", score.condition},
              {"positive_score", score.positive_score},
              {"negative_score", score.negative_score},
              {"possibility", score.possibility},
              {"mode", to_string(score.mode_used)},
              {"observations", std::move(observations)}};
}

ScoreRow score_row_from_json(const json& j) {
  ScoreRow row;
  try {
    row.ecg_id = j.at("ecg_id").get<std::string>();
    row.condition = j.at("condition").get<std::string>();
    row.positive_score = j.at("positive_score").get<double>();
    row.negative_score = j.at("negative_score").get<double>();
    row.possibility = j.at("possibility").get<double>();
    row.mode = mode_from_string(j.value("mode", "pooled"));
    if (j.contains("observations")) {
      for (const auto& o : j.at("observations")) {
        ObservationScore s;
        s.text = o.at("text").get<std::string>();
        s.polarity = kb::polarity_from_string(o.at("polarity").get<std::string>());
        s.similarity = o.at("similarity").get<double>();
        if (o.contains("scaled")) s.scaled = o.at("scaled").get<double>();
        row.observations.push_back(std::move(s));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, fmt::format("score row: {}", e.what()));
  }
  return row;
}

std::string serialize_score_table(const std::vector<Classification>& results) {
  std::string out;
  for (const auto& r : results) {
    for (const auto& s : r.scores) {
      out += to_json(r.ecg_id, s).dump();
      out.push_back('\n');
    }
  }
  return out;
}

void write_score_table(const std::filesystem::path& path, const std::vector<Classification>& results) {
  write_file(path, serialize_score_table(results));
}

std::vector<ScoreRow> read_score_table(const std::filesystem::path& path) {
  std::vector<ScoreRow> rows;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(score_row_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::MalformedJson, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return rows;
}

}  // namespace zeta::infer
