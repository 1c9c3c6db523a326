#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "zeta/eval.hpp"
#include "zeta/infer.hpp"

namespace zeta::study {

enum class Arm { PosHigh, PosLow, NegHigh, NegLow };

std::string_view to_string(Arm a);
Arm arm_from_string(std::string_view s);

struct ScoredSample {
  std::string sample_id;
  double possibility = 0.0;
  int label = 0;
  std::vector<infer::ObservationScore> observations;
};

struct StudyItem {
  std::string condition;
  std::string sample_id;
  Arm arm = Arm::PosHigh;
  int label = 0;
  double possibility = 0.0;
  std::vector<infer::ObservationScore> observations;
};

struct StudyPlan {
  std::string target_condition;
  std::uint64_t seed = 42;
  std::vector<StudyItem> samples;  // shuffled
};

// Per ground-truth class: the k highest-possibility samples, then the k
// lowest among the rest; ties by ascending sample_id. Needs 2k samples per
// class (InsufficientSamples names the arm that could not be filled).
StudyPlan build_study_plan(std::string_view condition, std::vector<ScoredSample> samples,
                           std::size_t k_per_arm = 3, std::uint64_t seed = 42);

// Deterministic Fisher-Yates driven by mt19937_64.
template <typename T>
void shuffle(std::vector<T>& v, std::uint64_t seed);

struct StudySession {
  std::string session_id;
  double threshold = 0.5;
  std::uint64_t seed = 42;
  bool hide_observation_scores = false;
  std::vector<StudyItem> items;

  bool model_prediction(const StudyItem& item) const { return item.possibility > threshold; }
};

// Builds one plan per condition from a score table and labels.
StudySession build_session(std::string session_id, const std::vector<std::string>& conditions,
                           const std::vector<infer::ScoreRow>& rows, const eval::LabelTable& labels,
                           std::size_t k_per_arm, std::uint64_t seed, double threshold,
                           bool hide_observation_scores);

nlohmann::json to_json(const StudySession& s);
StudySession session_from_json(const nlohmann::json& j);
void write_session(const std::filesystem::path& path, const StudySession& s);
StudySession read_session(const std::filesystem::path& path);

struct StudyAnswer {
  std::string session_id;
  std::string condition;
  std::string sample_id;
  std::string expert_id;
  bool present = false;
  std::string timestamp;
};

nlohmann::json to_json(const StudyAnswer& a);
StudyAnswer answer_from_json(const nlohmann::json& j);
std::vector<StudyAnswer> read_answer_log(const std::filesystem::path& path);

enum class RecordOutcome { Recorded, Duplicate };

// Session plus its recorded answers.
class StudyState {
 public:
  explicit StudyState(StudySession session);

  const StudySession& session() const { return session_; }
  const std::vector<StudyAnswer>& answers() const { return answers_; }

  // Index of the first item the expert has not answered.
  std::optional<std::size_t> next_for(std::string_view expert_id) const;

  // Throws NotFound (item not in session), InvalidFormat (empty expert) or
  // Conflict (same key, different diagnosis).
  RecordOutcome record(const StudyAnswer& answer);

  // Blinded view of one item: no possibility, label or arm.
  nlohmann::json blinded_item(std::size_t index) const;

 private:
  StudySession session_;
  std::map<std::pair<std::string, std::string>, std::size_t> item_index_;
  std::map<std::tuple<std::string, std::string, std::string>, bool> recorded_;
  std::vector<StudyAnswer> answers_;
};

struct ReportRows {
  eval::ConfusionMetrics guidance;
  eval::ConfusionMetrics misleading;
  eval::ConfusionMetrics model;
  eval::ConfusionMetrics assisted;
};

struct StudyReport {
  eval::Averaging averaging = eval::Averaging::Weighted;
  ReportRows pooled;
  std::map<std::string, ReportRows> per_expert;
  std::size_t n_answers = 0;
};

// Guidance: answers on items the model classified correctly; Misleading: the
// rest. "ZETA" scores the model's thresholded prediction on the same answered
// items; "Expert + ZETA" scores every expert answer.
StudyReport build_report(const StudyState& state, eval::Averaging averaging = eval::Averaging::Weighted);

nlohmann::json to_json(const StudyReport& r);
std::string render_report(const StudyReport& r);

}  // namespace zeta::study
