#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zeta/embed.hpp"
#include "zeta/infer.hpp"
#include "zeta/kb.hpp"

namespace zeta::eval {

// Mann-Whitney AUC with mid-ranks for ties. Labels must be 0 or 1.
// Throws LengthMismatch, Empty, DegenerateClass (single-class input).
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Unweighted mean. Throws AllClassesSkipped when `per_class` is empty.
double macro_auc(const std::map<std::string, double>& per_class);

struct Counts {
  std::uint64_t tp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;

  std::uint64_t total() const { return tp + fn + tn + fp; }
  friend bool operator==(const Counts&, const Counts&) = default;
};

Counts count_confusion(std::span<const int> preds, std::span<const int> labels);

enum class Averaging { Binary, Weighted };

std::string_view to_string(Averaging a);
Averaging averaging_from_string(std::string_view s);

// A metric whose denominator is zero is reported as nullopt.
struct ConfusionMetrics {
  Counts counts;
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> f1;
};

// Binary: the positive class only. Weighted: per-class scores for both the
// positive and the negative class, averaged with support weights.
ConfusionMetrics metrics_from_counts(const Counts& c, Averaging avg = Averaging::Binary);
ConfusionMetrics confusion_metrics(std::span<const int> preds, std::span<const int> labels,
                                   Averaging avg = Averaging::Binary);

// Percent with one decimal ("86.2"); "-" for a missing value.
std::string format_percent(std::optional<double> v);

// "<label> acc sens spec f1", e.g. "Guidance 86.2 86.2 61.6 85.7".
std::string render_metrics_row(std::string_view label, const ConfusionMetrics& m);

nlohmann::json to_json(const ConfusionMetrics& m);

// ---- labels ----

// CSV with header `sample_id,labels`; labels separated by ';' (may be empty).
struct LabelTable {
  std::vector<std::string> sample_ids;  // file order
  std::map<std::string, std::set<std::string>> labels;
};

LabelTable parse_labels_csv(std::string_view text);
LabelTable read_labels_csv(const std::filesystem::path& path);
std::string serialize_labels_csv(const LabelTable& table);

struct LabelAliasMap {
  std::string dataset_id;
  std::map<std::string, std::string> aliases;  // local -> canonical
  std::set<std::string> exclude;
};

LabelAliasMap alias_map_from_json(const nlohmann::json& j);
LabelAliasMap read_alias_map(const std::filesystem::path& path);

struct MappedLabels {
  LabelTable table;
  std::size_t dropped_samples = 0;        // every label excluded
  std::set<std::string> passed_through;   // unknown labels kept as-is (lenient mode)
};

// Strict mode throws UnmappedLabel for a label that is neither aliased nor
// excluded; lenient mode keeps it unchanged.
MappedLabels map_labels(const LabelTable& raw, const LabelAliasMap& alias, bool strict = true);

// ---- reports ----

struct ClassResult {
  std::optional<double> auc;  // nullopt when skipped
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  ConfusionMetrics confusion;
};

struct EvalConfig {
  double threshold = 0.5;
  Averaging averaging = Averaging::Binary;
};

struct EvalReport {
  std::map<std::string, ClassResult> per_class;
  double macro_auc = 0.0;
  std::vector<std::string> skipped_classes;
  std::size_t n_samples = 0;
  std::size_t dropped_samples = 0;
  double threshold = 0.5;
  Averaging averaging = Averaging::Binary;
  ConfusionMetrics overall;  // pooled over every (sample, condition)
};

struct LabeledScore {
  std::string sample_id;
  std::string condition;
  double score = 0.0;
  int label = 0;
};

// Joins score rows with labels. Every labeled sample needs a score for every
// condition present in the score table (MissingSample otherwise) and every
// label must name a scored condition (UnknownCondition otherwise). Rows for
// unlabeled samples are ignored. Result is sorted by (condition, sample_id).
std::vector<LabeledScore> join_labels(const std::vector<infer::ScoreRow>& rows,
                                      const LabelTable& labels);

EvalReport build_report(const std::vector<LabeledScore>& scores, const EvalConfig& cfg);

EvalReport evaluate(const std::vector<infer::ScoreRow>& rows, const LabelTable& labels,
                    const EvalConfig& cfg);

nlohmann::json to_json(const EvalReport& r);
// Table layout: one row of condition codes with an "Average" column, one row
// of AUCs in percent, then the pooled confusion metrics.
std::string render_report(const EvalReport& r, std::string_view model_label = "ZETA");

struct BenchmarkResult {
  EvalReport report;
  std::vector<infer::Classification> scores;  // sorted by sample id
};

// Embeds observation texts once, scores every labeled sample against every
// condition, and evaluates. Throws UnknownCondition when a label names a
// condition missing from the knowledge base.
BenchmarkResult run_benchmark(const embed::EmbeddingProvider& provider, const LabelTable& labels,
                              const kb::KnowledgeBase& kb, const infer::InferenceConfig& infer_cfg,
                              const EvalConfig& eval_cfg, std::size_t jobs = 1);

}  // namespace zeta::eval
