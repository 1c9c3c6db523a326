#include "zeta/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "zeta/error.hpp"
#include "zeta/text.hpp"
#include "zeta/util.hpp"

namespace zeta::eval {

using nlohmann::json;

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    fail(ErrorCode::LengthMismatch,
         fmt::format("{} scores but {} labels", scores.size(), labels.size()));
  }
  if (scores.empty()) fail(ErrorCode::Empty, "no scores");
  std::uint64_t n_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      fail(ErrorCode::InvalidFormat, fmt::format("label {} is not 0 or 1", labels[i]));
    }
    if (std::isnan(scores[i])) fail(ErrorCode::InvalidFormat, "score is NaN");
    n_pos += static_cast<std::uint64_t>(labels[i]);
  }
  const std::uint64_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    fail(ErrorCode::DegenerateClass,
         fmt::format("need both classes, got {} positive / {} negative", n_pos, n_neg));
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum, kept integral: a tie group spanning 1-based
  // ranks [lo, hi] gives each member the mid-rank (lo + hi) / 2.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t group_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_pos += static_cast<std::uint64_t>(labels[order[j]]);
      ++j;
    }
    twice_rank_sum += group_pos * static_cast<std::uint64_t>((i + 1) + j);
    i = j;
  }
  const std::uint64_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double macro_auc(const std::map<std::string, double>& per_class) {
  if (per_class.empty()) fail(ErrorCode::AllClassesSkipped, "no class has both positive and negative samples");
  double sum = 0.0;
  for (const auto& [_, auc] : per_class) sum += auc;
  return sum / static_cast<double>(per_class.size());
}

Counts count_confusion(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    fail(ErrorCode::LengthMismatch,
         fmt::format("{} predictions but {} labels", preds.size(), labels.size()));
  }
  if (preds.empty()) fail(ErrorCode::Empty, "no predictions");
  Counts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0;
    const bool y = labels[i] != 0;
    if (p && y) ++c.tp;
    else if (!p && y) ++c.fn;
    else if (!p && !y) ++c.tn;
    else ++c.fp;
  }
  return c;
}

std::string_view to_string(Averaging a) { return a == Averaging::Binary ? "binary" : "weighted"; }

Averaging averaging_from_string(std::string_view s) {
  if (s == "binary") return Averaging::Binary;
  if (s == "weighted") return Averaging::Weighted;
  fail(ErrorCode::InvalidConfig, fmt::format("unknown averaging '{}'", s));
}

namespace {

std::optional<double> ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

// Support-weighted mean of two per-class values; a class without support
// contributes nothing, so its value may be undefined.
std::optional<double> weighted(double w1, std::optional<double> v1, double w0, std::optional<double> v0) {
  if ((w1 > 0 && !v1) || (w0 > 0 && !v0) || w1 + w0 == 0) return std::nullopt;
  double sum = 0.0;
  if (w1 > 0) sum += w1 * *v1;
  if (w0 > 0) sum += w0 * *v0;
  return sum / (w1 + w0);
}

}  // namespace

ConfusionMetrics metrics_from_counts(const Counts& c, Averaging avg) {
  const double tp = static_cast<double>(c.tp);
  const double fn = static_cast<double>(c.fn);
  const double tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp);
  ConfusionMetrics m;
  m.counts = c;
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  const auto sens1 = ratio(tp, tp + fn);
  const auto spec1 = ratio(tn, tn + fp);
  const auto f1_1 = ratio(2 * tp, 2 * tp + fp + fn);
  if (avg == Averaging::Binary) {
    m.sensitivity = sens1;
    m.specificity = spec1;
    m.f1 = f1_1;
    return m;
  }
  // Negative class viewed as the positive one: roles of TP/TN and FP/FN swap.
  const auto sens0 = ratio(tn, tn + fp);
  const auto spec0 = ratio(tp, tp + fn);
  const auto f1_0 = ratio(2 * tn, 2 * tn + fn + fp);
  const double support1 = tp + fn;
  const double support0 = tn + fp;
  m.sensitivity = weighted(support1, sens1, support0, sens0);
  m.specificity = weighted(support1, spec1, support0, spec0);
  m.f1 = weighted(support1, f1_1, support0, f1_0);
  return m;
}

ConfusionMetrics confusion_metrics(std::span<const int> preds, std::span<const int> labels, Averaging avg) {
  return metrics_from_counts(count_confusion(preds, labels), avg);
}

std::string format_percent(std::optional<double> v) {
  if (!v) return "-";
  return fmt::format("{:.1f}", *v * 100.0);
}

std::string render_metrics_row(std::string_view label, const ConfusionMetrics& m) {
  return fmt::format("{} {} {} {} {}", label, format_percent(m.accuracy), format_percent(m.sensitivity),
                     format_percent(m.specificity), format_percent(m.f1));
}

namespace {

json opt_json(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const ConfusionMetrics& m) {
  return json{{"tp", m.counts.tp},
              {"fn", m.counts.fn},
              {"tn", m.counts.tn},
              {"fp", m.counts.fp},
              {"accuracy", opt_json(m.accuracy)},
              {"sensitivity", opt_json(m.sensitivity)},
              {"specificity", opt_json(m.specificity)},
              {"f1", opt_json(m.f1)}};
}

// ---------------------------------------------------------------------------

LabelTable parse_labels_csv(std::string_view text) {
  LabelTable table;
  const auto lines = split(text, '\n');
  bool header_seen = false;
  std::size_t line_no = 0;
  for (auto line : lines) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!header_seen) {
      if (trim(line.substr(0, line.find(','))) != "sample_id") {
        fail(ErrorCode::InvalidFormat, "labels file must start with a 'sample_id,labels' header");
      }
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      fail(ErrorCode::InvalidFormat, fmt::format("labels line {}: expected 'sample_id,labels'", line_no));
    }
    std::string id = trim(line.substr(0, comma));
    if (id.empty()) fail(ErrorCode::InvalidFormat, fmt::format("labels line {}: empty sample_id", line_no));
    std::set<std::string> set;
    for (const auto& l : split(line.substr(comma + 1), ';')) {
      auto t = trim(l);
      if (!t.empty()) set.insert(std::move(t));
    }
    if (!table.labels.emplace(id, std::move(set)).second) {
      fail(ErrorCode::DuplicateId, fmt::format("labels line {}: duplicate sample_id '{}'", line_no, id));
    }
    table.sample_ids.push_back(std::move(id));
  }
  if (!header_seen) fail(ErrorCode::InvalidFormat, "labels file is empty");
  return table;
}

LabelTable read_labels_csv(const std::filesystem::path& path) { return parse_labels_csv(read_file(path)); }

std::string serialize_labels_csv(const LabelTable& table) {
  std::string out = "sample_id,labels\n";
  for (const auto& id : table.sample_ids) {
    std::vector<std::string> ls(table.labels.at(id).begin(), table.labels.at(id).end());
    out += fmt::format("{},{}\n", id, fmt::join(ls, ";"));
  }
  return out;
}

LabelAliasMap alias_map_from_json(const json& j) {
  LabelAliasMap m;
  try {
    m.dataset_id = j.value("dataset_id", "");
    if (j.contains("aliases")) m.aliases = j.at("aliases").get<std::map<std::string, std::string>>();
    if (j.contains("exclude")) m.exclude = j.at("exclude").get<std::set<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, fmt::format("alias map: {}", e.what()));
  }
  return m;
}

LabelAliasMap read_alias_map(const std::filesystem::path& path) {
  try {
    return alias_map_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedJson, fmt::format("{}: {}", path.string(), e.what()));
  }
}

MappedLabels map_labels(const LabelTable& raw, const LabelAliasMap& alias, bool strict) {
  MappedLabels out;
  for (const auto& id : raw.sample_ids) {
    const auto& local = raw.labels.at(id);
    std::set<std::string> canonical;
    for (const auto& l : local) {
      if (const auto it = alias.aliases.find(l); it != alias.aliases.end()) {
        canonical.insert(it->second);
      } else if (alias.exclude.contains(l)) {
        continue;
      } else if (strict) {
        fail(ErrorCode::UnmappedLabel,
             fmt::format("label '{}' (sample '{}') has no alias in dataset '{}'", l, id, alias.dataset_id));
      } else {
        out.passed_through.insert(l);
        canonical.insert(l);
      }
    }
    if (!local.empty() && canonical.empty()) {
      ++out.dropped_samples;
      continue;
    }
    out.table.sample_ids.push_back(id);
    out.table.labels.emplace(id, std::move(canonical));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<LabeledScore> join_labels(const std::vector<infer::ScoreRow>& rows, const LabelTable& labels) {
  std::set<std::string> conditions;
  std::map<std::pair<std::string, std::string>, double> index;
  for (const auto& r : rows) {
    conditions.insert(r.condition);
    if (!index.emplace(std::pair{r.ecg_id, r.condition}, r.possibility).second) {
      fail(ErrorCode::DuplicateId,
           fmt::format("score table has two rows for ({}, {})", r.ecg_id, r.condition));
    }
  }
  for (const auto& id : labels.sample_ids) {
    for (const auto& l : labels.labels.at(id)) {
      if (!conditions.contains(l)) {
        fail(ErrorCode::UnknownCondition,
             fmt::format("sample '{}' is labeled '{}', which has no scores", id, l));
      }
    }
  }
  std::vector<std::string> ids = labels.sample_ids;
  std::sort(ids.begin(), ids.end());
  std::vector<LabeledScore> out;
  out.reserve(ids.size() * conditions.size());
  for (const auto& c : conditions) {
    for (const auto& id : ids) {
      const auto it = index.find({id, c});
      if (it == index.end()) {
        fail(ErrorCode::MissingSample, fmt::format("sample '{}' has no score for condition '{}'", id, c));
      }
      out.push_back({id, c, it->second, labels.labels.at(id).contains(c) ? 1 : 0});
    }
  }
  return out;
}

EvalReport build_report(const std::vector<LabeledScore>& scores, const EvalConfig& cfg) {
  if (scores.empty()) fail(ErrorCode::Empty, "nothing to evaluate");
  std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> by_class;
  std::set<std::string> samples;
  for (const auto& s : scores) {
    auto& [sc, lb] = by_class[s.condition];
    sc.push_back(s.score);
    lb.push_back(s.label);
    samples.insert(s.sample_id);
  }

  EvalReport r;
  r.threshold = cfg.threshold;
  r.averaging = cfg.averaging;
  r.n_samples = samples.size();
  std::map<std::string, double> aucs;
  Counts total;
  for (const auto& [code, data] : by_class) {
    const auto& [sc, lb] = data;
    ClassResult cr;
    cr.n_pos = static_cast<std::size_t>(std::count(lb.begin(), lb.end(), 1));
    cr.n_neg = lb.size() - cr.n_pos;
    if (cr.n_pos > 0 && cr.n_neg > 0) {
      cr.auc = roc_auc(sc, lb);
      aucs.emplace(code, *cr.auc);
    } else {
      r.skipped_classes.push_back(code);
    }
    std::vector<int> preds(sc.size());
    std::transform(sc.begin(), sc.end(), preds.begin(), [&](double s) { return s > cfg.threshold ? 1 : 0; });
    const Counts c = count_confusion(preds, lb);
    cr.confusion = metrics_from_counts(c, cfg.averaging);
    total.tp += c.tp;
    total.fn += c.fn;
    total.tn += c.tn;
    total.fp += c.fp;
    r.per_class.emplace(code, std::move(cr));
  }
  r.macro_auc = macro_auc(aucs);
  r.overall = metrics_from_counts(total, cfg.averaging);
  return r;
}

EvalReport evaluate(const std::vector<infer::ScoreRow>& rows, const LabelTable& labels, const EvalConfig& cfg) {
  return build_report(join_labels(rows, labels), cfg);
}

json to_json(const EvalReport& r) {
  json per_class = json::object();
  for (const auto& [code, cr] : r.per_class) {
    per_class[code] = json{{"auc", opt_json(cr.auc)},
                           {"n_pos", cr.n_pos},
                           {"n_neg", cr.n_neg},
                           {"confusion", to_json(cr.confusion)}};
  }
  return json{{"per_class", std::move(per_class)},
              {"macro_auc", r.macro_auc},
              {"skipped_classes", r.skipped_classes},
              {"n_samples", r.n_samples},
              {"dropped_samples", r.dropped_samples},
              {"threshold", r.threshold},
              {"averaging", to_string(r.averaging)},
              {"confusion", to_json(r.overall)}};
}

std::string render_report(const EvalReport& r, std::string_view model_label) {
  std::vector<std::string> head{"Model"};
  std::vector<std::string> row{std::string(model_label)};
  for (const auto& [code, cr] : r.per_class) {
    if (!cr.auc) continue;
    head.push_back(code);
    row.push_back(format_percent(cr.auc));
  }
  head.emplace_back("Average");
  row.push_back(format_percent(r.macro_auc));

  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
      s += fmt::format("{:<{}}  ", cells[i], std::max(head[i].size(), row[i].size()));
    }
    return s + cells.back() + "\n";
  };
  std::string out = line(head) + line(row);
  if (!r.skipped_classes.empty()) {
    out += fmt::format("skipped (single class): {}\n", fmt::join(r.skipped_classes, ", "));
  }
  out += fmt::format("\nthreshold {} ({})\nModel Accuracy Sensitivity Specificity F1-score\n", r.threshold,
                     to_string(r.averaging));
  out += render_metrics_row(model_label, r.overall);
  out.push_back('\n');
  return out;
}

BenchmarkResult run_benchmark(const embed::EmbeddingProvider& provider, const LabelTable& labels,
                              const kb::KnowledgeBase& kb, const infer::InferenceConfig& infer_cfg,
                              const EvalConfig& eval_cfg, std::size_t jobs) {
  for (const auto& id : labels.sample_ids) {
    for (const auto& l : labels.labels.at(id)) {
      if (kb.find(l) == nullptr) {
        fail(ErrorCode::UnknownCondition,
             fmt::format("label '{}' (sample '{}') is not a condition in the knowledge base", l, id));
      }
    }
  }
  std::vector<std::string> ids = labels.sample_ids;
  std::sort(ids.begin(), ids.end());

  BenchmarkResult out;
  out.scores = infer::classify_batch(ids, kb, provider, infer_cfg, jobs);
  std::vector<LabeledScore> labeled;
  for (const auto& cls : out.scores) {
    for (const auto& s : cls.scores) {
      labeled.push_back({cls.ecg_id, s.condition, s.possibility,
                         labels.labels.at(cls.ecg_id).contains(s.condition) ? 1 : 0});
    }
  }
  out.report = build_report(labeled, eval_cfg);
  return out;
}

}  // namespace zeta::eval
