#include "zeta/study.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>

#include <fmt/format.h>

#include "zeta/error.hpp"
#include "zeta/text.hpp"
#include "zeta/util.hpp"

namespace zeta::study {

using nlohmann::json;

std::string_view to_string(Arm a) {
  switch (a) {
    case Arm::PosHigh: return "PosHigh";
    case Arm::PosLow: return "PosLow";
    case Arm::NegHigh: return "NegHigh";
    case Arm::NegLow: return "NegLow";
  }
  return "?";
}

Arm arm_from_string(std::string_view s) {
  for (Arm a : {Arm::PosHigh, Arm::PosLow, Arm::NegHigh, Arm::NegLow}) {
    if (to_string(a) == s) return a;
  }
  fail(ErrorCode::InvalidFormat, fmt::format("unknown arm '{}'", s));
}

template <typename T>
void shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    // Unbiased draw from [0, i) by rejection.
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    std::swap(v[i - 1], v[static_cast<std::size_t>(x % bound)]);
  }
}

template void shuffle<StudyItem>(std::vector<StudyItem>&, std::uint64_t);
template void shuffle<int>(std::vector<int>&, std::uint64_t);
template void shuffle<std::string>(std::vector<std::string>&, std::uint64_t);

namespace {

void take_arms(std::vector<ScoredSample> cls, std::size_t k, Arm high, Arm low, std::string_view condition,
               std::vector<StudyItem>& out) {
  if (cls.size() < 2 * k) {
    const Arm short_arm = cls.size() < k ? high : low;
    fail(ErrorCode::InsufficientSamples,
         fmt::format("{}: arm {} needs {} samples but only {} of this class are available (arms are disjoint)",
                     condition, to_string(short_arm), k, cls.size() < k ? cls.size() : cls.size() - k));
  }
  std::sort(cls.begin(), cls.end(), [](const ScoredSample& a, const ScoredSample& b) {
    return a.possibility != b.possibility ? a.possibility > b.possibility : a.sample_id < b.sample_id;
  });
  auto emit = [&](ScoredSample& s, Arm arm) {
    out.push_back({std::string(condition), std::move(s.sample_id), arm, s.label, s.possibility,
                   std::move(s.observations)});
  };
  for (std::size_t i = 0; i < k; ++i) emit(cls[i], high);
  std::vector<ScoredSample> rest(std::make_move_iterator(cls.begin() + static_cast<std::ptrdiff_t>(k)),
                                 std::make_move_iterator(cls.end()));
  std::sort(rest.begin(), rest.end(), [](const ScoredSample& a, const ScoredSample& b) {
    return a.possibility != b.possibility ? a.possibility < b.possibility : a.sample_id < b.sample_id;
  });
  for (std::size_t i = 0; i < k; ++i) emit(rest[i], low);
}

}  // namespace

StudyPlan build_study_plan(std::string_view condition, std::vector<ScoredSample> samples, std::size_t k_per_arm,
                           std::uint64_t seed) {
  if (k_per_arm == 0) fail(ErrorCode::InvalidConfig, "k_per_arm must be positive");
  std::set<std::string> ids;
  std::vector<ScoredSample> pos;
  std::vector<ScoredSample> neg;
  for (auto& s : samples) {
    if (!ids.insert(s.sample_id).second) {
      fail(ErrorCode::DuplicateId, fmt::format("sample '{}' appears twice", s.sample_id));
    }
    (s.label == 1 ? pos : neg).push_back(std::move(s));
  }
  StudyPlan plan;
  plan.target_condition = std::string(condition);
  plan.seed = seed;
  take_arms(std::move(pos), k_per_arm, Arm::PosHigh, Arm::PosLow, condition, plan.samples);
  take_arms(std::move(neg), k_per_arm, Arm::NegHigh, Arm::NegLow, condition, plan.samples);
  shuffle(plan.samples, hash_key(seed, condition));
  return plan;
}

StudySession build_session(std::string session_id, const std::vector<std::string>& conditions,
                           const std::vector<infer::ScoreRow>& rows, const eval::LabelTable& labels,
                           std::size_t k_per_arm, std::uint64_t seed, double threshold,
                           bool hide_observation_scores) {
  if (session_id.empty()) fail(ErrorCode::InvalidConfig, "session id is empty");
  if (conditions.empty()) fail(ErrorCode::InvalidConfig, "no study conditions");
  StudySession s;
  s.session_id = std::move(session_id);
  s.threshold = threshold;
  s.seed = seed;
  s.hide_observation_scores = hide_observation_scores;
  for (const auto& c : conditions) {
    std::vector<ScoredSample> samples;
    for (const auto& r : rows) {
      if (r.condition != c) continue;
      const auto it = labels.labels.find(r.ecg_id);
      if (it == labels.labels.end()) continue;
      samples.push_back({r.ecg_id, r.possibility, it->second.contains(c) ? 1 : 0, r.observations});
    }
    if (samples.empty()) fail(ErrorCode::UnknownCondition, fmt::format("no labeled scores for '{}'", c));
    auto plan = build_study_plan(c, std::move(samples), k_per_arm, seed);
    for (auto& item : plan.samples) s.items.push_back(std::move(item));
  }
  return s;
}

namespace {

json observations_json(const std::vector<infer::ObservationScore>& obs, bool with_scores) {
  json arr = json::array();
  for (const auto& o : obs) {
    json j{{"text", o.text}, {"polarity", kb::to_string(o.polarity)}};
    if (with_scores) j["similarity"] = o.similarity;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

json to_json(const StudySession& s) {
  json items = json::array();
  for (const auto& it : s.items) {
    items.push_back(json{{"condition", it.condition},
                         {"sample_id", it.sample_id},
                         {"arm", to_string(it.arm)},
                         {"label", it.label},
                         {"possibility", it.possibility},
                         {"observations", observations_json(it.observations, true)}});
  }
  return json{{"session_id", s.session_id},
              {"threshold", s.threshold},
              {"seed", s.seed},
              {"hide_observation_scores", s.hide_observation_scores},
              {"items", std::move(items)}};
}

StudySession session_from_json(const json& j) {
  StudySession s;
  try {
    s.session_id = j.at("session_id").get<std::string>();
    s.threshold = j.value("threshold", 0.5);
    s.seed = j.value<std::uint64_t>("seed", 42);
    s.hide_observation_scores = j.value("hide_observation_scores", false);
    std::set<std::pair<std::string, std::string>> keys;
    for (const auto& it : j.at("items")) {
      StudyItem item;
      item.condition = it.at("condition").get<std::string>();
      item.sample_id = it.at("sample_id").get<std::string>();
      item.arm = arm_from_string(it.value("arm", "PosHigh"));
      item.label = it.at("label").get<int>();
      item.possibility = it.at("possibility").get<double>();
      for (const auto& o : it.value("observations", json::array())) {
        item.observations.push_back({o.at("text").get<std::string>(),
                                     kb::polarity_from_string(o.at("polarity").get<std::string>()),
                                     o.value("similarity", 0.0), std::nullopt});
      }
      if (!keys.emplace(item.condition, item.sample_id).second) {
        fail(ErrorCode::DuplicateId, fmt::format("session item ({}, {}) appears twice", item.condition,
                                                 item.sample_id));
      }
      s.items.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, fmt::format("study session: {}", e.what()));
  }
  return s;
}

void write_session(const std::filesystem::path& path, const StudySession& s) {
  write_file(path, to_json(s).dump(2) + "\n");
}

StudySession read_session(const std::filesystem::path& path) {
  try {
    return session_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedJson, fmt::format("{}: {}", path.string(), e.what()));
  }
}

json to_json(const StudyAnswer& a) {
  return json{{"session_id", a.session_id}, {"condition", a.condition},
              {"sample_id", a.sample_id},   {"expert_id", a.expert_id},
              {"diagnosis", a.present ? "present" : "absent"}, {"timestamp", a.timestamp}};
}

StudyAnswer answer_from_json(const json& j) {
  StudyAnswer a;
  try {
    a.session_id = j.value("session_id", "");
    a.condition = j.at("condition").get<std::string>();
    a.sample_id = j.at("sample_id").get<std::string>();
    a.expert_id = j.at("expert_id").get<std::string>();
    const auto d = j.at("diagnosis").get<std::string>();
    if (d != "present" && d != "absent") {
      fail(ErrorCode::InvalidFormat, fmt::format("diagnosis must be 'present' or 'absent', got '{}'", d));
    }
    a.present = d == "present";
    a.timestamp = j.value("timestamp", "");
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, fmt::format("study answer: {}", e.what()));
  }
  return a;
}

std::vector<StudyAnswer> read_answer_log(const std::filesystem::path& path) {
  std::vector<StudyAnswer> out;
  if (!std::filesystem::exists(path)) return out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(answer_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::MalformedJson, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

StudyState::StudyState(StudySession session) : session_(std::move(session)) {
  for (std::size_t i = 0; i < session_.items.size(); ++i) {
    const auto& it = session_.items[i];
    if (!item_index_.emplace(std::pair{it.condition, it.sample_id}, i).second) {
      fail(ErrorCode::DuplicateId,
           fmt::format("session item ({}, {}) appears twice", it.condition, it.sample_id));
    }
  }
}

std::optional<std::size_t> StudyState::next_for(std::string_view expert_id) const {
  for (std::size_t i = 0; i < session_.items.size(); ++i) {
    const auto& it = session_.items[i];
    if (!recorded_.contains({it.condition, it.sample_id, std::string(expert_id)})) return i;
  }
  return std::nullopt;
}

RecordOutcome StudyState::record(const StudyAnswer& answer) {
  if (trim(answer.expert_id).empty()) fail(ErrorCode::InvalidFormat, "expert_id is empty");
  if (!item_index_.contains({answer.condition, answer.sample_id})) {
    fail(ErrorCode::NotFound, fmt::format("session '{}' has no item ({}, {})", session_.session_id,
                                          answer.condition, answer.sample_id));
  }
  const auto key = std::tuple{answer.condition, answer.sample_id, answer.expert_id};
  if (const auto it = recorded_.find(key); it != recorded_.end()) {
    if (it->second == answer.present) return RecordOutcome::Duplicate;
    fail(ErrorCode::Conflict, fmt::format("expert '{}' already answered ({}, {}) differently",
                                          answer.expert_id, answer.condition, answer.sample_id));
  }
  recorded_.emplace(key, answer.present);
  answers_.push_back(answer);
  answers_.back().session_id = session_.session_id;
  return RecordOutcome::Recorded;
}

json StudyState::blinded_item(std::size_t index) const {
  const auto& it = session_.items.at(index);
  return json{{"session_id", session_.session_id},
              {"index", index},
              {"total", session_.items.size()},
              {"condition", it.condition},
              {"sample_id", it.sample_id},
              {"observations", observations_json(it.observations, !session_.hide_observation_scores)}};
}

// ---------------------------------------------------------------------------

namespace {

struct RowCounts {
  eval::Counts guidance;
  eval::Counts misleading;
  eval::Counts model;
  eval::Counts assisted;
};

void tally(eval::Counts& c, bool pred, bool truth) {
  if (pred && truth) ++c.tp;
  else if (!pred && truth) ++c.fn;
  else if (!pred && !truth) ++c.tn;
  else ++c.fp;
}

ReportRows finish(const RowCounts& c, eval::Averaging avg) {
  return {eval::metrics_from_counts(c.guidance, avg), eval::metrics_from_counts(c.misleading, avg),
          eval::metrics_from_counts(c.model, avg), eval::metrics_from_counts(c.assisted, avg)};
}

}  // namespace

StudyReport build_report(const StudyState& state, eval::Averaging averaging) {
  const auto& session = state.session();
  std::map<std::pair<std::string, std::string>, const StudyItem*> items;
  for (const auto& it : session.items) items.emplace(std::pair{it.condition, it.sample_id}, &it);

  RowCounts pooled;
  std::map<std::string, RowCounts> per_expert;
  for (const auto& a : state.answers()) {
    const StudyItem& item = *items.at({a.condition, a.sample_id});
    const bool truth = item.label == 1;
    const bool model = session.model_prediction(item);
    for (RowCounts* c : {&pooled, &per_expert[a.expert_id]}) {
      tally(model == truth ? c->guidance : c->misleading, a.present, truth);
      tally(c->model, model, truth);
      tally(c->assisted, a.present, truth);
    }
  }
  StudyReport r;
  r.averaging = averaging;
  r.n_answers = state.answers().size();
  r.pooled = finish(pooled, averaging);
  for (const auto& [expert, c] : per_expert) r.per_expert.emplace(expert, finish(c, averaging));
  return r;
}

namespace {

json rows_json(const ReportRows& rows) {
  return json{{"Guidance", eval::to_json(rows.guidance)},
              {"Misleading", eval::to_json(rows.misleading)},
              {"ZETA", eval::to_json(rows.model)},
              {"Expert + ZETA", eval::to_json(rows.assisted)}};
}

std::string rows_text(const ReportRows& rows) {
  return fmt::format("Group Accuracy Sensitivity Specificity F1-score\n{}\n{}\n{}\n{}\n",
                     eval::render_metrics_row("Guidance", rows.guidance),
                     eval::render_metrics_row("Misleading", rows.misleading),
                     eval::render_metrics_row("ZETA", rows.model),
                     eval::render_metrics_row("Expert + ZETA", rows.assisted));
}

}  // namespace

json to_json(const StudyReport& r) {
  json per_expert = json::object();
  for (const auto& [expert, rows] : r.per_expert) per_expert[expert] = rows_json(rows);
  return json{{"averaging", eval::to_string(r.averaging)},
              {"n_answers", r.n_answers},
              {"pooled", rows_json(r.pooled)},
              {"per_expert", std::move(per_expert)},
              {"text", render_report(r)}};
}

std::string render_report(const StudyReport& r) {
  std::string out = rows_text(r.pooled);
  for (const auto& [expert, rows] : r.per_expert) {
    out += fmt::format("\nexpert {}\n{}", expert, rows_text(rows));
  }
  return out;
}

}  // namespace zeta::study
