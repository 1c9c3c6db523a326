#include <set>

#include <fmt/format.h>

#include "zeta/error.hpp"
#include "zeta/kb.hpp"
#include "zeta/text.hpp"
#include "zeta/util.hpp"

namespace zeta::kb {

using nlohmann::json;

namespace {

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedJson, fmt::format("{}: {}", what, e.what()));
  }
}

template <typename T>
T field(const json& j, const char* key, std::string_view what) {
  const auto it = j.find(key);
  if (it == j.end()) fail(ErrorCode::InvalidFormat, fmt::format("{}: missing \"{}\"", what, key));
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidFormat, fmt::format("{}: \"{}\" has the wrong type", what, key));
  }
}

json pool_kind_json(const PoolKind& k) {
  if (k.kind == PoolKind::Kind::CDCP) return json{{"kind", "cdcp"}};
  return json{{"kind", "dscp"}, {"dataset_id", k.dataset_id}};
}

PoolKind pool_kind_from_json(const json& j) {
  const auto kind = field<std::string>(j, "kind", "pool_kind");
  if (kind == "cdcp") return PoolKind::cdcp();
  if (kind == "dscp") return PoolKind::dscp(j.value("dataset_id", ""));
  fail(ErrorCode::InvalidFormat, fmt::format("unknown pool kind '{}'", kind));
}

json reasons_json(const std::vector<ReviewReason>& reasons) {
  json arr = json::array();
  for (auto r : reasons) arr.push_back(to_string(r));
  return arr;
}

std::vector<ReviewReason> reasons_from_json(const json& j) {
  std::vector<ReviewReason> out;
  if (!j.is_array()) fail(ErrorCode::InvalidFormat, "reasons must be an array");
  for (const auto& r : j) out.push_back(reason_from_string(r.get<std::string>()));
  return out;
}

}  // namespace

json to_json(const ObservationCandidate& c) {
  json j{{"id", c.id},
         {"condition", {{"code", c.condition.code}, {"display_name", c.condition.display_name}}},
         {"polarity", to_string(c.polarity)},
         {"text", c.text},
         {"normalized_text", c.normalized_text},
         {"source_model", c.source_model},
         {"source_pool", pool_kind_json(c.source_pool)},
         {"origin", c.origin},
         {"pair_index", c.pair_index ? json(*c.pair_index) : json(nullptr)},
         {"status", to_string(c.status)}};
  if (!c.merged_from.empty()) j["merged_from"] = c.merged_from;
  if (!c.history.empty()) {
    json hist = json::array();
    for (const auto& h : c.history) {
      hist.push_back({{"sequence", h.sequence},
                      {"action", to_string(h.action)},
                      {"text_before", h.text_before},
                      {"text_after", h.text_after},
                      {"reasons", reasons_json(h.reasons)}});
    }
    j["history"] = std::move(hist);
  }
  return j;
}

ObservationCandidate candidate_from_json(const json& j) {
  constexpr std::string_view what = "candidate";
  ObservationCandidate c;
  c.id = field<std::string>(j, "id", what);
  const auto& cond = j.at("condition");
  c.condition.code = field<std::string>(cond, "code", what);
  c.condition.display_name = cond.value("display_name", c.condition.code);
  c.polarity = polarity_from_string(field<std::string>(j, "polarity", what));
  c.text = field<std::string>(j, "text", what);
  if (trim(c.text).empty()) fail(ErrorCode::InvalidFormat, fmt::format("candidate '{}' has empty text", c.id));
  c.normalized_text = normalize_text(c.text);
  c.source_model = field<std::string>(j, "source_model", what);
  if (j.contains("source_pool")) c.source_pool = pool_kind_from_json(j.at("source_pool"));
  c.origin = j.value("origin", c.condition.code);
  if (j.contains("pair_index") && !j.at("pair_index").is_null()) {
    c.pair_index = j.at("pair_index").get<int>();
  }
  if (j.contains("merged_from")) c.merged_from = j.at("merged_from").get<std::vector<std::string>>();
  c.status = status_from_string(j.value("status", "pending"));
  if (j.contains("history")) {
    for (const auto& h : j.at("history")) {
      c.history.push_back(HistoryEntry{h.at("sequence").get<std::uint64_t>(),
                                       action_from_string(h.at("action").get<std::string>()),
                                       h.at("text_before").get<std::string>(),
                                       h.at("text_after").get<std::string>(),
                                       reasons_from_json(h.at("reasons"))});
    }
  }
  return c;
}

json to_json(const CandidatePool& pool) {
  json cands = json::array();
  for (const auto& c : pool.candidates) cands.push_back(to_json(c));
  json j{{"pool_kind", pool_kind_json(pool.kind)},
         {"alias_map", pool.alias_map},
         {"candidates", std::move(cands)}};
  if (!pool.events.empty()) {
    json events = json::array();
    for (const auto& e : pool.events) events.push_back(to_json(e));
    j["events"] = std::move(events);
  }
  return j;
}

CandidatePool pool_from_json(const json& j) {
  CandidatePool pool;
  pool.kind = pool_kind_from_json(j.at("pool_kind"));
  if (j.contains("alias_map")) pool.alias_map = j.at("alias_map").get<std::map<std::string, std::string>>();
  for (const auto& c : j.at("candidates")) pool.candidates.push_back(candidate_from_json(c));
  if (j.contains("events")) {
    for (const auto& e : j.at("events")) pool.events.push_back(event_from_json(e));
  }
  std::set<std::string> ids;
  for (const auto& c : pool.candidates) {
    if (!ids.insert(c.id).second) fail(ErrorCode::DuplicateId, fmt::format("duplicate candidate id '{}'", c.id));
  }
  return pool;
}

void write_pool(const std::filesystem::path& path, const CandidatePool& pool) {
  write_file(path, to_json(pool).dump(2) + "\n");
}

CandidatePool read_pool(const std::filesystem::path& path) {
  return pool_from_json(parse_json(read_file(path), path.string()));
}

json to_json(const ReviewEvent& e) {
  json j{{"sequence", e.sequence},
         {"candidate_id", e.candidate_id},
         {"action", to_string(e.action)},
         {"reasons", reasons_json(e.reasons)},
         {"reviewer", e.reviewer},
         {"timestamp", e.timestamp}};
  if (e.revised_text) j["revised_text"] = *e.revised_text;
  if (!e.note.empty()) j["note"] = e.note;
  return j;
}

ReviewEvent event_from_json(const json& j) {
  constexpr std::string_view what = "review event";
  if (!j.is_object()) fail(ErrorCode::InvalidFormat, "review event must be an object");
  ReviewEvent e;
  e.sequence = j.value<std::uint64_t>("sequence", 0);
  e.candidate_id = field<std::string>(j, "candidate_id", what);
  e.action = action_from_string(field<std::string>(j, "action", what));
  if (j.contains("revised_text") && !j.at("revised_text").is_null()) {
    e.revised_text = j.at("revised_text").get<std::string>();
  }
  if (j.contains("reasons")) e.reasons = reasons_from_json(j.at("reasons"));
  e.reviewer = j.value("reviewer", "");
  e.timestamp = j.value("timestamp", "");
  e.note = j.value("note", "");
  return e;
}

std::vector<ReviewEvent> read_review_log(const std::filesystem::path& path) {
  std::vector<ReviewEvent> events;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (trim(line).empty()) continue;
    events.push_back(event_from_json(parse_json(line, fmt::format("{}:{}", path.string(), line_no))));
  }
  return events;
}

void append_review_log(const std::filesystem::path& path, const ReviewEvent& e) {
  append_line(path, to_json(e).dump());
}

json to_json(const KnowledgeBase& kb) {
  json conditions = json::object();
  for (const auto& [code, entry] : kb.conditions) {
    conditions[code] = {{"display_name", entry.display_name},
                        {"positives", entry.positives},
                        {"negatives", entry.negatives},
                        {"paired", entry.paired}};
  }
  json j{{"version", kb.version}, {"conditions", std::move(conditions)}};
  if (!kb.provenance.empty()) j["provenance"] = kb.provenance;
  return j;
}

KnowledgeBase kb_from_json(const json& j) {
  KnowledgeBase kb;
  kb.version = j.value("version", "");
  if (!j.contains("conditions") || !j.at("conditions").is_object()) {
    fail(ErrorCode::InvalidFormat, "knowledge base: missing \"conditions\" object");
  }
  for (const auto& [code, entry] : j.at("conditions").items()) {
    ConditionEntry e;
    e.display_name = entry.value("display_name", code);
    e.positives = field<std::vector<std::string>>(entry, "positives", code);
    e.negatives = field<std::vector<std::string>>(entry, "negatives", code);
    e.paired = entry.value("paired", false);
    if (e.positives.empty() || e.negatives.empty()) {
      fail(ErrorCode::EmptyPolarity, fmt::format("condition '{}' needs at least one positive and one negative", code));
    }
    if (e.paired && e.positives.size() != e.negatives.size()) {
      fail(ErrorCode::InvalidFormat, fmt::format("condition '{}' is marked paired with unequal counts", code));
    }
    kb.conditions.emplace(code, std::move(e));
  }
  if (j.contains("provenance")) kb.provenance = j.at("provenance").get<std::vector<std::string>>();
  return kb;
}

std::string serialize_kb(const KnowledgeBase& kb) { return to_json(kb).dump(2) + "\n"; }

void write_kb(const std::filesystem::path& path, const KnowledgeBase& kb) {
  write_file(path, serialize_kb(kb));
}

KnowledgeBase read_kb(const std::filesystem::path& path) {
  return kb_from_json(parse_json(read_file(path), path.string()));
}

std::vector<ConditionId> read_conditions(const std::filesystem::path& path) {
  const json j = parse_json(read_file(path), path.string());
  if (!j.is_array()) fail(ErrorCode::InvalidFormat, "conditions file must be a JSON array");
  std::vector<ConditionId> out;
  for (const auto& c : j) {
    ConditionId id{field<std::string>(c, "code", "condition"), c.value("display_name", "")};
    if (id.display_name.empty()) id.display_name = id.code;
    out.push_back(std::move(id));
  }
  return out;
}

}  // namespace zeta::kb
