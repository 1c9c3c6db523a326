#include "zeta/kb.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "zeta/error.hpp"
#include "zeta/text.hpp"
#include "zeta/util.hpp"

namespace zeta::kb {

using nlohmann::json;

std::string_view to_string(Polarity p) {
  return p == Polarity::Positive ? "Positive" : "Negative";
}

Polarity polarity_from_string(std::string_view s) {
  if (s == "Positive" || s == "positive") return Polarity::Positive;
  if (s == "Negative" || s == "negative") return Polarity::Negative;
  fail(ErrorCode::InvalidFormat, fmt::format("unknown polarity '{}'", s));
}

std::string_view to_string(ReviewAction a) {
  switch (a) {
    case ReviewAction::Accept: return "accept";
    case ReviewAction::Revise: return "revise";
    case ReviewAction::Reject: return "reject";
  }
  return "";
}

std::string_view to_string(ReviewReason r) {
  switch (r) {
    case ReviewReason::Correctness: return "Correctness";
    case ReviewReason::Clarity: return "Clarity";
    case ReviewReason::Directness: return "Directness";
    case ReviewReason::Contrast: return "Contrast";
  }
  return "";
}

std::string_view to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::Pending: return "pending";
    case ReviewStatus::Accepted: return "accepted";
    case ReviewStatus::Rejected: return "rejected";
  }
  return "";
}

ReviewAction action_from_string(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "accept") return ReviewAction::Accept;
  if (lower == "revise") return ReviewAction::Revise;
  if (lower == "reject") return ReviewAction::Reject;
  fail(ErrorCode::InvalidFormat, fmt::format("unknown review action '{}'", s));
}

ReviewReason reason_from_string(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "correctness") return ReviewReason::Correctness;
  if (lower == "clarity") return ReviewReason::Clarity;
  if (lower == "directness") return ReviewReason::Directness;
  if (lower == "contrast") return ReviewReason::Contrast;
  fail(ErrorCode::InvalidFormat,
       fmt::format("unknown review reason '{}' (expected Correctness, Clarity, "
                   "Directness or Contrast)", s));
}

ReviewStatus status_from_string(std::string_view s) {
  if (s == "pending") return ReviewStatus::Pending;
  if (s == "accepted") return ReviewStatus::Accepted;
  if (s == "rejected") return ReviewStatus::Rejected;
  fail(ErrorCode::InvalidFormat, fmt::format("unknown review status '{}'", s));
}

const ObservationCandidate* CandidatePool::find(std::string_view id) const {
  for (const auto& c : candidates) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

ObservationCandidate* CandidatePool::find(std::string_view id) {
  for (auto& c : candidates) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

const ConditionEntry* KnowledgeBase::find(std::string_view code) const {
  const auto it = conditions.find(std::string(code));
  return it == conditions.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// parse_llm_response

namespace {

std::string extract_json_object(std::string_view raw) {
  std::string_view body = raw;
  const auto fence = body.find("```");
  if (fence != std::string_view::npos) {
    auto start = body.find('\n', fence);
    if (start != std::string_view::npos) {
      const auto close = body.find("```", start + 1);
      body = body.substr(start + 1, close == std::string_view::npos
                                        ? std::string_view::npos
                                        : close - start - 1);
    }
  }
  const auto first = body.find('{');
  const auto last = body.rfind('}');
  if (first == std::string_view::npos || last == std::string_view::npos || last < first) {
    fail(ErrorCode::MalformedJson, "no JSON object found in response");
  }
  return std::string(body.substr(first, last - first + 1));
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

constexpr std::size_t kObservationsPerPolarity = 5;

}  // namespace

std::vector<ObservationCandidate> parse_llm_response(std::string_view raw,
                                                     const ConditionId& condition,
                                                     std::string_view source_model) {
  json doc;
  try {
    doc = json::parse(extract_json_object(raw));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedJson, fmt::format("unparseable response: {}", e.what()));
  }
  if (!doc.is_object()) fail(ErrorCode::WrongShape, "response is not a JSON object");

  const json* body = nullptr;
  for (const auto& [key, value] : doc.items()) {
    if (key == condition.code || key == condition.display_name ||
        iequals(key, condition.code) || iequals(key, condition.display_name)) {
      body = &value;
      break;
    }
  }
  if (body == nullptr) {
    std::string keys;
    for (const auto& [key, _] : doc.items()) keys += (keys.empty() ? "" : ", ") + key;
    fail(ErrorCode::WrongShape,
         fmt::format("condition key mismatch: expected '{}' or '{}', got [{}]",
                     condition.code, condition.display_name, keys));
  }
  if (!body->is_object()) fail(ErrorCode::WrongShape, "condition entry is not an object");

  std::vector<ObservationCandidate> out;
  for (Polarity polarity : {Polarity::Positive, Polarity::Negative}) {
    const std::string key(to_string(polarity));
    const auto it = body->find(key);
    if (it == body->end() || !it->is_array()) {
      fail(ErrorCode::WrongShape, fmt::format("missing \"{}\" array", key));
    }
    if (it->size() != kObservationsPerPolarity) {
      fail(ErrorCode::WrongShape, fmt::format("\"{}\" has {} observations, expected {}", key,
                                              it->size(), kObservationsPerPolarity));
    }
    std::set<std::string> seen;
    int index = 0;
    for (const auto& item : *it) {
      if (!item.is_string()) fail(ErrorCode::WrongShape, fmt::format("\"{}\" entry is not a string", key));
      const std::string text = trim(item.get<std::string>());
      if (text.empty()) fail(ErrorCode::WrongShape, fmt::format("empty \"{}\" observation", key));
      ObservationCandidate c;
      c.condition = condition;
      c.polarity = polarity;
      c.text = text;
      c.normalized_text = normalize_text(text);
      if (!seen.insert(c.normalized_text).second) {
        fail(ErrorCode::DuplicateObservation,
             fmt::format("duplicate {} observation '{}'", key, c.normalized_text));
      }
      c.source_model = std::string(source_model);
      c.origin = condition.code;
      c.pair_index = index;
      c.id = fmt::format("{}/{}/{}{}", condition.code, source_model,
                         polarity == Polarity::Positive ? 'P' : 'N', index);
      out.push_back(std::move(c));
      ++index;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// build_pool

namespace {

auto sort_key(const ObservationCandidate& c) {
  return std::make_tuple(std::cref(c.condition.code), c.polarity == Polarity::Negative,
                         std::cref(c.source_model), c.pair_index.has_value() ? 0 : 1,
                         c.pair_index.value_or(0), std::cref(c.origin),
                         std::cref(c.normalized_text), std::cref(c.text));
}

bool same_pair_group(const ObservationCandidate& a, const ObservationCandidate& b) {
  return a.condition.code == b.condition.code && a.source_model == b.source_model &&
         a.origin == b.origin && a.pair_index == b.pair_index;
}

std::string base_id(const ObservationCandidate& c) {
  const char pol = c.polarity == Polarity::Positive ? 'P' : 'N';
  const std::string idx = c.pair_index ? std::to_string(*c.pair_index) : "x";
  if (c.origin.empty() || c.origin == c.condition.code) {
    return fmt::format("{}/{}/{}{}", c.condition.code, c.source_model, pol, idx);
  }
  return fmt::format("{}/{}/{}/{}{}", c.condition.code, c.origin, c.source_model, pol, idx);
}

std::string resolve_label(const std::string& label, const PoolKind& kind,
                          const std::map<std::string, std::string>& alias_map) {
  if (const auto it = alias_map.find(label); it != alias_map.end()) return it->second;
  if (kind.kind == PoolKind::Kind::DSCP) return label;
  for (const auto& [_, canonical] : alias_map) {
    if (canonical == label) return label;
  }
  fail(ErrorCode::UnmappedCondition,
       fmt::format("condition label '{}' is not in the alias map", label));
}

}  // namespace

CandidatePool build_pool(const std::vector<std::vector<ObservationCandidate>>& responses,
                         const PoolKind& kind,
                         const std::map<std::string, std::string>& alias_map) {
  std::vector<ObservationCandidate> all;
  for (const auto& response : responses) {
    for (const auto& c : response) {
      ObservationCandidate copy = c;
      if (copy.origin.empty()) copy.origin = copy.condition.code;
      const std::string canonical = resolve_label(copy.condition.code, kind, alias_map);
      copy.condition.code = canonical;
      copy.normalized_text = normalize_text(copy.text);
      copy.source_pool = kind;
      copy.status = ReviewStatus::Pending;
      copy.history.clear();
      all.push_back(std::move(copy));
    }
  }

  // Canonical display name: the one used under the canonical label itself if
  // any, otherwise the lexicographically smallest.
  std::map<std::string, std::pair<bool, std::string>> display;  // (non-native, name)
  for (const auto& c : all) {
    const std::pair<bool, std::string> candidate{c.origin != c.condition.code,
                                                 c.condition.display_name};
    auto [it, inserted] = display.emplace(c.condition.code, candidate);
    if (!inserted && candidate < it->second) it->second = candidate;
  }
  for (auto& c : all) c.condition.display_name = display[c.condition.code].second;

  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return sort_key(a) < sort_key(b); });

  // Exact repeats (same response fed twice) collapse silently.
  all.erase(std::unique(all.begin(), all.end(),
                        [](const auto& a, const auto& b) {
                          return sort_key(a) == sort_key(b);
                        }),
            all.end());

  std::vector<ObservationCandidate> kept;
  std::map<std::tuple<std::string, bool, std::string>, std::size_t> by_text;
  for (auto& c : all) {
    const auto key = std::make_tuple(c.condition.code, c.polarity == Polarity::Negative,
                                     c.normalized_text);
    if (const auto it = by_text.find(key); it != by_text.end()) {
      auto& survivor = kept[it->second];
      survivor.merged_from.push_back(base_id(c));
      for (auto& m : c.merged_from) survivor.merged_from.push_back(std::move(m));
      continue;
    }
    by_text.emplace(key, kept.size());
    kept.push_back(std::move(c));
  }

  for (auto& c : kept) {
    if (!c.pair_index) continue;
    const bool has_partner = std::any_of(kept.begin(), kept.end(), [&](const auto& o) {
      return o.polarity != c.polarity && same_pair_group(o, c);
    });
    if (!has_partner) c.pair_index.reset();
  }

  std::map<std::string, int> id_uses;
  for (auto& c : kept) {
    std::string id = base_id(c);
    const int n = ++id_uses[id];
    if (n > 1) id += fmt::format("#{}", n);
    c.id = std::move(id);
    std::sort(c.merged_from.begin(), c.merged_from.end());
    c.merged_from.erase(std::unique(c.merged_from.begin(), c.merged_from.end()),
                        c.merged_from.end());
  }

  CandidatePool pool;
  pool.kind = kind;
  pool.alias_map = alias_map;
  pool.candidates = std::move(kept);
  return pool;
}

std::size_t pair_count(const CandidatePool& pool, std::string_view condition_code) {
  std::size_t n = 0;
  for (const auto& c : pool.candidates) {
    if (c.condition.code != condition_code || c.polarity != Polarity::Positive || !c.pair_index) {
      continue;
    }
    for (const auto& o : pool.candidates) {
      if (o.polarity == Polarity::Negative && same_pair_group(o, c)) {
        ++n;
        break;
      }
    }
  }
  return n;
}

// ---------------------------------------------------------------------------
// review

void apply_review(CandidatePool& pool, ReviewEvent event) {
  ObservationCandidate* c = pool.find(event.candidate_id);
  if (c == nullptr) {
    fail(ErrorCode::UnknownCandidate, fmt::format("unknown candidate '{}'", event.candidate_id));
  }
  const std::uint64_t expected = pool.events.size() + 1;
  if (event.sequence == 0) {
    event.sequence = expected;
  } else if (event.sequence != expected) {
    fail(ErrorCode::InvalidFormat,
         fmt::format("review event sequence {} out of order (expected {})", event.sequence,
                     expected));
  }
  if (c->status == ReviewStatus::Rejected) {
    fail(ErrorCode::AlreadyRejected, fmt::format("candidate '{}' was already rejected", c->id));
  }

  std::sort(event.reasons.begin(), event.reasons.end());
  event.reasons.erase(std::unique(event.reasons.begin(), event.reasons.end()),
                      event.reasons.end());
  if (event.action != ReviewAction::Accept && event.reasons.empty()) {
    fail(ErrorCode::MissingReasons,
         fmt::format("{} of '{}' requires at least one reason", to_string(event.action), c->id));
  }

  std::string new_text = c->text;
  if (event.action == ReviewAction::Revise) {
    if (!event.revised_text || trim(*event.revised_text).empty()) {
      fail(ErrorCode::MissingRevisedText, fmt::format("revise of '{}' has no revised_text", c->id));
    }
    new_text = trim(*event.revised_text);
    if (new_text == c->text) {
      fail(ErrorCode::InvalidRevision, fmt::format("revision of '{}' does not change the text", c->id));
    }
    const std::string norm = normalize_text(new_text);
    for (const auto& o : pool.candidates) {
      if (&o != c && o.status != ReviewStatus::Rejected &&
          o.condition.code == c->condition.code && o.polarity == c->polarity &&
          o.normalized_text == norm) {
        fail(ErrorCode::DuplicateObservation,
             fmt::format("revised text '{}' duplicates candidate '{}'", new_text, o.id));
      }
    }
  } else if (event.revised_text) {
    fail(ErrorCode::InvalidRevision,
         fmt::format("revised_text is only allowed with the revise action ('{}')", c->id));
  }

  HistoryEntry entry{event.sequence, event.action, c->text, new_text, event.reasons};
  switch (event.action) {
    case ReviewAction::Accept:
      c->status = ReviewStatus::Accepted;
      break;
    case ReviewAction::Revise:
      c->text = new_text;
      c->normalized_text = normalize_text(new_text);
      c->status = ReviewStatus::Accepted;
      break;
    case ReviewAction::Reject:
      c->status = ReviewStatus::Rejected;
      break;
  }
  c->history.push_back(std::move(entry));
  pool.events.push_back(std::move(event));
}

CandidatePool replay(CandidatePool initial, std::vector<ReviewEvent> events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const auto& a, const auto& b) { return a.sequence < b.sequence; });
  for (auto& e : events) apply_review(initial, std::move(e));
  return initial;
}

// ---------------------------------------------------------------------------
// export

namespace {

KnowledgeBase export_where(const CandidatePool& pool, bool reviewed_only,
                           std::optional<std::size_t> limit) {
  auto eligible = [&](const ObservationCandidate& c) {
    return reviewed_only ? c.status == ReviewStatus::Accepted
                         : c.status != ReviewStatus::Rejected;
  };

  std::map<std::string, std::vector<const ObservationCandidate*>> by_condition;
  std::map<std::string, std::string> display;
  for (const auto& c : pool.candidates) {
    by_condition[c.condition.code];
    display[c.condition.code] = c.condition.display_name;
  }
  for (const auto& c : pool.candidates) {
    if (eligible(c)) by_condition[c.condition.code].push_back(&c);
  }

  KnowledgeBase kb;
  std::vector<std::string> empty;
  for (const auto& [code, members] : by_condition) {
    std::vector<const ObservationCandidate*> pos;
    std::vector<const ObservationCandidate*> neg;
    for (const auto* c : members) (c->polarity == Polarity::Positive ? pos : neg).push_back(c);
    if (limit) {
      if (pos.size() > *limit) pos.resize(*limit);
      if (neg.size() > *limit) neg.resize(*limit);
    }
    if (pos.empty()) empty.push_back(fmt::format("{}:Positive", code));
    if (neg.empty()) empty.push_back(fmt::format("{}:Negative", code));
    if (pos.empty() || neg.empty()) continue;

    bool paired = pos.size() == neg.size();
    for (std::size_t i = 0; paired && i < pos.size(); ++i) {
      paired = pos[i]->pair_index.has_value() && same_pair_group(*pos[i], *neg[i]);
    }

    ConditionEntry entry;
    entry.display_name = display[code];
    for (const auto* c : pos) entry.positives.push_back(c->text);
    for (const auto* c : neg) entry.negatives.push_back(c->text);
    entry.paired = paired;
    kb.conditions.emplace(code, std::move(entry));
  }
  if (!empty.empty()) {
    std::string list;
    for (const auto& e : empty) list += (list.empty() ? "" : ", ") + e;
    fail(ErrorCode::EmptyPolarity, fmt::format("no exportable observations for {}", list));
  }

  if (reviewed_only) {
    for (const auto& e : pool.events) {
      kb.provenance.push_back(fmt::format("{}:{}:{}", e.sequence, e.candidate_id, to_string(e.action)));
    }
  }
  kb.version = "sha256:" + sha256_hex(to_json(kb).at("conditions").dump());
  return kb;
}

}  // namespace

KnowledgeBase export_reviewed(const CandidatePool& pool) {
  return export_where(pool, true, std::nullopt);
}

KnowledgeBase export_candidates(const CandidatePool& pool, std::optional<std::size_t> limit) {
  return export_where(pool, false, limit);
}

}  // namespace zeta::kb
