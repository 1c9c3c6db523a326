#include "support.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <set>

#include <fmt/format.h>

#include "zeta/error.hpp"
#include "zeta/util.hpp"

namespace zeta::test {

namespace fs = std::filesystem;

fs::path fixtures_dir() { return ZETA_FIXTURES_DIR; }
fs::path golden_dir() { return ZETA_GOLDEN_DIR; }

fs::path cli_path() {
#ifdef ZETA_CLI_PATH
  return ZETA_CLI_PATH;
#else
  return {};
#endif
}

TempDir::TempDir() {
  std::random_device rd;
  const auto base = fs::temp_directory_path();
  for (;;) {
    path_ = base / fmt::format("zeta-test-{:016x}", (static_cast<std::uint64_t>(rd()) << 32) | rd());
    if (fs::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  return out + "'";
}

}  // namespace

CommandResult run_command(const std::vector<std::string>& args, const std::string& env_prefix) {
  TempDir tmp;
  const auto out_path = tmp / "stdout";
  const auto err_path = tmp / "stderr";
  std::string cmd = env_prefix.empty() ? "" : env_prefix + " ";
  for (const auto& a : args) cmd += quote(a) + " ";
  cmd += "> " + quote(out_path.string()) + " 2> " + quote(err_path.string());
  const int status = std::system(cmd.c_str());
  CommandResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = fs::exists(out_path) ? read_file(out_path) : "";
  r.err = fs::exists(err_path) ? read_file(err_path) : "";
  return r;
}

CommandResult run_cli(const std::vector<std::string>& args, const std::string& env_prefix) {
  std::vector<std::string> full{cli_path().string()};
  full.insert(full.end(), args.begin(), args.end());
  return run_command(full, env_prefix);
}

embed::Embedding CountingProvider::get_text(std::string_view text) const {
  ++text_calls_;
  {
    std::lock_guard lock(mu_);
    ++per_text_[std::string(text)];
  }
  return inner_->get_text(text);
}

embed::Embedding CountingProvider::get_ecg(std::string_view id) const {
  ++ecg_calls_;
  return inner_->get_ecg(id);
}

std::map<std::string, std::size_t> CountingProvider::text_counts() const {
  std::lock_guard lock(mu_);
  return per_text_;
}

embed::Embedding MapProvider::get_text(std::string_view text) const {
  const auto it = texts.find(text);
  if (it == texts.end()) fail(ErrorCode::MissingKey, fmt::format("no text '{}'", text));
  return it->second;
}

embed::Embedding MapProvider::get_ecg(std::string_view id) const {
  const auto it = ecgs.find(id);
  if (it == ecgs.end()) fail(ErrorCode::MissingKey, fmt::format("no ecg '{}'", id));
  return it->second;
}

kb::ConditionId condition(const std::string& code) {
  for (const auto& c : kb::read_conditions(fixtures_dir() / "conditions.json")) {
    if (c.code == code) return c;
  }
  fail(ErrorCode::UnknownCondition, code);
}

std::vector<std::vector<kb::ObservationCandidate>> fixture_responses(const kb::ConditionId& condition) {
  std::set<std::string> models;
  for (const auto& e : fs::directory_iterator(fixtures_dir() / "llm")) models.insert(e.path().filename().string());
  std::vector<std::vector<kb::ObservationCandidate>> out;
  for (const auto& m : models) {
    const auto p = fixtures_dir() / "llm" / m / (condition.code + ".txt");
    if (fs::exists(p)) out.push_back(kb::parse_llm_response(read_file(p), condition, m));
  }
  return out;
}

kb::CandidatePool fixture_pool() {
  std::vector<std::vector<kb::ObservationCandidate>> responses;
  for (const auto& c : kb::read_conditions(fixtures_dir() / "conditions.json")) {
    for (auto& r : fixture_responses(c)) responses.push_back(std::move(r));
  }
  return kb::build_pool(responses, kb::PoolKind::dscp("fixture"));
}

kb::KnowledgeBase pipeline_kb() {
  return kb::export_reviewed(
      kb::replay(fixture_pool(), kb::read_review_log(fixtures_dir() / "review_pipeline.jsonl")));
}

std::string read_text(const fs::path& p) { return read_file(p); }

std::string run_fixture_pipeline(const std::filesystem::path& work) {
  const auto fx = fixtures_dir();
  const auto w = [&](const char* name) { return (work / name).string(); };
  const std::vector<std::pair<std::string, std::vector<std::string>>> steps{
      {"generate",
       {"generate", "--conditions", (fx / "conditions.json").string(), "--models", (fx / "models_offline.json").string(),
        "--fixtures", (fx / "llm").string(), "--dataset", "ptbxl", "-o", w("pool.json")}},
      {"preprocess", {"preprocess", "--pools", w("pool.json"), "--mode", "dscp", "--dataset", "ptbxl", "-o", w("merged.json")}},
      {"review replay",
       {"review", "replay", "--pool", w("merged.json"), "--log", (fx / "review_pipeline.jsonl").string(), "-o",
        w("reviewed.json")}},
      {"kb export", {"kb", "export", "--pool", w("reviewed.json"), "-o", w("kb.json")}},
      {"embed-texts",
       {"embed-texts", "--kb", w("kb.json"), "--provider", (fx / "provider_synthetic.json").string(), "-o",
        w("text.zeb")}},
      {"embed-ecgs",
       {"embed-ecgs", "--kb", w("kb.json"), "--provider", (fx / "provider_synthetic.json").string(), "--labels",
        (fx / "labels.csv").string(), "-o", w("ecg.zeb")}},
      {"score",
       {"score", "--kb", w("kb.json"), "--ecg-store", w("ecg.zeb"), "--text-store", w("text.zeb"), "-o",
        w("scores.jsonl")}},
      {"evaluate",
       {"evaluate", "--scores", w("scores.jsonl"), "--labels", (fx / "labels.csv").string(), "--text",
        w("report.txt"), "-o", w("report.json")}},
  };
  for (const auto& [name, args] : steps) {
    const auto r = run_cli(args);
    if (r.exit_code != 0) return fmt::format("{} exited {}: {}", name, r.exit_code, r.err);
  }
  return {};
}

std::string json_diff(const nlohmann::json& a, const nlohmann::json& b, double tol, const std::string& where) {
  const std::string at = where.empty() ? "/" : where;
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>();
    const double y = b.get<double>();
    return std::abs(x - y) <= tol ? "" : fmt::format("{}: {} vs {}", at, x, y);
  }
  if (a.type() != b.type()) return fmt::format("{}: type differs", at);
  if (a.is_object()) {
    if (a.size() != b.size()) return fmt::format("{}: {} vs {} keys", at, a.size(), b.size());
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) return fmt::format("{}/{}: missing", where, it.key());
      auto d = json_diff(it.value(), b.at(it.key()), tol, where + "/" + it.key());
      if (!d.empty()) return d;
    }
    return {};
  }
  if (a.is_array()) {
    if (a.size() != b.size()) return fmt::format("{}: {} vs {} items", at, a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto d = json_diff(a[i], b[i], tol, fmt::format("{}/{}", where, i));
      if (!d.empty()) return d;
    }
    return {};
  }
  return a == b ? "" : fmt::format("{}: {} vs {}", at, a.dump(), b.dump());
}

}  // namespace zeta::test
