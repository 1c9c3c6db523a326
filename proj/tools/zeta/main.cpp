#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "config.hpp"
#include "zeta/embed.hpp"
#include "zeta/error.hpp"
#include "zeta/eval.hpp"
#include "zeta/infer.hpp"
#include "zeta/kb.hpp"
#include "zeta/llmgen.hpp"
#include "zeta/service.hpp"
#include "zeta/study.hpp"
#include "zeta/text.hpp"
#include "zeta/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace zeta::cli {
namespace {

// Several subcommands share a flag name; a setting counts as given when any
// of its registered options was passed.
struct Shared {
  std::vector<CLI::Option*> opts;
  bool given() const {
    return std::any_of(opts.begin(), opts.end(), [](CLI::Option* o) { return o->count() > 0; });
  }
};

template <typename T>
std::optional<T> if_given(const Shared& s, const T& v) {
  return s.given() ? std::optional<T>(v) : std::nullopt;
}

struct Args {
  std::string config_path;
  bool dump_config = false;

  std::uint64_t seed = 42;
  std::size_t jobs = 1;
  double tau = 0.5;
  std::string mode;
  double threshold = 0.5;
  std::string kb;
  std::string pool;
  std::string models;
  std::string data_dir;
  std::string provider;
  std::string host;
  int port = 0;
  std::string static_dir;
  std::string token_env;
  std::string log_level;
  Shared s_seed, s_jobs, s_tau, s_mode, s_threshold, s_kb, s_pool, s_models, s_data_dir, s_provider, s_host,
      s_port, s_static_dir, s_token_env, s_log_level;

  // generate
  std::string conditions;
  std::string fixtures;
  std::string replay_archive;
  std::string archive;
  std::string dataset = "default";
  // preprocess
  std::vector<std::string> pools;
  std::string pool_mode = "dscp";
  std::string alias;
  // review / kb
  std::string log;
  bool include_unreviewed = false;
  std::size_t limit = 0;
  // stores
  std::string ecg_store;
  std::string text_store;
  std::string labels;
  bool no_text_norm = false;
  bool no_plant = false;
  bool plant = false;
  std::string ids;
  // evaluate
  std::string scores;
  bool strict = false;
  std::string averaging = "binary";
  std::string text_out;
  std::string scores_out;
  // study
  std::string session;
  std::vector<std::string> study_conditions;
  std::size_t k_per_arm = 3;
  bool hide_scores = false;

  std::string output;
};

CliOverrides overrides(const Args& a) {
  CliOverrides o;
  o.seed = if_given(a.s_seed, a.seed);
  o.jobs = if_given(a.s_jobs, a.jobs);
  o.tau = if_given(a.s_tau, a.tau);
  o.mode = if_given(a.s_mode, a.mode);
  o.threshold = if_given(a.s_threshold, a.threshold);
  o.kb = if_given(a.s_kb, a.kb);
  o.pool = if_given(a.s_pool, a.pool);
  o.models = if_given(a.s_models, a.models);
  o.data_dir = if_given(a.s_data_dir, a.data_dir);
  o.provider = if_given(a.s_provider, a.provider);
  o.host = if_given(a.s_host, a.host);
  o.port = if_given(a.s_port, a.port);
  o.static_dir = if_given(a.s_static_dir, a.static_dir);
  o.token_env = if_given(a.s_token_env, a.token_env);
  o.log_level = if_given(a.s_log_level, a.log_level);
  return o;
}

void require(const std::string& value, std::string_view what) {
  if (value.empty()) fail(ErrorCode::Usage, fmt::format("{} is required", what));
}

// ---------------------------------------------------------------------------

std::shared_ptr<const kb::KnowledgeBase> load_kb(const CliConfig& cfg) {
  require(cfg.kb, "--kb");
  return std::make_shared<kb::KnowledgeBase>(kb::read_kb(cfg.kb));
}

json provider_json(const CliConfig& cfg) {
  if (cfg.provider.is_null()) fail(ErrorCode::Usage, "--provider is required");
  json p = cfg.provider;
  if (p.value("kind", "") == "synthetic" && (cfg.seed_explicit || !p.contains("seed"))) p["seed"] = cfg.seed;
  return p;
}

// First label (in sorted order) of every labeled sample.
std::map<std::string, std::string> planted_from_labels(const eval::LabelTable& labels) {
  std::map<std::string, std::string> planted;
  for (const auto& id : labels.sample_ids) {
    const auto& ls = labels.labels.at(id);
    if (!ls.empty()) planted.emplace(id, *ls.begin());
  }
  return planted;
}

eval::LabelTable load_labels(const Args& a, std::size_t* dropped = nullptr) {
  require(a.labels, "--labels");
  auto raw = eval::read_labels_csv(a.labels);
  if (a.alias.empty()) return raw;
  auto mapped = eval::map_labels(raw, eval::read_alias_map(a.alias), a.strict);
  if (!mapped.passed_through.empty()) {
    spdlog::warn("labels without alias kept unchanged: {}", fmt::join(mapped.passed_through, ", "));
  }
  if (dropped != nullptr) *dropped = mapped.dropped_samples;
  return mapped.table;
}

std::unique_ptr<embed::EmbeddingProvider> store_or_provider(const Args& a, const CliConfig& cfg,
                                                            std::shared_ptr<const kb::KnowledgeBase> kb,
                                                            std::map<std::string, std::string> planted) {
  if (!a.ecg_store.empty() || !a.text_store.empty()) {
    require(a.ecg_store, "--ecg-store");
    require(a.text_store, "--text-store");
    auto ecg = std::make_shared<embed::EmbeddingStore>(embed::read_store(a.ecg_store));
    auto text = std::make_shared<embed::EmbeddingStore>(embed::read_store(a.text_store));
    return std::make_unique<embed::FileProvider>(std::move(ecg), std::move(text), !a.no_text_norm);
  }
  json p = provider_json(cfg);
  if (a.no_text_norm) p["normalize_text"] = false;
  return embed::make_provider(p, std::move(kb), std::move(planted));
}

// ---------------------------------------------------------------------------

int cmd_generate(const Args& a, const CliConfig& cfg) {
  require(a.conditions, "--conditions");
  require(a.output, "--output");
  const auto conditions = kb::read_conditions(a.conditions);

  std::vector<llmgen::ModelConfig> models;
  if (!cfg.models.empty()) {
    models = llmgen::read_model_configs(cfg.models);
  } else if (!a.fixtures.empty()) {
    // Model names default to the fixture directory's subdirectories.
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(a.fixtures)) {
      if (e.is_directory()) names.insert(e.path().filename().string());
    }
    for (const auto& n : names) models.push_back({n, "", "", 0.0, 60.0});
  }

  std::unique_ptr<llmgen::ChatBackend> backend;
  if (!a.fixtures.empty()) {
    backend = std::make_unique<llmgen::FixtureChatBackend>(llmgen::FixtureChatBackend::from_directory(a.fixtures));
  } else if (!a.replay_archive.empty()) {
    backend = std::make_unique<llmgen::FixtureChatBackend>(llmgen::FixtureChatBackend::from_archive(a.replay_archive));
  } else {
    backend = std::make_unique<llmgen::HttpChatBackend>(llmgen::RetryPolicy{}, llmgen::Sleeper{}, cfg.seed);
  }

  std::vector<std::vector<kb::ObservationCandidate>> responses;
  std::vector<std::string> failed;
  for (const auto& c : conditions) {
    const auto result = llmgen::generate_condition(c, models, *backend);
    if (!a.archive.empty()) llmgen::append_gen_records(a.archive, result.records);
    std::size_t ok = 0;
    for (const auto& r : result.records) {
      if (r.ok()) ++ok;
    }
    spdlog::info("{}: {}/{} models parsed", c.code, ok, result.records.size());
    if (result.all_failed()) failed.push_back(c.code);
    for (auto& r : result.responses()) responses.push_back(std::move(r));
  }
  const auto pool = kb::build_pool(responses, kb::PoolKind::dscp(a.dataset));
  kb::write_pool(a.output, pool);
  fmt::print("wrote {} candidates to {}\n", pool.candidates.size(), a.output);
  if (!failed.empty()) {
    fail(ErrorCode::AllModelsFailed, fmt::format("no model produced a valid response for: {}", fmt::join(failed, ", ")));
  }
  return 0;
}

std::map<std::string, std::string> read_pool_alias(const std::string& path) {
  if (path.empty()) return {};
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedJson, fmt::format("{}: {}", path, e.what()));
  }
  try {
    if (j.contains("aliases")) return j.at("aliases").get<std::map<std::string, std::string>>();
    return j.get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, fmt::format("{}: {}", path, e.what()));
  }
}

int cmd_preprocess(const Args& a, const CliConfig&) {
  if (a.pools.empty()) fail(ErrorCode::Usage, "--pools is required");
  require(a.output, "--output");
  std::vector<std::vector<kb::ObservationCandidate>> responses;
  for (const auto& p : a.pools) responses.push_back(kb::read_pool(p).candidates);
  kb::PoolKind kind;
  if (a.pool_mode == "dscp") {
    kind = kb::PoolKind::dscp(a.dataset);
  } else if (a.pool_mode == "cdcp") {
    kind = kb::PoolKind::cdcp();
  } else {
    fail(ErrorCode::Usage, fmt::format("--mode must be dscp or cdcp, got '{}'", a.pool_mode));
  }
  const auto pool = kb::build_pool(responses, kind, read_pool_alias(a.alias));
  kb::write_pool(a.output, pool);
  fmt::print("wrote {} candidates to {}\n", pool.candidates.size(), a.output);
  return 0;
}

service::Service* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

int cmd_review_serve(const Args&, const CliConfig& cfg) {
  require(cfg.pool, "--pool");
  service::ServiceConfig sc;
  sc.host = cfg.host;
  sc.port = cfg.port;
  sc.data_dir = cfg.data_dir;
  sc.pool_path = cfg.pool;
  if (!cfg.kb.empty()) sc.kb_path = cfg.kb;
  if (!cfg.static_dir.empty()) sc.static_dir = cfg.static_dir;
  if (!cfg.token_env.empty()) {
    const char* t = std::getenv(cfg.token_env.c_str());
    if (t == nullptr || *t == '\0') {
      fail(ErrorCode::InvalidConfig, fmt::format("environment variable {} is not set", cfg.token_env));
    }
    sc.bearer_token = t;
  }
  sc.inference = cfg.inference;
  std::unique_ptr<embed::EmbeddingProvider> provider;
  if (!cfg.provider.is_null()) {
    std::shared_ptr<const kb::KnowledgeBase> kb;
    if (!cfg.kb.empty()) kb = std::make_shared<kb::KnowledgeBase>(kb::read_kb(cfg.kb));
    provider = embed::make_provider(provider_json(cfg), kb);
  }
  service::Service svc(std::move(sc), std::move(provider));
  g_service = &svc;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  svc.run();
  g_service = nullptr;
  return 0;
}

int cmd_review_replay(const Args& a, const CliConfig& cfg) {
  require(cfg.pool, "--pool");
  require(a.log, "--log");
  require(a.output, "--output");
  const auto pool = kb::replay(kb::read_pool(cfg.pool), kb::read_review_log(a.log));
  kb::write_pool(a.output, pool);
  fmt::print("applied {} events, wrote {}\n", pool.events.size(), a.output);
  return 0;
}

int cmd_kb_export(const Args& a, const CliConfig& cfg) {
  require(cfg.pool, "--pool");
  require(a.output, "--output");
  auto pool = kb::read_pool(cfg.pool);
  if (!a.log.empty()) pool = kb::replay(std::move(pool), kb::read_review_log(a.log));
  const auto kb = a.include_unreviewed
                      ? kb::export_candidates(pool, a.limit > 0 ? std::optional<std::size_t>(a.limit) : std::nullopt)
                      : kb::export_reviewed(pool);
  kb::write_kb(a.output, kb);
  fmt::print("{}\n", kb.version);
  return 0;
}

int cmd_embed_texts(const Args& a, const CliConfig& cfg) {
  require(a.output, "--output");
  const auto kb = load_kb(cfg);
  json p = provider_json(cfg);
  if (a.no_text_norm) p["normalize_text"] = false;
  const auto provider = embed::make_provider(p, kb);
  std::set<std::string> texts;
  for (const auto& [_, e] : kb->conditions) {
    texts.insert(e.positives.begin(), e.positives.end());
    texts.insert(e.negatives.begin(), e.negatives.end());
  }
  const std::vector<std::string> ordered(texts.begin(), texts.end());
  std::vector<embed::Embedding> vectors(ordered.size());
  parallel_for(ordered.size(), cfg.jobs, [&](std::size_t i) { vectors[i] = provider->get_text(ordered[i]); });
  embed::EmbeddingStore store(static_cast<std::uint32_t>(provider->dim()), embed::StoreKind::Text);
  for (std::size_t i = 0; i < ordered.size(); ++i) store.add(ordered[i], std::move(vectors[i]));
  embed::write_store(a.output, store);
  fmt::print("wrote {} text embeddings (dim {}) to {}\n", store.size(), store.dim(), a.output);
  return 0;
}

int cmd_embed_ecgs(const Args& a, const CliConfig& cfg) {
  require(a.output, "--output");
  const auto labels = load_labels(a);
  const auto kb = cfg.kb.empty() ? nullptr : load_kb(cfg);
  const auto planted = a.no_plant ? std::map<std::string, std::string>{} : planted_from_labels(labels);
  const auto provider = embed::make_provider(provider_json(cfg), kb, planted);
  std::vector<std::string> ids = labels.sample_ids;
  std::sort(ids.begin(), ids.end());
  std::vector<embed::Embedding> vectors(ids.size());
  parallel_for(ids.size(), cfg.jobs, [&](std::size_t i) { vectors[i] = provider->get_ecg(ids[i]); });
  embed::EmbeddingStore store(static_cast<std::uint32_t>(provider->dim()), embed::StoreKind::Ecg);
  for (std::size_t i = 0; i < ids.size(); ++i) store.add(ids[i], std::move(vectors[i]));
  embed::write_store(a.output, store);
  fmt::print("wrote {} ECG embeddings (dim {}) to {}\n", store.size(), store.dim(), a.output);
  return 0;
}

std::vector<std::string> read_ids(const std::string& path) {
  std::vector<std::string> ids;
  for (const auto& line : read_lines(path)) {
    auto t = trim(line);
    if (!t.empty()) ids.push_back(std::move(t));
  }
  return ids;
}

int cmd_score(const Args& a, CliConfig cfg) {
  require(a.output, "--output");
  cfg.inference.text_normalized = !a.no_text_norm;
  const auto kb = load_kb(cfg);
  std::vector<std::string> ids;
  std::map<std::string, std::string> planted;
  if (!a.ids.empty()) {
    ids = read_ids(a.ids);
  } else if (!a.labels.empty()) {
    const auto labels = load_labels(a);
    ids = labels.sample_ids;
    if (a.plant) planted = planted_from_labels(labels);
  } else if (!a.ecg_store.empty()) {
    for (const auto& [id, _] : embed::read_store(a.ecg_store).entries()) ids.push_back(id);
  } else {
    fail(ErrorCode::Usage, "give --ecg-store, --ids or --labels to select ECGs");
  }
  std::sort(ids.begin(), ids.end());
  const auto provider = store_or_provider(a, cfg, kb, planted);
  const auto results = infer::classify_batch(ids, *kb, *provider, cfg.inference, cfg.jobs);
  infer::write_score_table(a.output, results);
  fmt::print("scored {} ECGs x {} conditions ({}) -> {}\n", results.size(), kb->conditions.size(),
             infer::to_string(cfg.inference.mode), a.output);
  return 0;
}

void emit_report(const Args& a, const eval::EvalReport& report) {
  const std::string text = eval::render_report(report);
  fmt::print("{}macro_auc {:.17g}\n", text, report.macro_auc);
  if (!a.output.empty()) write_file(a.output, eval::to_json(report).dump(2) + "\n");
  if (!a.text_out.empty()) write_file(a.text_out, text);
}

int cmd_evaluate(const Args& a, const CliConfig& cfg) {
  require(a.scores, "--scores");
  std::size_t dropped = 0;
  const auto labels = load_labels(a, &dropped);
  const auto rows = infer::read_score_table(a.scores);
  auto report = eval::evaluate(rows, labels, {cfg.inference.threshold, eval::averaging_from_string(a.averaging)});
  report.dropped_samples = dropped;
  emit_report(a, report);
  return 0;
}

int cmd_benchmark(const Args& a, CliConfig cfg) {
  cfg.inference.text_normalized = !a.no_text_norm;
  std::size_t dropped = 0;
  const auto labels = load_labels(a, &dropped);
  const auto kb = load_kb(cfg);
  const auto planted = a.plant ? planted_from_labels(labels) : std::map<std::string, std::string>{};
  const auto provider = store_or_provider(a, cfg, kb, planted);
  auto result = eval::run_benchmark(*provider, labels, *kb, cfg.inference,
                                    {cfg.inference.threshold, eval::averaging_from_string(a.averaging)}, cfg.jobs);
  result.report.dropped_samples = dropped;
  if (!a.scores_out.empty()) infer::write_score_table(a.scores_out, result.scores);
  emit_report(a, result.report);
  return 0;
}

int cmd_study_plan(const Args& a, const CliConfig& cfg) {
  require(a.scores, "--scores");
  require(a.session, "--session");
  if (a.study_conditions.empty()) fail(ErrorCode::Usage, "--conditions is required");
  const auto labels = load_labels(a);
  const auto rows = infer::read_score_table(a.scores);
  const auto session = study::build_session(a.session, a.study_conditions, rows, labels, a.k_per_arm, cfg.seed,
                                            cfg.inference.threshold, a.hide_scores);
  const fs::path path = a.output.empty() ? fs::path(cfg.data_dir) / "study" / a.session / "session.json"
                                         : fs::path(a.output);
  study::write_session(path, session);
  fmt::print("wrote {}-item session '{}' to {}\n", session.items.size(), session.session_id, path.string());
  return 0;
}

int cmd_study_report(const Args& a, const CliConfig& cfg) {
  require(a.session, "--session");
  const fs::path dir = fs::path(cfg.data_dir) / "study" / a.session;
  study::StudyState state(study::read_session(dir / "session.json"));
  for (const auto& ans : study::read_answer_log(dir / "answers.jsonl")) state.record(ans);
  const auto report = study::build_report(state, eval::averaging_from_string(a.averaging));
  fmt::print("{}", study::render_report(report));
  if (!a.output.empty()) write_file(a.output, study::to_json(report).dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------

void configure_logging(const std::string& level) {
  auto logger = spdlog::stderr_color_mt("zeta");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") {
    fail(ErrorCode::InvalidConfig, fmt::format("unknown log level '{}'", level));
  }
  spdlog::set_level(lvl);
}

int run(int argc, char** argv) {
  Args a;
  CLI::App app{"Zero-shot ECG diagnosis from positive and negative clinical observations.", "zeta"};
  app.set_version_flag("--version", "zeta 0.1.0");
  app.require_subcommand(0, 1);
  app.fallthrough();

  app.add_option("--config", a.config_path, "JSON config file (default: $ZETA_CONFIG)");
  a.s_seed.opts.push_back(app.add_option("--seed", a.seed, "Seed for synthetic embeddings and study shuffles [42]"));
  a.s_jobs.opts.push_back(app.add_option("--jobs", a.jobs, "Worker threads for data-parallel steps [1]"));
  a.s_log_level.opts.push_back(
      app.add_option("--log-level", a.log_level, "trace, debug, info, warn, error or off [info]"));
  app.add_flag("--dump-config", a.dump_config, "Print the resolved configuration as JSON and exit");

  auto add_kb = [&](CLI::App* s) { a.s_kb.opts.push_back(s->add_option("--kb", a.kb, "Knowledge base JSON")); };
  auto add_pool = [&](CLI::App* s, const char* help) { a.s_pool.opts.push_back(s->add_option("--pool", a.pool, help)); };
  auto add_provider = [&](CLI::App* s) {
    a.s_provider.opts.push_back(s->add_option("--provider", a.provider, "Embedding provider config JSON"));
  };
  auto add_inference = [&](CLI::App* s) {
    a.s_mode.opts.push_back(s->add_option("--mode", a.mode, "Aggregation: pooled or paired [pooled]"));
    a.s_tau.opts.push_back(s->add_option("--tau", a.tau, "Temperature [0.5]"));
    a.s_threshold.opts.push_back(s->add_option("--threshold", a.threshold, "Decision threshold, strict > [0.5]"));
    s->add_flag("--no-text-norm", a.no_text_norm, "Use raw text embeddings and unclamped dot products");
  };
  auto add_labels = [&](CLI::App* s) {
    s->add_option("--labels", a.labels, "Labels CSV (sample_id,labels; labels separated by ';')");
    s->add_option("--alias", a.alias, "Label alias map JSON");
    s->add_flag("--strict", a.strict, "Fail on labels missing from the alias map");
  };
  auto add_output = [&](CLI::App* s, const char* help) { s->add_option("-o,--output", a.output, help); };

  auto* gen = app.add_subcommand("generate", "Generate candidate observations with LLMs");
  gen->add_option("--conditions", a.conditions, "Condition list JSON ([{code, display_name}])");
  a.s_models.opts.push_back(gen->add_option("--models", a.models, "Model config JSON list"));
  gen->add_option("--fixtures", a.fixtures, "Replay responses from <dir>/<model>/<CODE>.txt");
  gen->add_option("--replay", a.replay_archive, "Replay responses from a generation archive");
  gen->add_option("--archive", a.archive, "Append generation records to this JSONL archive");
  gen->add_option("--dataset", a.dataset, "Dataset id recorded in the pool [default]");
  add_output(gen, "Candidate pool JSON");

  auto* pre = app.add_subcommand("preprocess", "Merge candidate pools and remove duplicates");
  pre->add_option("--pools", a.pools, "Input pools")->delimiter(',');
  pre->add_option("--mode", a.pool_mode, "dscp or cdcp [dscp]");
  pre->add_option("--alias", a.alias, "Condition alias map JSON (local label -> code)");
  pre->add_option("--dataset", a.dataset, "Dataset id for dscp pools [default]");
  add_output(pre, "Merged pool JSON");

  auto* review = app.add_subcommand("review", "Expert review of candidate observations");
  review->require_subcommand(1);
  auto* serve = review->add_subcommand("serve", "Serve the review, scoring and study HTTP API");
  add_pool(serve, "Candidate pool JSON");
  a.s_port.opts.push_back(serve->add_option("--port", a.port, "Listen port [8080]"));
  a.s_host.opts.push_back(serve->add_option("--host", a.host, "Listen address [127.0.0.1]"));
  a.s_data_dir.opts.push_back(serve->add_option("--data-dir", a.data_dir, "Logs, snapshots and study sessions"));
  a.s_static_dir.opts.push_back(serve->add_option("--static", a.static_dir, "Directory served at /"));
  a.s_token_env.opts.push_back(
      serve->add_option("--token-env", a.token_env, "Env var holding a bearer token required on /api/"));
  add_kb(serve);
  add_provider(serve);
  auto* rreplay = review->add_subcommand("replay", "Apply a review event log to a pool offline");
  add_pool(rreplay, "Candidate pool JSON");
  rreplay->add_option("--log", a.log, "Review event log (JSONL)");
  add_output(rreplay, "Reviewed pool JSON");

  auto* kbcmd = app.add_subcommand("kb", "Knowledge base operations");
  kbcmd->require_subcommand(1);
  auto* exp = kbcmd->add_subcommand("export", "Export the knowledge base from a reviewed pool");
  add_pool(exp, "Candidate pool JSON");
  exp->add_option("--log", a.log, "Review event log to apply first");
  exp->add_flag("--include-unreviewed", a.include_unreviewed, "Export every non-rejected candidate");
  exp->add_option("--limit", a.limit, "With --include-unreviewed: keep at most N per condition and polarity");
  add_output(exp, "Knowledge base JSON");

  auto* et = app.add_subcommand("embed-texts", "Embed every knowledge base observation");
  add_kb(et);
  add_provider(et);
  et->add_flag("--no-text-norm", a.no_text_norm, "Store unnormalized text embeddings");
  add_output(et, "Embedding store (.zeb binary or .jsonl)");

  auto* ee = app.add_subcommand("embed-ecgs", "Embed the ECGs listed in a labels file");
  add_kb(ee);
  add_provider(ee);
  add_labels(ee);
  ee->add_flag("--no-plant", a.no_plant, "Synthetic provider: do not plant labels into the embeddings");
  add_output(ee, "Embedding store (.zeb binary or .jsonl)");

  auto* sc = app.add_subcommand("score", "Score ECGs against every knowledge base condition");
  add_kb(sc);
  sc->add_option("--ecg-store", a.ecg_store, "ECG embedding store");
  sc->add_option("--text-store", a.text_store, "Text embedding store");
  add_provider(sc);
  sc->add_option("--ids", a.ids, "File with one ECG id per line");
  add_labels(sc);
  sc->add_flag("--plant", a.plant, "Synthetic provider: plant labels into the embeddings");
  add_inference(sc);
  a.s_jobs.opts.push_back(sc->add_option("--jobs", a.jobs, "Worker threads"));
  add_output(sc, "Score table (JSONL)");

  auto* ev = app.add_subcommand("evaluate", "Per-class ROC AUC and confusion metrics for a score table");
  ev->add_option("--scores", a.scores, "Score table (JSONL)");
  add_labels(ev);
  a.s_threshold.opts.push_back(ev->add_option("--threshold", a.threshold, "Decision threshold, strict > [0.5]"));
  ev->add_option("--averaging", a.averaging, "Confusion metrics: binary or weighted [binary]");
  ev->add_option("--text", a.text_out, "Also write the rendered table here");
  add_output(ev, "Report JSON");

  auto* bm = app.add_subcommand("benchmark", "Score and evaluate in one step");
  add_kb(bm);
  bm->add_option("--ecg-store", a.ecg_store, "ECG embedding store");
  bm->add_option("--text-store", a.text_store, "Text embedding store");
  add_provider(bm);
  add_labels(bm);
  bm->add_flag("--plant", a.plant, "Synthetic provider: plant labels into the embeddings");
  add_inference(bm);
  bm->add_option("--averaging", a.averaging, "Confusion metrics: binary or weighted [binary]");
  a.s_jobs.opts.push_back(bm->add_option("--jobs", a.jobs, "Worker threads"));
  bm->add_option("--scores-out", a.scores_out, "Also write the score table (JSONL)");
  bm->add_option("--text", a.text_out, "Also write the rendered table here");
  add_output(bm, "Report JSON");

  auto* st = app.add_subcommand("study", "Blinded reader study");
  st->require_subcommand(1);
  auto* plan = st->add_subcommand("plan", "Select high/low scoring samples per class into a session");
  plan->add_option("--scores", a.scores, "Score table (JSONL)");
  add_labels(plan);
  plan->add_option("--conditions", a.study_conditions, "Study conditions")->delimiter(',');
  plan->add_option("--session", a.session, "Session id");
  plan->add_option("--k", a.k_per_arm, "Samples per arm [3]");
  plan->add_flag("--hide-observation-scores", a.hide_scores, "Do not show similarities to readers");
  a.s_threshold.opts.push_back(plan->add_option("--threshold", a.threshold, "Decision threshold [0.5]"));
  a.s_data_dir.opts.push_back(plan->add_option("--data-dir", a.data_dir, "Service data directory"));
  add_output(plan, "Session file (default <data-dir>/study/<session>/session.json)");
  auto* rep = st->add_subcommand("report", "Summarize recorded answers");
  rep->add_option("--session", a.session, "Session id");
  a.s_data_dir.opts.push_back(rep->add_option("--data-dir", a.data_dir, "Service data directory"));
  rep->add_option("--averaging", a.averaging, "binary or weighted [weighted]");
  add_output(rep, "Report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  if (rep->parsed() && !rep->get_option("--averaging")->count()) a.averaging = "weighted";

  CliConfig cfg = resolve_config(a.config_path, overrides(a));
  configure_logging(cfg.log_level);
  if (a.dump_config) {
    fmt::print("{}\n", to_json(cfg).dump(2));
    return 0;
  }

  if (gen->parsed()) return cmd_generate(a, cfg);
  if (pre->parsed()) return cmd_preprocess(a, cfg);
  if (serve->parsed()) return cmd_review_serve(a, cfg);
  if (rreplay->parsed()) return cmd_review_replay(a, cfg);
  if (exp->parsed()) return cmd_kb_export(a, cfg);
  if (et->parsed()) return cmd_embed_texts(a, cfg);
  if (ee->parsed()) return cmd_embed_ecgs(a, cfg);
  if (sc->parsed()) return cmd_score(a, cfg);
  if (ev->parsed()) return cmd_evaluate(a, cfg);
  if (bm->parsed()) return cmd_benchmark(a, cfg);
  if (plan->parsed()) return cmd_study_plan(a, cfg);
  if (rep->parsed()) return cmd_study_report(a, cfg);
  std::cout << app.help();
  return 1;
}

}  // namespace
}  // namespace zeta::cli

int main(int argc, char** argv) {
  try {
    return zeta::cli::run(argc, argv);
  } catch (const zeta::Error& e) {
    std::fprintf(stderr, "zeta: error [%s]: %s\n", std::string(zeta::to_string(e.code())).c_str(), e.what());
    return static_cast<int>(zeta::classify(e.code()));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "zeta: error: %s\n", e.what());
    return static_cast<int>(zeta::ErrorClass::Runtime);
  }
}
