#include "config.hpp"

#include <cstdlib>
#include <filesystem>

#include <fmt/format.h>

#include "zeta/error.hpp"
#include "zeta/util.hpp"

namespace zeta::cli {

using nlohmann::json;

namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

template <typename T>
T parse_env(const char* name, const std::string& text) {
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_floating_point_v<T>) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return static_cast<T>(v);
    } else {
      std::size_t used = 0;
      const long long v = std::stoll(text, &used);
      if (used != text.size() || v < 0) throw std::invalid_argument(text);
      return static_cast<T>(v);
    }
  } catch (const std::logic_error&) {
    fail(ErrorCode::InvalidConfig, fmt::format("environment variable {}='{}' is not valid", name, text));
  }
}

// Applies file value, then environment, then flag; returns true when the
// environment or the flag supplied the value.
template <typename T>
bool layer(T& out, const json& file, const char* pointer, const char* env_name, const std::optional<T>& flag) {
  const json::json_pointer ptr(pointer);
  if (file.contains(ptr) && !file.at(ptr).is_null()) {
    try {
      out = file.at(ptr).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::InvalidConfig, fmt::format("config {}: {}", pointer, e.what()));
    }
  }
  bool explicit_value = false;
  if (const auto v = env(env_name)) {
    out = parse_env<T>(env_name, *v);
    explicit_value = true;
  }
  if (flag) {
    out = *flag;
    explicit_value = true;
  }
  return explicit_value;
}

json load_provider(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedJson, fmt::format("{}: {}", path, e.what()));
  }
}

}  // namespace

CliConfig resolve_config(const std::string& config_path, const CliOverrides& cli) {
  std::string path = config_path;
  if (path.empty()) path = env("ZETA_CONFIG").value_or("");
  json file = json::object();
  if (!path.empty()) {
    try {
      file = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::MalformedJson, fmt::format("{}: {}", path, e.what()));
    }
    if (!file.is_object()) fail(ErrorCode::InvalidConfig, fmt::format("{}: config must be a JSON object", path));
  }

  CliConfig c;
  c.seed_explicit = layer(c.seed, file, "/seed", "ZETA_SEED", cli.seed);
  layer(c.jobs, file, "/jobs", "ZETA_JOBS", cli.jobs);
  layer(c.inference.tau, file, "/inference/tau", "ZETA_TAU", cli.tau);
  std::string mode(infer::to_string(c.inference.mode));
  layer(mode, file, "/inference/mode", "ZETA_MODE", cli.mode);
  c.inference.mode = infer::mode_from_string(mode);
  layer(c.inference.threshold, file, "/inference/threshold", "ZETA_THRESHOLD", cli.threshold);
  layer(c.kb, file, "/kb", "ZETA_KB", cli.kb);
  layer(c.pool, file, "/pool", "ZETA_POOL", cli.pool);
  layer(c.models, file, "/models", "ZETA_MODELS", cli.models);
  layer(c.data_dir, file, "/data_dir", "ZETA_DATA_DIR", cli.data_dir);
  layer(c.host, file, "/service/host", "ZETA_HOST", cli.host);
  layer(c.port, file, "/service/port", "ZETA_PORT", cli.port);
  layer(c.static_dir, file, "/service/static_dir", "ZETA_STATIC_DIR", cli.static_dir);
  layer(c.token_env, file, "/service/token_env", "ZETA_TOKEN_ENV", cli.token_env);
  layer(c.log_level, file, "/log_level", "ZETA_LOG_LEVEL", cli.log_level);

  // Provider: inline object or path in the file; a path from env or flag.
  if (file.contains("provider")) {
    const auto& p = file.at("provider");
    if (p.is_object()) {
      c.provider = p;
    } else if (p.is_string()) {
      c.provider = load_provider(p.get<std::string>());
    }
  }
  std::optional<std::string> provider_path = env("ZETA_PROVIDER");
  if (cli.provider) provider_path = cli.provider;
  if (provider_path) c.provider = load_provider(*provider_path);

  if (c.jobs == 0) c.jobs = 1;
  c.inference.validate();
  return c;
}

json to_json(const CliConfig& c) {
  return json{{"seed", c.seed},
              {"jobs", c.jobs},
              {"inference",
               {{"tau", c.inference.tau},
                {"mode", infer::to_string(c.inference.mode)},
                {"threshold", c.inference.threshold},
                {"text_normalized", c.inference.text_normalized}}},
              {"kb", c.kb},
              {"pool", c.pool},
              {"models", c.models},
              {"data_dir", c.data_dir},
              {"provider", c.provider},
              {"service",
               {{"host", c.host}, {"port", c.port}, {"static_dir", c.static_dir}, {"token_env", c.token_env}}},
              {"log_level", c.log_level}};
}

}  // namespace zeta::cli
