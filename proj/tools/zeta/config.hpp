#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "zeta/infer.hpp"

namespace zeta::cli {

// Resolved settings. Precedence: command-line flag, then environment
// variable, then config file, then built-in default.
struct CliConfig {
  std::uint64_t seed = 42;
  bool seed_explicit = false;  // set by flag or environment
  std::size_t jobs = 1;
  infer::InferenceConfig inference;
  std::string kb;
  std::string pool;
  std::string models;
  std::string data_dir = "zeta-data";
  nlohmann::json provider;  // inline provider description, or null
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  std::string token_env;
  std::string log_level = "info";
};

// Values given on the command line; unset members were not passed.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<double> tau;
  std::optional<std::string> mode;
  std::optional<double> threshold;
  std::optional<std::string> kb;
  std::optional<std::string> pool;
  std::optional<std::string> models;
  std::optional<std::string> data_dir;
  std::optional<std::string> provider;  // path to a provider JSON file
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<std::string> static_dir;
  std::optional<std::string> token_env;
  std::optional<std::string> log_level;
};

// `config_path` may be empty (then ZETA_CONFIG is consulted).
CliConfig resolve_config(const std::string& config_path, const CliOverrides& cli);

nlohmann::json to_json(const CliConfig& c);

}  // namespace zeta::cli
