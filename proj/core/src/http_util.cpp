#include "http_util.hpp"

#include <cstdlib>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>

#include "zeta/error.hpp"

namespace zeta::detail {

HttpResult http_post_json(const std::string& url, const std::string& body,
                          const Headers& headers, double timeout_seconds) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) {
    fail(ErrorCode::InvalidConfig, fmt::format("invalid URL '{}'", url));
  }
  const std::string origin = m[1].str();
  const std::string path = m[2].matched ? m[2].str() : "/";

  httplib::Client client(origin);
  const auto secs = static_cast<time_t>(timeout_seconds);
  const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers hdrs;
  for (const auto& [k, v] : headers) hdrs.emplace(k, v);

  HttpResult result;
  auto res = client.Post(path, hdrs, body, "application/json");
  if (!res) {
    result.error = httplib::to_string(res.error());
    return result;
  }
  result.status = res->status;
  result.body = res->body;
  return result;
}

std::string excerpt(std::string_view body, std::size_t max_len) {
  if (body.size() <= max_len) return std::string(body);
  return std::string(body.substr(0, max_len)) + "...";
}

Headers auth_headers(const std::string& token_env) {
  if (token_env.empty()) return {};
  const char* token = std::getenv(token_env.c_str());
  if (token == nullptr || *token == '\0') {
    fail(ErrorCode::AuthError, fmt::format("environment variable {} is not set", token_env));
  }
  return {{"Authorization", fmt::format("Bearer {}", token)}};
}

}  // namespace zeta::detail
