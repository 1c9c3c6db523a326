#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace zeta::detail {

struct HttpResult {
  int status = 0;       // 0 when the request never completed
  std::string body;
  std::string error;    // transport error description
};

using Headers = std::vector<std::pair<std::string, std::string>>;

// POSTs a JSON body to an absolute http(s) URL.
HttpResult http_post_json(const std::string& url, const std::string& body,
                          const Headers& headers, double timeout_seconds);

std::string excerpt(std::string_view body, std::size_t max_len = 200);

// Reads a bearer token from the named environment variable. Empty name means
// no authentication; a named but unset variable is an AuthError.
Headers auth_headers(const std::string& token_env);

}  // namespace zeta::detail
