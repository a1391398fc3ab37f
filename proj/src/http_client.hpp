#pragma once

// Thin wrapper so only one translation unit instantiates the HTTP client.

#include <chrono>
#include <map>
#include <string>

namespace synthpqa::detail {

struct HttpResult {
  int status = 0;         // 0 when the request never produced a response
  std::string body;
  std::string error;      // transport error text when status == 0
};

/// POSTs `body` as application/json to `base_url` + `path`. `base_url` may
/// carry a path prefix ("http://host:8000/v1").
HttpResult http_post_json(const std::string& base_url, const std::string& path,
                          const std::string& body,
                          const std::map<std::string, std::string>& headers,
                          std::chrono::seconds timeout = std::chrono::seconds(120));

}  // namespace synthpqa::detail
