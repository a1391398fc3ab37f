#include "http_client.hpp"

#include <httplib.h>

namespace synthpqa::detail {

HttpResult http_post_json(const std::string& base_url, const std::string& path,
                          const std::string& body,
                          const std::map<std::string, std::string>& headers,
                          std::chrono::seconds timeout) {
  std::string origin = base_url;
  std::string prefix;
  const auto scheme = base_url.find("://");
  const auto slash = base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (slash != std::string::npos) {
    origin = base_url.substr(0, slash);
    prefix = base_url.substr(slash);
  }
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client cli(origin);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  httplib::Headers hs;
  for (const auto& [k, v] : headers) hs.emplace(k, v);

  HttpResult out;
  auto res = cli.Post(prefix + path, hs, body, "application/json");
  if (!res) {
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

}  // namespace synthpqa::detail
