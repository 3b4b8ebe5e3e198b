#pragma once

#include <map>
#include <string>

namespace reportcheck::detail {

struct HttpResult {
  int status = 0;
  std::string body;
  std::string content_type;
};

// Both throw Error(kTimeout) or Error(kTransport) when no response arrives.
HttpResult http_get(const std::string& url, int timeout_seconds);
HttpResult http_post(const std::string& url, const std::string& body,
                     const std::map<std::string, std::string>& headers, int timeout_seconds);

}  // namespace reportcheck::detail
