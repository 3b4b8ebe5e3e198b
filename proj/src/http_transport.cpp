#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "http_transport.hpp"

#include <httplib.h>

#include "reportcheck/error.hpp"

namespace reportcheck::detail {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::kTransport, "not a URL: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

[[noreturn]] void raise(httplib::Error err, const std::string& url) {
  if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
    throw Error(ErrorCode::kTimeout, url + ": " + httplib::to_string(err));
  }
  throw Error(ErrorCode::kTransport, url + ": " + httplib::to_string(err));
}

httplib::Client make_client(const std::string& origin, int timeout_seconds) {
  httplib::Client client(origin);
  client.set_connection_timeout(timeout_seconds, 0);
  client.set_read_timeout(timeout_seconds, 0);
  client.set_write_timeout(timeout_seconds, 0);
  client.set_follow_location(true);
  return client;
}

}  // namespace

HttpResult http_get(const std::string& url, int timeout_seconds) {
  auto parts = split_url(url);
  auto client = make_client(parts.origin, timeout_seconds);
  auto res = client.Get(parts.path);
  if (!res) raise(res.error(), url);
  return {res->status, res->body, res->get_header_value("Content-Type")};
}

HttpResult http_post(const std::string& url, const std::string& body,
                     const std::map<std::string, std::string>& headers, int timeout_seconds) {
  auto parts = split_url(url);
  auto client = make_client(parts.origin, timeout_seconds);
  httplib::Headers h(headers.begin(), headers.end());
  auto res = client.Post(parts.path, h, body, "application/json");
  if (!res) raise(res.error(), url);
  return {res->status, res->body, res->get_header_value("Content-Type")};
}

}  // namespace reportcheck::detail
