#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "q2d/error.hpp"

namespace q2d {

// Remote peer returned a non-2xx status.
class HttpStatusError : public TransportError {
 public:
  HttpStatusError(int status, const std::string& what) : TransportError(what), status_(status) {}
  int status() const noexcept { return status_; }
  bool is_client_error() const noexcept { return status_ >= 400 && status_ < 500; }

 private:
  int status_;
};

struct HttpOptions {
  std::chrono::milliseconds timeout{30000};
  std::optional<std::string> bearer_token;
};

// Splits "http://host:port/prefix" into origin and path prefix. Throws
// InputError for anything that is not an http(s) URL.
struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // always begins with '/'
};
ParsedUrl parse_url(const std::string& url);

// Joins an endpoint base and a route ("/embed") without doubling slashes.
std::string join_url(const std::string& base, const std::string& route);

// POST a JSON body and parse a JSON response.
// Network failures and non-2xx statuses -> TransportError / HttpStatusError;
// unparseable response bodies -> ProtocolError.
nlohmann::json http_post_json(const std::string& url, const nlohmann::json& body, const HttpOptions& opts);

// GET with query parameters and parse a JSON response.
nlohmann::json http_get_json(const std::string& url,
                             const std::vector<std::pair<std::string, std::string>>& params,
                             const HttpOptions& opts);

// Reads an environment variable, treating empty values as unset.
std::optional<std::string> env_var(const char* name);

}  // namespace q2d
