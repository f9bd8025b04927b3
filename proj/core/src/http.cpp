#include "q2d/http.hpp"

#include <httplib.h>

#include <cstdlib>

namespace q2d {
namespace {

httplib::Client make_client(const ParsedUrl& url, const HttpOptions& opts) {
  httplib::Client cli(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  if (opts.bearer_token) cli.set_bearer_token_auth(*opts.bearer_token);
  return cli;
}

nlohmann::json handle(const httplib::Result& res, const std::string& url) {
  if (!res) {
    throw TransportError(url + ": " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    std::string body = res->body.substr(0, 200);
    throw HttpStatusError(res->status, url + ": HTTP " + std::to_string(res->status) + " " + body);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(url + ": response is not JSON: " + e.what());
  }
}

}  // namespace

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InputError("not a URL: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw InputError("unsupported URL scheme: " + url);
  const auto host_start = scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.origin = url;
    out.path = "/";
  } else {
    out.origin = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  if (out.origin.size() <= host_start) throw InputError("URL has no host: " + url);
  return out;
}

std::string join_url(const std::string& base, const std::string& route) {
  std::string b = base;
  while (!b.empty() && b.back() == '/') b.pop_back();
  if (route.empty()) return b;
  return route.front() == '/' ? b + route : b + "/" + route;
}

nlohmann::json http_post_json(const std::string& url, const nlohmann::json& body, const HttpOptions& opts) {
  const auto parsed = parse_url(url);
  auto cli = make_client(parsed, opts);
  auto res = cli.Post(parsed.path, body.dump(), "application/json");
  return handle(res, url);
}

nlohmann::json http_get_json(const std::string& url,
                             const std::vector<std::pair<std::string, std::string>>& params,
                             const HttpOptions& opts) {
  const auto parsed = parse_url(url);
  auto cli = make_client(parsed, opts);
  httplib::Params p;
  for (const auto& [k, v] : params) p.emplace(k, v);
  auto res = cli.Get(parsed.path, p, httplib::Headers{});
  return handle(res, url);
}

std::optional<std::string> env_var(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

}  // namespace q2d
