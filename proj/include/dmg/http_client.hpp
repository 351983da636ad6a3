#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include "httplib.h"
#include "json.hpp"

// <resolv.h> defines _res as a macro, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif

#include "dmg/error.hpp"

namespace dmg {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double backoff_multiplier = 2.0;
  std::chrono::milliseconds timeout{30000};

  std::chrono::milliseconds backoff_before(int attempt) const {
    // attempt is 1-based; no wait before the first one.
    double delay = static_cast<double>(initial_backoff.count());
    for (int i = 2; i < attempt; ++i) delay *= backoff_multiplier;
    return std::chrono::milliseconds(static_cast<long long>(delay));
  }
};

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // starts with '/'
};

inline Endpoint split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw InvalidArgument("endpoint URL must include a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::optional<std::string> env_var(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

// POSTs a JSON body and parses a JSON reply. Transport failures, 429 and 5xx
// are retried with exponential backoff; other statuses fail immediately.
inline nlohmann::json post_json_with_retry(const std::string& url, const std::string& api_key,
                                           const nlohmann::json& body, const RetryPolicy& policy) {
  const Endpoint ep = split_url(url);
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  std::string last_error;
  const int attempts = std::max(policy.max_attempts, 1);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(policy.backoff_before(attempt));

    httplib::Client client(ep.base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(policy.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(policy.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(ep.path, headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw BackendError(url + " returned HTTP " + std::to_string(res->status) + ": " + res->body,
                         false, attempt);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw BackendError(url + " returned invalid JSON: " + e.what(), false, attempt);
    }
  }
  throw BackendError(url + " unreachable after " + std::to_string(attempts) +
                         " attempts: " + last_error,
                     true, attempts);
}

}  // namespace dmg
