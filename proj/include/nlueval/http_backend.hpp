#pragma once

// Plain text-completion endpoint:
//   POST {"prompt", "max_tokens", "stop", "temperature"}
//   -> {"text": "..."} or {"choices": [{"text": "..."}]}
// No logit access, so NER output goes through repair_or_reject.

#include <chrono>
#include <cstdlib>
#include <string>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "nlueval/evalengine.hpp"

namespace nlueval::eval {

struct HttpOptions {
  std::string endpoint;     // e.g. http://localhost:8000/v1/completions
  std::string api_key_env;  // variable holding a bearer token; empty for none
  std::chrono::seconds timeout{120};
};

/// Split "scheme://host[:port]/path" into ("scheme://host[:port]", "/path").
inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error("endpoint '" + url + "' has no scheme");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

/// Text of a completion response body.
inline std::string completion_text(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw TransportError("completion response is not a JSON object");
  if (auto it = j.find("text"); it != j.end() && it->is_string()) return it->get<std::string>();
  if (auto it = j.find("choices"); it != j.end() && it->is_array() && !it->empty()) {
    const auto& c = it->front();
    if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
  }
  throw TransportError("completion response has no text");
}

class HttpBackend : public Backend {
 public:
  HttpBackend(BackendProfile profile, HttpOptions options) : profile_(std::move(profile)), options_(std::move(options)) {
    profile_.validate();
    if (profile_.logit_access) throw Error("HTTP backend '" + profile_.id + "' cannot provide logits");
    std::tie(base_, path_) = split_endpoint(options_.endpoint);
  }

  const BackendProfile& profile() const override { return profile_; }

  std::string complete(const CompletionRequest& request) override {
    httplib::Client client(base_);
    const auto t = static_cast<time_t>(options_.timeout.count());
    client.set_connection_timeout(t, 0);
    client.set_read_timeout(t, 0);
    httplib::Headers headers;
    if (!options_.api_key_env.empty()) {
      if (const char* key = std::getenv(options_.api_key_env.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
      }
    }
    const nlohmann::json body = {{"prompt", request.prompt},
                                 {"max_tokens", request.max_tokens},
                                 {"stop", request.stop},
                                 {"temperature", request.temperature}};
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw TransportError(profile_.id + ": " + httplib::to_string(res.error()));
    if (res->status != 200) throw TransportError(profile_.id + ": HTTP " + std::to_string(res->status));
    return completion_text(res->body);
  }

 private:
  BackendProfile profile_;
  HttpOptions options_;
  std::string base_;
  std::string path_;
};

}  // namespace nlueval::eval
