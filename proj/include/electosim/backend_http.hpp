#pragma once

#include <memory>
#include <string>

#include <httplib.h>
// httplib pulls in <resolv.h>, whose _res macro breaks Eigen headers that use
// _res as a parameter name when they are included afterwards.
#ifdef _res
#undef _res
#endif

#include "electosim/backend.hpp"

namespace electosim::backend {

struct Endpoint {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // e.g. "/v1"

  static Endpoint parse(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos)
      throw std::invalid_argument("base URL must include a scheme: " + base_url);
    const auto path_start = base_url.find('/', scheme_end + 3);
    Endpoint e;
    if (path_start == std::string::npos) {
      e.origin = base_url;
    } else {
      e.origin = base_url.substr(0, path_start);
      e.path_prefix = base_url.substr(path_start);
      while (!e.path_prefix.empty() && e.path_prefix.back() == '/')
        e.path_prefix.pop_back();
    }
    return e;
  }
};

// OpenAI-compatible chat-completions client with shared rate limiting,
// bounded in-flight concurrency, and geometric retry backoff.
class HttpBackend final : public ChatBackend {
 public:
  HttpBackend(const std::string& base_url, const std::string& api_key,
              BackendPolicy policy, Clock& clock)
      : endpoint_(Endpoint::parse(base_url)),
        api_key_(api_key),
        policy_(policy),
        clock_(clock),
        limiter_(policy.requests_per_minute, clock),
        inflight_(policy.max_concurrency),
        client_(endpoint_.origin) {
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(policy_.timeout);
    client_.set_connection_timeout(secs.count(), 0);
    client_.set_read_timeout(secs.count(), 0);
    client_.set_write_timeout(secs.count(), 0);
  }

  // Reads ELECTOSIM_BASE_URL / ELECTOSIM_API_KEY; credentials never come
  // from config files.
  static std::unique_ptr<HttpBackend> from_environment(BackendPolicy policy, Clock& clock) {
    const char* url = std::getenv("ELECTOSIM_BASE_URL");
    if (!url || !*url)
      throw std::runtime_error("ELECTOSIM_BASE_URL is not set");
    const char* key = std::getenv("ELECTOSIM_API_KEY");
    return std::make_unique<HttpBackend>(url, key ? key : "", policy, clock);
  }

  ChatResponse complete(const ChatRequest& req) override {
    req.validate();
    const std::string body = build_body(req).dump();
    const std::string path = endpoint_.path_prefix + "/chat/completions";
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const Millis start = clock_.now();
    for (int attempt = 0; attempt <= policy_.max_retries; ++attempt) {
      limiter_.acquire();
      httplib::Result res = [&] {
        SemaphoreGuard guard(inflight_);
        return client_.Post(path, headers, body, "application/json");
      }();

      if (res) {
        const int status = res->status;
        if (status == 401 || status == 403)
          throw AuthError("authentication rejected (HTTP " + std::to_string(status) + ")");
        if (status == 200) {
          ChatResponse out = parse_response(res->body);
          out.attempt_count = attempt + 1;
          out.latency = clock_.now() - start;
          return out;
        }
        if (!(status == 429 || status >= 500))
          throw MalformedResponse("unexpected HTTP status " + std::to_string(status));
      }
      // transient: 429, 5xx, connection error, timeout
      if (attempt < policy_.max_retries) clock_.sleep(policy_.backoff_for(attempt));
    }
    throw Exhausted("retries exhausted after " + std::to_string(policy_.max_retries + 1) +
                    " attempts");
  }

 private:
  json build_body(const ChatRequest& req) const {
    json messages = json::array();
    if (req.system_text)
      messages.push_back({{"role", "system"}, {"content", *req.system_text}});
    messages.push_back({{"role", "user"}, {"content", req.user_text}});
    return json{{"model", req.model_id},
                {"messages", messages},
                {"temperature", req.temperature},
                {"max_tokens", req.max_tokens}};
  }

  static ChatResponse parse_response(const std::string& body) {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::exception& e) {
      throw MalformedResponse(std::string("response is not valid JSON: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
      throw MalformedResponse("response has no choices");
    const auto& msg = j["choices"][0];
    if (!msg.contains("message") || !msg["message"].contains("content"))
      throw MalformedResponse("response choice has no message content");
    ChatResponse out;
    out.text = msg["message"]["content"].get<std::string>();
    if (j.contains("usage")) {
      out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0LL);
      out.usage.completion_tokens = j["usage"].value("completion_tokens", 0LL);
    }
    return out;
  }

  Endpoint endpoint_;
  std::string api_key_;
  BackendPolicy policy_;
  Clock& clock_;
  RateLimiter limiter_;
  Semaphore inflight_;
  httplib::Client client_;
};

}  // namespace electosim::backend
