#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "electosim/domain.hpp"
#include "electosim/rng.hpp"

namespace electosim::backend {

using json = nlohmann::json;
using Millis = std::chrono::milliseconds;

struct AuthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Exhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedResponse : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownPersona : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Clock abstraction; tests substitute a fake clock that advances on sleep.
// ---------------------------------------------------------------------------

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Millis now() = 0;
  virtual void sleep(Millis d) = 0;
};

class SystemClock final : public Clock {
 public:
  Millis now() override {
    return std::chrono::duration_cast<Millis>(
        std::chrono::steady_clock::now().time_since_epoch());
  }
  void sleep(Millis d) override { std::this_thread::sleep_for(d); }
};

class FakeClock final : public Clock {
 public:
  Millis now() override {
    std::lock_guard<std::mutex> lock(mu_);
    return t_;
  }
  void sleep(Millis d) override {
    std::lock_guard<std::mutex> lock(mu_);
    t_ += d;
  }
  void advance(Millis d) { sleep(d); }

 private:
  std::mutex mu_;
  Millis t_{0};
};

// ---------------------------------------------------------------------------
// Rate limiting and concurrency gates
// ---------------------------------------------------------------------------

// Sliding 60-second window: at most `requests_per_minute` acquisitions per
// window, shared by all concurrent callers.
class RateLimiter {
 public:
  RateLimiter(int requests_per_minute, Clock& clock)
      : limit_(requests_per_minute), clock_(clock) {
    if (limit_ < 1) throw std::invalid_argument("requests_per_minute must be >= 1");
  }

  void acquire() {
    for (;;) {
      Millis wait{0};
      {
        std::lock_guard<std::mutex> lock(mu_);
        const Millis now = clock_.now();
        while (!issued_.empty() && issued_.front() + Millis{60000} <= now)
          issued_.pop_front();
        if (static_cast<int>(issued_.size()) < limit_) {
          issued_.push_back(now);
          return;
        }
        wait = issued_.front() + Millis{60000} - now;
      }
      clock_.sleep(std::max(wait, Millis{1}));
    }
  }

 private:
  int limit_;
  Clock& clock_;
  std::mutex mu_;
  std::deque<Millis> issued_;
};

class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {
    if (count < 1) throw std::invalid_argument("semaphore count must be >= 1");
  }
  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }
  void release() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int count_;
};

struct SemaphoreGuard {
  Semaphore& sem;
  explicit SemaphoreGuard(Semaphore& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
};

// ---------------------------------------------------------------------------
// Request/response contract
// ---------------------------------------------------------------------------

struct ChatRequest {
  std::optional<std::string> system_text;
  std::string user_text;
  double temperature = 0.0;
  int max_tokens = 256;
  std::string model_id;
  // routing tags used by the mock backend; ignored on the wire
  std::string persona_id;
  std::string stage;  // "ideology" or "vote"

  void validate() const {
    if (user_text.empty()) throw std::invalid_argument("user_text must be non-empty");
    if (!(temperature >= 0 && temperature <= 2))
      throw std::invalid_argument("temperature must lie in [0,2]");
    if (max_tokens < 1) throw std::invalid_argument("max_tokens must be positive");
  }
};

struct TokenUsage {
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  TokenUsage usage;
  Millis latency{0};
  int attempt_count = 1;
};

struct BackendPolicy {
  int max_concurrency = 4;
  int requests_per_minute = 60;
  int max_retries = 3;
  Millis backoff_base{250};
  Millis backoff_cap{15000};
  Millis timeout{60000};

  Millis backoff_for(int attempt) const {
    Millis b = backoff_base;
    for (int i = 0; i < attempt && b < backoff_cap; ++i) b *= 2;
    return std::min(b, backoff_cap);
  }
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

struct MockRuleset {
  enum class Kind { Scripted, Threshold, Probabilistic };
  Kind kind = Kind::Threshold;

  // Scripted: persona id -> per-call responses (last entry repeats)
  std::map<std::string, std::vector<std::string>> script;

  // Threshold: "Republican" iff ideology scale >= cutoff
  int cutoff = 5;

  // Probabilistic: P(Republican) = logistic(beta * scale + intercept)
  double beta = 1.5;
  double intercept = -6.0;
};

namespace detail {

// Deterministic ideology scale: the persona's injected ideology when it has
// one, otherwise a stable function of the demographic fields.
inline int effective_scale(const Persona& p, std::uint64_t seed) {
  if (p.ideology) {
    auto s = ideology_to_scale(*p.ideology);
    if (s) return *s;
  }
  const std::string key = p.gender + "|" + p.ethnicity + "|" + p.marital_status + "|" +
                          p.education_level + "|" + p.occupation + "|" +
                          std::to_string(p.age) + "|" + p.residence_state;
  return 1 + static_cast<int>(rng::derive_seed(seed, key) % 7);
}

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace detail

// Pure function of (persona, stage, ruleset, seed); call_index only advances
// scripted sequences.
inline std::string mock_policy_respond(const Persona& persona, const std::string& stage,
                                       const MockRuleset& ruleset, std::uint64_t seed,
                                       std::size_t call_index = 0) {
  switch (ruleset.kind) {
    case MockRuleset::Kind::Scripted: {
      auto it = ruleset.script.find(persona.id);
      if (it == ruleset.script.end() || it->second.empty())
        throw UnknownPersona("no scripted response for persona " + persona.id);
      const auto& seq = it->second;
      return seq[std::min(call_index, seq.size() - 1)];
    }
    case MockRuleset::Kind::Threshold: {
      const int scale = detail::effective_scale(persona, seed);
      if (stage == "ideology") return ideology_text(ideology_from_scale(scale));
      return scale >= ruleset.cutoff ? "Republican" : "Democratic";
    }
    case MockRuleset::Kind::Probabilistic: {
      const int scale = detail::effective_scale(persona, seed);
      if (stage == "ideology") return ideology_text(ideology_from_scale(scale));
      const double p = detail::logistic(ruleset.beta * scale + ruleset.intercept);
      auto eng = rng::make_engine(rng::derive_seed(seed, persona.id + "/vote"));
      return rng::uniform_open(eng) < p ? "Republican" : "Democratic";
    }
  }
  throw std::logic_error("unreachable mock ruleset kind");
}

class MockBackend final : public ChatBackend {
 public:
  MockBackend(MockRuleset ruleset, std::uint64_t seed)
      : ruleset_(std::move(ruleset)), seed_(seed) {}

  void register_personas(const std::vector<Persona>& personas) {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& p : personas) personas_[p.id] = p;
  }

  ChatResponse complete(const ChatRequest& req) override {
    req.validate();
    Persona persona;
    std::size_t call_index = 0;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = personas_.find(req.persona_id);
      if (it == personas_.end())
        throw UnknownPersona("persona not registered with mock backend: " + req.persona_id);
      persona = it->second;
      call_index = call_counts_[req.persona_id + "/" + req.stage]++;
    }
    ChatResponse resp;
    resp.text = mock_policy_respond(persona, req.stage, ruleset_, seed_, call_index);
    return resp;
  }

 private:
  MockRuleset ruleset_;
  std::uint64_t seed_;
  std::mutex mu_;
  std::map<std::string, Persona> personas_;
  std::map<std::string, std::size_t> call_counts_;
};

}  // namespace electosim::backend
