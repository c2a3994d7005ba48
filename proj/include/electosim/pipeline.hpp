#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "electosim/backend.hpp"
#include "electosim/domain.hpp"

namespace electosim::pipeline {

using json = nlohmann::json;

struct MissingField : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingContext : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingIdeology : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Version { V1, V2, V3 };

inline const char* version_text(Version v) {
  switch (v) {
    case Version::V1: return "V1";
    case Version::V2: return "V2";
    case Version::V3: return "V3";
  }
  return "";
}

inline Version version_from_text(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  if (s == "v1") return Version::V1;
  if (s == "v2") return Version::V2;
  if (s == "v3") return Version::V3;
  throw std::invalid_argument("unknown pipeline version: " + s);
}

// ---------------------------------------------------------------------------
// Prompt rendering
// ---------------------------------------------------------------------------

namespace detail {

// The 11 demographic fields as a comma-separated clause, in the listed
// order: age, gender, ethnicity, marital status, household size, presence of
// children, education level, occupation, individual income, family income,
// place of residence.
inline std::string persona_clause(const Persona& p) {
  if (!validate_persona(p).empty())
    throw MissingField("persona " + p.id + " fails validation");
  std::string s;
  s += "age " + std::to_string(p.age);
  s += ", gender " + p.gender;
  s += ", ethnicity " + p.ethnicity;
  s += ", marital status " + p.marital_status;
  s += ", household size " + std::to_string(p.household_size);
  s += p.has_children ? ", with children" : ", without children";
  s += ", education level " + p.education_level;
  s += ", occupation " + p.occupation;
  s += ", individual income " + p.individual_income;
  s += ", family income " + p.family_income;
  s += ", place of residence " + p.residence_state;
  return s;
}

inline std::string year_sentence(const ElectionContext& ctx) {
  return "The current year is " + std::to_string(ctx.year) + ".";
}

inline std::string voting_question(const ElectionContext& ctx) {
  return "Please answer the following question as if you were the resident:\n"
         "1. As of today, will you vote for the Democratic Party (" +
         ctx.democratic_candidate + "), the Republican Party (" + ctx.republican_candidate +
         "), or do you have no preference?\n"
         "Options: Democratic, Republican, No Preference";
}

}  // namespace detail

inline const std::array<const char*, 8> kIdeologyOptions = {
    "No answer",           "Very liberal",
    "Somewhat liberal",    "Closer to liberal",
    "Moderate",            "Closer to conservative",
    "Somewhat conservative", "Very conservative"};

inline std::string render_v1(const Persona& p, const ElectionContext& ctx) {
  return "Task: You are persona [" + detail::persona_clause(p) + "] " +
         detail::year_sentence(ctx) + "\n" + detail::voting_question(ctx);
}

// V1 with the agenda and bio blocks inserted after the year sentence, in
// that order; stripping the inserted blocks recovers the V1 prompt exactly.
inline std::string render_v2(const Persona& p, const ElectionContext& ctx) {
  if (ctx.party_agendas.empty() || ctx.candidate_bios.empty())
    throw MissingContext("V2 requires non-empty party agendas and candidate bios");
  return "Task: You are persona [" + detail::persona_clause(p) + "] " +
         detail::year_sentence(ctx) + " " + ctx.party_agendas + " " + ctx.candidate_bios +
         "\n" + detail::voting_question(ctx);
}

inline std::string render_v3_step1(const Persona& p, const ElectionContext& ctx) {
  if (ctx.party_agendas.empty())
    throw MissingContext("V3 step 1 requires non-empty party agendas");
  std::string s = "Task: You are a persona with [" + detail::persona_clause(p) + "]. " +
                  detail::year_sentence(ctx) + " " + ctx.party_agendas + "\n" +
                  "When it comes to politics, would you describe yourself as:";
  for (const char* opt : kIdeologyOptions) s += std::string("\n") + opt;
  return s;
}

inline std::string render_v3_step2(const Persona& p, Ideology ideology,
                                   const ElectionContext& ctx) {
  if (ctx.party_agendas.empty() || ctx.candidate_bios.empty())
    throw MissingContext("V3 step 2 requires non-empty party agendas and candidate bios");
  return "Task: You are a persona with [" + detail::persona_clause(p) +
         "]. Your conservative-liberal spectrum: " + ideology_text(ideology) + ". " +
         detail::year_sentence(ctx) + " " + ctx.party_agendas + " " + ctx.candidate_bios +
         "\n" + detail::voting_question(ctx);
}

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

inline std::string surname(const std::string& full_name) {
  const auto pos = full_name.find_last_of(' ');
  return pos == std::string::npos ? full_name : full_name.substr(pos + 1);
}

}  // namespace detail

// Case-insensitive match tiers: exact option words, candidate surnames, then
// party adjectives / no-preference synonyms. Conflicting matches within the
// deciding tier yield Unparseable (nullopt).
inline std::optional<Vote> parse_vote(const std::string& raw, const ElectionContext& ctx) {
  const std::string text = detail::lower(raw);

  auto decide = [](bool dem, bool rep, bool none) -> std::optional<std::optional<Vote>> {
    const int hits = int(dem) + int(rep) + int(none);
    if (hits == 0) return std::nullopt;  // tier had no match, fall through
    if (hits > 1)  // conflict within the deciding tier: engaged outer, empty inner
      return std::make_optional<std::optional<Vote>>(std::nullopt);
    if (dem) return std::make_optional<std::optional<Vote>>(Vote::Democratic);
    if (rep) return std::make_optional<std::optional<Vote>>(Vote::Republican);
    return std::make_optional<std::optional<Vote>>(Vote::NoPreference);
  };

  // tier 1: exact option words
  if (auto d = decide(detail::contains(text, "democratic"),
                      detail::contains(text, "republican"),
                      detail::contains(text, "no preference")))
    return *d;

  // tier 2: candidate surnames
  if (auto d = decide(detail::contains(text, detail::lower(detail::surname(ctx.democratic_candidate))),
                      detail::contains(text, detail::lower(detail::surname(ctx.republican_candidate))),
                      false))
    return *d;

  // tier 3: party adjectives and no-preference synonyms
  if (auto d = decide(detail::contains(text, "democrat"),
                      detail::contains(text, "gop"),
                      detail::contains(text, "neither") || detail::contains(text, "undecided")))
    return *d;

  return std::nullopt;  // Unparseable
}

// Longest-match-first over the 8 option strings, case-insensitive.
inline std::optional<Ideology> parse_ideology(const std::string& raw) {
  const std::string text = detail::lower(raw);
  std::vector<Ideology> labels(kAllIdeologies.begin(), kAllIdeologies.end());
  std::stable_sort(labels.begin(), labels.end(), [](Ideology a, Ideology b) {
    return std::string(ideology_text(a)).size() > std::string(ideology_text(b)).size();
  });
  std::optional<Ideology> best;
  std::size_t best_len = 0, best_pos = std::string::npos;
  for (Ideology l : labels) {
    const std::string needle = detail::lower(ideology_text(l));
    const auto pos = text.find(needle);
    if (pos == std::string::npos) continue;
    if (needle.size() > best_len || (needle.size() == best_len && pos < best_pos)) {
      best = l;
      best_len = needle.size();
      best_pos = pos;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

struct SimulationRecord {
  std::string persona_id;
  Version version = Version::V1;
  std::optional<std::string> step1_prompt;
  std::optional<std::string> step1_raw;
  std::optional<Ideology> inferred_ideology;
  std::string step2_prompt;
  std::string step2_raw;
  std::optional<Vote> vote;  // nullopt = Unparseable
  int step1_attempts = 0;
  int step2_attempts = 0;
  long long timestamp_ms = 0;
};

inline void to_json(json& j, const SimulationRecord& r) {
  j = json{{"persona_id", r.persona_id},
           {"pipeline_version", version_text(r.version)},
           {"step2_prompt", r.step2_prompt},
           {"step2_raw", r.step2_raw},
           {"vote", r.vote ? vote_text(*r.vote) : "Unparseable"},
           {"step1_attempts", r.step1_attempts},
           {"step2_attempts", r.step2_attempts},
           {"timestamp_ms", r.timestamp_ms}};
  if (r.step1_prompt) j["step1_prompt"] = *r.step1_prompt;
  if (r.step1_raw) j["step1_raw"] = *r.step1_raw;
  if (r.inferred_ideology) j["inferred_ideology"] = ideology_text(*r.inferred_ideology);
}

inline void from_json(const json& j, SimulationRecord& r) {
  j.at("persona_id").get_to(r.persona_id);
  r.version = version_from_text(j.at("pipeline_version").get<std::string>());
  j.at("step2_prompt").get_to(r.step2_prompt);
  j.at("step2_raw").get_to(r.step2_raw);
  r.vote = vote_from_text(j.at("vote").get<std::string>());
  r.step1_attempts = j.value("step1_attempts", 0);
  r.step2_attempts = j.value("step2_attempts", 0);
  r.timestamp_ms = j.value("timestamp_ms", 0LL);
  if (j.contains("step1_prompt")) r.step1_prompt = j["step1_prompt"].get<std::string>();
  if (j.contains("step1_raw")) r.step1_raw = j["step1_raw"].get<std::string>();
  if (j.contains("inferred_ideology"))
    r.inferred_ideology = ideology_from_text(j["inferred_ideology"].get<std::string>());
}

inline constexpr const char* kReaskSentence =
    "Please answer with exactly one of the listed options.";

struct RunOptions {
  std::string model_id = "mock";
  double temperature = 0.0;
  int max_tokens = 256;
  int reask_limit = 1;
  int workers = 4;
  std::string checkpoint_path;  // empty = no checkpointing
  bool record_timestamps = true;
};

namespace detail {

inline long long now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct AskResult {
  std::string raw;
  int attempts = 0;
};

template <typename ParseFn>
AskResult ask_with_reask(backend::ChatBackend& be, backend::ChatRequest req,
                         const RunOptions& opts, ParseFn&& parse_ok) {
  AskResult out;
  const std::string base = req.user_text;
  for (int attempt = 0; attempt <= opts.reask_limit; ++attempt) {
    req.user_text = attempt == 0 ? base : base + "\n" + kReaskSentence;
    try {
      out.raw = be.complete(req).text;
    } catch (const backend::AuthError&) {
      throw;
    } catch (const backend::Exhausted&) {
      out.raw.clear();
    } catch (const backend::MalformedResponse&) {
      out.raw.clear();
    }
    ++out.attempts;
    if (parse_ok(out.raw)) return out;
  }
  return out;
}

}  // namespace detail

inline SimulationRecord simulate_persona(const Persona& p, Version version,
                                         const ElectionContext& ctx,
                                         backend::ChatBackend& be, const RunOptions& opts) {
  SimulationRecord rec;
  rec.persona_id = p.id;
  rec.version = version;

  backend::ChatRequest req;
  req.model_id = opts.model_id;
  req.temperature = opts.temperature;
  req.max_tokens = opts.max_tokens;
  req.persona_id = p.id;

  if (version == Version::V3) {
    rec.step1_prompt = render_v3_step1(p, ctx);
    req.stage = "ideology";
    req.user_text = *rec.step1_prompt;
    auto step1 = detail::ask_with_reask(be, req, opts, [&](const std::string& raw) {
      return parse_ideology(raw).has_value();
    });
    rec.step1_raw = step1.raw;
    rec.step1_attempts = step1.attempts;
    rec.inferred_ideology = parse_ideology(step1.raw);
    // an unparseable ideology still proceeds to step 2 in the NoAnswer slot
    rec.step2_prompt =
        render_v3_step2(p, rec.inferred_ideology.value_or(Ideology::NoAnswer), ctx);
  } else if (version == Version::V2) {
    rec.step2_prompt = render_v2(p, ctx);
  } else {
    rec.step2_prompt = render_v1(p, ctx);
  }

  req.stage = "vote";
  req.user_text = rec.step2_prompt;
  auto step2 = detail::ask_with_reask(be, req, opts, [&](const std::string& raw) {
    return parse_vote(raw, ctx).has_value();
  });
  rec.step2_raw = step2.raw;
  rec.step2_attempts = step2.attempts;
  rec.vote = parse_vote(step2.raw, ctx);
  if (opts.record_timestamps) rec.timestamp_ms = detail::now_ms();
  return rec;
}

// Loads prior records for this version from a JSONL checkpoint, keyed by
// persona id. Malformed trailing lines (torn writes) are skipped.
inline std::map<std::string, SimulationRecord> load_checkpoint(const std::string& path,
                                                               Version version) {
  std::map<std::string, SimulationRecord> done;
  std::ifstream in(path);
  if (!in) return done;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      SimulationRecord rec = json::parse(line).get<SimulationRecord>();
      if (rec.version == version) done[rec.persona_id] = std::move(rec);
    } catch (const json::exception&) {
      continue;
    }
  }
  return done;
}

// Runs every persona through the pipeline with a bounded worker pool.
// Output order matches input order; completed personas found in the
// checkpoint are not re-queried.
inline std::vector<SimulationRecord> run_pipeline(const std::vector<Persona>& personas,
                                                  Version version,
                                                  const ElectionContext& ctx,
                                                  backend::ChatBackend& be,
                                                  const RunOptions& opts) {
  std::map<std::string, SimulationRecord> done;
  std::ofstream checkpoint;
  std::mutex checkpoint_mu;
  if (!opts.checkpoint_path.empty()) {
    done = load_checkpoint(opts.checkpoint_path, version);
    checkpoint.open(opts.checkpoint_path, std::ios::app);
    if (!checkpoint)
      throw std::runtime_error("cannot open checkpoint file: " + opts.checkpoint_path);
  }

  std::vector<SimulationRecord> records(personas.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= personas.size()) return;
      {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (failure) return;
      }
      const Persona& p = personas[i];
      auto it = done.find(p.id);
      if (it != done.end()) {
        records[i] = it->second;
        continue;
      }
      try {
        records[i] = simulate_persona(p, version, ctx, be, opts);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
      if (checkpoint.is_open()) {
        std::lock_guard<std::mutex> lock(checkpoint_mu);
        checkpoint << json(records[i]).dump() << '\n';
        checkpoint.flush();
        if (!checkpoint) {
          std::lock_guard<std::mutex> flock(failure_mu);
          if (!failure)
            failure = std::make_exception_ptr(std::runtime_error(
                "checkpoint write failed: " + opts.checkpoint_path));
          return;
        }
      }
    }
  };

  const int n_workers = std::max(1, std::min<int>(opts.workers,
                                                  static_cast<int>(personas.size())));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(n_workers));
  for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return records;
}

}  // namespace electosim::pipeline
