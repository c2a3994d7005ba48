#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "electosim/backend.hpp"
#include "electosim/domain.hpp"
#include "electosim/pipeline.hpp"
#include "electosim/rng.hpp"
#include "electosim/sampling.hpp"

namespace electosim::config {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// YAML / JSON loading
// ---------------------------------------------------------------------------

inline json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
      return nullptr;
    case YAML::NodeType::Scalar: {
      const std::string& s = node.Scalar();
      // respect explicit quoting; otherwise try bool/number
      if (node.Tag() != "?") return s;
      if (s == "true") return true;
      if (s == "false") return false;
      if (s == "null" || s == "~") return nullptr;
      try {
        std::size_t pos = 0;
        if (s.find_first_of(".eE") == std::string::npos) {
          const long long v = std::stoll(s, &pos);
          if (pos == s.size()) return v;
        } else {
          const double v = std::stod(s, &pos);
          if (pos == s.size()) return v;
        }
      } catch (const std::exception&) {
      }
      return s;
    }
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
    default:
      return nullptr;
  }
}

// Loads a structured file as JSON; .yaml/.yml go through the YAML parser.
inline json load_structured(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  const std::filesystem::path p(path);
  const auto ext = p.extension().string();
  if (ext == ".yaml" || ext == ".yml") {
    try {
      return yaml_to_json(YAML::Load(in));
    } catch (const YAML::Exception& e) {
      throw ConfigError(path + ": YAML parse error: " + e.what());
    }
  }
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": JSON parse error: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct BackendConfig {
  std::string type = "mock";  // "mock" or "http"
  std::string model_id = "mock";
  double temperature = 0.0;
  int max_tokens = 256;
  backend::BackendPolicy policy;
  backend::MockRuleset mock_rules;
};

struct PersonaSource {
  std::string kind;  // "file" or "synthpop"
  std::string file;  // persona CSV (kind == file)
  std::string blocks_file;
  std::string marginals_file;
  std::string copula_file;
};

struct RunConfig {
  int election_year = 2020;
  pipeline::Version version = pipeline::Version::V3;
  std::vector<StateInfo> states;
  PersonaSource persona_source;
  sampling::SamplingPlan plan;
  BackendConfig backend;
  std::string context_file;
  std::string reference_gaps_file;  // optional, for demographic analysis
  std::string output_dir = "out";
  std::uint64_t master_seed = 0;
  int reask_limit = 1;
  int workers = 4;

  json raw;  // the parsed config document, for hashing and round-trips
};

inline std::string config_hash(const json& raw) {
  std::uint64_t h = rng::hash_string(raw.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is empty");
  if (!std::filesystem::exists(path))
    throw ConfigError(what + " does not exist: " + path);
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j, const std::string& base_dir = "") {
  RunConfig cfg;
  cfg.raw = j;
  auto resolve = [&](const std::string& p) -> std::string {
    if (p.empty() || base_dir.empty()) return p;
    std::filesystem::path fp(p);
    return fp.is_absolute() ? p : (std::filesystem::path(base_dir) / fp).string();
  };
  try {
    cfg.election_year = j.at("election_year").get<int>();
    cfg.version = pipeline::version_from_text(j.at("pipeline_version").get<std::string>());
    cfg.states = j.at("states").get<std::vector<StateInfo>>();
    cfg.master_seed = j.at("seed").get<std::uint64_t>();
    cfg.output_dir = resolve(j.at("output_dir").get<std::string>());
    cfg.context_file = resolve(j.at("context_file").get<std::string>());
    if (j.contains("reference_gaps_file"))
      cfg.reference_gaps_file = resolve(j["reference_gaps_file"].get<std::string>());
    cfg.reask_limit = j.value("reask_limit", 1);
    cfg.workers = j.value("workers", 4);

    const auto& src = j.at("persona_source");
    cfg.persona_source.kind = src.at("kind").get<std::string>();
    if (cfg.persona_source.kind == "file") {
      cfg.persona_source.file = resolve(src.at("path").get<std::string>());
    } else if (cfg.persona_source.kind == "synthpop") {
      cfg.persona_source.blocks_file = resolve(src.at("blocks").get<std::string>());
      cfg.persona_source.marginals_file = resolve(src.at("marginals").get<std::string>());
      cfg.persona_source.copula_file = resolve(src.at("copula").get<std::string>());
    } else {
      throw ConfigError("persona_source.kind must be 'file' or 'synthpop'");
    }

    if (j.contains("sampling")) {
      const auto& s = j["sampling"];
      cfg.plan.default_ratio = s.value("default_ratio", cfg.plan.default_ratio);
      cfg.plan.min_sample = s.value("min_sample", cfg.plan.min_sample);
      cfg.plan.confidence = s.value("confidence", cfg.plan.confidence);
      cfg.plan.margin_of_error = s.value("margin_of_error", cfg.plan.margin_of_error);
      if (s.contains("per_state_ratio"))
        cfg.plan.per_state_ratio = s["per_state_ratio"].get<std::map<std::string, double>>();
    }

    if (j.contains("backend")) {
      const auto& b = j["backend"];
      cfg.backend.type = b.value("type", cfg.backend.type);
      cfg.backend.model_id = b.value("model_id", cfg.backend.model_id);
      cfg.backend.temperature = b.value("temperature", 0.0);
      cfg.backend.max_tokens = b.value("max_tokens", 256);
      if (b.contains("policy")) {
        const auto& p = b["policy"];
        cfg.backend.policy.max_concurrency = p.value("max_concurrency", 4);
        cfg.backend.policy.requests_per_minute = p.value("requests_per_minute", 60);
        cfg.backend.policy.max_retries = p.value("max_retries", 3);
        cfg.backend.policy.backoff_base =
            backend::Millis{p.value("backoff_base_ms", 250)};
        cfg.backend.policy.timeout = backend::Millis{p.value("timeout_ms", 60000)};
      }
      if (b.contains("mock")) {
        const auto& m = b["mock"];
        const std::string ruleset = m.value("ruleset", "threshold");
        if (ruleset == "threshold")
          cfg.backend.mock_rules.kind = backend::MockRuleset::Kind::Threshold;
        else if (ruleset == "probabilistic")
          cfg.backend.mock_rules.kind = backend::MockRuleset::Kind::Probabilistic;
        else if (ruleset == "scripted")
          cfg.backend.mock_rules.kind = backend::MockRuleset::Kind::Scripted;
        else
          throw ConfigError("unknown mock ruleset: " + ruleset);
        cfg.backend.mock_rules.cutoff = m.value("cutoff", 5);
        cfg.backend.mock_rules.beta = m.value("beta", 1.5);
        cfg.backend.mock_rules.intercept = m.value("intercept", -6.0);
        if (m.contains("script_file")) {
          const std::string sf = resolve(m["script_file"].get<std::string>());
          detail::require_file(sf, "mock script file");
          for (const auto& [id, seq] : load_structured(sf).items())
            cfg.backend.mock_rules.script[id] = seq.get<std::vector<std::string>>();
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid run config: ") + e.what());
  }

  if (cfg.states.empty()) throw ConfigError("config lists no states");
  for (const auto& s : cfg.states) {
    if (!state_codes().count(s.code)) throw ConfigError("unknown state code: " + s.code);
    if (s.electoral_votes < 3)
      throw ConfigError("electoral_votes must be >= 3 for " + s.code);
  }
  detail::require_file(cfg.context_file, "context file");
  if (cfg.persona_source.kind == "file")
    detail::require_file(cfg.persona_source.file, "persona file");
  else {
    detail::require_file(cfg.persona_source.blocks_file, "blocks file");
    detail::require_file(cfg.persona_source.marginals_file, "marginals file");
    detail::require_file(cfg.persona_source.copula_file, "copula file");
  }
  cfg.plan.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  const json j = load_structured(path);
  return parse_run_config(j, std::filesystem::path(path).parent_path().string());
}

inline ElectionContext load_context(const std::string& path) {
  ElectionContext ctx = load_structured(path).get<ElectionContext>();
  auto violations = ctx.validate();
  if (!violations.empty()) {
    std::string msg = "invalid election context (" + path + "):";
    for (const auto& v : violations) msg += " " + v + ";";
    throw ConfigError(msg);
  }
  return ctx;
}

}  // namespace electosim::config
