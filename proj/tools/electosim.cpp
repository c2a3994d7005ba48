// electosim: batch election-simulation CLI.
//
// Subcommands: generate, simulate, evaluate, summarize-context.
// Exit codes: 0 success, 1 runtime failure, 2 config/validation failure.

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "electosim/cli.hpp"
#include "electosim/config.hpp"
#include "electosim/version.hpp"

namespace {

using electosim::config::ConfigError;
using json = nlohmann::json;

struct CommonArgs {
  std::string config_path;
  std::string states;   // comma-separated override
  std::string version;  // v1|v2|v3 override
  std::string backend;  // http|mock override
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration file (JSON or YAML)")
      ->required();
  cmd->add_option("--states", args.states,
                  "comma-separated state codes; restricts the configured list");
  cmd->add_option("--version", args.version, "pipeline version override")
      ->check(CLI::IsMember({"v1", "v2", "v3"}));
  cmd->add_option("--backend", args.backend, "backend override")
      ->check(CLI::IsMember({"http", "mock"}));
  cmd->add_option("--seed", args.seed, "master seed override")
      ->each([&args](const std::string&) { args.seed_set = true; });
}

std::vector<std::string> split_codes(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Overrides are applied to the raw document before parsing so the recorded
// config hash reflects the run as executed.
electosim::config::RunConfig load_config(const CommonArgs& args) {
  json j = electosim::config::load_structured(args.config_path);
  if (args.seed_set) j["seed"] = args.seed;
  if (!args.version.empty()) j["pipeline_version"] = args.version;
  if (!args.backend.empty()) j["backend"]["type"] = args.backend;
  if (!args.states.empty()) {
    const auto wanted = split_codes(args.states);
    json kept = json::array();
    for (const auto& sj : j.at("states"))
      for (const auto& code : wanted)
        if (sj.at("code").get<std::string>() == code) kept.push_back(sj);
    if (kept.empty()) throw ConfigError("--states matches none of the configured states");
    j["states"] = kept;
  }
  const auto base = std::filesystem::path(args.config_path).parent_path().string();
  auto cfg = electosim::config::parse_run_config(j, base);
  std::filesystem::create_directories(cfg.output_dir);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"electosim: batch LLM election-simulation engine"};
  app.set_version_flag("-V", electosim::kEngineVersion);
  app.require_subcommand(1);

  CommonArgs gen_args, sim_args, eval_args, sum_args;
  bool resume = false;
  std::string actuals_file, sum_input, sum_output;

  auto* gen = app.add_subcommand("generate", "synthesize per-state persona files");
  add_common(gen, gen_args);

  auto* sim = app.add_subcommand("simulate", "run the voting pipeline over sampled personas");
  add_common(sim, sim_args);
  sim->add_flag("--resume", resume, "reuse checkpointed records instead of re-querying");

  auto* ev = app.add_subcommand("evaluate", "compute metrics and reports from a simulation");
  add_common(ev, eval_args);
  ev->add_option("--actuals", actuals_file,
                 "actual-results CSV overriding the configured shares");

  auto* sum = app.add_subcommand("summarize-context",
                                 "produce a neutral summary of raw context notes");
  add_common(sum, sum_args);
  sum->add_option("--input", sum_input, "raw context text file")->required();
  sum->add_option("--output", sum_output, "summary output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return electosim::cli::cmd_generate(load_config(gen_args), std::cout);
    if (sim->parsed())
      return electosim::cli::cmd_simulate(load_config(sim_args), resume, std::cout);
    if (ev->parsed())
      return electosim::cli::cmd_evaluate(load_config(eval_args), actuals_file, std::cout);
    if (sum->parsed())
      return electosim::cli::cmd_summarize_context(load_config(sum_args), sum_input,
                                                   sum_output, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
