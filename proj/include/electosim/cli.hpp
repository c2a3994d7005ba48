#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "electosim/analysis.hpp"
#include "electosim/backend.hpp"
#include "electosim/backend_http.hpp"
#include "electosim/config.hpp"
#include "electosim/csv.hpp"
#include "electosim/domain.hpp"
#include "electosim/metrics.hpp"
#include "electosim/pipeline.hpp"
#include "electosim/sampling.hpp"
#include "electosim/synthpop.hpp"
#include "electosim/version.hpp"

namespace electosim::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Provenance stamped into every artifact.
struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string engine_version = kEngineVersion;

  static Provenance of(const config::RunConfig& cfg) {
    return {config::config_hash(cfg.raw), cfg.master_seed, kEngineVersion};
  }

  json to_json() const {
    return {{"config_hash", config_hash},
            {"seed", seed},
            {"engine_version", engine_version}};
  }

  std::vector<std::string> csv_comments() const {
    return {"# config_hash=" + config_hash, "# seed=" + std::to_string(seed),
            "# engine_version=" + engine_version};
  }
};

namespace detail {

inline void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline std::string fmt_share(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline std::map<std::string, std::vector<Persona>> group_by_state(
    std::vector<Persona> personas) {
  std::map<std::string, std::vector<Persona>> by_state;
  for (auto& p : personas) by_state[p.residence_state].push_back(std::move(p));
  return by_state;
}

inline fs::path persona_file(const config::RunConfig& cfg, const std::string& state) {
  return fs::path(cfg.output_dir) / "personas" / (state + ".csv");
}

inline fs::path checkpoint_file(const config::RunConfig& cfg, const std::string& state) {
  return fs::path(cfg.output_dir) / "checkpoints" /
         (state + "_" + pipeline::version_text(cfg.version) + ".jsonl");
}

// Personas for the configured states: the generated per-state files for
// synthpop sources, otherwise the single persona CSV split by state.
inline std::map<std::string, std::vector<Persona>> load_state_personas(
    const config::RunConfig& cfg) {
  std::map<std::string, std::vector<Persona>> by_state;
  if (cfg.persona_source.kind == "synthpop") {
    for (const auto& s : cfg.states) {
      const fs::path f = persona_file(cfg, s.code);
      if (!fs::exists(f))
        throw std::runtime_error("persona file missing (run `generate` first): " +
                                 f.string());
      by_state[s.code] = personas_from_csv(csv::read_file(f.string()));
    }
  } else {
    auto all = group_by_state(personas_from_csv(csv::read_file(cfg.persona_source.file)));
    for (const auto& s : cfg.states) {
      auto it = all.find(s.code);
      if (it == all.end() || it->second.empty())
        throw std::runtime_error("persona file has no personas for state " + s.code);
      by_state[s.code] = std::move(it->second);
    }
  }
  return by_state;
}

inline backend::SystemClock& system_clock() {
  static backend::SystemClock clock;
  return clock;
}

inline std::unique_ptr<backend::ChatBackend> make_backend(const config::RunConfig& cfg) {
  if (cfg.backend.type == "mock")
    return std::make_unique<backend::MockBackend>(
        cfg.backend.mock_rules, rng::derive_seed(cfg.master_seed, "mock"));
  if (cfg.backend.type == "http")
    return backend::HttpBackend::from_environment(cfg.backend.policy, system_clock());
  throw config::ConfigError("unknown backend type: " + cfg.backend.type);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// generate: synthpop blocks -> per-state persona CSVs + manifest
// ---------------------------------------------------------------------------

inline int cmd_generate(const config::RunConfig& cfg, std::ostream& log) {
  if (cfg.persona_source.kind != "synthpop")
    throw config::ConfigError("generate requires persona_source.kind == 'synthpop'");

  const auto marginals =
      synthpop::marginals_from_json(config::load_structured(cfg.persona_source.marginals_file));
  const auto blocks =
      synthpop::blocks_from_json(config::load_structured(cfg.persona_source.blocks_file));
  const auto copula =
      synthpop::copula_from_json(config::load_structured(cfg.persona_source.copula_file));

  std::set<std::string> wanted;
  for (const auto& s : cfg.states) wanted.insert(s.code);

  const Provenance prov = Provenance::of(cfg);
  std::map<std::string, std::vector<Persona>> by_state;
  json block_reports = json::array();
  for (const auto& block : blocks) {
    if (!wanted.count(block.state)) continue;
    const std::uint64_t seed = rng::derive_seed(cfg.master_seed, "synthpop/" + block.block_id);
    auto result = synthpop::generate_block(block, marginals, copula, seed);
    json rep = {{"block_id", block.block_id},
                {"state", block.state},
                {"population", block.population},
                {"seed", seed},
                {"scale_iterations", result.scale_report.iterations},
                {"scale_rows_changed", result.scale_report.rows_changed},
                {"scale_converged", result.scale_report.converged},
                {"achieved_discrepancy", result.scale_report.achieved_discrepancy}};
    block_reports.push_back(std::move(rep));
    auto& bucket = by_state[block.state];
    bucket.insert(bucket.end(), std::make_move_iterator(result.personas.begin()),
                  std::make_move_iterator(result.personas.end()));
  }
  for (const auto& s : cfg.states)
    if (!by_state.count(s.code))
      throw config::ConfigError("no blocks produce personas for state " + s.code);

  fs::create_directories(fs::path(cfg.output_dir) / "personas");
  json counts = json::object();
  for (const auto& [state, personas] : by_state) {
    csv::write_file(detail::persona_file(cfg, state).string(),
                    personas_to_csv(personas, prov.csv_comments()));
    counts[state] = personas.size();
    log << "generate: " << state << " -> " << personas.size() << " personas\n";
  }

  json manifest = {{"provenance", prov.to_json()},
                   {"election_year", cfg.election_year},
                   {"persona_counts", counts},
                   {"blocks", block_reports}};
  detail::write_json_file(fs::path(cfg.output_dir) / "generation_manifest.json", manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate: sample -> pipeline -> records JSONL + state results table
// ---------------------------------------------------------------------------

inline int cmd_simulate(const config::RunConfig& cfg, bool resume, std::ostream& log) {
  const ElectionContext ctx = config::load_context(cfg.context_file);
  if (ctx.year != cfg.election_year)
    throw config::ConfigError("context year " + std::to_string(ctx.year) +
                              " does not match config election_year");
  if (cfg.version != pipeline::Version::V1 &&
      (ctx.party_agendas.empty() || ctx.candidate_bios.empty()))
    throw config::ConfigError("V2/V3 require party_agendas and candidate_bios in the context");

  auto by_state = detail::load_state_personas(cfg);
  auto be = detail::make_backend(cfg);
  const Provenance prov = Provenance::of(cfg);
  fs::create_directories(fs::path(cfg.output_dir) / "checkpoints");

  pipeline::RunOptions opts;
  opts.model_id = cfg.backend.model_id;
  opts.temperature = cfg.backend.temperature;
  opts.max_tokens = cfg.backend.max_tokens;
  opts.reask_limit = cfg.reask_limit;
  opts.workers = cfg.workers;

  csv::Table results;
  results.comments = prov.csv_comments();
  results.header = {"state",        "electoral_votes",  "category",
                    "dem",          "rep",              "no_preference",
                    "unparseable",  "predicted_share",  "actual_republican_share"};

  std::ofstream records_out(fs::path(cfg.output_dir) / "records.jsonl");
  if (!records_out) throw std::runtime_error("cannot write records.jsonl");

  json state_manifest = json::array();
  for (const auto& s : cfg.states) {
    const auto& pool = by_state.at(s.code);
    auto sample = sampling::sample_state(pool, cfg.plan,
                                         rng::derive_seed(cfg.master_seed, "sample/" + s.code));
    if (auto* mock = dynamic_cast<backend::MockBackend*>(be.get()))
      mock->register_personas(sample.personas);

    const fs::path checkpoint = detail::checkpoint_file(cfg, s.code);
    if (!resume) fs::remove(checkpoint);
    opts.checkpoint_path = checkpoint.string();

    log << "simulate: " << s.code << " (" << sample.personas.size() << " of "
        << pool.size() << " personas, " << pipeline::version_text(cfg.version) << ")\n";
    auto records = pipeline::run_pipeline(sample.personas, cfg.version, ctx, *be, opts);

    metrics::StateResult sr;
    sr.state = s;
    for (const auto& r : records) {
      if (!r.vote) ++sr.unparseable;
      else if (*r.vote == Vote::Democratic) ++sr.dem_votes;
      else if (*r.vote == Vote::Republican) ++sr.rep_votes;
      else ++sr.no_pref;
      json rj = json(r);
      rj["state"] = s.code;
      records_out << rj.dump() << '\n';
    }
    auto share = sr.predicted_share();
    results.rows.push_back(
        {s.code, std::to_string(s.electoral_votes), category_text(s.category),
         std::to_string(sr.dem_votes), std::to_string(sr.rep_votes),
         std::to_string(sr.no_pref), std::to_string(sr.unparseable),
         share ? detail::fmt_share(*share) : "",
         s.actual_republican_share ? detail::fmt_share(*s.actual_republican_share) : ""});
    state_manifest.push_back({{"state", s.code},
                              {"population", pool.size()},
                              {"sampled", sample.personas.size()},
                              {"capped", sample.capped}});
  }
  records_out.close();
  csv::write_file((fs::path(cfg.output_dir) / "state_results.csv").string(), results);

  json manifest = {{"provenance", prov.to_json()},
                   {"pipeline_version", pipeline::version_text(cfg.version)},
                   {"backend", cfg.backend.type},
                   {"model_id", cfg.backend.model_id},
                   {"states", state_manifest}};
  detail::write_json_file(fs::path(cfg.output_dir) / "simulation_manifest.json", manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate: state results (+ optional actuals override) -> reports
// ---------------------------------------------------------------------------

namespace detail {

// Actuals CSV: state, electoral_votes, category, actual_republican_share.
inline std::map<std::string, StateInfo> load_actuals(const std::string& path) {
  std::map<std::string, StateInfo> out;
  const csv::Table t = csv::read_file(path);
  for (const auto& row : t.rows) {
    StateInfo s;
    s.code = row.at(static_cast<std::size_t>(t.column("state")));
    s.electoral_votes = std::stoi(row.at(static_cast<std::size_t>(t.column("electoral_votes"))));
    if (t.column("category") >= 0)
      s.category = category_from_text(row.at(static_cast<std::size_t>(t.column("category"))));
    const std::string share =
        row.at(static_cast<std::size_t>(t.column("actual_republican_share")));
    if (!share.empty()) s.actual_republican_share = std::stod(share);
    out[s.code] = std::move(s);
  }
  return out;
}

inline std::vector<metrics::StateResult> load_state_results(
    const std::string& path, const std::map<std::string, StateInfo>& actuals) {
  const csv::Table t = csv::read_file(path);
  auto col = [&](const char* name) {
    const int c = t.column(name);
    if (c < 0) throw std::runtime_error(std::string("state results missing column ") + name);
    return static_cast<std::size_t>(c);
  };
  std::vector<metrics::StateResult> out;
  for (const auto& row : t.rows) {
    metrics::StateResult sr;
    sr.state.code = row.at(col("state"));
    sr.state.electoral_votes = std::stoi(row.at(col("electoral_votes")));
    sr.state.category = category_from_text(row.at(col("category")));
    const std::string actual = row.at(col("actual_republican_share"));
    if (!actual.empty()) sr.state.actual_republican_share = std::stod(actual);
    sr.dem_votes = std::stoll(row.at(col("dem")));
    sr.rep_votes = std::stoll(row.at(col("rep")));
    sr.no_pref = std::stoll(row.at(col("no_preference")));
    sr.unparseable = std::stoll(row.at(col("unparseable")));
    auto it = actuals.find(sr.state.code);
    if (it != actuals.end()) {
      sr.state.electoral_votes = it->second.electoral_votes;
      sr.state.category = it->second.category;
      sr.state.actual_republican_share = it->second.actual_republican_share;
    }
    out.push_back(std::move(sr));
  }
  return out;
}

// Reference gap CSV: dimension, group, reference_gap, source_note.
inline analysis::ReferenceGaps load_reference_gaps(const std::string& path) {
  analysis::ReferenceGaps ref;
  const csv::Table t = csv::read_file(path);
  for (const auto& row : t.rows) {
    const auto dim = analysis::dimension_from_text(row.at(static_cast<std::size_t>(t.column("dimension"))));
    if (!dim) continue;
    ref.gaps[*dim][row.at(static_cast<std::size_t>(t.column("group")))] =
        std::stod(row.at(static_cast<std::size_t>(t.column("reference_gap"))));
  }
  return ref;
}

inline json regression_json(const analysis::RegressionResult& r) {
  return {{"beta", r.beta},
          {"intercept", r.intercept},
          {"pseudo_r2", r.pseudo_r2},
          {"n_used", r.n_used},
          {"converged", r.converged},
          {"separation_flag", r.separation_flag},
          {"iterations", r.iterations},
          {"log_likelihood", r.log_likelihood}};
}

}  // namespace detail

inline int cmd_evaluate(const config::RunConfig& cfg, const std::string& actuals_file,
                        std::ostream& log) {
  const fs::path out_dir(cfg.output_dir);
  const fs::path results_path = out_dir / "state_results.csv";
  if (!fs::exists(results_path))
    throw std::runtime_error("state results missing (run `simulate` first): " +
                             results_path.string());

  std::map<std::string, StateInfo> actuals;
  if (!actuals_file.empty()) actuals = detail::load_actuals(actuals_file);
  auto state_results = detail::load_state_results(results_path.string(), actuals);
  const auto report = metrics::evaluate(state_results);
  for (const auto& s : report.excluded_states)
    log << "evaluate: warning: state " << s
        << " excluded (undefined share or missing actual)\n";

  const Provenance prov = Provenance::of(cfg);

  // headline metrics, in both fractional and paper-style percentage units
  json calls = json::array();
  for (const auto& c : report.calls.calls)
    calls.push_back({{"state", c.state},
                     {"category", category_text(c.category)},
                     {"predicted", metrics::call_text(c.predicted)},
                     {"actual", metrics::call_text(c.actual)},
                     {"correct", c.correct}});
  json by_category = json::object();
  for (const auto& [cat, counts] : report.calls.by_category)
    by_category[category_text(cat)] = {{"correct", counts.first}, {"total", counts.second}};
  json confusion = json::array();
  for (int p = 0; p < 3; ++p) {
    json row = json::array();
    for (int a = 0; a < 3; ++a) row.push_back(report.calls.confusion[p][a]);
    confusion.push_back(row);
  }
  json metrics_doc = {{"provenance", prov.to_json()},
                      {"wae", report.wae},
                      {"wmse", report.wmse},
                      {"bm", report.bm},
                      {"wae_pct", report.wae * 100.0},
                      {"wmse_pct2", report.wmse * 10000.0},
                      {"bm_pct", report.bm * 100.0},
                      {"excluded_states", report.excluded_states},
                      {"calls", calls},
                      {"confusion", confusion},
                      {"by_category", by_category}};
  detail::write_json_file(out_dir / "metrics.json", metrics_doc);

  // per-state table and plot-ready shares (bars vs ground-truth line)
  csv::Table per_state;
  per_state.comments = prov.csv_comments();
  per_state.header = {"state", "category", "electoral_votes", "predicted_share",
                      "actual_share", "abs_error", "call_correct"};
  csv::Table plot;
  plot.comments = prov.csv_comments();
  plot.header = {"state", "category", "predicted_share", "actual_share"};
  std::map<std::string, bool> correct_by_state;
  for (const auto& c : report.calls.calls) correct_by_state[c.state] = c.correct;
  for (const auto& sr : state_results) {
    const auto p = sr.predicted_share();
    const auto& a = sr.state.actual_republican_share;
    if (!p || !a) continue;
    per_state.rows.push_back({sr.state.code, category_text(sr.state.category),
                              std::to_string(sr.state.electoral_votes),
                              detail::fmt_share(*p), detail::fmt_share(*a),
                              detail::fmt_share(std::abs(*p - *a)),
                              correct_by_state.count(sr.state.code) &&
                                      correct_by_state[sr.state.code]
                                  ? "true"
                                  : "false"});
    plot.rows.push_back({sr.state.code, category_text(sr.state.category),
                         detail::fmt_share(*p), detail::fmt_share(*a)});
  }
  csv::write_file((out_dir / "per_state.csv").string(), per_state);
  csv::write_file((out_dir / "plot_shares.csv").string(), plot);

  log << "evaluate: WAE " << detail::fmt_share(report.wae * 100.0) << "%  WMSE "
      << detail::fmt_share(report.wmse * 10000.0) << "%^2  BM "
      << (report.bm >= 0 ? "+" : "") << detail::fmt_share(report.bm * 100.0) << "%\n";

  // regression + demographic gaps, when the records allow it
  const fs::path records_path = out_dir / "records.jsonl";
  if (fs::exists(records_path)) {
    std::ifstream in(records_path);
    std::string line;
    std::vector<analysis::RegressionPoint> pts;
    std::map<std::string, Vote> votes;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rj = json::parse(line);
      pipeline::SimulationRecord rec = rj.get<pipeline::SimulationRecord>();
      if (rec.vote && *rec.vote != Vote::NoPreference)
        votes[rec.persona_id] = *rec.vote;
      if (!rec.inferred_ideology || !rec.vote) continue;
      const auto scale = ideology_to_scale(*rec.inferred_ideology);
      if (!scale || *rec.vote == Vote::NoPreference) continue;
      pts.push_back({double(*scale), *rec.vote == Vote::Republican ? 1 : 0});
    }

    json reg_doc = {{"provenance", prov.to_json()}, {"n_points", pts.size()}};
    try {
      reg_doc["fit"] = detail::regression_json(analysis::fit_logistic(pts));
    } catch (const analysis::EmptyInput&) {
      reg_doc["skipped"] = "no usable (ideology, vote) pairs";
    } catch (const analysis::OneClassOnly&) {
      reg_doc["skipped"] = "votes contain a single class";
    }
    detail::write_json_file(out_dir / "regression.json", reg_doc);

    if (!cfg.reference_gaps_file.empty()) {
      const auto ref = detail::load_reference_gaps(cfg.reference_gaps_file);
      std::vector<analysis::VotedPersona> voted;
      for (const auto& [state, personas] : detail::load_state_personas(cfg))
        for (const auto& p : personas) {
          auto it = votes.find(p.id);
          if (it != votes.end()) voted.push_back({p, it->second});
        }
      json gaps_doc = {{"provenance", prov.to_json()}};
      json dims = json::object();
      for (const auto& [dim, table] : ref.gaps) {
        (void)table;
        const auto gap_report = analysis::demographic_gaps(voted, dim, ref);
        json groups = json::array();
        for (const auto& g : gap_report.groups)
          groups.push_back({{"group", g.group},
                            {"rep", g.rep},
                            {"dem", g.dem},
                            {"simulated_gap", g.simulated_gap},
                            {"reference_gap", g.reference_gap},
                            {"amplification", g.amplification}});
        dims[analysis::dimension_text(dim)] = {{"groups", groups},
                                               {"skipped", gap_report.skipped}};
      }
      gaps_doc["dimensions"] = dims;
      detail::write_json_file(out_dir / "demographic_gaps.json", gaps_doc);
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// summarize-context: backend-powered neutral summarization of raw notes
// ---------------------------------------------------------------------------

inline constexpr const char* kSummarizePrompt =
    "Summarize the following background information about the upcoming United States "
    "presidential election in a neutral, balanced tone. Give equal weight to both "
    "parties' agendas and both candidates' biographies, and avoid evaluative "
    "language:\n\n";

inline int cmd_summarize_context(const config::RunConfig& cfg, const std::string& input_file,
                                 const std::string& output_file, std::ostream& log) {
  std::ifstream in(input_file);
  if (!in) throw std::runtime_error("cannot open input file: " + input_file);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  std::string summary;
  if (cfg.backend.type == "mock") {
    // deterministic stand-in: scripted entry "context" if present, else identity
    const auto& script = cfg.backend.mock_rules.script;
    auto it = script.find("context");
    summary = (it != script.end() && !it->second.empty()) ? it->second.front() : text;
  } else {
    auto be = detail::make_backend(cfg);
    backend::ChatRequest req;
    req.model_id = cfg.backend.model_id;
    req.temperature = cfg.backend.temperature;
    req.max_tokens = cfg.backend.max_tokens;
    req.user_text = kSummarizePrompt + text;
    summary = be->complete(req).text;
  }

  std::ofstream out(output_file);
  if (!out) throw std::runtime_error("cannot write output file: " + output_file);
  out << summary;
  if (!summary.empty() && summary.back() != '\n') out << '\n';
  log << "summarize-context: wrote " << output_file << "\n";
  return 0;
}

}  // namespace electosim::cli
