#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "electosim/domain.hpp"

namespace electosim::metrics {

struct EmptyInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UndefinedShare : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingActual : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateResult {
  StateInfo state;
  long long dem_votes = 0;
  long long rep_votes = 0;
  long long no_pref = 0;
  long long unparseable = 0;

  std::optional<double> predicted_share() const {
    const long long total = dem_votes + rep_votes;
    if (total == 0) return std::nullopt;
    return static_cast<double>(rep_votes) / static_cast<double>(total);
  }
};

// P(s): Republican votes over two-party votes; undefined on an empty denominator.
inline std::optional<double> predicted_share(long long dem, long long rep) {
  if (dem < 0 || rep < 0) throw std::invalid_argument("vote counts must be nonnegative");
  if (dem + rep == 0) return std::nullopt;
  return static_cast<double>(rep) / static_cast<double>(dem + rep);
}

// One state's inputs to the weighted metrics: simulated share P, actual
// share R, electoral-vote weight E.
struct ShareObservation {
  double predicted = 0;  // P(s)
  double actual = 0;     // R(s)
  double weight = 0;     // E(s)
};

namespace detail {
inline void check(const std::vector<ShareObservation>& obs) {
  if (obs.empty()) throw EmptyInput("metric input is empty");
  for (const auto& o : obs) {
    if (std::isnan(o.predicted)) throw UndefinedShare("undefined predicted share");
    if (!(o.predicted >= 0 && o.predicted <= 1 && o.actual >= 0 && o.actual <= 1))
      throw std::invalid_argument("shares must lie in [0,1]");
    if (!(o.weight > 0)) throw std::invalid_argument("weights must be positive");
  }
}
}  // namespace detail

inline double wae(const std::vector<ShareObservation>& obs) {
  detail::check(obs);
  double num = 0, den = 0;
  for (const auto& o : obs) {
    num += o.weight * std::abs(o.predicted - o.actual);
    den += o.weight;
  }
  return num / den;
}

inline double wmse(const std::vector<ShareObservation>& obs) {
  detail::check(obs);
  double num = 0, den = 0;
  for (const auto& o : obs) {
    const double e = o.predicted - o.actual;
    num += o.weight * e * e;
    den += o.weight;
  }
  return num / den;
}

// Signed weighted error: positive = Republican-leaning bias, negative =
// Democratic-leaning bias.
inline double bias_metric(const std::vector<ShareObservation>& obs) {
  detail::check(obs);
  double num = 0, den = 0;
  for (const auto& o : obs) {
    num += o.weight * (o.predicted - o.actual);
    den += o.weight;
  }
  return num / den;
}

// ---------------------------------------------------------------------------
// State calls
// ---------------------------------------------------------------------------

enum class TieRule { NoCall, Republican, Democratic };

enum class Call { Democratic, Republican, NoCall };

inline const char* call_text(Call c) {
  switch (c) {
    case Call::Democratic: return "Democratic";
    case Call::Republican: return "Republican";
    case Call::NoCall: return "NoCall";
  }
  return "";
}

struct StateCall {
  std::string state;
  StateCategory category = StateCategory::Swing;
  Call predicted = Call::NoCall;
  Call actual = Call::NoCall;
  bool correct = false;
};

struct CallSummary {
  std::vector<StateCall> calls;
  // confusion[predicted][actual], indexed by Call
  long long confusion[3][3] = {};
  std::map<StateCategory, std::pair<long long, long long>> by_category;  // correct, total
};

inline Call winner_of(double share, TieRule tie_rule) {
  if (share > 0.5) return Call::Republican;
  if (share < 0.5) return Call::Democratic;
  switch (tie_rule) {
    case TieRule::Republican: return Call::Republican;
    case TieRule::Democratic: return Call::Democratic;
    case TieRule::NoCall: return Call::NoCall;
  }
  return Call::NoCall;
}

inline CallSummary call_states(const std::vector<StateResult>& results,
                               TieRule tie_rule = TieRule::NoCall) {
  CallSummary summary;
  for (const auto& r : results) {
    auto p = r.predicted_share();
    if (!p) continue;  // undefined shares carry no call
    if (!r.state.actual_republican_share)
      throw MissingActual("no actual share for state " + r.state.code);
    StateCall c;
    c.state = r.state.code;
    c.category = r.state.category;
    c.predicted = winner_of(*p, tie_rule);
    c.actual = winner_of(*r.state.actual_republican_share, tie_rule);
    c.correct = (c.predicted == c.actual && c.predicted != Call::NoCall);
    summary.confusion[static_cast<int>(c.predicted)][static_cast<int>(c.actual)]++;
    auto& [ok, total] = summary.by_category[c.category];
    if (c.correct) ++ok;
    ++total;
    summary.calls.push_back(std::move(c));
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Aggregation from raw tallies
// ---------------------------------------------------------------------------

struct MetricReport {
  double wae = 0;          // fraction
  double wmse = 0;         // fraction^2
  double bm = 0;           // signed fraction
  std::vector<StateResult> per_state;
  CallSummary calls;
  std::vector<std::string> excluded_states;  // undefined share or missing actual
};

inline MetricReport evaluate(const std::vector<StateResult>& results,
                             TieRule tie_rule = TieRule::NoCall) {
  MetricReport report;
  report.per_state = results;
  std::vector<ShareObservation> obs;
  std::vector<StateResult> callable;
  for (const auto& r : results) {
    auto p = r.predicted_share();
    if (!p || !r.state.actual_republican_share) {
      report.excluded_states.push_back(r.state.code);
      continue;
    }
    obs.push_back({*p, *r.state.actual_republican_share,
                   static_cast<double>(r.state.electoral_votes)});
    callable.push_back(r);
  }
  report.wae = wae(obs);
  report.wmse = wmse(obs);
  report.bm = bias_metric(obs);
  report.calls = call_states(callable, tie_rule);
  return report;
}

}  // namespace electosim::metrics
