#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "electosim/domain.hpp"

namespace electosim::analysis {

struct EmptyInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OneClassOnly : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownGroup : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Logistic regression: vote ~ intercept + beta * ideology_scale
// ---------------------------------------------------------------------------

struct RegressionPoint {
  double scale = 0;  // ideology, 1..7
  int vote = 0;      // 0 = Democrat, 1 = Republican
};

struct RegressionResult {
  double beta = 0;
  double intercept = 0;
  double pseudo_r2 = 0;  // McFadden
  std::size_t n_used = 0;
  bool converged = false;
  bool separation_flag = false;
  int iterations = 0;
  double log_likelihood = 0;
  std::vector<double> ll_trace;  // log-likelihood after each iteration
};

namespace detail {

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double log_likelihood(const std::vector<RegressionPoint>& pts, double b0, double b1) {
  double ll = 0;
  for (const auto& p : pts) {
    const double eta = b0 + b1 * p.scale;
    // numerically stable log(sigmoid) forms
    if (p.vote == 1)
      ll += -std::log1p(std::exp(-eta));
    else
      ll += -std::log1p(std::exp(eta));
  }
  return ll;
}

}  // namespace detail

// IRLS fit with step halving so the log-likelihood never decreases.
// Separation is flagged when all fitted probabilities collapse onto {0,1}
// or |beta| diverges past the configured threshold.
inline RegressionResult fit_logistic(const std::vector<RegressionPoint>& points,
                                     int max_iters = 25, double tol = 1e-8,
                                     double beta_divergence_threshold = 15.0) {
  if (points.empty()) throw EmptyInput("fit_logistic: no points");
  std::size_t ones = 0;
  for (const auto& p : points) ones += static_cast<std::size_t>(p.vote);
  if (ones == 0 || ones == points.size())
    throw OneClassOnly("fit_logistic: outcomes contain a single class");

  const double n = static_cast<double>(points.size());
  const double pbar = static_cast<double>(ones) / n;
  const double null_ll = static_cast<double>(ones) * std::log(pbar) +
                         (n - static_cast<double>(ones)) * std::log(1.0 - pbar);

  RegressionResult r;
  r.n_used = points.size();
  double b0 = std::log(pbar / (1.0 - pbar));
  double b1 = 0.0;
  double ll = detail::log_likelihood(points, b0, b1);
  r.ll_trace.push_back(ll);

  for (int iter = 0; iter < max_iters; ++iter) {
    // score and Fisher information
    Eigen::Vector2d score = Eigen::Vector2d::Zero();
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
    for (const auto& p : points) {
      const double mu = detail::sigmoid(b0 + b1 * p.scale);
      const double w = std::max(mu * (1.0 - mu), 1e-12);
      const double resid = static_cast<double>(p.vote) - mu;
      score(0) += resid;
      score(1) += resid * p.scale;
      info(0, 0) += w;
      info(0, 1) += w * p.scale;
      info(1, 1) += w * p.scale * p.scale;
    }
    info(1, 0) = info(0, 1);
    Eigen::Vector2d step = info.ldlt().solve(score);
    if (!step.allFinite()) break;

    // halve until the likelihood does not decrease
    double scale_factor = 1.0;
    double new_b0 = b0, new_b1 = b1, new_ll = ll;
    for (int h = 0; h < 30; ++h) {
      const double c0 = b0 + scale_factor * step(0);
      const double c1 = b1 + scale_factor * step(1);
      const double cll = detail::log_likelihood(points, c0, c1);
      if (cll >= ll - 1e-14) {
        new_b0 = c0;
        new_b1 = c1;
        new_ll = cll;
        break;
      }
      scale_factor /= 2.0;
    }
    ++r.iterations;
    const double delta = new_ll - ll;
    b0 = new_b0;
    b1 = new_b1;
    ll = new_ll;
    r.ll_trace.push_back(ll);
    if (std::abs(b1) > beta_divergence_threshold) break;
    if (delta >= 0 && delta < tol) {
      r.converged = true;
      break;
    }
  }

  r.beta = b1;
  r.intercept = b0;
  r.log_likelihood = ll;
  r.pseudo_r2 = (null_ll == 0) ? 0.0 : 1.0 - ll / null_ll;
  r.pseudo_r2 = std::clamp(r.pseudo_r2, 0.0, 1.0);

  bool all_extreme = true;
  for (const auto& p : points) {
    const double mu = detail::sigmoid(b0 + b1 * p.scale);
    if (std::min(mu, 1.0 - mu) > 1e-6) {
      all_extreme = false;
      break;
    }
  }
  if (all_extreme || (std::abs(b1) > beta_divergence_threshold && !r.converged))
    r.separation_flag = true;
  return r;
}

// ---------------------------------------------------------------------------
// Demographic gap analysis
// ---------------------------------------------------------------------------

enum class Dimension { Gender, Ethnicity, AgeBand, Education };

inline const char* dimension_text(Dimension d) {
  switch (d) {
    case Dimension::Gender: return "gender";
    case Dimension::Ethnicity: return "ethnicity";
    case Dimension::AgeBand: return "age_band";
    case Dimension::Education: return "education";
  }
  return "";
}

inline std::optional<Dimension> dimension_from_text(const std::string& s) {
  if (s == "gender") return Dimension::Gender;
  if (s == "ethnicity") return Dimension::Ethnicity;
  if (s == "age_band") return Dimension::AgeBand;
  if (s == "education") return Dimension::Education;
  return std::nullopt;
}

// Reference gaps per group (e.g. transcribed from a published exit-poll or
// survey report), supplied as data with provenance notes.
struct ReferenceGaps {
  // dimension -> group -> Republican-minus-Democratic share gap
  std::map<Dimension, std::map<std::string, double>> gaps;
};

struct GroupGap {
  std::string group;
  long long rep = 0;
  long long dem = 0;
  double simulated_gap = 0;      // P_rep(g) - P_dem(g)
  double reference_gap = 0;
  double amplification = 0;      // simulated - reference
};

struct DemographicGapReport {
  Dimension dimension = Dimension::Gender;
  std::vector<GroupGap> groups;
  std::vector<std::string> skipped;  // unknown group or empty denominator
};

struct VotedPersona {
  Persona persona;
  Vote vote = Vote::NoPreference;
};

// Age bands are taken from the reference table's group labels, e.g. "18-29"
// or "65+".
inline std::optional<std::string> age_band_for(int age,
                                               const std::map<std::string, double>& bands) {
  for (const auto& [label, gap] : bands) {
    (void)gap;
    const auto dash = label.find('-');
    if (dash != std::string::npos) {
      const int lo = std::stoi(label.substr(0, dash));
      const int hi = std::stoi(label.substr(dash + 1));
      if (age >= lo && age <= hi) return label;
    } else if (!label.empty() && label.back() == '+') {
      const int lo = std::stoi(label.substr(0, label.size() - 1));
      if (age >= lo) return label;
    }
  }
  return std::nullopt;
}

inline std::string group_of(const Persona& p, Dimension dim,
                            const std::map<std::string, double>& reference) {
  switch (dim) {
    case Dimension::Gender: return p.gender;
    case Dimension::Ethnicity: return p.ethnicity;
    case Dimension::Education: return p.education_level;
    case Dimension::AgeBand: {
      auto band = age_band_for(p.age, reference);
      return band ? *band : "";
    }
  }
  return "";
}

inline DemographicGapReport demographic_gaps(const std::vector<VotedPersona>& records,
                                             Dimension dim,
                                             const ReferenceGaps& reference) {
  DemographicGapReport report;
  report.dimension = dim;
  auto ref_it = reference.gaps.find(dim);
  const std::map<std::string, double> empty;
  const auto& ref = ref_it == reference.gaps.end() ? empty : ref_it->second;

  std::map<std::string, std::pair<long long, long long>> tally;  // group -> (rep, dem)
  for (const auto& r : records) {
    if (r.vote == Vote::NoPreference) continue;
    const std::string g = group_of(r.persona, dim, ref);
    if (g.empty()) {
      report.skipped.push_back(r.persona.id);
      continue;
    }
    auto& [rep, dem] = tally[g];
    if (r.vote == Vote::Republican) ++rep;
    else ++dem;
  }

  for (const auto& [group, counts] : tally) {
    const auto [rep, dem] = counts;
    if (rep + dem == 0) {
      report.skipped.push_back(group);
      continue;
    }
    auto rg = ref.find(group);
    if (rg == ref.end()) {
      report.skipped.push_back(group);
      continue;
    }
    GroupGap g;
    g.group = group;
    g.rep = rep;
    g.dem = dem;
    const double total = static_cast<double>(rep + dem);
    g.simulated_gap = static_cast<double>(rep) / total - static_cast<double>(dem) / total;
    g.reference_gap = rg->second;
    g.amplification = g.simulated_gap - g.reference_gap;
    report.groups.push_back(std::move(g));
  }
  return report;
}

}  // namespace electosim::analysis
