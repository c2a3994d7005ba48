#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "electosim/domain.hpp"
#include "electosim/rng.hpp"

namespace electosim::sampling {

struct EmptyPopulation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SamplingPlan {
  std::map<std::string, double> per_state_ratio;  // state code -> fraction
  double default_ratio = 1.0 / 1000.0;
  int min_sample = 4269;
  double confidence = 0.95;
  double margin_of_error = 0.015;

  double ratio_for(const std::string& state) const {
    auto it = per_state_ratio.find(state);
    return it == per_state_ratio.end() ? default_ratio : it->second;
  }

  std::vector<std::string> validate() const {
    std::vector<std::string> warnings;
    if (min_sample < 1) throw std::invalid_argument("min_sample must be >= 1");
    if (!(margin_of_error > 0 && margin_of_error < 1))
      throw std::invalid_argument("margin_of_error must lie in (0,1)");
    auto check = [&](const std::string& state, double r) {
      if (!(r > 0)) throw std::invalid_argument("sampling ratio must be positive");
      if (r < 1.0 / 2000.0 || r > 1.0 / 100.0)
        warnings.push_back("ratio for " + state + " outside [1/2000, 1/100]");
    };
    check("(default)", default_ratio);
    for (const auto& [s, r] : per_state_ratio) check(s, r);
    return warnings;
  }
};

// Worst-case (p = 0.5) sample size: ceil((z / (2*margin))^2).
inline long long required_sample_size(double confidence, double margin) {
  if (!(confidence > 0 && confidence < 1))
    throw std::domain_error("confidence must lie in (0,1)");
  if (!(margin > 0 && margin < 1))
    throw std::domain_error("margin must lie in (0,1)");
  const double z = rng::norm_quantile((1.0 + confidence) / 2.0);
  const double n = z / (2.0 * margin);
  return static_cast<long long>(std::ceil(n * n));
}

struct SampleResult {
  std::vector<Persona> personas;
  bool capped = false;  // requested size exceeded the population
};

// Uniform sample without replacement via a seeded Fisher-Yates prefix,
// returned in stable order (sorted by persona id).
inline SampleResult sample_state(const std::vector<Persona>& personas,
                                 const SamplingPlan& plan, std::uint64_t seed) {
  if (personas.empty()) throw EmptyPopulation("sample_state: empty persona list");
  const std::string& state = personas.front().residence_state;
  for (const auto& p : personas)
    if (p.residence_state != state)
      throw std::invalid_argument("sample_state: personas span multiple states");

  const std::size_t n = personas.size();
  const double ratio = plan.ratio_for(state);
  std::size_t want = static_cast<std::size_t>(
      std::max<long long>(static_cast<long long>(std::ceil(ratio * static_cast<double>(n))),
                          plan.min_sample));
  SampleResult result;
  if (want >= n) {
    result.capped = want > n;
    want = n;
  }

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  auto eng = rng::make_engine(seed);
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t pick = i + static_cast<std::size_t>(eng() % (n - i));
    std::swap(idx[i], idx[pick]);
  }
  idx.resize(want);

  result.personas.reserve(want);
  for (std::size_t i : idx) result.personas.push_back(personas[i]);
  std::sort(result.personas.begin(), result.personas.end(),
            [](const Persona& a, const Persona& b) { return a.id < b.id; });
  return result;
}

}  // namespace electosim::sampling
