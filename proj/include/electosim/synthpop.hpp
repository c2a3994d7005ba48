#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "electosim/domain.hpp"
#include "electosim/rng.hpp"

namespace electosim::synthpop {

struct NotPSD : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingMarginal : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateCDF : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Marginal models
// ---------------------------------------------------------------------------

struct CategoricalMarginal {
  std::vector<std::string> categories;
};

// Piecewise-linear inverse CDF over >= 2 knots; knot_u strictly in [0,1].
struct ContinuousMarginal {
  std::vector<double> knot_u;
  std::vector<double> knot_x;

  double inverse_cdf(double u) const {
    if (u <= knot_u.front()) return knot_x.front();
    if (u >= knot_u.back()) return knot_x.back();
    for (std::size_t i = 1; i < knot_u.size(); ++i) {
      if (u <= knot_u[i]) {
        const double t = (u - knot_u[i - 1]) / (knot_u[i] - knot_u[i - 1]);
        return knot_x[i - 1] + t * (knot_x[i] - knot_x[i - 1]);
      }
    }
    return knot_x.back();
  }
};

struct MarginalModel {
  std::string feature;
  std::variant<CategoricalMarginal, ContinuousMarginal> kind;

  bool is_categorical() const { return std::holds_alternative<CategoricalMarginal>(kind); }
  const CategoricalMarginal& categorical() const { return std::get<CategoricalMarginal>(kind); }
  const ContinuousMarginal& continuous() const { return std::get<ContinuousMarginal>(kind); }

  void validate() const {
    if (is_categorical()) {
      if (categorical().categories.empty())
        throw std::invalid_argument("categorical marginal '" + feature + "' has no categories");
    } else {
      const auto& c = continuous();
      if (c.knot_u.size() < 2 || c.knot_u.size() != c.knot_x.size())
        throw std::invalid_argument("continuous marginal '" + feature + "' needs >= 2 aligned knots");
      for (std::size_t i = 1; i < c.knot_u.size(); ++i) {
        if (c.knot_u[i] <= c.knot_u[i - 1])
          throw std::invalid_argument("knot u values must be strictly increasing in '" + feature + "'");
        if (c.knot_x[i] < c.knot_x[i - 1])
          throw std::invalid_argument("inverse CDF must be nondecreasing in '" + feature + "'");
      }
      if (c.knot_x.front() == c.knot_x.back())
        throw DegenerateCDF("inverse CDF for '" + feature + "' is flat over its full domain");
    }
  }
};

// ---------------------------------------------------------------------------
// Copula
// ---------------------------------------------------------------------------

struct CopulaSpec {
  Eigen::MatrixXd sigma;  // correlation matrix, unit diagonal

  int dimension() const { return static_cast<int>(sigma.rows()); }

  // Normalizes a covariance input to correlation scale and checks PSD.
  // Violations below 1e-6 are repaired by eigenvalue clipping; larger ones throw.
  static CopulaSpec from_covariance(Eigen::MatrixXd cov) {
    if (cov.rows() != cov.cols()) throw DimensionMismatch("covariance matrix must be square");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("covariance matrix must be symmetric");
    const int d = static_cast<int>(cov.rows());
    Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
    for (int i = 0; i < d; ++i)
      if (!(sd(i) > 0)) throw std::invalid_argument("covariance diagonal must be positive");
    Eigen::MatrixXd corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
    corr = (corr + corr.transpose()) / 2.0;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
    const double min_ev = es.eigenvalues().minCoeff();
    if (min_ev < -1e-6) throw NotPSD("correlation matrix is not PSD (min eigenvalue " +
                                     std::to_string(min_ev) + ")");
    if (min_ev < 0) {
      Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
      corr = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      Eigen::VectorXd diag = corr.diagonal().cwiseSqrt();
      corr = diag.cwiseInverse().asDiagonal() * corr * diag.cwiseInverse().asDiagonal();
    }
    return CopulaSpec{corr};
  }

  // Factor L with L L^T = sigma: Cholesky, or eigendecomposition for
  // PSD-degenerate inputs.
  Eigen::MatrixXd factor() const {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw NotPSD("correlation matrix fails PSD tolerance");
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal();
  }
};

struct CopulaDraw {
  Eigen::MatrixXd u;  // n x D in (0,1)
  Eigen::MatrixXd z;  // n x D correlated normals, retained for diagnostics
};

inline CopulaDraw sample_copula_with_z(const CopulaSpec& spec, std::size_t n,
                                       std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_copula: n must be >= 1");
  const int d = spec.dimension();
  const Eigen::MatrixXd L = spec.factor();
  if (L.rows() != d) throw DimensionMismatch("copula factor dimension mismatch");

  auto eng = rng::make_engine(seed);
  CopulaDraw out;
  out.z.resize(static_cast<Eigen::Index>(n), d);
  out.u.resize(static_cast<Eigen::Index>(n), d);
  Eigen::VectorXd iid(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) iid(j) = rng::normal(eng);
    Eigen::VectorXd z = L * iid;
    for (int j = 0; j < d; ++j) {
      out.z(static_cast<Eigen::Index>(i), j) = z(j);
      out.u(static_cast<Eigen::Index>(i), j) = rng::norm_cdf(z(j));
    }
  }
  return out;
}

inline Eigen::MatrixXd sample_copula(const CopulaSpec& spec, std::size_t n,
                                     std::uint64_t seed) {
  return sample_copula_with_z(spec, n, seed).u;
}

// ---------------------------------------------------------------------------
// Block aggregates and raw rows
// ---------------------------------------------------------------------------

struct FeatureTarget {
  // categorical: proportions aligned with the marginal's category order
  std::vector<double> proportions;
  // continuous: target mean (informational; scaling is categorical-only)
  std::optional<double> mean;
};

struct BlockAggregate {
  std::string block_id;
  std::string state;  // residence_state for every persona in the block
  int population = 0;
  std::map<std::string, FeatureTarget> targets;

  void validate(const std::vector<MarginalModel>& marginals) const {
    if (population < 1) throw std::invalid_argument("block population must be >= 1");
    for (const auto& m : marginals) {
      if (!m.is_categorical()) continue;
      auto it = targets.find(m.feature);
      if (it == targets.end())
        throw MissingMarginal("block '" + block_id + "' missing target for '" + m.feature + "'");
      const auto& p = it->second.proportions;
      if (p.size() != m.categorical().categories.size())
        throw DimensionMismatch("target proportions for '" + m.feature + "' do not match categories");
      double sum = 0;
      for (double v : p) {
        if (v < 0) throw std::invalid_argument("negative target proportion in '" + m.feature + "'");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("target proportions for '" + m.feature + "' must sum to 1");
    }
  }
};

struct RawValue {
  int category = -1;    // categorical index, or -1
  double value = 0.0;   // continuous value
  bool is_category() const { return category >= 0; }
  bool operator==(const RawValue&) const = default;
};

using RawRow = std::vector<RawValue>;

// Categorical features share the copula's uniform through an inverse-CDF walk
// over the cumulative target probabilities, so the dependence structure
// carries into categorical draws.
inline int categorical_from_uniform(double u, const std::vector<double>& probs) {
  double cum = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    cum += probs[k];
    if (u < cum) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size()) - 1;
}

inline std::vector<RawRow> apply_marginals(const Eigen::MatrixXd& u,
                                           const std::vector<MarginalModel>& marginals,
                                           const BlockAggregate& block) {
  const int d = static_cast<int>(marginals.size());
  if (u.cols() != d)
    throw DimensionMismatch("uniform matrix has " + std::to_string(u.cols()) +
                            " columns, expected " + std::to_string(d));
  for (const auto& m : marginals) m.validate();
  block.validate(marginals);

  std::vector<RawRow> rows(static_cast<std::size_t>(u.rows()), RawRow(static_cast<std::size_t>(d)));
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    for (int j = 0; j < d; ++j) {
      const double uij = u(i, j);
      if (marginals[j].is_categorical()) {
        const auto& probs = block.targets.at(marginals[j].feature).proportions;
        rows[i][j].category = categorical_from_uniform(uij, probs);
      } else {
        rows[i][j].value = marginals[j].continuous().inverse_cdf(uij);
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Iterative marginal scaling
// ---------------------------------------------------------------------------

struct MarginalScaleReport {
  int iterations = 0;
  std::size_t rows_changed = 0;
  bool converged = false;
  std::map<std::string, double> achieved_discrepancy;  // max abs error per feature
};

inline MarginalScaleReport marginal_scale(std::vector<RawRow>& rows,
                                          const std::vector<MarginalModel>& marginals,
                                          const BlockAggregate& block, double tol,
                                          int max_iters, std::uint64_t seed) {
  if (rows.empty()) throw std::invalid_argument("marginal_scale: rows must be nonempty");
  if (!(tol > 0 && tol < 1)) throw std::invalid_argument("marginal_scale: tol in (0,1)");
  const double n = static_cast<double>(rows.size());
  auto eng = rng::make_engine(seed);

  auto discrepancy = [&](int j) {
    const auto& target = block.targets.at(marginals[j].feature).proportions;
    std::vector<double> prop(target.size(), 0.0);
    for (const auto& r : rows) prop[static_cast<std::size_t>(r[j].category)] += 1.0 / n;
    double worst = 0;
    for (std::size_t k = 0; k < target.size(); ++k)
      worst = std::max(worst, std::abs(prop[k] - target[k]));
    return std::pair{prop, worst};
  };

  MarginalScaleReport report;
  for (int j = 0; j < static_cast<int>(marginals.size()); ++j) {
    if (!marginals[j].is_categorical()) continue;
    report.achieved_discrepancy[marginals[j].feature] = discrepancy(j).second;
  }

  for (int iter = 0; iter < max_iters; ++iter) {
    bool all_ok = true;
    for (const auto& [f, disc] : report.achieved_discrepancy)
      if (disc > tol) all_ok = false;
    if (all_ok) {
      report.converged = true;
      return report;
    }
    ++report.iterations;

    for (int j = 0; j < static_cast<int>(marginals.size()); ++j) {
      if (!marginals[j].is_categorical()) continue;
      const auto& feature = marginals[j].feature;
      const auto& target = block.targets.at(feature).proportions;
      auto [prop, worst] = discrepancy(j);
      if (worst <= tol) continue;

      // rows to move out of each over-represented category
      std::vector<long> surplus(target.size(), 0);
      std::vector<long> deficit(target.size(), 0);
      for (std::size_t k = 0; k < target.size(); ++k) {
        const double diff = prop[k] - target[k];
        if (diff > 0) surplus[k] = std::lround(diff * n);
        else deficit[k] = std::lround(-diff * n);
      }
      // pool of under-represented slots, proportional to deficits
      std::vector<int> slots;
      for (std::size_t k = 0; k < deficit.size(); ++k)
        for (long c = 0; c < deficit[k]; ++c) slots.push_back(static_cast<int>(k));
      if (slots.empty()) continue;
      // seeded shuffle of destination slots
      for (std::size_t i = slots.size(); i > 1; --i) {
        std::size_t pick = static_cast<std::size_t>(eng() % i);
        std::swap(slots[i - 1], slots[pick]);
      }

      std::size_t slot_idx = 0;
      // candidate rows per surplus category, selected in seeded random order
      for (std::size_t k = 0; k < surplus.size() && slot_idx < slots.size(); ++k) {
        if (surplus[k] <= 0) continue;
        std::vector<std::size_t> holders;
        for (std::size_t r = 0; r < rows.size(); ++r)
          if (rows[r][j].category == static_cast<int>(k)) holders.push_back(r);
        for (std::size_t i = holders.size(); i > 1; --i) {
          std::size_t pick = static_cast<std::size_t>(eng() % i);
          std::swap(holders[i - 1], holders[pick]);
        }
        const long to_move = std::min<long>(surplus[k], static_cast<long>(holders.size()));
        for (long c = 0; c < to_move && slot_idx < slots.size(); ++c) {
          rows[holders[static_cast<std::size_t>(c)]][j].category = slots[slot_idx++];
          ++report.rows_changed;
        }
      }
      report.achieved_discrepancy[feature] = discrepancy(j).second;
    }
  }

  report.converged = true;
  for (const auto& [f, disc] : report.achieved_discrepancy)
    if (disc > tol) report.converged = false;
  return report;
}

// ---------------------------------------------------------------------------
// Block generation
// ---------------------------------------------------------------------------

struct BlockResult {
  std::vector<Persona> personas;
  MarginalScaleReport scale_report;
};

namespace detail {

inline std::string format_income(double v) {
  return std::to_string(static_cast<long long>(std::llround(v)));
}

inline void assign_field(Persona& p, const std::string& feature, const MarginalModel& m,
                         const RawValue& v) {
  auto cat = [&]() -> const std::string& {
    return m.categorical().categories.at(static_cast<std::size_t>(v.category));
  };
  if (feature == "age") {
    p.age = std::max(18, static_cast<int>(std::lround(v.value)));
  } else if (feature == "gender") {
    p.gender = cat();
  } else if (feature == "ethnicity") {
    p.ethnicity = cat();
  } else if (feature == "marital_status") {
    p.marital_status = cat();
  } else if (feature == "household_size") {
    if (v.is_category())
      p.household_size = std::max(1, std::stoi(cat()));
    else
      p.household_size = std::max(1, static_cast<int>(std::lround(v.value)));
  } else if (feature == "has_children") {
    const std::string& c = cat();
    p.has_children = (c == "true" || c == "yes" || c == "1");
  } else if (feature == "education_level") {
    p.education_level = cat();
  } else if (feature == "occupation") {
    p.occupation = cat();
  } else if (feature == "individual_income") {
    p.individual_income = v.is_category() ? cat() : format_income(v.value);
  } else if (feature == "family_income") {
    p.family_income = v.is_category() ? cat() : format_income(v.value);
  }
  // unknown features are carried in generation but not mapped to persona fields
}

}  // namespace detail

inline BlockResult generate_block(const BlockAggregate& block,
                                  const std::vector<MarginalModel>& marginals,
                                  const CopulaSpec& spec, std::uint64_t seed,
                                  double tol = 0.01, int max_iters = 50) {
  const auto n = static_cast<std::size_t>(block.population);
  const std::uint64_t copula_seed = rng::derive_seed(seed, "copula");
  const std::uint64_t scale_seed = rng::derive_seed(seed, "scale");

  const Eigen::MatrixXd u = sample_copula(spec, n, copula_seed);
  std::vector<RawRow> rows = apply_marginals(u, marginals, block);
  MarginalScaleReport report = marginal_scale(rows, marginals, block, tol, max_iters, scale_seed);

  BlockResult result;
  result.scale_report = std::move(report);
  result.personas.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Persona p;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", i + 1);
    p.id = block.block_id + "-" + buf;
    p.residence_state = block.state;
    for (std::size_t j = 0; j < marginals.size(); ++j)
      detail::assign_field(p, marginals[j].feature, marginals[j], rows[i][j]);
    result.personas.push_back(std::move(p));
  }
  return result;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

inline std::vector<MarginalModel> marginals_from_json(const json& j) {
  std::vector<MarginalModel> out;
  for (const auto& mj : j.at("marginals")) {
    MarginalModel m;
    m.feature = mj.at("feature").get<std::string>();
    const std::string kind = mj.at("kind").get<std::string>();
    if (kind == "categorical") {
      CategoricalMarginal c;
      c.categories = mj.at("categories").get<std::vector<std::string>>();
      m.kind = std::move(c);
    } else if (kind == "continuous") {
      ContinuousMarginal c;
      c.knot_u = mj.at("knot_u").get<std::vector<double>>();
      c.knot_x = mj.at("knot_x").get<std::vector<double>>();
      m.kind = std::move(c);
    } else {
      throw std::invalid_argument("unknown marginal kind: " + kind);
    }
    m.validate();
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<BlockAggregate> blocks_from_json(const json& j) {
  std::vector<BlockAggregate> out;
  for (const auto& bj : j.at("blocks")) {
    BlockAggregate b;
    b.block_id = bj.at("block_id").get<std::string>();
    b.state = bj.at("state").get<std::string>();
    b.population = bj.at("population").get<int>();
    for (const auto& [feature, tj] : bj.at("targets").items()) {
      FeatureTarget t;
      if (tj.is_array()) t.proportions = tj.get<std::vector<double>>();
      else if (tj.is_object() && tj.contains("proportions"))
        t.proportions = tj["proportions"].get<std::vector<double>>();
      else if (tj.is_number()) t.mean = tj.get<double>();
      b.targets[feature] = std::move(t);
    }
    out.push_back(std::move(b));
  }
  return out;
}

inline CopulaSpec copula_from_json(const json& j) {
  const auto rows = j.at("covariance").get<std::vector<std::vector<double>>>();
  const int d = static_cast<int>(rows.size());
  Eigen::MatrixXd cov(d, d);
  for (int i = 0; i < d; ++i) {
    if (static_cast<int>(rows[i].size()) != d)
      throw DimensionMismatch("covariance matrix rows have inconsistent lengths");
    for (int k = 0; k < d; ++k) cov(i, k) = rows[i][k];
  }
  return CopulaSpec::from_covariance(std::move(cov));
}

}  // namespace electosim::synthpop
