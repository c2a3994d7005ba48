#include <doctest.h>

#include <cmath>
#include <random>

#include "electosim/metrics.hpp"

using namespace electosim;
using namespace electosim::metrics;

namespace {

// Independent naive-loop oracle for the three weighted metrics.
struct Oracle {
  double wae = 0, wmse = 0, bm = 0;
};

Oracle naive_metrics(const std::vector<ShareObservation>& obs) {
  Oracle o;
  double wsum = 0;
  for (const auto& x : obs) wsum += x.weight;
  for (const auto& x : obs) {
    o.wae += x.weight / wsum * std::fabs(x.predicted - x.actual);
    o.wmse += x.weight / wsum * (x.predicted - x.actual) * (x.predicted - x.actual);
    o.bm += x.weight / wsum * (x.predicted - x.actual);
  }
  return o;
}

const std::vector<ShareObservation> kHandFixture = {{0.6, 0.5, 10}, {0.4, 0.45, 5}};

}  // namespace

TEST_CASE("predicted_share basics") {
  CHECK(*predicted_share(40, 60) == doctest::Approx(0.6));
  CHECK(*predicted_share(50, 50) == doctest::Approx(0.5));
  CHECK(!predicted_share(0, 0).has_value());
  CHECK_THROWS_AS(predicted_share(-1, 0), std::invalid_argument);
}

TEST_CASE("hand-computed two-state fixture") {
  // (10*0.1 + 5*0.05)/15, (10*0.01 + 5*0.0025)/15, (10*0.1 - 5*0.05)/15
  CHECK(wae(kHandFixture) == doctest::Approx(0.125 / 1.5).epsilon(1e-12));
  CHECK(wmse(kHandFixture) == doctest::Approx(0.1125 / 15.0).epsilon(1e-12));
  CHECK(bias_metric(kHandFixture) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("perfect prediction gives zero everywhere") {
  std::vector<ShareObservation> obs = {{0.5, 0.5, 10}, {0.7, 0.7, 3}};
  CHECK(wae(obs) == 0.0);
  CHECK(wmse(obs) == 0.0);
  CHECK(bias_metric(obs) == 0.0);
}

TEST_CASE("single state: weight cancels in WAE") {
  CHECK(wae({{0.6, 0.5, 55}}) == doctest::Approx(0.1));
  CHECK(wae({{0.6, 0.5, 3}}) == doctest::Approx(0.1));
}

TEST_CASE("uniform error e gives WMSE e^2") {
  std::vector<ShareObservation> obs = {{0.55, 0.5, 10}, {0.65, 0.6, 20}, {0.35, 0.3, 7}};
  CHECK(wmse(obs) == doctest::Approx(0.0025));
}

TEST_CASE("BM cancellation vs WAE") {
  std::vector<ShareObservation> obs = {{0.6, 0.5, 5}, {0.4, 0.5, 5}};
  CHECK(bias_metric(obs) == doctest::Approx(0.0));
  CHECK(wae(obs) == doctest::Approx(0.1));
}

TEST_CASE("constant shift shows up as signed bias") {
  std::vector<ShareObservation> obs = {{0.55, 0.5, 10}, {0.75, 0.7, 3}};
  CHECK(bias_metric(obs) == doctest::Approx(0.05));
}

TEST_CASE("randomized oracle equivalence and inequalities") {
  std::mt19937_64 eng(99);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> nstates(1, 10);
  std::uniform_int_distribution<int> ev(3, 55);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<ShareObservation> obs;
    const int n = nstates(eng);
    for (int i = 0; i < n; ++i) obs.push_back({unif(eng), unif(eng), double(ev(eng))});

    const auto o = naive_metrics(obs);
    const double a = wae(obs), m = wmse(obs), b = bias_metric(obs);
    CHECK(std::abs(a - o.wae) < 1e-12);
    CHECK(std::abs(m - o.wmse) < 1e-12);
    CHECK(std::abs(b - o.bm) < 1e-12);

    // |BM| <= WAE; WMSE >= WAE^2 (Jensen, normalized weights)
    CHECK(std::abs(b) <= a + 1e-15);
    CHECK(m + 1e-15 >= a * a);

    // scale invariance in the weights
    auto scaled = obs;
    for (auto& x : scaled) x.weight *= 7.0;
    CHECK(std::abs(wae(scaled) - a) < 1e-12);
    CHECK(std::abs(wmse(scaled) - m) < 1e-12);
    CHECK(std::abs(bias_metric(scaled) - b) < 1e-12);
  }
}

TEST_CASE("metric error paths") {
  CHECK_THROWS_AS(wae({}), EmptyInput);
  CHECK_THROWS_AS(wae({{std::nan(""), 0.5, 3}}), UndefinedShare);
  CHECK_THROWS_AS(wae({{0.5, 0.5, 0}}), std::invalid_argument);
}

namespace {

StateResult make_result(const std::string& code, int ev, double actual, long long dem,
                        long long rep, StateCategory cat = StateCategory::Swing) {
  StateResult r;
  r.state = StateInfo{code, ev, actual, cat};
  r.dem_votes = dem;
  r.rep_votes = rep;
  return r;
}

}  // namespace

TEST_CASE("call_states classifies hits, misses and ties") {
  std::vector<StateResult> results = {
      make_result("FL", 29, 0.51, 451, 549),   // P=0.549, correct Republican
      make_result("NC", 15, 0.51, 510, 490),   // P=0.49, miss
      make_result("MI", 16, 0.49, 500, 500),   // P=0.5, NoCall under default rule
  };
  auto summary = call_states(results);
  REQUIRE(summary.calls.size() == 3);
  CHECK(summary.calls[0].correct);
  CHECK(summary.calls[0].predicted == Call::Republican);
  CHECK_FALSE(summary.calls[1].correct);
  CHECK(summary.calls[1].predicted == Call::Democratic);
  CHECK(summary.calls[1].actual == Call::Republican);
  CHECK(summary.calls[2].predicted == Call::NoCall);
  CHECK(summary.confusion[int(Call::Republican)][int(Call::Republican)] == 1);
  CHECK(summary.confusion[int(Call::Democratic)][int(Call::Republican)] == 1);
}

TEST_CASE("call_states requires actual shares") {
  auto r = make_result("FL", 29, 0.51, 451, 549);
  r.state.actual_republican_share.reset();
  CHECK_THROWS_AS(call_states({r}), MissingActual);
}

TEST_CASE("evaluate excludes undefined shares with a warning list") {
  std::vector<StateResult> results = {
      make_result("FL", 29, 0.51, 451, 549),
      make_result("WY", 3, 0.7, 0, 0),  // undefined P(s)
  };
  auto report = evaluate(results);
  REQUIRE(report.excluded_states.size() == 1);
  CHECK(report.excluded_states[0] == "WY");
  CHECK(report.wae == doctest::Approx(0.039));
}

TEST_CASE("per-category call accuracy") {
  std::vector<StateResult> results = {
      make_result("AL", 9, 0.62, 300, 700, StateCategory::Red),
      make_result("CA", 55, 0.34, 700, 300, StateCategory::Blue),
      make_result("WI", 10, 0.496, 480, 520, StateCategory::Swing),  // predicted R, actual D
  };
  auto summary = call_states(results);
  CHECK(summary.by_category[StateCategory::Red] == std::pair<long long, long long>{1, 1});
  CHECK(summary.by_category[StateCategory::Blue] == std::pair<long long, long long>{1, 1});
  CHECK(summary.by_category[StateCategory::Swing] == std::pair<long long, long long>{0, 1});
}
