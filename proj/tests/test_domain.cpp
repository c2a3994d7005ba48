#include <doctest.h>

#include <sstream>

#include "electosim/domain.hpp"
#include "test_util.hpp"

using namespace electosim;

TEST_CASE("validate_persona accepts a complete persona") {
  auto p = testutil::persona("p-1", 44, "WI");
  CHECK(validate_persona(p).empty());
}

TEST_CASE("validate_persona rejects minors") {
  auto p = testutil::persona("p-1", 12);
  auto v = validate_persona(p);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == "age >= 18");
}

TEST_CASE("validate_persona rejects unknown state codes") {
  auto p = testutil::persona("p-1", 44, "ZZ");
  auto v = validate_persona(p);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == "unknown state code");
}

TEST_CASE("validate_persona reports all violations at once") {
  auto p = testutil::persona("p-1", 12, "ZZ");
  p.household_size = 0;
  CHECK(validate_persona(p).size() == 3);
}

TEST_CASE("ideology scale endpoints and NoAnswer") {
  CHECK(ideology_to_scale(Ideology::VeryLiberal) == 1);
  CHECK(ideology_to_scale(Ideology::VeryConservative) == 7);
  CHECK(!ideology_to_scale(Ideology::NoAnswer).has_value());
}

TEST_CASE("ideology scale round-trips over the substantive labels") {
  for (Ideology l : kAllIdeologies) {
    auto s = ideology_to_scale(l);
    if (!s) continue;
    CHECK(ideology_from_scale(*s) == l);
  }
  // injectivity
  std::set<int> seen;
  for (Ideology l : kAllIdeologies) {
    auto s = ideology_to_scale(l);
    if (s) CHECK(seen.insert(*s).second);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("persona CSV round-trip is lossless") {
  std::vector<Persona> ps;
  for (int i = 0; i < 5; ++i) {
    auto p = testutil::persona("p-" + std::to_string(i), 20 + i);
    if (i % 2 == 0) p.ideology = ideology_from_scale(1 + i);
    if (i == 3) p.occupation = "sales, retail";  // needs quoting
    ps.push_back(p);
  }
  std::stringstream ss;
  csv::write_stream(ss, personas_to_csv(ps, {"# provenance comment"}));
  auto back = personas_from_csv(csv::read_stream(ss));
  CHECK(back == ps);
}

TEST_CASE("persona JSON round-trip is lossless") {
  auto p = testutil::persona();
  p.ideology = Ideology::Moderate;
  json j = p;
  CHECK(j.get<Persona>() == p);
}

TEST_CASE("DC is an admitted state code") {
  auto p = testutil::persona("p-1", 44, "DC");
  CHECK(validate_persona(p).empty());
}

TEST_CASE("election context validation") {
  auto ctx = testutil::context_2020();
  CHECK(ctx.validate().empty());
  ctx.year = 1800;
  ctx.democratic_candidate.clear();
  CHECK(ctx.validate().size() == 2);
}
