#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "electosim/csv.hpp"

namespace electosim {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Ideology
// ---------------------------------------------------------------------------

enum class Ideology {
  NoAnswer,
  VeryLiberal,
  SomewhatLiberal,
  CloserToLiberal,
  Moderate,
  CloserToConservative,
  SomewhatConservative,
  VeryConservative,
};

inline constexpr std::array<Ideology, 8> kAllIdeologies = {
    Ideology::NoAnswer,          Ideology::VeryLiberal,
    Ideology::SomewhatLiberal,   Ideology::CloserToLiberal,
    Ideology::Moderate,          Ideology::CloserToConservative,
    Ideology::SomewhatConservative, Ideology::VeryConservative,
};

inline const char* ideology_text(Ideology l) {
  switch (l) {
    case Ideology::NoAnswer: return "No answer";
    case Ideology::VeryLiberal: return "Very liberal";
    case Ideology::SomewhatLiberal: return "Somewhat liberal";
    case Ideology::CloserToLiberal: return "Closer to liberal";
    case Ideology::Moderate: return "Moderate";
    case Ideology::CloserToConservative: return "Closer to conservative";
    case Ideology::SomewhatConservative: return "Somewhat conservative";
    case Ideology::VeryConservative: return "Very conservative";
  }
  return "";
}

// 1 = very liberal ... 7 = very conservative; NoAnswer carries no value.
inline std::optional<int> ideology_to_scale(Ideology l) {
  switch (l) {
    case Ideology::NoAnswer: return std::nullopt;
    case Ideology::VeryLiberal: return 1;
    case Ideology::SomewhatLiberal: return 2;
    case Ideology::CloserToLiberal: return 3;
    case Ideology::Moderate: return 4;
    case Ideology::CloserToConservative: return 5;
    case Ideology::SomewhatConservative: return 6;
    case Ideology::VeryConservative: return 7;
  }
  return std::nullopt;
}

inline Ideology ideology_from_scale(int scale) {
  switch (scale) {
    case 1: return Ideology::VeryLiberal;
    case 2: return Ideology::SomewhatLiberal;
    case 3: return Ideology::CloserToLiberal;
    case 4: return Ideology::Moderate;
    case 5: return Ideology::CloserToConservative;
    case 6: return Ideology::SomewhatConservative;
    case 7: return Ideology::VeryConservative;
  }
  throw std::out_of_range("ideology scale must be 1..7");
}

inline std::optional<Ideology> ideology_from_text(const std::string& s) {
  for (Ideology l : kAllIdeologies)
    if (s == ideology_text(l)) return l;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Vote
// ---------------------------------------------------------------------------

enum class Vote { Democratic, Republican, NoPreference };

inline const char* vote_text(Vote v) {
  switch (v) {
    case Vote::Democratic: return "Democratic";
    case Vote::Republican: return "Republican";
    case Vote::NoPreference: return "No Preference";
  }
  return "";
}

inline std::optional<Vote> vote_from_text(const std::string& s) {
  if (s == "Democratic") return Vote::Democratic;
  if (s == "Republican") return Vote::Republican;
  if (s == "No Preference") return Vote::NoPreference;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

inline const std::set<std::string>& state_codes() {
  static const std::set<std::string> codes = {
      "AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "FL", "GA", "HI", "ID",
      "IL", "IN", "IA", "KS", "KY", "LA", "ME", "MD", "MA", "MI", "MN", "MS",
      "MO", "MT", "NE", "NV", "NH", "NJ", "NM", "NY", "NC", "ND", "OH", "OK",
      "OR", "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV",
      "WI", "WY", "DC"};
  return codes;
}

enum class StateCategory { Red, Blue, Swing };

inline const char* category_text(StateCategory c) {
  switch (c) {
    case StateCategory::Red: return "red";
    case StateCategory::Blue: return "blue";
    case StateCategory::Swing: return "swing";
  }
  return "";
}

inline StateCategory category_from_text(const std::string& s) {
  if (s == "red") return StateCategory::Red;
  if (s == "blue") return StateCategory::Blue;
  if (s == "swing") return StateCategory::Swing;
  throw std::invalid_argument("unknown state category: " + s);
}

struct StateInfo {
  std::string code;
  int electoral_votes = 0;
  std::optional<double> actual_republican_share;  // R(s)
  StateCategory category = StateCategory::Swing;
};

// ---------------------------------------------------------------------------
// Persona
// ---------------------------------------------------------------------------

struct Persona {
  std::string id;
  int age = 0;
  std::string gender;
  std::string ethnicity;
  std::string marital_status;
  int household_size = 0;
  bool has_children = false;
  std::string education_level;
  std::string occupation;
  std::string individual_income;  // numeric USD/year or labeled band, verbatim
  std::string family_income;
  std::string residence_state;
  std::optional<Ideology> ideology;

  bool operator==(const Persona&) const = default;
};

inline std::vector<std::string> validate_persona(const Persona& p) {
  std::vector<std::string> violations;
  if (p.id.empty()) violations.push_back("id must be non-empty");
  if (p.age < 18) violations.push_back("age >= 18");
  if (p.household_size < 1) violations.push_back("household_size >= 1");
  if (!state_codes().count(p.residence_state))
    violations.push_back("unknown state code");
  if (p.gender.empty()) violations.push_back("gender must be non-empty");
  if (p.ethnicity.empty()) violations.push_back("ethnicity must be non-empty");
  if (p.marital_status.empty()) violations.push_back("marital_status must be non-empty");
  if (p.education_level.empty()) violations.push_back("education_level must be non-empty");
  if (p.occupation.empty()) violations.push_back("occupation must be non-empty");
  if (p.individual_income.empty()) violations.push_back("individual_income must be non-empty");
  if (p.family_income.empty()) violations.push_back("family_income must be non-empty");
  return violations;
}

// ---------------------------------------------------------------------------
// Election context
// ---------------------------------------------------------------------------

struct ElectionContext {
  int year = 0;
  std::string democratic_candidate;
  std::string republican_candidate;
  std::string party_agendas;   // may be empty only for V1
  std::string candidate_bios;  // may be empty only for V1

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (year <= 1900) v.push_back("year > 1900");
    if (democratic_candidate.empty()) v.push_back("democratic candidate name empty");
    if (republican_candidate.empty()) v.push_back("republican candidate name empty");
    return v;
  }
};

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& persona_csv_header() {
  static const std::vector<std::string> h = {
      "id",          "age",           "gender",
      "ethnicity",   "marital_status", "household_size",
      "has_children", "education_level", "occupation",
      "individual_income", "family_income", "residence_state",
      "ideology"};
  return h;
}

inline std::vector<std::string> persona_to_csv_row(const Persona& p) {
  return {p.id,
          std::to_string(p.age),
          p.gender,
          p.ethnicity,
          p.marital_status,
          std::to_string(p.household_size),
          p.has_children ? "true" : "false",
          p.education_level,
          p.occupation,
          p.individual_income,
          p.family_income,
          p.residence_state,
          p.ideology ? ideology_text(*p.ideology) : ""};
}

inline Persona persona_from_csv_row(const csv::Table& t, const std::vector<std::string>& row) {
  auto get = [&](const std::string& name) -> std::string {
    int c = t.column(name);
    if (c < 0 || static_cast<std::size_t>(c) >= row.size())
      throw std::runtime_error("persona CSV missing column: " + name);
    return row[static_cast<std::size_t>(c)];
  };
  Persona p;
  p.id = get("id");
  p.age = std::stoi(get("age"));
  p.gender = get("gender");
  p.ethnicity = get("ethnicity");
  p.marital_status = get("marital_status");
  p.household_size = std::stoi(get("household_size"));
  const std::string hc = get("has_children");
  p.has_children = (hc == "true" || hc == "1" || hc == "yes");
  p.education_level = get("education_level");
  p.occupation = get("occupation");
  p.individual_income = get("individual_income");
  p.family_income = get("family_income");
  p.residence_state = get("residence_state");
  int ic = t.column("ideology");
  if (ic >= 0 && static_cast<std::size_t>(ic) < row.size() && !row[ic].empty())
    p.ideology = ideology_from_text(row[ic]);
  return p;
}

inline std::vector<Persona> personas_from_csv(const csv::Table& t) {
  std::vector<Persona> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) out.push_back(persona_from_csv_row(t, r));
  return out;
}

inline csv::Table personas_to_csv(const std::vector<Persona>& ps,
                                  std::vector<std::string> comments = {}) {
  csv::Table t;
  t.comments = std::move(comments);
  t.header = persona_csv_header();
  for (const auto& p : ps) t.rows.push_back(persona_to_csv_row(p));
  return t;
}

inline void to_json(json& j, const Persona& p) {
  j = json{{"id", p.id},
           {"age", p.age},
           {"gender", p.gender},
           {"ethnicity", p.ethnicity},
           {"marital_status", p.marital_status},
           {"household_size", p.household_size},
           {"has_children", p.has_children},
           {"education_level", p.education_level},
           {"occupation", p.occupation},
           {"individual_income", p.individual_income},
           {"family_income", p.family_income},
           {"residence_state", p.residence_state}};
  if (p.ideology) j["ideology"] = ideology_text(*p.ideology);
}

inline void from_json(const json& j, Persona& p) {
  j.at("id").get_to(p.id);
  j.at("age").get_to(p.age);
  j.at("gender").get_to(p.gender);
  j.at("ethnicity").get_to(p.ethnicity);
  j.at("marital_status").get_to(p.marital_status);
  j.at("household_size").get_to(p.household_size);
  j.at("has_children").get_to(p.has_children);
  j.at("education_level").get_to(p.education_level);
  j.at("occupation").get_to(p.occupation);
  j.at("individual_income").get_to(p.individual_income);
  j.at("family_income").get_to(p.family_income);
  j.at("residence_state").get_to(p.residence_state);
  if (j.contains("ideology") && !j["ideology"].is_null())
    p.ideology = ideology_from_text(j["ideology"].get<std::string>());
}

inline void to_json(json& j, const ElectionContext& c) {
  j = json{{"year", c.year},
           {"democratic_candidate", c.democratic_candidate},
           {"republican_candidate", c.republican_candidate},
           {"party_agendas", c.party_agendas},
           {"candidate_bios", c.candidate_bios}};
}

inline void from_json(const json& j, ElectionContext& c) {
  j.at("year").get_to(c.year);
  j.at("democratic_candidate").get_to(c.democratic_candidate);
  j.at("republican_candidate").get_to(c.republican_candidate);
  c.party_agendas = j.value("party_agendas", "");
  c.candidate_bios = j.value("candidate_bios", "");
}

inline void to_json(json& j, const StateInfo& s) {
  j = json{{"code", s.code},
           {"electoral_votes", s.electoral_votes},
           {"category", category_text(s.category)}};
  if (s.actual_republican_share) j["actual_republican_share"] = *s.actual_republican_share;
}

inline void from_json(const json& j, StateInfo& s) {
  j.at("code").get_to(s.code);
  j.at("electoral_votes").get_to(s.electoral_votes);
  if (j.contains("category")) s.category = category_from_text(j["category"].get<std::string>());
  if (j.contains("actual_republican_share") && !j["actual_republican_share"].is_null())
    s.actual_republican_share = j["actual_republican_share"].get<double>();
}

}  // namespace electosim
