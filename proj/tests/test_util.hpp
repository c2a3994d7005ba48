#pragma once

#include <string>

#include "electosim/domain.hpp"

namespace testutil {

inline electosim::Persona persona(const std::string& id = "p-0001", int age = 44,
                                  const std::string& state = "WI") {
  electosim::Persona p;
  p.id = id;
  p.age = age;
  p.gender = "male";
  p.ethnicity = "White";
  p.marital_status = "married";
  p.household_size = 3;
  p.has_children = true;
  p.education_level = "Bachelor's degree";
  p.occupation = "engineer";
  p.individual_income = "85000";
  p.family_income = "120000";
  p.residence_state = state;
  return p;
}

inline electosim::ElectionContext context_2020(bool with_blocks = true) {
  electosim::ElectionContext ctx;
  ctx.year = 2020;
  ctx.democratic_candidate = "Joe Biden";
  ctx.republican_candidate = "Donald Trump";
  if (with_blocks) {
    ctx.party_agendas =
        "The Democratic Party emphasizes healthcare access and climate policy, while "
        "the Republican Party emphasizes tax reduction and deregulation.";
    ctx.candidate_bios =
        "Joe Biden served as a senator and vice president. Donald Trump is a "
        "businessman who served one presidential term.";
  }
  return ctx;
}

}  // namespace testutil
