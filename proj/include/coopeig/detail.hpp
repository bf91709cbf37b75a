#pragma once

#include <string>

#include "coopeig/model.hpp"

namespace coopeig::detail {

// Builds a ProblemSpec from the JSON "problem" block, with the same strict
// schema the batch runner applies. Throws ValidationError on schema errors.
ProblemSpec parse_problem_block(const std::string& problem_json);

}  // namespace coopeig::detail
