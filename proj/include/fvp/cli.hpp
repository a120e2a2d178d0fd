#pragma once

#include <string>

#include "fvp/bench.hpp"
#include "fvp/expr.hpp"

namespace fvp {

// EBNF of the expression language, as printed by --help.
const std::string& expr_grammar_help();

// Builds a problem from a JSON spec document. Throws UsageError on schema
// violations, including unknown keys, and SyntaxError on bad expressions.
BenchmarkProblem problem_from_json(const std::string& text);

// Returns 0 on success, 1 on solver failure, 2 on usage or spec errors.
int cli_main(int argc, char** argv);

}  // namespace fvp
