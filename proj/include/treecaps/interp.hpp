#pragma once

#include <string>
#include <vector>

#include "treecaps/ast.hpp"

namespace treecaps {

enum class TrapKind { None, StepBudget, DivByZero, OutOfBounds, BadProgram };

// Output of one interpreter run: printed integers plus the entry function's
// return value, or a trap. Traps are legal deterministic outcomes.
struct Trace {
  std::vector<long long> prints;
  long long exit_value = 0;
  TrapKind trap = TrapKind::None;

  bool operator==(const Trace&) const = default;
  std::string to_string() const;
};

inline constexpr long long kDefaultStepBudget = 1'000'000;

// Number of input integers the entry function consumes (scalars count 1,
// array params count their declared size).
int input_arity(const AstTree& tree);

// Runs the first function of the tree with parameters bound from `input`.
// Throws std::invalid_argument on arity mismatch or non-program trees.
Trace interpret(const AstTree& tree, const std::vector<long long>& input,
                long long step_budget = kDefaultStepBudget);

}  // namespace treecaps
