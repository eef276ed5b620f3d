#pragma once

#include "shredql/ast.hpp"

namespace shredql {

using ValueEnv = std::map<std::string, Value>;

/// Single-threaded reference evaluator with standard NRC bag semantics. This
/// is the correctness oracle; it never runs in parallel by contract.
/// Programs must be typechecked first (get() needs its element type).
Value evalReference(const NrcProgram& program, const ValueEnv& inputs);

/// Evaluates every assignment and returns all results (program order).
ValueEnv evalReferenceAll(const NrcProgram& program, const ValueEnv& inputs);

Value evalExpr(const ExprPtr& expr, const ValueEnv& env);

}  // namespace shredql
