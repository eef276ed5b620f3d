#pragma once

#include "shredql/ast.hpp"

namespace shredql {

/// Annotates every subexpression with its type and returns the output type of
/// each assignment (in program order). Rejects ill-typed programs with
/// TypeMismatch / DedupNotFlat / GroupKeyNotFlat / UnknownAttribute /
/// UnboundVariable errors.
std::vector<TypePtr> typecheck(NrcProgram& program, const SchemaEnv& env);

/// Typechecks a single expression under explicit variable bindings.
TypePtr typecheckExpr(const ExprPtr& expr,
                      const std::map<std::string, TypePtr>& bindings);

}  // namespace shredql
