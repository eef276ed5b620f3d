#pragma once

#include "shredql/plan.hpp"

namespace shredql {

struct UnnestedAssignment {
  std::string var;
  PlanPtr plan;
  TypePtr outType;       // the NRC bag type of this assignment
  bool scalarElement;    // bag of scalars (single output column "value")
};

struct UnnestedProgram {
  std::vector<UnnestedAssignment> assignments;
  PlanCatalog catalog;  // inputs plus one entry per assignment
};

/// Translates each typechecked assignment into a plan tree. The algorithm
/// walks from the outermost level inward: at the root level joins and unnests
/// are inner variants, below it the outer variants; a set of grouping
/// attributes (ids + output attributes of the enclosing levels) prefixes the
/// key of every nest operator. Correlated loops over top-level bags whose
/// body only uses the loop variable are decorrelated (group the right side by
/// its join key, then left-outer-join), which is the shape the appendix plans
/// take for flat-to-nested queries.
/// Errors: UnsupportedPattern for non-equality correlations.
UnnestedProgram unnestProgram(const NrcProgram& typed, const SchemaEnv& env);

/// Single-expression entry point used by tests.
UnnestedAssignment unnestExpr(const ExprPtr& typedExpr, const SchemaEnv& env,
                              const std::string& outVar = "Q");

}  // namespace shredql
