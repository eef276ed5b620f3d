#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "shredql/types.hpp"
#include "shredql/value.hpp"

namespace shredql {

struct NrcExpr;
using ExprPtr = std::shared_ptr<NrcExpr>;

enum class PrimOp {
  Add, Sub, Mul,
  Eq, Ne, Lt, Le,
  And, Or,
  Not,  // unary
};

std::string primOpName(PrimOp op);

/// Source-language expressions, plus the shredded-dialect forms produced by
/// the shredding pipeline (Lookup, MatLookup, NewLabel, DictTreeUnion,
/// Lambda). Types are filled in by the typechecker.
struct NrcExpr {
  enum class Kind {
    EmptyBag,      // declared bag type in `declaredType`
    Singleton,     // {e0}
    Get,           // get(e0)
    Const,         // literal in `constant`
    Var,           // name
    Project,       // e0.attr
    TupleCtor,     // <a := e, ...> in `fields`
    ForUnion,      // for var in e0 union e1
    BagUnion,      // e0 ++ e1
    Let,           // let var := e0 in e1
    Prim,          // e0 op e1  (Not: unary on e0)
    IfThen,        // if e0 then e1            (bag-typed)
    IfThenElse,    // if e0 then e1 else e2
    Dedup,         // dedup(e0)
    GroupBy,       // groupBy[keys](e0)
    SumBy,         // sumBy[keys; values](e0)
    // shredded dialect
    Lookup,        // lookup of symbolic dict `dictRef` at label e0
    MatLookup,     // lookup of materialized dict var `name` at label e0
    NewLabel,      // fresh label with tag `labelTag` capturing `fields` exprs
    DictTreeUnion, // union of two symbolic dicts (dictRef/dictRef2), Lookup target
    Lambda,        // λ var . e0 (symbolic dictionary body)
  };

  Kind kind;
  SourcePos pos;

  ExprPtr e0, e1, e2;
  std::string name;  // Var/Let/ForUnion var, Project attr, MatLookup dict var
  Value constant;
  TypePtr declaredType;  // EmptyBag
  PrimOp op = PrimOp::Add;
  std::vector<std::pair<std::string, ExprPtr>> fields;  // TupleCtor, NewLabel captures
  std::vector<std::string> keys;    // GroupBy/SumBy
  std::vector<std::string> values;  // SumBy
  int labelTag = 0;                 // NewLabel
  std::shared_ptr<struct SymbolicDict> dictRef, dictRef2;  // Lookup/DictTreeUnion

  TypePtr type;  // set by typecheck
};

ExprPtr makeExpr(NrcExpr::Kind kind, SourcePos pos = {});

struct Assignment {
  std::string var;
  ExprPtr expr;
  SourcePos pos;
};

/// A program is an ordered list of assignments; the final assignment is the
/// program output. Each assigned var is visible to later assignments.
struct NrcProgram {
  std::vector<Assignment> assignments;

  const Assignment& output() const {
    if (assignments.empty()) fail("SyntaxError", "empty program");
    return assignments.back();
  }
};

/// Named input schemas (and optional uniqueness facts used by the optimizer).
struct InputSchema {
  TypePtr type;                                  // a bag type
  std::vector<std::vector<std::string>> uniqueKeys;  // e.g. {{"pid"}}
};

using SchemaEnv = std::map<std::string, InputSchema>;

ExprPtr cloneExpr(const ExprPtr& e);

/// Substitutes `replacement` for free occurrences of `var`.
ExprPtr substituteVar(const ExprPtr& e, const std::string& var,
                      const ExprPtr& replacement);

}  // namespace shredql
