#pragma once

#include <string>

#include "shredql/ast.hpp"

namespace shredql {

/// Parses a .nrc program (grammar in docs/grammar.md). Source positions are
/// retained on AST nodes for error reporting.
NrcProgram parseProgram(const std::string& source);

/// Parses a single expression (used by tests and the REPL-style tooling).
ExprPtr parseExpr(const std::string& source);

}  // namespace shredql
