#include "shredql/ast.hpp"

namespace shredql {

std::string primOpName(PrimOp op) {
  switch (op) {
    case PrimOp::Add: return "+";
    case PrimOp::Sub: return "-";
    case PrimOp::Mul: return "*";
    case PrimOp::Eq: return "==";
    case PrimOp::Ne: return "!=";
    case PrimOp::Lt: return "<";
    case PrimOp::Le: return "<=";
    case PrimOp::And: return "&&";
    case PrimOp::Or: return "||";
    case PrimOp::Not: return "!";
  }
  return "?";
}

ExprPtr makeExpr(NrcExpr::Kind kind, SourcePos pos) {
  auto e = std::make_shared<NrcExpr>();
  e->kind = kind;
  e->pos = pos;
  return e;
}

ExprPtr cloneExpr(const ExprPtr& e) {
  if (!e) return nullptr;
  auto c = std::make_shared<NrcExpr>(*e);
  c->e0 = cloneExpr(e->e0);
  c->e1 = cloneExpr(e->e1);
  c->e2 = cloneExpr(e->e2);
  for (auto& [n, f] : c->fields) f = cloneExpr(f);
  return c;
}

ExprPtr substituteVar(const ExprPtr& e, const std::string& var,
                      const ExprPtr& replacement) {
  if (!e) return nullptr;
  if (e->kind == NrcExpr::Kind::Var)
    return e->name == var ? cloneExpr(replacement) : e;

  // Binders shadow. ForUnion/Let bind e->name in the body (e1); Lambda binds
  // e->name in its body (e0). The source/bound expression is never shadowed.
  bool shadows = (e->kind == NrcExpr::Kind::ForUnion ||
                  e->kind == NrcExpr::Kind::Let ||
                  e->kind == NrcExpr::Kind::Lambda) &&
                 e->name == var;

  auto c = std::make_shared<NrcExpr>(*e);
  if (e->kind == NrcExpr::Kind::Lambda) {
    c->e0 = shadows ? cloneExpr(e->e0) : substituteVar(e->e0, var, replacement);
  } else {
    c->e0 = substituteVar(e->e0, var, replacement);
    if (shadows) {
      c->e1 = cloneExpr(e->e1);
    } else {
      c->e1 = substituteVar(e->e1, var, replacement);
    }
    c->e2 = shadows ? cloneExpr(e->e2) : substituteVar(e->e2, var, replacement);
  }
  for (auto& [n, f] : c->fields)
    f = shadows ? cloneExpr(f) : substituteVar(f, var, replacement);
  return c;
}

}  // namespace shredql
