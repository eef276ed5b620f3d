#include "shredql/typecheck.hpp"

#include <algorithm>

namespace shredql {
namespace {

bool isNumeric(const TypePtr& t) {
  return t->isScalar() &&
         (t->scalar == ScalarKind::Int || t->scalar == ScalarKind::Real);
}

class Checker {
 public:
  explicit Checker(std::map<std::string, TypePtr> bindings)
      : env_(std::move(bindings)) {}

  TypePtr check(const ExprPtr& e) {
    TypePtr t = infer(e);
    e->type = t;
    return t;
  }

 private:
  TypePtr lookup(const std::string& name, SourcePos pos) {
    auto it = env_.find(name);
    if (it == env_.end())
      fail("UnboundVariable", "unbound variable '" + name + "'", pos);
    return it->second;
  }

  TypePtr infer(const ExprPtr& e) {
    switch (e->kind) {
      case NrcExpr::Kind::EmptyBag:
        return e->declaredType;
      case NrcExpr::Kind::Singleton: {
        TypePtr el = check(e->e0);
        if (!el->isTuple() && !el->isScalar())
          fail("TypeMismatch",
               "singleton element must be a tuple or scalar, got " + el->str(),
               e->pos);
        return bagType(el);
      }
      case NrcExpr::Kind::Get: {
        TypePtr t = check(e->e0);
        if (!t->isBag())
          fail("TypeMismatch", "get() expects a bag, got " + t->str(), e->pos);
        return t->element;
      }
      case NrcExpr::Kind::Const:
        switch (e->constant.kind()) {
          case Value::Kind::Int: return intType();
          case Value::Kind::Real: return realType();
          case Value::Kind::String: return stringType();
          case Value::Kind::Bool: return boolType();
          case Value::Kind::Date: return dateType();
          default:
            fail("TypeMismatch", "unsupported literal", e->pos);
        }
      case NrcExpr::Kind::Var:
        return lookup(e->name, e->pos);
      case NrcExpr::Kind::Project: {
        TypePtr t = check(e->e0);
        if (!t->isTuple())
          fail("TypeMismatch", "projection on non-tuple " + t->str(), e->pos);
        if (const TypePtr* a = t->findAttr(e->name)) return *a;
        fail("UnknownAttribute", "no attribute '" + e->name + "' in " + t->str(),
             e->pos);
      }
      case NrcExpr::Kind::TupleCtor: {
        std::vector<std::pair<std::string, TypePtr>> attrs;
        for (const auto& [n, f] : e->fields) attrs.emplace_back(n, check(f));
        return tupleType(std::move(attrs));
      }
      case NrcExpr::Kind::ForUnion: {
        TypePtr src = check(e->e0);
        if (!src->isBag())
          fail("TypeMismatch", "for-in source must be a bag, got " + src->str(),
               e->pos);
        auto saved = bind(e->name, src->element);
        TypePtr body = check(e->e1);
        unbind(e->name, saved);
        if (!body->isBag())
          fail("TypeMismatch", "for-union body must be a bag, got " + body->str(),
               e->pos);
        return body;
      }
      case NrcExpr::Kind::BagUnion: {
        TypePtr a = check(e->e0), b = check(e->e1);
        if (!a->isBag() || !typeEqual(a, b))
          fail("TypeMismatch",
               "bag union over " + a->str() + " and " + b->str(), e->pos);
        return a;
      }
      case NrcExpr::Kind::Let: {
        TypePtr bound = check(e->e0);
        auto saved = bind(e->name, bound);
        TypePtr body = check(e->e1);
        unbind(e->name, saved);
        return body;
      }
      case NrcExpr::Kind::Prim:
        return checkPrim(e);
      case NrcExpr::Kind::IfThen: {
        TypePtr c = check(e->e0);
        if (!c->isScalar() || c->scalar != ScalarKind::Bool)
          fail("TypeMismatch", "if condition must be bool, got " + c->str(),
               e->pos);
        TypePtr t = check(e->e1);
        if (!t->isBag())
          fail("TypeMismatch",
               "if-then without else must produce a bag, got " + t->str(),
               e->pos);
        return t;
      }
      case NrcExpr::Kind::IfThenElse: {
        TypePtr c = check(e->e0);
        if (!c->isScalar() || c->scalar != ScalarKind::Bool)
          fail("TypeMismatch", "if condition must be bool, got " + c->str(),
               e->pos);
        TypePtr a = check(e->e1), b = check(e->e2);
        if (!typeEqual(a, b))
          fail("TypeMismatch",
               "if branches differ: " + a->str() + " vs " + b->str(), e->pos);
        return a;
      }
      case NrcExpr::Kind::Dedup: {
        TypePtr t = check(e->e0);
        if (!t->isBag())
          fail("TypeMismatch", "dedup expects a bag, got " + t->str(), e->pos);
        if (!t->isFlatBag())
          fail("DedupNotFlat", "the input to dedup must be a flat bag, got " +
                                   t->str(), e->pos);
        return t;
      }
      case NrcExpr::Kind::GroupBy: {
        TypePtr t = check(e->e0);
        if (!t->isBag() || !t->element->isTuple())
          fail("TypeMismatch", "groupBy expects a bag of tuples, got " + t->str(),
               e->pos);
        std::vector<std::pair<std::string, TypePtr>> keyAttrs, restAttrs;
        splitKeys(t, e->keys, e->pos, keyAttrs, restAttrs);
        auto out = keyAttrs;
        out.emplace_back("group", bagType(tupleType(restAttrs)));
        return bagType(tupleType(std::move(out)));
      }
      case NrcExpr::Kind::SumBy: {
        TypePtr t = check(e->e0);
        if (!t->isBag() || !t->element->isTuple())
          fail("TypeMismatch", "sumBy expects a bag of tuples, got " + t->str(),
               e->pos);
        std::vector<std::pair<std::string, TypePtr>> keyAttrs, restAttrs;
        splitKeys(t, e->keys, e->pos, keyAttrs, restAttrs);
        auto out = keyAttrs;
        for (const auto& v : e->values) {
          const TypePtr* vt = t->element->findAttr(v);
          if (!vt)
            fail("UnknownAttribute", "sumBy value '" + v + "' not in input",
                 e->pos);
          if (!isNumeric(*vt))
            fail("TypeMismatch", "sumBy value '" + v + "' must be numeric",
                 e->pos);
          out.emplace_back(v, *vt);
        }
        return bagType(tupleType(std::move(out)));
      }
      case NrcExpr::Kind::Lookup: {
        fail("TypeMismatch", "symbolic Lookup outside shredding pipeline",
             e->pos);
      }
      case NrcExpr::Kind::MatLookup: {
        TypePtr lbl = check(e->e0);
        if (!lbl->isLabel())
          fail("TypeMismatch", "MatLookup expects a label argument", e->pos);
        TypePtr dict = lookup(e->name, e->pos);
        if (!dict->isBag() || !dict->element->isTuple())
          fail("TypeMismatch", "MatLookup dictionary must be a bag of tuples",
               e->pos);
        // Result: the dictionary payload (all attributes except `label`).
        std::vector<std::pair<std::string, TypePtr>> attrs;
        for (const auto& [n, t] : dict->element->attrs)
          if (n != "label") attrs.emplace_back(n, t);
        return bagType(tupleType(std::move(attrs)));
      }
      case NrcExpr::Kind::NewLabel: {
        for (const auto& [n, f] : e->fields) check(f);
        return labelType(e->labelTag);
      }
      case NrcExpr::Kind::DictTreeUnion:
      case NrcExpr::Kind::Lambda:
        fail("TypeMismatch", "symbolic dictionary form outside shredding",
             e->pos);
    }
    fail("TypeMismatch", "unreachable", e->pos);
  }

  TypePtr checkPrim(const ExprPtr& e) {
    if (e->op == PrimOp::Not) {
      TypePtr a = check(e->e0);
      if (!a->isScalar() || a->scalar != ScalarKind::Bool)
        fail("TypeMismatch", "! expects bool, got " + a->str(), e->pos);
      return boolType();
    }
    TypePtr a = check(e->e0), b = check(e->e1);
    switch (e->op) {
      case PrimOp::Add:
      case PrimOp::Sub:
      case PrimOp::Mul: {
        if (!isNumeric(a) || !isNumeric(b))
          fail("TypeMismatch", primOpName(e->op) + " expects numeric operands",
               e->pos);
        bool real = a->scalar == ScalarKind::Real || b->scalar == ScalarKind::Real;
        return real ? realType() : intType();
      }
      case PrimOp::Eq:
      case PrimOp::Ne:
      case PrimOp::Lt:
      case PrimOp::Le: {
        if (!a->isScalar() || !b->isScalar())
          fail("TypeMismatch", "comparison expects scalars", e->pos);
        bool ok = a->scalar == b->scalar || (isNumeric(a) && isNumeric(b));
        if (!ok)
          fail("TypeMismatch",
               "comparison over " + a->str() + " and " + b->str(), e->pos);
        return boolType();
      }
      case PrimOp::And:
      case PrimOp::Or: {
        auto isBool = [](const TypePtr& t) {
          return t->isScalar() && t->scalar == ScalarKind::Bool;
        };
        if (!isBool(a) || !isBool(b))
          fail("TypeMismatch", primOpName(e->op) + " expects bool operands",
               e->pos);
        return boolType();
      }
      default:
        fail("TypeMismatch", "bad primop", e->pos);
    }
  }

  void splitKeys(const TypePtr& bag, const std::vector<std::string>& keys,
                 SourcePos pos,
                 std::vector<std::pair<std::string, TypePtr>>& keyAttrs,
                 std::vector<std::pair<std::string, TypePtr>>& restAttrs) {
    for (const auto& k : keys) {
      const TypePtr* kt = bag->element->findAttr(k);
      if (!kt)
        fail("UnknownAttribute", "grouping key '" + k + "' not in input", pos);
      if (!(*kt)->isScalar() && !(*kt)->isLabel())
        fail("GroupKeyNotFlat", "grouping key '" + k + "' must be flat", pos);
      keyAttrs.emplace_back(k, *kt);
    }
    for (const auto& [n, t] : bag->element->attrs)
      if (std::find(keys.begin(), keys.end(), n) == keys.end())
        restAttrs.emplace_back(n, t);
  }

  std::optional<TypePtr> bind(const std::string& name, TypePtr t) {
    std::optional<TypePtr> saved;
    auto it = env_.find(name);
    if (it != env_.end()) saved = it->second;
    env_[name] = std::move(t);
    return saved;
  }

  void unbind(const std::string& name, const std::optional<TypePtr>& saved) {
    if (saved)
      env_[name] = *saved;
    else
      env_.erase(name);
  }

  std::map<std::string, TypePtr> env_;
};

}  // namespace

std::vector<TypePtr> typecheck(NrcProgram& program, const SchemaEnv& env) {
  std::map<std::string, TypePtr> bindings;
  for (const auto& [name, schema] : env) bindings[name] = schema.type;
  std::vector<TypePtr> out;
  for (auto& a : program.assignments) {
    Checker c(bindings);
    TypePtr t = c.check(a.expr);
    bindings[a.var] = t;
    out.push_back(t);
  }
  return out;
}

TypePtr typecheckExpr(const ExprPtr& expr,
                      const std::map<std::string, TypePtr>& bindings) {
  Checker c(bindings);
  return c.check(expr);
}

}  // namespace shredql
