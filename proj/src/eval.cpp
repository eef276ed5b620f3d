#include "shredql/eval.hpp"

#include <algorithm>
#include <map>

namespace shredql {
namespace {

Value evalPrim(PrimOp op, const Value& a, const Value& b, SourcePos pos) {
  switch (op) {
    case PrimOp::Add:
    case PrimOp::Sub:
    case PrimOp::Mul: {
      if (a.kind() == Value::Kind::Int && b.kind() == Value::Kind::Int) {
        std::int64_t x = a.asInt(), y = b.asInt();
        switch (op) {
          case PrimOp::Add: return Value::ofInt(x + y);
          case PrimOp::Sub: return Value::ofInt(x - y);
          default: return Value::ofInt(x * y);
        }
      }
      double x = a.numeric(), y = b.numeric();
      switch (op) {
        case PrimOp::Add: return Value::ofReal(x + y);
        case PrimOp::Sub: return Value::ofReal(x - y);
        default: return Value::ofReal(x * y);
      }
    }
    case PrimOp::Eq:
      return Value::ofBool(Value::cmp(a, b) == 0);
    case PrimOp::Ne:
      return Value::ofBool(Value::cmp(a, b) != 0);
    case PrimOp::Lt:
      return Value::ofBool(Value::cmp(a, b) < 0);
    case PrimOp::Le:
      return Value::ofBool(Value::cmp(a, b) <= 0);
    case PrimOp::And:
      return Value::ofBool(a.asBool() && b.asBool());
    case PrimOp::Or:
      return Value::ofBool(a.asBool() || b.asBool());
    case PrimOp::Not:
      return Value::ofBool(!a.asBool());
  }
  fail("TypeMismatch", "bad primop", pos);
}

class Evaluator {
 public:
  explicit Evaluator(const ValueEnv& inputs) : env_(inputs) {}

  Value eval(const ExprPtr& e) {
    switch (e->kind) {
      case NrcExpr::Kind::EmptyBag:
        return Value::emptyBag();
      case NrcExpr::Kind::Singleton:
        return Value::bag({eval(e->e0)});
      case NrcExpr::Kind::Get: {
        Value b = eval(e->e0);
        const auto& elems = b.bagElems();
        if (elems.size() == 1 && elems[0].second == 1) return elems[0].first;
        // Empty or non-singleton: the type's default value.
        if (!e->type)
          fail("TypeMismatch", "get() on untyped expression", e->pos);
        return defaultValue(e->type);
      }
      case NrcExpr::Kind::Const:
        return e->constant;
      case NrcExpr::Kind::Var: {
        auto it = env_.find(e->name);
        if (it == env_.end())
          fail("UnboundVariable", "no binding for '" + e->name + "'", e->pos);
        return it->second;
      }
      case NrcExpr::Kind::Project:
        return eval(e->e0).attr(e->name);
      case NrcExpr::Kind::TupleCtor: {
        Value::TupleAttrs attrs;
        for (const auto& [n, f] : e->fields) attrs.emplace_back(n, eval(f));
        return Value::tuple(std::move(attrs));
      }
      case NrcExpr::Kind::ForUnion: {
        Value src = eval(e->e0);
        BagBuilder out;
        for (const auto& [v, count] : src.bagElems()) {
          auto saved = bind(e->name, v);
          Value body = eval(e->e1);
          unbind(e->name, saved);
          out.addAll(body, count);
        }
        return out.build();
      }
      case NrcExpr::Kind::BagUnion: {
        BagBuilder out;
        out.addAll(eval(e->e0));
        out.addAll(eval(e->e1));
        return out.build();
      }
      case NrcExpr::Kind::Let: {
        Value bound = eval(e->e0);
        auto saved = bind(e->name, bound);
        Value body = eval(e->e1);
        unbind(e->name, saved);
        return body;
      }
      case NrcExpr::Kind::Prim: {
        if (e->op == PrimOp::Not) return evalPrim(e->op, eval(e->e0), Value(), e->pos);
        // Short-circuit booleans.
        if (e->op == PrimOp::And) {
          Value a = eval(e->e0);
          return a.asBool() ? eval(e->e1) : Value::ofBool(false);
        }
        if (e->op == PrimOp::Or) {
          Value a = eval(e->e0);
          return a.asBool() ? Value::ofBool(true) : eval(e->e1);
        }
        return evalPrim(e->op, eval(e->e0), eval(e->e1), e->pos);
      }
      case NrcExpr::Kind::IfThen:
        return eval(e->e0).asBool() ? eval(e->e1) : Value::emptyBag();
      case NrcExpr::Kind::IfThenElse:
        return eval(e->e0).asBool() ? eval(e->e1) : eval(e->e2);
      case NrcExpr::Kind::Dedup: {
        Value b = eval(e->e0);
        Value::BagElems out;
        for (const auto& [v, c] : b.bagElems()) out.emplace_back(v, 1);
        return Value::bagCounted(std::move(out));
      }
      case NrcExpr::Kind::GroupBy:
        return evalGroupBy(e);
      case NrcExpr::Kind::SumBy:
        return evalSumBy(e);
      case NrcExpr::Kind::MatLookup: {
        Value lbl = eval(e->e0);
        auto it = env_.find(e->name);
        if (it == env_.end())
          fail("MissingInput", "no dictionary '" + e->name + "'", e->pos);
        BagBuilder out;
        for (const auto& [row, c] : it->second.bagElems()) {
          const Value* rl = row.findAttr("label");
          if (!rl || Value::cmp(*rl, lbl) != 0) continue;
          Value::TupleAttrs payload;
          for (const auto& [n, v] : row.tupleAttrs())
            if (n != "label") payload.emplace_back(n, v);
          out.add(Value::tuple(std::move(payload)), c);
        }
        return out.build();
      }
      case NrcExpr::Kind::NewLabel: {
        std::vector<Value> key;
        for (const auto& [n, f] : e->fields) key.push_back(eval(f));
        return Value::label(e->labelTag, std::move(key));
      }
      case NrcExpr::Kind::Lookup:
      case NrcExpr::Kind::DictTreeUnion:
      case NrcExpr::Kind::Lambda:
        fail("UnresolvedDictionary",
             "symbolic dictionary form reached the evaluator", e->pos);
    }
    fail("TypeMismatch", "unreachable", e->pos);
  }

 private:
  Value evalGroupBy(const ExprPtr& e) {
    Value src = eval(e->e0);
    // key tuple -> (bag of residual tuples)
    std::map<Value, BagBuilder> groups;
    for (const auto& [row, c] : src.bagElems()) {
      Value::TupleAttrs keyAttrs, rest;
      for (const auto& k : e->keys) keyAttrs.emplace_back(k, row.attr(k));
      for (const auto& [n, v] : row.tupleAttrs())
        if (std::find(e->keys.begin(), e->keys.end(), n) == e->keys.end())
          rest.emplace_back(n, v);
      groups[Value::tuple(std::move(keyAttrs))].add(Value::tuple(std::move(rest)),
                                                    c);
    }
    BagBuilder out;
    for (auto& [key, bag] : groups) {
      Value::TupleAttrs attrs = key.tupleAttrs();
      attrs.emplace_back("group", bag.build());
      out.add(Value::tuple(std::move(attrs)));
    }
    return out.build();
  }

  Value evalSumBy(const ExprPtr& e) {
    Value src = eval(e->e0);
    std::map<Value, std::vector<Value>> sums;  // key -> per-value-attr totals
    for (const auto& [row, c] : src.bagElems()) {
      Value::TupleAttrs keyAttrs;
      for (const auto& k : e->keys) keyAttrs.emplace_back(k, row.attr(k));
      auto& acc = sums[Value::tuple(std::move(keyAttrs))];
      if (acc.empty()) {
        for (const auto& v : e->values) {
          const Value& x = row.attr(v);
          acc.push_back(x.kind() == Value::Kind::Int ? Value::ofInt(0)
                                                     : Value::ofReal(0.0));
        }
      }
      for (std::size_t i = 0; i < e->values.size(); ++i) {
        const Value& x = row.attr(e->values[i]);
        if (acc[i].kind() == Value::Kind::Int)
          acc[i] = Value::ofInt(acc[i].asInt() + x.asInt() * c);
        else
          acc[i] = Value::ofReal(acc[i].asReal() + x.numeric() * c);
      }
    }
    BagBuilder out;
    for (auto& [key, totals] : sums) {
      Value::TupleAttrs attrs = key.tupleAttrs();
      for (std::size_t i = 0; i < e->values.size(); ++i)
        attrs.emplace_back(e->values[i], totals[i]);
      out.add(Value::tuple(std::move(attrs)));
    }
    return out.build();
  }

  std::optional<Value> bind(const std::string& name, const Value& v) {
    std::optional<Value> saved;
    auto it = env_.find(name);
    if (it != env_.end()) saved = it->second;
    env_[name] = v;
    return saved;
  }

  void unbind(const std::string& name, const std::optional<Value>& saved) {
    if (saved)
      env_[name] = *saved;
    else
      env_.erase(name);
  }

  ValueEnv env_;
};

}  // namespace

Value evalReference(const NrcProgram& program, const ValueEnv& inputs) {
  ValueEnv all = evalReferenceAll(program, inputs);
  return all.at(program.output().var);
}

ValueEnv evalReferenceAll(const NrcProgram& program, const ValueEnv& inputs) {
  ValueEnv env = inputs;
  ValueEnv results;
  for (const auto& a : program.assignments) {
    Evaluator ev(env);
    Value v = ev.eval(a.expr);
    env[a.var] = v;
    results[a.var] = v;
  }
  return results;
}

Value evalExpr(const ExprPtr& expr, const ValueEnv& env) {
  Evaluator ev(env);
  return ev.eval(expr);
}

}  // namespace shredql
