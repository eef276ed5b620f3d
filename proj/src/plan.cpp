#include "shredql/plan.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace shredql {

// ---- scalar expressions -----------------------------------------------------

namespace {
std::shared_ptr<ScalarExpr> mk(ScalarExpr::Kind k) {
  auto e = std::make_shared<ScalarExpr>();
  e->kind = k;
  return e;
}
}  // namespace

SExpr ScalarExpr::mkAttr(std::string name) {
  auto e = mk(Kind::Attr);
  e->attr = std::move(name);
  return e;
}

SExpr ScalarExpr::mkConst(Value v) {
  auto e = mk(Kind::Const);
  e->constant = std::move(v);
  return e;
}

SExpr ScalarExpr::mkBin(PrimOp op, SExpr a, SExpr b) {
  auto e = mk(Kind::Bin);
  e->op = op;
  e->a = std::move(a);
  e->b = std::move(b);
  return e;
}

SExpr ScalarExpr::mkNot(SExpr a) {
  auto e = mk(Kind::Bin);
  e->op = PrimOp::Not;
  e->a = std::move(a);
  return e;
}

SExpr ScalarExpr::mkGet(SExpr bag, Value defaultVal, TypePtr elemType) {
  auto e = mk(Kind::GetElem);
  e->a = std::move(bag);
  e->defaultVal = std::move(defaultVal);
  e->valueType = std::move(elemType);
  return e;
}

SExpr ScalarExpr::mkTuple(std::vector<std::pair<std::string, SExpr>> fields) {
  auto e = mk(Kind::MkTuple);
  e->fields = std::move(fields);
  return e;
}

SExpr ScalarExpr::mkBag(std::vector<SExpr> elems, TypePtr elemType) {
  auto e = mk(Kind::MkBag);
  e->elems = std::move(elems);
  e->valueType = std::move(elemType);
  return e;
}

SExpr ScalarExpr::mkLabel(int tag, std::vector<SExpr> args) {
  auto e = mk(Kind::MkLabel);
  e->labelTag = tag;
  e->args = std::move(args);
  return e;
}

SExpr ScalarExpr::mkFreshId() { return mk(Kind::FreshId); }

std::string ScalarExpr::str() const {
  switch (kind) {
    case Kind::Attr: return attr;
    case Kind::Const: return constant.str();
    case Kind::Bin:
      if (op == PrimOp::Not) return "!(" + a->str() + ")";
      return "(" + a->str() + " " + primOpName(op) + " " + b->str() + ")";
    case Kind::GetElem: return "get(" + a->str() + ")";
    case Kind::MkTuple: {
      std::string s = "<";
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) s += ", ";
        s += fields[i].first + " := " + fields[i].second->str();
      }
      return s + ">";
    }
    case Kind::MkBag: {
      std::string s = "{";
      for (std::size_t i = 0; i < elems.size(); ++i) {
        if (i) s += ", ";
        s += elems[i]->str();
      }
      return s + "}";
    }
    case Kind::MkLabel: {
      std::string s = "Label" + std::to_string(labelTag) + "(";
      for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) s += ", ";
        s += args[i]->str();
      }
      return s + ")";
    }
    case Kind::FreshId: return "freshid()";
  }
  return "?";
}

namespace {

// Generated column names: unnester-made ids end with "ID", collision renames
// contain '$'. Structural equality matches them via a consistent bijection.
bool isGeneratedName(const std::string& n) {
  return n.find('$') != std::string::npos ||
         (n.size() > 2 && n.compare(n.size() - 2, 2, "ID") == 0);
}

bool attrNameEqual(const std::string& a, const std::string& b,
                   std::map<std::string, std::string>* attrMap) {
  if (!attrMap) return a == b;
  auto it = attrMap->find(a);
  if (it != attrMap->end()) return it->second == b;
  if (a == b) return true;
  if (!isGeneratedName(a) || !isGeneratedName(b)) return false;
  for (const auto& [k, v] : *attrMap)
    if (v == b) return false;
  (*attrMap)[a] = b;
  return true;
}

}  // namespace

bool scalarExprEqual(const SExpr& a, const SExpr& b,
                     std::map<std::string, std::string>* attrMap) {
  if (!a || !b) return !a && !b;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case ScalarExpr::Kind::Attr:
      return attrNameEqual(a->attr, b->attr, attrMap);
    case ScalarExpr::Kind::Const:
      return Value::cmp(a->constant, b->constant) == 0;
    case ScalarExpr::Kind::Bin:
      return a->op == b->op && scalarExprEqual(a->a, b->a, attrMap) &&
             (a->op == PrimOp::Not || scalarExprEqual(a->b, b->b, attrMap));
    case ScalarExpr::Kind::GetElem:
      return scalarExprEqual(a->a, b->a, attrMap);
    case ScalarExpr::Kind::MkTuple: {
      if (a->fields.size() != b->fields.size()) return false;
      for (std::size_t i = 0; i < a->fields.size(); ++i)
        if (a->fields[i].first != b->fields[i].first ||
            !scalarExprEqual(a->fields[i].second, b->fields[i].second, attrMap))
          return false;
      return true;
    }
    case ScalarExpr::Kind::MkBag: {
      if (a->elems.size() != b->elems.size()) return false;
      for (std::size_t i = 0; i < a->elems.size(); ++i)
        if (!scalarExprEqual(a->elems[i], b->elems[i], attrMap)) return false;
      return true;
    }
    case ScalarExpr::Kind::MkLabel: {
      if (a->args.size() != b->args.size()) return false;
      for (std::size_t i = 0; i < a->args.size(); ++i)
        if (!scalarExprEqual(a->args[i], b->args[i], attrMap)) return false;
      return true;
    }
    case ScalarExpr::Kind::FreshId:
      return true;
  }
  return false;
}

// ---- node constructors ------------------------------------------------------

namespace {
std::shared_ptr<PlanNode> node(PlanNode::Kind k) {
  auto n = std::make_shared<PlanNode>();
  n->kind = k;
  return n;
}
}  // namespace

PlanPtr scan(std::string var) {
  auto n = node(PlanNode::Kind::Scan);
  n->inputVar = std::move(var);
  return n;
}

PlanPtr select(SExpr pred, PlanPtr child, std::vector<std::string> nullifyAttrs) {
  auto n = node(PlanNode::Kind::Select);
  n->pred = std::move(pred);
  n->left = std::move(child);
  n->nullifyAttrs = std::move(nullifyAttrs);
  return n;
}

PlanPtr project(std::vector<ProjCol> cols, PlanPtr child) {
  auto n = node(PlanNode::Kind::Project);
  n->cols = std::move(cols);
  n->left = std::move(child);
  return n;
}

PlanPtr join(std::vector<std::string> leftKeys, std::vector<std::string> rightKeys,
             PlanPtr l, PlanPtr r) {
  auto n = node(PlanNode::Kind::Join);
  n->leftKeys = std::move(leftKeys);
  n->rightKeys = std::move(rightKeys);
  n->left = std::move(l);
  n->right = std::move(r);
  return n;
}

PlanPtr leftOuterJoin(std::vector<std::string> leftKeys,
                      std::vector<std::string> rightKeys, PlanPtr l, PlanPtr r) {
  auto n = node(PlanNode::Kind::LeftOuterJoin);
  n->leftKeys = std::move(leftKeys);
  n->rightKeys = std::move(rightKeys);
  n->left = std::move(l);
  n->right = std::move(r);
  return n;
}

PlanPtr unnest(std::string bagAttr,
               std::vector<std::pair<std::string, std::string>> elemCols,
               PlanPtr child) {
  auto n = node(PlanNode::Kind::Unnest);
  n->bagAttr = std::move(bagAttr);
  n->elemCols = std::move(elemCols);
  n->left = std::move(child);
  return n;
}

PlanPtr outerUnnest(std::string bagAttr,
                    std::vector<std::pair<std::string, std::string>> elemCols,
                    std::string idAttr, PlanPtr child, bool keepBagCol) {
  auto n = node(PlanNode::Kind::OuterUnnest);
  n->bagAttr = std::move(bagAttr);
  n->elemCols = std::move(elemCols);
  n->idAttr = std::move(idAttr);
  n->keepBagCol = keepBagCol;
  n->left = std::move(child);
  return n;
}

PlanPtr nestSum(std::vector<std::string> key, SExpr value, std::string sumAs,
                PlanPtr child, std::vector<std::string> presence,
                std::vector<std::string> carried, bool localOnly) {
  auto n = node(PlanNode::Kind::Nest);
  n->agg = AggKind::Sum;
  n->key = std::move(key);
  n->sumValue = std::move(value);
  n->sumAs = std::move(sumAs);
  n->presence = std::move(presence);
  n->carried = std::move(carried);
  n->localOnly = localOnly;
  n->left = std::move(child);
  return n;
}

PlanPtr nestBag(std::vector<std::string> key, std::vector<ProjCol> value,
                std::string bagAttr, PlanPtr child,
                std::vector<std::string> presence,
                std::vector<std::string> carried) {
  auto n = node(PlanNode::Kind::Nest);
  n->agg = AggKind::Bag;
  n->key = std::move(key);
  n->bagValue = std::move(value);
  n->bagAttr = std::move(bagAttr);
  n->presence = std::move(presence);
  n->carried = std::move(carried);
  n->left = std::move(child);
  return n;
}

PlanPtr cogroup(std::vector<std::string> leftKeys,
                std::vector<std::string> rightKeys, std::vector<ProjCol> value,
                std::string bagAttr, PlanPtr l, PlanPtr r) {
  auto n = node(PlanNode::Kind::Cogroup);
  n->leftKeys = std::move(leftKeys);
  n->rightKeys = std::move(rightKeys);
  n->bagValue = std::move(value);
  n->bagAttr = std::move(bagAttr);
  n->left = std::move(l);
  n->right = std::move(r);
  return n;
}

PlanPtr bagToDict(std::string labelAttr, PlanPtr child) {
  auto n = node(PlanNode::Kind::BagToDict);
  n->labelAttr = std::move(labelAttr);
  n->left = std::move(child);
  return n;
}

PlanPtr matLookup(std::string dictVar, std::string labelAttr, bool outer,
                  std::vector<std::pair<std::string, std::string>> matCols,
                  PlanPtr child) {
  auto n = node(PlanNode::Kind::MatLookup);
  n->inputVar = std::move(dictVar);
  n->labelAttr = std::move(labelAttr);
  n->outerLookup = outer;
  n->matCols = std::move(matCols);
  n->left = std::move(child);
  return n;
}

PlanPtr dedupOp(PlanPtr child) {
  auto n = node(PlanNode::Kind::Dedup);
  n->left = std::move(child);
  return n;
}

PlanPtr labelDomain(std::string sourceVar, std::string labelAttr) {
  auto n = node(PlanNode::Kind::LabelDomain);
  n->inputVar = std::move(sourceVar);
  n->labelAttr = std::move(labelAttr);
  return n;
}

PlanPtr unionAll(PlanPtr l, PlanPtr r) {
  auto n = node(PlanNode::Kind::UnionAll);
  n->left = std::move(l);
  n->right = std::move(r);
  return n;
}

// ---- schemas ----------------------------------------------------------------

int PlanSchema::find(const std::string& name) const {
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i].first == name) return static_cast<int>(i);
  return -1;
}

const TypePtr& PlanSchema::type(const std::string& name) const {
  int i = find(name);
  if (i < 0) fail("PlanTypeError", "no column '" + name + "' in plan schema");
  return cols[i].second;
}

std::vector<std::string> PlanSchema::names() const {
  std::vector<std::string> out;
  out.reserve(cols.size());
  for (const auto& [n, t] : cols) out.push_back(n);
  return out;
}

PlanSchema PlanCatalog::schemaOfBag(const TypePtr& bagT,
                                    std::vector<std::vector<std::string>> uniqueKeys) {
  if (!bagT->isBag()) fail("PlanTypeError", "input is not a bag: " + bagT->str());
  PlanSchema s;
  if (bagT->element->isTuple()) {
    for (const auto& [n, t] : bagT->element->attrs) s.cols.emplace_back(n, t);
  } else {
    s.cols.emplace_back("value", bagT->element);
  }
  s.uniqueKeys = std::move(uniqueKeys);
  return s;
}

void PlanCatalog::addBag(const std::string& var, const TypePtr& bagT,
                         std::vector<std::vector<std::string>> uniqueKeys) {
  inputs[var] = schemaOfBag(bagT, std::move(uniqueKeys));
}

TypePtr PlanTyper::exprType(const SExpr& e, const PlanSchema& in) {
  switch (e->kind) {
    case ScalarExpr::Kind::Attr:
      return in.type(e->attr);
    case ScalarExpr::Kind::Const:
      switch (e->constant.kind()) {
        case Value::Kind::Int: return intType();
        case Value::Kind::Real: return realType();
        case Value::Kind::String: return stringType();
        case Value::Kind::Bool: return boolType();
        case Value::Kind::Date: return dateType();
        case Value::Kind::Bag:
          if (!e->valueType) fail("PlanTypeError", "untyped bag constant");
          return bagType(e->valueType);
        default: fail("PlanTypeError", "bad plan constant");
      }
    case ScalarExpr::Kind::Bin: {
      if (e->op == PrimOp::Not) return boolType();
      TypePtr a = exprType(e->a, in);
      TypePtr b = exprType(e->b, in);
      switch (e->op) {
        case PrimOp::Add:
        case PrimOp::Sub:
        case PrimOp::Mul: {
          bool real = (a->isScalar() && a->scalar == ScalarKind::Real) ||
                      (b->isScalar() && b->scalar == ScalarKind::Real);
          return real ? realType() : intType();
        }
        default:
          return boolType();
      }
    }
    case ScalarExpr::Kind::GetElem:
      return e->valueType;
    case ScalarExpr::Kind::MkTuple: {
      std::vector<std::pair<std::string, TypePtr>> attrs;
      for (const auto& [n, f] : e->fields) attrs.emplace_back(n, exprType(f, in));
      return tupleType(std::move(attrs));
    }
    case ScalarExpr::Kind::MkBag:
      return bagType(e->valueType);
    case ScalarExpr::Kind::MkLabel:
      return labelType(e->labelTag);
    case ScalarExpr::Kind::FreshId:
      return intType();
  }
  fail("PlanTypeError", "unreachable expr type");
}

const PlanSchema& PlanTyper::schema(const PlanPtr& plan) {
  auto it = cache_.find(plan.get());
  if (it != cache_.end()) return it->second;
  PlanSchema s = compute(plan);
  return cache_.emplace(plan.get(), std::move(s)).first->second;
}

namespace {

void requireCols(const PlanSchema& s, const std::vector<std::string>& names,
                 const char* what) {
  for (const auto& n : names)
    if (!s.has(n))
      fail("PlanTypeError", std::string(what) + " references missing column '" +
                                n + "'");
}

bool keepsUniqueKey(const std::vector<std::string>& key,
                    const std::vector<std::string>& available) {
  for (const auto& k : key)
    if (std::find(available.begin(), available.end(), k) == available.end())
      return false;
  return true;
}

}  // namespace

PlanSchema PlanTyper::compute(const PlanPtr& plan) {
  switch (plan->kind) {
    case PlanNode::Kind::Scan: {
      auto it = catalog_.inputs.find(plan->inputVar);
      if (it == catalog_.inputs.end())
        fail("MissingInput", "no input '" + plan->inputVar + "'");
      return it->second;
    }
    case PlanNode::Kind::Select: {
      PlanSchema s = schema(plan->left);
      TypePtr t = exprType(plan->pred, s);
      if (!t->isScalar() || t->scalar != ScalarKind::Bool)
        fail("PlanTypeError", "select predicate must be bool");
      requireCols(s, plan->nullifyAttrs, "select nullify");
      return s;
    }
    case PlanNode::Kind::Project: {
      const PlanSchema in = schema(plan->left);
      PlanSchema out;
      for (const auto& c : plan->cols)
        out.cols.emplace_back(c.name, exprType(c.expr, in));
      for (const auto& uk : in.uniqueKeys)
        if (keepsUniqueKey(uk, out.names())) out.uniqueKeys.push_back(uk);
      return out;
    }
    case PlanNode::Kind::Join:
    case PlanNode::Kind::LeftOuterJoin: {
      const PlanSchema l = schema(plan->left);
      const PlanSchema r = schema(plan->right);
      requireCols(l, plan->leftKeys, "join left key");
      requireCols(r, plan->rightKeys, "join right key");
      if (plan->leftKeys.size() != plan->rightKeys.size())
        fail("PlanTypeError", "join key arity mismatch");
      PlanSchema out = l;
      for (const auto& [n, t] : r.cols) {
        std::string name = n;
        for (const auto& [from, to] : plan->rightRenames)
          if (from == n) name = to;
        if (out.has(name))
          fail("PlanTypeError", "join would duplicate column '" + name + "'");
        out.cols.emplace_back(name, t);
      }
      out.uniqueKeys.clear();
      return out;
    }
    case PlanNode::Kind::Unnest:
    case PlanNode::Kind::OuterUnnest: {
      const PlanSchema in = schema(plan->left);
      const TypePtr& bagT = in.type(plan->bagAttr);
      if (!bagT->isBag())
        fail("PlanTypeError", "unnest over non-bag column '" + plan->bagAttr + "'");
      PlanSchema out;
      for (const auto& [n, t] : in.cols)
        if (n != plan->bagAttr ||
            (plan->kind == PlanNode::Kind::OuterUnnest && plan->keepBagCol))
          out.cols.emplace_back(n, t);
      if (plan->kind == PlanNode::Kind::OuterUnnest)
        out.cols.emplace_back(plan->idAttr, intType());
      for (const auto& [col, attr] : plan->elemCols) {
        if (out.has(col))
          fail("PlanTypeError", "unnest would duplicate column '" + col + "'");
        if (attr.empty()) {
          out.cols.emplace_back(col, bagT->element);
        } else {
          const TypePtr* t = bagT->element->findAttr(attr);
          if (!t)
            fail("PlanTypeError", "unnest element has no attribute '" + attr + "'");
          out.cols.emplace_back(col, *t);
        }
      }
      return out;
    }
    case PlanNode::Kind::Nest: {
      const PlanSchema in = schema(plan->left);
      requireCols(in, plan->key, "nest key");
      requireCols(in, plan->presence, "nest presence");
      requireCols(in, plan->carried, "nest carried");
      PlanSchema out;
      for (const auto& k : plan->key) out.cols.emplace_back(k, in.type(k));
      for (const auto& c : plan->carried) out.cols.emplace_back(c, in.type(c));
      if (plan->agg == AggKind::Sum) {
        TypePtr vt = exprType(plan->sumValue, in);
        if (!vt->isScalar() ||
            (vt->scalar != ScalarKind::Int && vt->scalar != ScalarKind::Real))
          fail("PlanTypeError", "sum aggregate value must be numeric");
        out.cols.emplace_back(plan->sumAs, vt);
      } else if (plan->bagScalarElem) {
        out.cols.emplace_back(plan->bagAttr,
                              bagType(exprType(plan->bagValue.at(0).expr, in)));
      } else {
        std::vector<std::pair<std::string, TypePtr>> elem;
        for (const auto& c : plan->bagValue)
          elem.emplace_back(c.name, exprType(c.expr, in));
        out.cols.emplace_back(plan->bagAttr, bagType(tupleType(std::move(elem))));
      }
      out.uniqueKeys.push_back(plan->key);
      return out;
    }
    case PlanNode::Kind::Cogroup: {
      const PlanSchema l = schema(plan->left);
      const PlanSchema r = schema(plan->right);
      requireCols(l, plan->leftKeys, "cogroup left key");
      requireCols(r, plan->rightKeys, "cogroup right key");
      PlanSchema combined = l;
      for (const auto& [n, t] : r.cols) {
        std::string name = n;
        for (const auto& [from, to] : plan->rightRenames)
          if (from == n) name = to;
        if (combined.has(name))
          fail("PlanTypeError", "cogroup would duplicate column '" + name + "'");
        combined.cols.emplace_back(name, t);
      }
      PlanSchema out = l;
      if (plan->bagScalarElem) {
        out.cols.emplace_back(
            plan->bagAttr, bagType(exprType(plan->bagValue.at(0).expr, combined)));
      } else {
        std::vector<std::pair<std::string, TypePtr>> elem;
        for (const auto& c : plan->bagValue)
          elem.emplace_back(c.name, exprType(c.expr, combined));
        out.cols.emplace_back(plan->bagAttr,
                              bagType(tupleType(std::move(elem))));
      }
      out.uniqueKeys.clear();
      return out;
    }
    case PlanNode::Kind::BagToDict: {
      PlanSchema s = schema(plan->left);
      if (!s.has(plan->labelAttr))
        fail("PlanTypeError",
             "BagToDict missing label column '" + plan->labelAttr + "'");
      return s;
    }
    case PlanNode::Kind::MatLookup: {
      const PlanSchema in = schema(plan->left);
      auto it = catalog_.inputs.find(plan->inputVar);
      if (it == catalog_.inputs.end())
        fail("MissingInput", "no dictionary '" + plan->inputVar + "'");
      const PlanSchema& dict = it->second;
      if (!in.has(plan->labelAttr))
        fail("PlanTypeError",
             "MatLookup missing label column '" + plan->labelAttr + "'");
      PlanSchema out = in;
      for (const auto& [dictAttr, outCol] : plan->matCols) {
        if (out.has(outCol))
          fail("PlanTypeError",
               "MatLookup would duplicate column '" + outCol + "'");
        out.cols.emplace_back(outCol, dict.type(dictAttr));
      }
      out.uniqueKeys.clear();
      return out;
    }
    case PlanNode::Kind::Dedup: {
      PlanSchema s = schema(plan->left);
      s.uniqueKeys.push_back(s.names());
      return s;
    }
    case PlanNode::Kind::LabelDomain: {
      auto it = catalog_.inputs.find(plan->inputVar);
      if (it == catalog_.inputs.end())
        fail("MissingInput", "no input '" + plan->inputVar + "'");
      PlanSchema out;
      out.cols.emplace_back("label", it->second.type(plan->labelAttr));
      out.uniqueKeys.push_back({"label"});
      return out;
    }
    case PlanNode::Kind::UnionAll: {
      const PlanSchema l = schema(plan->left);
      const PlanSchema r = schema(plan->right);
      if (l.cols.size() != r.cols.size())
        fail("PlanTypeError", "union arity mismatch");
      for (std::size_t i = 0; i < l.cols.size(); ++i)
        if (l.cols[i].first != r.cols[i].first)
          fail("PlanTypeError", "union column mismatch: '" + l.cols[i].first +
                                    "' vs '" + r.cols[i].first + "'");
      PlanSchema out = l;
      out.uniqueKeys.clear();
      return out;
    }
  }
  fail("PlanTypeError", "unreachable plan kind");
}

// ---- printing ----------------------------------------------------------------

namespace {

std::string joinNames(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) s += ", ";
    s += names[i];
  }
  return s;
}

std::string colsText(const std::vector<ProjCol>& cols) {
  std::string s;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) s += ", ";
    const auto& c = cols[i];
    if (c.expr->kind == ScalarExpr::Kind::Attr && c.expr->attr == c.name)
      s += c.name;
    else
      s += c.name + " := " + c.expr->str();
  }
  return s;
}

void printNode(const PlanPtr& p, int depth, std::string& out) {
  out.append(static_cast<std::size_t>(depth) * 2, ' ');
  switch (p->kind) {
    case PlanNode::Kind::Scan:
      out += "scan " + p->inputVar;
      break;
    case PlanNode::Kind::Select:
      out += "select " + p->pred->str();
      if (!p->nullifyAttrs.empty())
        out += " nullify=[" + joinNames(p->nullifyAttrs) + "]";
      break;
    case PlanNode::Kind::Project:
      out += "project [" + colsText(p->cols) + "]";
      break;
    case PlanNode::Kind::Join:
      out += "join [" + joinNames(p->leftKeys) + "] = [" +
             joinNames(p->rightKeys) + "]";
      break;
    case PlanNode::Kind::LeftOuterJoin:
      out += "leftouterjoin [" + joinNames(p->leftKeys) + "] = [" +
             joinNames(p->rightKeys) + "]";
      break;
    case PlanNode::Kind::Unnest:
      out += "unnest " + p->bagAttr;
      break;
    case PlanNode::Kind::OuterUnnest:
      out += "outerunnest " + p->bagAttr + " id=" + p->idAttr;
      break;
    case PlanNode::Kind::Nest:
      if (p->agg == AggKind::Sum) {
        out += "nest [sum] key=[" + joinNames(p->key) + "] value=" +
               p->sumValue->str() + " as " + p->sumAs;
      } else {
        out += "nest [bag] key=[" + joinNames(p->key) + "] value=[" +
               colsText(p->bagValue) + "] as " + p->bagAttr;
      }
      if (!p->presence.empty())
        out += " presence=[" + joinNames(p->presence) + "]";
      if (!p->carried.empty()) out += " carried=[" + joinNames(p->carried) + "]";
      if (p->localOnly) out += " local";
      break;
    case PlanNode::Kind::Cogroup:
      out += "cogroup [" + joinNames(p->leftKeys) + "] = [" +
             joinNames(p->rightKeys) + "] value=[" + colsText(p->bagValue) +
             "] as " + p->bagAttr;
      break;
    case PlanNode::Kind::BagToDict:
      out += "bagtodict label=" + p->labelAttr;
      break;
    case PlanNode::Kind::MatLookup:
      out += std::string("matlookup ") + (p->outerLookup ? "" : "inner ") +
             p->inputVar + " on " + p->labelAttr;
      break;
    case PlanNode::Kind::Dedup:
      out += "dedup";
      break;
    case PlanNode::Kind::LabelDomain:
      out += "labeldomain " + p->inputVar + "." + p->labelAttr;
      break;
    case PlanNode::Kind::UnionAll:
      out += "union";
      break;
  }
  out += "\n";
  if (p->left) printNode(p->left, depth + 1, out);
  if (p->right) printNode(p->right, depth + 1, out);
}

}  // namespace

std::string printPlan(const PlanPtr& plan) {
  std::string out;
  printNode(plan, 0, out);
  return out;
}

void visitPlan(const PlanPtr& plan,
               const std::function<void(const PlanPtr&)>& fn) {
  if (!plan) return;
  fn(plan);
  visitPlan(plan->left, fn);
  visitPlan(plan->right, fn);
}

// ---- structural equality ------------------------------------------------------

namespace {

struct EqCtx {
  PlanEqualOptions opts;
  std::map<std::string, std::string> attrMap;  // generated-name bijection

  bool names(const std::vector<std::string>& a, const std::vector<std::string>& b,
             bool ordered = false) {
    if (a.size() != b.size()) return false;
    if (ordered) {
      for (std::size_t i = 0; i < a.size(); ++i)
        if (!attrNameEqual(a[i], b[i], &attrMap)) return false;
      return true;
    }
    // Order-insensitive: match exact/mapped names first, then pair leftovers.
    std::vector<std::string> ra;
    std::multiset<std::string> bset(b.begin(), b.end());
    for (const auto& n : a) {
      auto mapped = attrMap.find(n);
      std::string want = mapped != attrMap.end() ? mapped->second : n;
      auto it = bset.find(want);
      if (it != bset.end())
        bset.erase(it);
      else
        ra.push_back(n);
    }
    std::vector<std::string> rb(bset.begin(), bset.end());
    if (ra.size() != rb.size()) return false;
    for (std::size_t i = 0; i < ra.size(); ++i)
      if (!attrNameEqual(ra[i], rb[i], &attrMap)) return false;
    return true;
  }

  bool cols(const std::vector<ProjCol>& a, const std::vector<ProjCol>& b) {
    if (a.size() != b.size()) return false;
    std::vector<bool> used(b.size(), false);
    for (const auto& ca : a) {
      bool found = false;
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (used[j]) continue;
        auto probe = attrMap;
        if (attrNameEqual(ca.name, b[j].name, &probe) &&
            scalarExprEqual(ca.expr, b[j].expr, &probe)) {
          attrMap = std::move(probe);
          used[j] = true;
          found = true;
          break;
        }
      }
      if (!found) return false;
    }
    return true;
  }
};

bool equalRec(const PlanPtr& a, const PlanPtr& b, EqCtx& ctx) {
  if (!a || !b) return !a && !b;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case PlanNode::Kind::Scan:
      if (!ctx.opts.ignoreScanNames && a->inputVar != b->inputVar) return false;
      break;
    case PlanNode::Kind::Select:
      if (!scalarExprEqual(a->pred, b->pred, &ctx.attrMap)) return false;
      break;
    case PlanNode::Kind::Project:
      if (!ctx.cols(a->cols, b->cols)) return false;
      break;
    case PlanNode::Kind::Join:
    case PlanNode::Kind::LeftOuterJoin:
      if (!ctx.names(a->leftKeys, b->leftKeys, true) ||
          !ctx.names(a->rightKeys, b->rightKeys, true))
        return false;
      break;
    case PlanNode::Kind::Unnest:
    case PlanNode::Kind::OuterUnnest:
      if (!attrNameEqual(a->bagAttr, b->bagAttr, &ctx.attrMap)) return false;
      break;
    case PlanNode::Kind::Nest:
      if (a->agg != b->agg || !ctx.names(a->key, b->key)) return false;
      if (a->agg == AggKind::Sum) {
        if (!scalarExprEqual(a->sumValue, b->sumValue, &ctx.attrMap))
          return false;
      } else {
        if (!ctx.cols(a->bagValue, b->bagValue)) return false;
      }
      if (a->localOnly != b->localOnly) return false;
      break;
    case PlanNode::Kind::Cogroup:
      if (!ctx.names(a->leftKeys, b->leftKeys, true) ||
          !ctx.names(a->rightKeys, b->rightKeys, true) ||
          !ctx.cols(a->bagValue, b->bagValue))
        return false;
      break;
    case PlanNode::Kind::BagToDict:
      if (!attrNameEqual(a->labelAttr, b->labelAttr, &ctx.attrMap)) return false;
      break;
    case PlanNode::Kind::MatLookup:
      if (a->outerLookup != b->outerLookup ||
          (!ctx.opts.ignoreScanNames && a->inputVar != b->inputVar) ||
          !attrNameEqual(a->labelAttr, b->labelAttr, &ctx.attrMap))
        return false;
      break;
    case PlanNode::Kind::Dedup:
    case PlanNode::Kind::UnionAll:
      break;
    case PlanNode::Kind::LabelDomain:
      if (!ctx.opts.ignoreScanNames && a->inputVar != b->inputVar) return false;
      break;
  }
  return equalRec(a->left, b->left, ctx) && equalRec(a->right, b->right, ctx);
}

}  // namespace

bool planEqualStructural(const PlanPtr& a, const PlanPtr& b,
                         PlanEqualOptions opts) {
  EqCtx ctx;
  ctx.opts = opts;
  return equalRec(a, b, ctx);
}

}  // namespace shredql
