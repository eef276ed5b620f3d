#include "shredql/plan_eval.hpp"

#include <algorithm>
#include <unordered_map>

namespace shredql {

std::shared_ptr<const RowSchema> RowSchema::make(std::vector<std::string> names) {
  auto s = std::make_shared<RowSchema>();
  s->names = std::move(names);
  for (std::size_t i = 0; i < s->names.size(); ++i)
    s->index[s->names[i]] = static_cast<int>(i);
  return s;
}

RowBag valueToRows(const Value& bag, const TypePtr& bagType) {
  RowBag out;
  PlanSchema ps = PlanCatalog::schemaOfBag(bagType);
  out.schema = RowSchema::make(ps.names());
  for (const auto& [v, count] : bag.bagElems()) {
    Row row;
    if (bagType->element->isTuple()) {
      for (const auto& [n, t] : bagType->element->attrs) row.cells.push_back(v.attr(n));
    } else {
      row.cells.push_back(v);
    }
    for (std::int64_t i = 0; i < count; ++i) out.rows.push_back(row);
  }
  return out;
}

Value rowsToValue(const RowBag& rows, const PlanSchema& schema) {
  return rowsToValue(rows, schema,
                     schema.cols.size() == 1 && schema.cols[0].first == "value");
}

Value rowsToValue(const RowBag& rows, const PlanSchema& schema,
                  bool scalarElement) {
  BagBuilder out;
  const bool scalarElem = scalarElement;
  for (const auto& row : rows.rows) {
    if (scalarElem) {
      out.add(row.cells[0]);
      continue;
    }
    Value::TupleAttrs attrs;
    for (std::size_t i = 0; i < schema.cols.size(); ++i) {
      const auto& [name, type] = schema.cols[i];
      Value v = row.cells[i];
      if (v.isNull()) {
        if (type->isBag())
          v = Value::emptyBag();  // outer-operator cast at the boundary
        else
          fail("PlanTypeError", "NULL scalar '" + name + "' in plan output");
      }
      attrs.emplace_back(name, std::move(v));
    }
    out.add(Value::tuple(std::move(attrs)));
  }
  return out.build();
}

Value ExprEval::eval(const SExpr& e, const Row& row) const {
  switch (e->kind) {
    case ScalarExpr::Kind::Attr: {
      int i = schema_->find(e->attr);
      if (i < 0) fail("PlanTypeError", "row has no column '" + e->attr + "'");
      return row.cells[static_cast<std::size_t>(i)];
    }
    case ScalarExpr::Kind::Const:
      return e->constant;
    case ScalarExpr::Kind::Bin: {
      Value a = eval(e->a, row);
      if (e->op == PrimOp::Not)
        return a.isNull() ? a : Value::ofBool(!a.asBool());
      Value b = eval(e->b, row);
      if (a.isNull() || b.isNull()) return Value::null();
      switch (e->op) {
        case PrimOp::Add:
        case PrimOp::Sub:
        case PrimOp::Mul: {
          if (a.kind() == Value::Kind::Int && b.kind() == Value::Kind::Int) {
            std::int64_t x = a.asInt(), y = b.asInt();
            return Value::ofInt(e->op == PrimOp::Add   ? x + y
                                : e->op == PrimOp::Sub ? x - y
                                                       : x * y);
          }
          double x = a.numeric(), y = b.numeric();
          return Value::ofReal(e->op == PrimOp::Add   ? x + y
                               : e->op == PrimOp::Sub ? x - y
                                                      : x * y);
        }
        case PrimOp::Eq: return Value::ofBool(Value::cmp(a, b) == 0);
        case PrimOp::Ne: return Value::ofBool(Value::cmp(a, b) != 0);
        case PrimOp::Lt: return Value::ofBool(Value::cmp(a, b) < 0);
        case PrimOp::Le: return Value::ofBool(Value::cmp(a, b) <= 0);
        case PrimOp::And: return Value::ofBool(a.asBool() && b.asBool());
        case PrimOp::Or: return Value::ofBool(a.asBool() || b.asBool());
        default: fail("PlanTypeError", "bad binary op");
      }
    }
    case ScalarExpr::Kind::GetElem: {
      Value bag = eval(e->a, row);
      if (bag.isNull()) return e->defaultVal;
      const auto& elems = bag.bagElems();
      if (elems.size() == 1 && elems[0].second == 1) return elems[0].first;
      return e->defaultVal;
    }
    case ScalarExpr::Kind::MkTuple: {
      Value::TupleAttrs attrs;
      for (const auto& [n, f] : e->fields) attrs.emplace_back(n, eval(f, row));
      return Value::tuple(std::move(attrs));
    }
    case ScalarExpr::Kind::MkBag: {
      BagBuilder b;
      for (const auto& el : e->elems) b.add(eval(el, row));
      return b.build();
    }
    case ScalarExpr::Kind::MkLabel: {
      std::vector<Value> key;
      for (const auto& a : e->args) key.push_back(eval(a, row));
      return Value::label(e->labelTag, std::move(key));
    }
    case ScalarExpr::Kind::FreshId:
      return Value::ofInt(static_cast<std::int64_t>((*fresh_)++));
  }
  fail("PlanTypeError", "unreachable expr eval");
}

std::vector<Value> rowKey(const Row& row, const std::vector<int>& idx) {
  std::vector<Value> key;
  key.reserve(idx.size());
  for (int i : idx) key.push_back(row.cells[static_cast<std::size_t>(i)]);
  return key;
}

namespace {

struct KeyHash {
  std::size_t operator()(const std::vector<Value>& k) const {
    std::uint64_t h = 0x9e37;
    for (const auto& v : k) h = v.hash(h);
    return static_cast<std::size_t>(h);
  }
};

struct KeyEq {
  bool operator()(const std::vector<Value>& a,
                  const std::vector<Value>& b) const {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (Value::cmp(a[i], b[i]) != 0) return false;
    return true;
  }
};

bool anyNull(const std::vector<Value>& key) {
  for (const auto& v : key)
    if (v.isNull()) return true;
  return false;
}

std::vector<int> indexesOf(const RowSchema& s, const std::vector<std::string>& names,
                           const char* what) {
  std::vector<int> idx;
  idx.reserve(names.size());
  for (const auto& n : names) {
    int i = s.find(n);
    if (i < 0)
      fail("PlanTypeError", std::string(what) + ": missing column '" + n + "'");
    idx.push_back(i);
  }
  return idx;
}

}  // namespace

std::vector<Row> nestRows(const PlanNode& nest, const RowSchema& inSchema,
                          const std::vector<Row>& rows,
                          const RowSchema& outSchema,
                          const std::vector<TypePtr>& outTypes) {
  (void)outSchema;
  const std::vector<int> keyIdx = indexesOf(inSchema, nest.key, "nest key");
  const std::vector<int> presIdx =
      indexesOf(inSchema, nest.presence, "nest presence");
  const std::vector<int> carryIdx =
      indexesOf(inSchema, nest.carried, "nest carried");

  std::uint64_t fresh = 0;
  ExprEval ev(std::make_shared<RowSchema>(inSchema), &fresh);

  // Bag-aggregate element types (for NULL-bag casting inside contributions).
  std::vector<bool> valueIsBag;
  bool sumIsReal = false;
  if (nest.agg == AggKind::Bag) {
    const TypePtr& bagT = outTypes.back();
    if (nest.bagScalarElem)
      valueIsBag.push_back(false);
    else
      for (const auto& [n, t] : bagT->element->attrs)
        valueIsBag.push_back(t->isBag());
  } else {
    sumIsReal = outTypes.back()->scalar == ScalarKind::Real;
  }

  struct Group {
    std::vector<const Row*> rows;
  };
  std::unordered_map<std::vector<Value>, Group, KeyHash, KeyEq> groups;
  std::vector<const std::vector<Value>*> order;  // stable output order
  for (const auto& row : rows) {
    auto key = rowKey(row, keyIdx);
    auto [it, inserted] = groups.try_emplace(std::move(key));
    if (inserted) order.push_back(&it->first);
    it->second.rows.push_back(&row);
  }

  std::vector<Row> out;
  out.reserve(groups.size());
  for (const auto* keyPtr : order) {
    const Group& g = groups.at(*keyPtr);

    auto contributes = [&](const Row& r) {
      if (!nest.presence.empty()) {
        for (int i : presIdx)
          if (!r.cells[static_cast<std::size_t>(i)].isNull()) return true;
        return false;
      }
      return true;  // default mode decides per value below
    };

    bool allPhantom = !nest.presence.empty();
    if (allPhantom)
      for (const Row* r : g.rows)
        if (contributes(*r)) {
          allPhantom = false;
          break;
        }

    Value aggResult;
    if (nest.agg == AggKind::Sum) {
      bool realSum = sumIsReal;
      double dacc = 0.0;
      std::int64_t iacc = 0;
      if (!allPhantom) {
        for (const Row* r : g.rows) {
          if (!contributes(*r)) continue;
          Value v = ev.eval(nest.sumValue, *r);
          if (v.isNull()) continue;  // NULL casts to 0
          if (realSum)
            dacc += v.numeric();
          else
            iacc += v.asInt();
        }
      }
      aggResult = realSum ? Value::ofReal(dacc) : Value::ofInt(iacc);
    } else {
      BagBuilder bag;
      if (!allPhantom) {
        for (const Row* r : g.rows) {
          if (!contributes(*r)) continue;
          bool allValueNull = nest.presence.empty();
          std::vector<Value> vals;
          vals.reserve(nest.bagValue.size());
          for (const auto& c : nest.bagValue) {
            Value v = ev.eval(c.expr, *r);
            if (!v.isNull()) allValueNull = false;
            vals.push_back(std::move(v));
          }
          if (nest.presence.empty() && allValueNull) continue;
          if (nest.bagScalarElem) {
            if (!vals[0].isNull()) bag.add(std::move(vals[0]));
            continue;
          }
          Value::TupleAttrs attrs;
          for (std::size_t i = 0; i < vals.size(); ++i) {
            Value v = std::move(vals[i]);
            if (v.isNull() && valueIsBag[i]) v = Value::emptyBag();
            attrs.emplace_back(nest.bagValue[i].name, std::move(v));
          }
          bag.add(Value::tuple(std::move(attrs)));
        }
      }
      aggResult = bag.build();
    }

    // A group of NULL-extended outer tuples keeps one output row per input
    // row so that multiplicities of empty outer tuples are preserved.
    std::size_t copies = allPhantom ? g.rows.size() : 1;
    for (std::size_t c = 0; c < copies; ++c) {
      const Row& sample = *g.rows[c];
      Row outRow;
      outRow.cells = *keyPtr;
      for (int i : carryIdx) {
        Value v = sample.cells[static_cast<std::size_t>(i)];
        outRow.cells.push_back(std::move(v));
      }
      outRow.cells.push_back(aggResult);
      out.push_back(std::move(outRow));
    }
  }
  return out;
}

namespace {

class PlanInterp {
 public:
  PlanInterp(const PlanCatalog& catalog, const RowInputs& inputs)
      : typer_(catalog), inputs_(inputs) {}

  RowBag eval(const PlanPtr& p) {
    const PlanSchema& outPs = typer_.schema(p);
    RowSchemaPtr outSchema = RowSchema::make(outPs.names());
    switch (p->kind) {
      case PlanNode::Kind::Scan: {
        auto it = inputs_.find(p->inputVar);
        if (it == inputs_.end())
          fail("MissingInput", "no input bag '" + p->inputVar + "'");
        return it->second;
      }
      case PlanNode::Kind::Select: {
        RowBag in = eval(p->left);
        ExprEval ev(in.schema, &fresh_);
        RowBag out{in.schema, {}};
        if (p->nullifyAttrs.empty()) {
          for (auto& row : in.rows) {
            Value v = ev.eval(p->pred, row);
            if (!v.isNull() && v.asBool()) out.rows.push_back(std::move(row));
          }
        } else {
          std::vector<int> nullify;
          for (const auto& n : p->nullifyAttrs) nullify.push_back(in.schema->find(n));
          for (auto& row : in.rows) {
            Value v = ev.eval(p->pred, row);
            if (v.isNull() || !v.asBool())
              for (int i : nullify) row.cells[static_cast<std::size_t>(i)] = Value::null();
            out.rows.push_back(std::move(row));
          }
        }
        return out;
      }
      case PlanNode::Kind::Project: {
        RowBag in = eval(p->left);
        ExprEval ev(in.schema, &fresh_);
        RowBag out{outSchema, {}};
        out.rows.reserve(in.rows.size());
        for (const auto& row : in.rows) {
          Row r;
          r.cells.reserve(p->cols.size());
          for (const auto& c : p->cols) r.cells.push_back(ev.eval(c.expr, row));
          out.rows.push_back(std::move(r));
        }
        return out;
      }
      case PlanNode::Kind::Join:
      case PlanNode::Kind::LeftOuterJoin: {
        RowBag l = eval(p->left);
        RowBag r = eval(p->right);
        auto lIdx = keyIdx(*l.schema, p->leftKeys);
        auto rIdx = keyIdx(*r.schema, p->rightKeys);
        std::unordered_map<std::vector<Value>, std::vector<const Row*>, KeyHash,
                           KeyEq>
            built;
        for (const auto& row : r.rows) {
          auto key = rowKey(row, rIdx);
          if (anyNull(key)) continue;  // NULL keys never match
          built[std::move(key)].push_back(&row);
        }
        const std::size_t rWidth = r.schema->names.size();
        RowBag out{outSchema, {}};
        for (const auto& lrow : l.rows) {
          auto key = rowKey(lrow, lIdx);
          const std::vector<const Row*>* matches = nullptr;
          if (!anyNull(key)) {
            auto it = built.find(key);
            if (it != built.end()) matches = &it->second;
          }
          if (matches) {
            for (const Row* rrow : *matches) {
              Row o = lrow;
              o.cells.insert(o.cells.end(), rrow->cells.begin(), rrow->cells.end());
              out.rows.push_back(std::move(o));
            }
          } else if (p->kind == PlanNode::Kind::LeftOuterJoin) {
            Row o = lrow;
            o.cells.resize(o.cells.size() + rWidth, Value::null());
            out.rows.push_back(std::move(o));
          }
        }
        return out;
      }
      case PlanNode::Kind::Unnest:
      case PlanNode::Kind::OuterUnnest: {
        RowBag in = eval(p->left);
        const bool outer = p->kind == PlanNode::Kind::OuterUnnest;
        int bagIdx = in.schema->find(p->bagAttr);
        RowBag out{outSchema, {}};
        std::vector<int> keepIdx;
        for (std::size_t i = 0; i < in.schema->names.size(); ++i)
          if (static_cast<int>(i) != bagIdx || (outer && p->keepBagCol))
            keepIdx.push_back(static_cast<int>(i));
        for (const auto& row : in.rows) {
          const Value& bag = row.cells[static_cast<std::size_t>(bagIdx)];
          Row base;
          for (int i : keepIdx) base.cells.push_back(row.cells[static_cast<std::size_t>(i)]);
          const bool emptyish = bag.isNull() || bag.bagElems().empty();
          if (emptyish) {
            if (outer) {
              Row o = base;
              o.cells.push_back(Value::null());  // id slot: NULL extension
              for (std::size_t k = 0; k < p->elemCols.size(); ++k)
                o.cells.push_back(Value::null());
              out.rows.push_back(std::move(o));
            }
            continue;
          }
          Value id = Value::ofInt(static_cast<std::int64_t>(fresh_++));
          for (const auto& [elem, count] : bag.bagElems()) {
            Row o = base;
            if (outer) o.cells.push_back(id);
            for (const auto& [col, attr] : p->elemCols)
              o.cells.push_back(attr.empty() ? elem : elem.attr(attr));
            for (std::int64_t c = 0; c < count; ++c) out.rows.push_back(o);
          }
        }
        return out;
      }
      case PlanNode::Kind::Nest: {
        RowBag in = eval(p->left);
        std::vector<TypePtr> outTypes;
        for (const auto& [n, t] : outPs.cols) outTypes.push_back(t);
        RowBag out{outSchema, nestRows(*p, *in.schema, in.rows, *outSchema, outTypes)};
        return out;
      }
      case PlanNode::Kind::Cogroup: {
        RowBag l = eval(p->left);
        RowBag r = eval(p->right);
        auto lIdx = keyIdx(*l.schema, p->leftKeys);
        auto rIdx = keyIdx(*r.schema, p->rightKeys);
        // Value expressions see left columns followed by (renamed) right ones.
        std::vector<std::string> combined = l.schema->names;
        for (const auto& n : r.schema->names) {
          std::string name = n;
          for (const auto& [from, to] : p->rightRenames)
            if (from == n) name = to;
          combined.push_back(name);
        }
        RowSchemaPtr combinedSchema = RowSchema::make(combined);
        ExprEval ev(combinedSchema, &fresh_);
        std::unordered_map<std::vector<Value>, std::vector<const Row*>, KeyHash,
                           KeyEq>
            built;
        for (const auto& row : r.rows) {
          auto key = rowKey(row, rIdx);
          if (anyNull(key)) continue;
          built[std::move(key)].push_back(&row);
        }
        RowBag out{outSchema, {}};
        for (const auto& lrow : l.rows) {
          auto key = rowKey(lrow, lIdx);
          BagBuilder bag;
          if (!anyNull(key)) {
            auto it = built.find(key);
            if (it != built.end()) {
              for (const Row* rrow : it->second) {
                Row comb = lrow;
                comb.cells.insert(comb.cells.end(), rrow->cells.begin(),
                                  rrow->cells.end());
                if (p->bagScalarElem) {
                  Value v = ev.eval(p->bagValue.at(0).expr, comb);
                  if (!v.isNull()) bag.add(std::move(v));
                  continue;
                }
                Value::TupleAttrs attrs;
                for (const auto& c : p->bagValue) {
                  Value v = ev.eval(c.expr, comb);
                  if (v.isNull()) {
                    // NULL bag slots in collected tuples become empty bags.
                    const TypePtr& bt = outPs.cols.back().second;
                    const TypePtr* ft = bt->element->findAttr(c.name);
                    if (ft && (*ft)->isBag()) v = Value::emptyBag();
                  }
                  attrs.emplace_back(c.name, std::move(v));
                }
                bag.add(Value::tuple(std::move(attrs)));
              }
            }
          }
          Row o = lrow;
          o.cells.push_back(bag.build());
          out.rows.push_back(std::move(o));
        }
        return out;
      }
      case PlanNode::Kind::BagToDict:
        return eval(p->left);  // physical partitioning marker only
      case PlanNode::Kind::MatLookup: {
        RowBag in = eval(p->left);
        auto dictIt = inputs_.find(p->inputVar);
        if (dictIt == inputs_.end())
          fail("MissingInput", "no dictionary bag '" + p->inputVar + "'");
        const RowBag& dict = dictIt->second;
        int labelIdx = in.schema->find(p->labelAttr);
        int dictLabelIdx = dict.schema->find("label");
        if (dictLabelIdx < 0)
          fail("PlanTypeError", "dictionary '" + p->inputVar + "' has no label column");
        std::vector<int> payloadIdx;
        for (const auto& [dictAttr, outCol] : p->matCols)
          payloadIdx.push_back(dict.schema->find(dictAttr));
        std::unordered_map<std::vector<Value>, std::vector<const Row*>, KeyHash,
                           KeyEq>
            built;
        for (const auto& row : dict.rows)
          built[{row.cells[static_cast<std::size_t>(dictLabelIdx)]}].push_back(&row);
        RowBag out{outSchema, {}};
        for (const auto& lrow : in.rows) {
          const Value& lbl = lrow.cells[static_cast<std::size_t>(labelIdx)];
          const std::vector<const Row*>* matches = nullptr;
          if (!lbl.isNull()) {
            auto it = built.find({lbl});
            if (it != built.end()) matches = &it->second;
          }
          if (matches) {
            for (const Row* rrow : *matches) {
              Row o = lrow;
              for (int i : payloadIdx)
                o.cells.push_back(rrow->cells[static_cast<std::size_t>(i)]);
              out.rows.push_back(std::move(o));
            }
          } else if (p->outerLookup) {
            Row o = lrow;
            o.cells.resize(o.cells.size() + payloadIdx.size(), Value::null());
            out.rows.push_back(std::move(o));
          }
        }
        return out;
      }
      case PlanNode::Kind::Dedup: {
        RowBag in = eval(p->left);
        std::unordered_map<std::vector<Value>, bool, KeyHash, KeyEq> seen;
        RowBag out{in.schema, {}};
        for (auto& row : in.rows) {
          // NULL-extended carrier rows pass through uncollapsed.
          bool hasNull = false;
          for (const auto& c : row.cells)
            if (c.isNull()) {
              hasNull = true;
              break;
            }
          if (hasNull) {
            out.rows.push_back(std::move(row));
            continue;
          }
          if (seen.emplace(row.cells, true).second)
            out.rows.push_back(std::move(row));
        }
        return out;
      }
      case PlanNode::Kind::LabelDomain: {
        auto it = inputs_.find(p->inputVar);
        if (it == inputs_.end())
          fail("MissingInput", "no input bag '" + p->inputVar + "'");
        const RowBag& src = it->second;
        int idx = src.schema->find(p->labelAttr);
        if (idx < 0)
          fail("PlanTypeError", "label domain source has no column '" +
                                    p->labelAttr + "'");
        std::unordered_map<std::vector<Value>, bool, KeyHash, KeyEq> seen;
        RowBag out{outSchema, {}};
        for (const auto& row : src.rows) {
          const Value& lbl = row.cells[static_cast<std::size_t>(idx)];
          if (lbl.isNull()) continue;
          if (seen.emplace(std::vector<Value>{lbl}, true).second)
            out.rows.push_back(Row{{lbl}});
        }
        return out;
      }
      case PlanNode::Kind::UnionAll: {
        RowBag l = eval(p->left);
        RowBag r = eval(p->right);
        RowBag out{l.schema, std::move(l.rows)};
        for (auto& row : r.rows) out.rows.push_back(std::move(row));
        return out;
      }
    }
    fail("PlanTypeError", "unreachable plan eval");
  }

 private:
  static std::vector<int> keyIdx(const RowSchema& s,
                                 const std::vector<std::string>& names) {
    return indexesOf(s, names, "join key");
  }

  PlanTyper typer_;
  const RowInputs& inputs_;
  std::uint64_t fresh_ = 1;
};

}  // namespace

RowBag evalPlan(const PlanPtr& plan, const PlanCatalog& catalog,
                const RowInputs& inputs) {
  PlanInterp interp(catalog, inputs);
  return interp.eval(plan);
}

Value evalPlanToValue(const PlanPtr& plan, const PlanCatalog& catalog,
                      const RowInputs& inputs) {
  PlanTyper typer(catalog);
  const PlanSchema schema = typer.schema(plan);
  return rowsToValue(evalPlan(plan, catalog, inputs), schema);
}

}  // namespace shredql
