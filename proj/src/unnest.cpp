#include "shredql/unnest.hpp"

#include <algorithm>
#include <optional>
#include <set>

#include "shredql/typecheck.hpp"

namespace shredql {
namespace {

using Kind = NrcExpr::Kind;

// ---- AST normalization -------------------------------------------------------
// Inlines let bindings, rewrites bag-typed if-then-else into guarded unions,
// distributes for-union over bag unions, flattens nested for sources, and
// hoists loop-independent conjuncts out of loop bodies.

void freeVarsIn(const ExprPtr& e, std::set<std::string>& out,
                std::set<std::string> bound) {
  if (!e) return;
  switch (e->kind) {
    case Kind::Var:
      if (!bound.count(e->name)) out.insert(e->name);
      return;
    case Kind::ForUnion:
    case Kind::Let: {
      freeVarsIn(e->e0, out, bound);
      bound.insert(e->name);
      freeVarsIn(e->e1, out, bound);
      return;
    }
    case Kind::Lambda: {
      bound.insert(e->name);
      freeVarsIn(e->e0, out, bound);
      return;
    }
    default:
      freeVarsIn(e->e0, out, bound);
      freeVarsIn(e->e1, out, bound);
      freeVarsIn(e->e2, out, bound);
      for (const auto& [n, f] : e->fields) freeVarsIn(f, out, bound);
  }
}

std::set<std::string> freeVars(const ExprPtr& e) {
  std::set<std::string> out;
  freeVarsIn(e, out, {});
  return out;
}

bool isBagTyped(const ExprPtr& e) { return e->type && e->type->isBag(); }

void conjuncts(const ExprPtr& e, std::vector<ExprPtr>& out) {
  if (e->kind == Kind::Prim && e->op == PrimOp::And) {
    conjuncts(e->e0, out);
    conjuncts(e->e1, out);
  } else {
    out.push_back(e);
  }
}

ExprPtr conjoin(const std::vector<ExprPtr>& cs) {
  ExprPtr acc;
  for (const auto& c : cs) {
    if (!acc) {
      acc = c;
    } else {
      auto a = makeExpr(Kind::Prim, c->pos);
      a->op = PrimOp::And;
      a->e0 = acc;
      a->e1 = c;
      a->type = boolType();
      acc = a;
    }
  }
  return acc;
}

ExprPtr normalize(ExprPtr e) {
  if (!e) return nullptr;
  switch (e->kind) {
    case Kind::Let: {
      ExprPtr bound = normalize(e->e0);
      ExprPtr body = substituteVar(e->e1, e->name, bound);
      body->type = e->type;
      return normalize(body);
    }
    case Kind::IfThenElse: {
      if (isBagTyped(e)) {
        auto negE = makeExpr(Kind::Prim, e->pos);
        negE->op = PrimOp::Not;
        negE->e0 = e->e0;
        negE->type = boolType();
        auto thenB = makeExpr(Kind::IfThen, e->pos);
        thenB->e0 = e->e0;
        thenB->e1 = e->e1;
        thenB->type = e->type;
        auto elseB = makeExpr(Kind::IfThen, e->pos);
        elseB->e0 = negE;
        elseB->e1 = e->e2;
        elseB->type = e->type;
        auto u = makeExpr(Kind::BagUnion, e->pos);
        u->e0 = thenB;
        u->e1 = elseB;
        u->type = e->type;
        return normalize(u);
      }
      break;
    }
    case Kind::ForUnion: {
      ExprPtr src = normalize(e->e0);
      if (src->kind == Kind::BagUnion) {
        auto mkFor = [&](const ExprPtr& s) {
          auto f = makeExpr(Kind::ForUnion, e->pos);
          f->name = e->name;
          f->e0 = s;
          f->e1 = cloneExpr(e->e1);
          f->type = e->type;
          return f;
        };
        auto u = makeExpr(Kind::BagUnion, e->pos);
        u->e0 = mkFor(src->e0);
        u->e1 = mkFor(src->e1);
        u->type = e->type;
        return normalize(u);
      }
      if (src->kind == Kind::IfThen) {
        auto f = makeExpr(Kind::ForUnion, e->pos);
        f->name = e->name;
        f->e0 = src->e1;
        f->e1 = e->e1;
        f->type = e->type;
        auto g = makeExpr(Kind::IfThen, e->pos);
        g->e0 = src->e0;
        g->e1 = f;
        g->type = e->type;
        return normalize(g);
      }
      if (src->kind == Kind::Singleton) {
        ExprPtr body = substituteVar(e->e1, e->name, src->e0);
        body->type = e->type;
        return normalize(body);
      }
      if (src->kind == Kind::EmptyBag) {
        auto em = makeExpr(Kind::EmptyBag, e->pos);
        em->declaredType = e->type;
        em->type = e->type;
        return em;
      }
      if (src->kind == Kind::ForUnion) {
        // for x in (for y in E union B1) union B2
        //   -> for y in E union (for x in B1 union B2)
        std::string y = src->name;
        auto fv = freeVars(e->e1);
        if (fv.count(y)) {
          std::string fresh = y + "$r";
          while (fv.count(fresh)) fresh += "r";
          auto vr = makeExpr(Kind::Var, src->pos);
          vr->name = fresh;
          vr->type = src->e0->type ? src->e0->type->element : nullptr;
          auto renamed = std::make_shared<NrcExpr>(*src);
          renamed->e1 = substituteVar(src->e1, y, vr);
          renamed->name = fresh;
          src = renamed;
          y = fresh;
        }
        auto inner = makeExpr(Kind::ForUnion, e->pos);
        inner->name = e->name;
        inner->e0 = src->e1;
        inner->e1 = e->e1;
        inner->type = e->type;
        auto outer = makeExpr(Kind::ForUnion, e->pos);
        outer->name = y;
        outer->e0 = src->e0;
        outer->e1 = inner;
        outer->type = e->type;
        return normalize(outer);
      }
      ExprPtr body = normalize(e->e1);
      if (body->kind == Kind::IfThen) {
        // Hoist conjuncts that do not mention the loop variable.
        std::vector<ExprPtr> cs;
        conjuncts(body->e0, cs);
        std::vector<ExprPtr> hoisted, kept;
        for (const auto& c : cs) {
          if (freeVars(c).count(e->name))
            kept.push_back(c);
          else
            hoisted.push_back(c);
        }
        if (!hoisted.empty()) {
          ExprPtr innerBody = body->e1;
          if (!kept.empty()) {
            auto g = makeExpr(Kind::IfThen, body->pos);
            g->e0 = conjoin(kept);
            g->e1 = innerBody;
            g->type = body->type;
            innerBody = g;
          }
          auto f = makeExpr(Kind::ForUnion, e->pos);
          f->name = e->name;
          f->e0 = src;
          f->e1 = innerBody;
          f->type = e->type;
          auto g = makeExpr(Kind::IfThen, e->pos);
          g->e0 = conjoin(hoisted);
          g->e1 = f;
          g->type = e->type;
          return normalize(g);
        }
      }
      auto c = std::make_shared<NrcExpr>(*e);
      c->e0 = src;
      c->e1 = body;
      return c;
    }
    default:
      break;
  }
  auto c = std::make_shared<NrcExpr>(*e);
  c->e0 = normalize(e->e0);
  c->e1 = normalize(e->e1);
  c->e2 = normalize(e->e2);
  for (auto& [n, f] : c->fields) f = normalize(f);
  return c;
}

// ---- translation -------------------------------------------------------------

struct Binding {
  bool scalar = false;
  std::string scalarCol;
  std::vector<std::pair<std::string, std::string>> attrCols;  // attr -> column
  TypePtr type;

  const std::string* col(const std::string& attr) const {
    for (const auto& [a, c] : attrCols)
      if (a == attr) return &c;
    return nullptr;
  }
};

struct LevelResult {
  PlanPtr plan;
  std::vector<ProjCol> outs;  // expressions over plan's schema
  std::string marker;         // column NULL exactly on phantom rows ("" = real)
  bool scalarElem = false;
};

class Unnester {
 public:
  explicit Unnester(const SchemaEnv& env) {
    for (const auto& [name, schema] : env)
      catalog_.addBag(name, schema.type, schema.uniqueKeys);
  }

  PlanCatalog& catalog() { return catalog_; }

  UnnestedAssignment run(const std::string& var, const ExprPtr& typedExpr) {
    if (!typedExpr->type || !typedExpr->type->isBag())
      fail("UnsupportedPattern",
           "only bag-typed assignments can be compiled to plans", typedExpr->pos);
    usedNames_.clear();
    ExprPtr norm = normalize(cloneExpr(typedExpr));

    Ctx root;
    root.level = 0;
    LevelResult res;
    if (norm->kind == Kind::EmptyBag) {
      res = emptyRootPlan(norm);
    } else {
      res = rowsOf(norm, root);
    }

    bool identity = false;
    if (res.plan) {
      PlanTyper typer(catalog_);
      const PlanSchema& s = typer.schema(res.plan);
      identity = s.cols.size() == res.outs.size();
      if (identity)
        for (std::size_t i = 0; i < res.outs.size(); ++i)
          identity = identity &&
                     res.outs[i].expr->kind == ScalarExpr::Kind::Attr &&
                     res.outs[i].expr->attr == s.cols[i].first &&
                     res.outs[i].name == s.cols[i].first;
    }

    UnnestedAssignment out;
    out.var = var;
    out.plan = identity ? res.plan : project(res.outs, res.plan);
    out.outType = typedExpr->type;
    out.scalarElement = res.scalarElem;
    return out;
  }

 private:
  struct Ctx {
    int level = 0;
    std::vector<std::string> G;          // grouping prefix (ids + outer outs)
    PlanPtr plan;                        // null only at the start of the root
    std::map<std::string, Binding> vars;
    std::vector<std::string> preserve;   // enclosing levels' markers
    std::vector<std::string> levelBags;  // bag columns closed at this level
    std::string marker;                  // this level's phantom marker
    std::string levelId;                 // id column tagging this level's rows
  };

  PlanCatalog catalog_;
  std::set<std::string> usedNames_;

  bool isTopBag(const ExprPtr& e) const {
    return e->kind == Kind::Var && catalog_.inputs.count(e->name) > 0;
  }

  std::string freshName(std::string base) {
    if (usedNames_.insert(base).second) return base;
    for (int i = 1;; ++i) {
      std::string cand = base + "$" + std::to_string(i);
      if (usedNames_.insert(cand).second) return cand;
    }
  }

  void noteSchema(const PlanPtr& p) {
    PlanTyper typer(catalog_);
    for (const auto& [n, t] : typer.schema(p).cols) usedNames_.insert(n);
  }

  PlanSchema schemaOf(const PlanPtr& p) {
    PlanTyper typer(catalog_);
    return typer.schema(p);
  }

  // Bag-typed assignment that is statically empty: a never-passing filter
  // over any available input keeps the executor path uniform.
  LevelResult emptyRootPlan(const ExprPtr& e) {
    if (catalog_.inputs.empty())
      fail("UnsupportedPattern",
           "empty-bag program with no inputs has no plan form", e->pos);
    const std::string& any = catalog_.inputs.begin()->first;
    LevelResult res;
    res.plan = select(ScalarExpr::mkConst(Value::ofBool(false)), scan(any));
    const TypePtr& elemT = e->type->element;
    res.scalarElem = !elemT->isTuple();
    if (res.scalarElem) {
      res.outs.push_back({"value", typedConst(defaultValue(elemT), elemT)});
    } else {
      for (const auto& [a, t] : elemT->attrs)
        res.outs.push_back({a, typedConst(defaultValue(t), t)});
    }
    return res;
  }

  static SExpr typedConst(Value v, const TypePtr& t) {
    auto c = std::const_pointer_cast<ScalarExpr>(ScalarExpr::mkConst(std::move(v)));
    if (t->isBag()) c->valueType = t->element;
    return c;
  }

  // ---- scalar translation ----

  SExpr toSExpr(const ExprPtr& e, const Ctx& ctx) {
    switch (e->kind) {
      case Kind::Const:
        return ScalarExpr::mkConst(e->constant);
      case Kind::Var: {
        auto it = ctx.vars.find(e->name);
        if (it == ctx.vars.end())
          fail("UnsupportedPattern",
               "variable '" + e->name + "' is not row-bound here", e->pos);
        const Binding& b = it->second;
        if (b.scalar) return ScalarExpr::mkAttr(b.scalarCol);
        std::vector<std::pair<std::string, SExpr>> fields;
        for (const auto& [a, c] : b.attrCols)
          fields.emplace_back(a, ScalarExpr::mkAttr(c));
        return ScalarExpr::mkTuple(std::move(fields));
      }
      case Kind::Project: {
        if (e->e0->kind == Kind::Var) {
          auto it = ctx.vars.find(e->e0->name);
          if (it == ctx.vars.end())
            fail("UnsupportedPattern",
                 "variable '" + e->e0->name + "' is not row-bound here", e->pos);
          const std::string* col = it->second.col(e->name);
          if (!col)
            fail("UnknownAttribute", "no attribute '" + e->name + "'", e->pos);
          return ScalarExpr::mkAttr(*col);
        }
        fail("UnsupportedPattern",
             "projection over a computed tuple is not supported in plans",
             e->pos);
      }
      case Kind::Prim: {
        if (e->op == PrimOp::Not) return ScalarExpr::mkNot(toSExpr(e->e0, ctx));
        return ScalarExpr::mkBin(e->op, toSExpr(e->e0, ctx), toSExpr(e->e1, ctx));
      }
      case Kind::Get: {
        SExpr bag = toBagSExpr(e->e0, ctx);
        if (!bag)
          fail("UnsupportedPattern", "get() over a non-inlinable bag expression",
               e->pos);
        return ScalarExpr::mkGet(bag, defaultValue(e->type), e->type);
      }
      case Kind::NewLabel: {
        std::vector<SExpr> args;
        for (const auto& [n, f] : e->fields) args.push_back(toSExpr(f, ctx));
        return ScalarExpr::mkLabel(e->labelTag, std::move(args));
      }
      case Kind::TupleCtor: {
        std::vector<std::pair<std::string, SExpr>> fields;
        for (const auto& [n, f] : e->fields) {
          SExpr fe =
              f->type && f->type->isBag() ? toBagSExpr(f, ctx) : toSExpr(f, ctx);
          if (!fe)
            fail("UnsupportedPattern", "non-inlinable tuple field", e->pos);
          fields.emplace_back(n, fe);
        }
        return ScalarExpr::mkTuple(std::move(fields));
      }
      default:
        fail("UnsupportedPattern", "expression cannot be evaluated per-row",
             e->pos);
    }
  }

  // Bag expression computable per row; null when it needs its own subplan.
  SExpr toBagSExpr(const ExprPtr& e, const Ctx& ctx) {
    switch (e->kind) {
      case Kind::Project:
        if (e->e0->kind == Kind::Var) {
          auto it = ctx.vars.find(e->e0->name);
          if (it != ctx.vars.end()) {
            const std::string* col = it->second.col(e->name);
            if (col) return ScalarExpr::mkAttr(*col);
          }
        }
        return nullptr;
      case Kind::EmptyBag:
        return typedConst(Value::emptyBag(), e->type);
      case Kind::Singleton: {
        try {
          SExpr el = toSExpr(e->e0, ctx);
          return ScalarExpr::mkBag({el}, e->type->element);
        } catch (const Error&) {
          return nullptr;
        }
      }
      default:
        return nullptr;
    }
  }

  std::string ensureCol(const SExpr& se, Ctx& ctx, const std::string& hint) {
    if (se->kind == ScalarExpr::Kind::Attr) return se->attr;
    PlanSchema s = schemaOf(ctx.plan);
    std::string name = freshName(hint);
    std::vector<ProjCol> cols;
    for (const auto& [n, t] : s.cols) cols.push_back({n, ScalarExpr::mkAttr(n)});
    cols.push_back({name, se});
    ctx.plan = project(std::move(cols), ctx.plan);
    return name;
  }

  std::string addFreshId(Ctx& ctx, const std::string& hint) {
    return ensureCol(ScalarExpr::mkFreshId(), ctx, freshName(hint));
  }

  // ---- join-condition classification ----

  struct SplitCond {
    std::vector<std::pair<ExprPtr, ExprPtr>> equalities;  // (outer, loop-var)
    std::vector<ExprPtr> rightOnly;
    bool supported = true;
    SourcePos pos;
  };

  SplitCond splitJoinCond(const ExprPtr& cond, const std::string& y) {
    SplitCond out;
    out.pos = cond->pos;
    std::vector<ExprPtr> cs;
    conjuncts(cond, cs);
    for (const auto& c : cs) {
      auto fv = freeVars(c);
      bool usesY = fv.count(y) > 0;
      bool usesOuter = false;
      for (const auto& v : fv)
        if (v != y && !catalog_.inputs.count(v)) usesOuter = true;
      if (!usesOuter) {
        out.rightOnly.push_back(c);
        continue;
      }
      if (usesY) {
        if (c->kind == Kind::Prim && c->op == PrimOp::Eq) {
          auto lf = freeVars(c->e0);
          auto rf = freeVars(c->e1);
          bool leftUsesY = lf.count(y) > 0;
          bool rightUsesY = rf.count(y) > 0;
          if (!leftUsesY && rightUsesY) {
            bool rightOnlyY = true;
            for (const auto& v : rf)
              if (v != y) rightOnlyY = false;
            if (rightOnlyY) {
              out.equalities.emplace_back(c->e0, c->e1);
              continue;
            }
          }
          if (leftUsesY && !rightUsesY) {
            bool leftOnlyY = true;
            for (const auto& v : lf)
              if (v != y) leftOnlyY = false;
            if (leftOnlyY) {
              out.equalities.emplace_back(c->e1, c->e0);
              continue;
            }
          }
        }
        out.supported = false;
        continue;
      }
      out.supported = false;  // outer-only conjunct that survived hoisting
    }
    return out;
  }

  // ---- chain builders ----

  void chainUnnest(const std::string& var, const std::string& bagCol,
                   const TypePtr& bagT, Ctx& ctx, bool keepBagCol = false) {
    const TypePtr& elemT = bagT->element;
    std::vector<std::pair<std::string, std::string>> elemCols;
    Binding b;
    b.type = elemT;
    if (elemT->isTuple()) {
      for (const auto& [a, t] : elemT->attrs) {
        std::string col = freshName(a);
        elemCols.emplace_back(col, a);
        b.attrCols.emplace_back(a, col);
      }
    } else {
      std::string col = freshName(var);
      elemCols.emplace_back(col, "");
      b.scalar = true;
      b.scalarCol = col;
    }
    if (ctx.level == 0) {
      ctx.plan = unnest(bagCol, elemCols, ctx.plan);
      ctx.marker.clear();
    } else {
      std::string id = freshName(ownerHint(bagCol, ctx) + "ID");
      ctx.plan = outerUnnest(bagCol, elemCols, id, ctx.plan, keepBagCol);
      if (ctx.levelId.empty()) ctx.levelId = id;
      ctx.marker = elemCols.front().first;
    }
    std::const_pointer_cast<PlanNode>(ctx.plan)->birthLevel = ctx.level;
    ctx.vars[var] = std::move(b);
  }

  std::string ownerHint(const std::string& bagCol, const Ctx& ctx) {
    for (const auto& [v, b] : ctx.vars)
      for (const auto& [a, c] : b.attrCols)
        if (c == bagCol) return v;
    return "row";
  }

  Binding scanBinding(const TypePtr& bagT) {
    Binding b;
    b.type = bagT->element;
    if (bagT->element->isTuple()) {
      for (const auto& [a, t] : bagT->element->attrs) b.attrCols.emplace_back(a, a);
    } else {
      b.scalar = true;
      b.scalarCol = "value";
    }
    return b;
  }

  void chainTopBag(const std::string& var, const std::string& table,
                   const TypePtr& bagT, const ExprPtr& cond, Ctx& ctx) {
    if (!ctx.plan) {
      // Start of the root chain: a plain scan.
      ctx.plan = scan(table);
      noteSchema(ctx.plan);
      ctx.vars[var] = scanBinding(bagT);
      ctx.marker.clear();
      if (cond) ctx.plan = select(toSExpr(cond, ctx), ctx.plan);
      return;
    }

    SplitCond sc;
    if (cond) sc = splitJoinCond(cond, var);
    if (!sc.supported)
      fail("UnsupportedPattern",
           "non-equality correlation inside a nested loop", sc.pos);

    // Right side: scan filtered by loop-variable-only predicates.
    Ctx rightCtx;
    rightCtx.level = 0;
    rightCtx.plan = scan(table);
    rightCtx.vars[var] = scanBinding(bagT);
    for (const auto& p : sc.rightOnly)
      rightCtx.plan = select(toSExpr(p, rightCtx), rightCtx.plan);

    std::vector<std::string> lkeys, rkeys;
    for (auto& [le, re] : sc.equalities) {
      lkeys.push_back(ensureCol(toSExpr(le, ctx), ctx, "k"));
      rkeys.push_back(ensureCol(toSExpr(re, rightCtx), rightCtx, "k"));
    }

    joinOnto(var, rightCtx.plan, bagT, lkeys, rkeys, ctx);
  }

  // Joins `right` onto the current chain (inner at root, outer below) with
  // collision renames, binding `var` over the right columns.
  void joinOnto(const std::string& var, PlanPtr right, const TypePtr& bagT,
                const std::vector<std::string>& lkeys,
                const std::vector<std::string>& rkeys, Ctx& ctx) {
    PlanSchema leftS = schemaOf(ctx.plan);
    PlanSchema rightS = schemaOf(right);
    std::vector<std::pair<std::string, std::string>> renames;
    auto rightColName = [&](const std::string& n) {
      for (const auto& [from, to] : renames)
        if (from == n) return to;
      return n;
    };
    for (const auto& [n, t] : rightS.cols) {
      if (leftS.has(n))
        renames.emplace_back(n, freshName(n + "$r"));
      else
        usedNames_.insert(n);
    }

    PlanPtr jn = ctx.level == 0 ? join(lkeys, rkeys, ctx.plan, right)
                                : leftOuterJoin(lkeys, rkeys, ctx.plan, right);
    std::const_pointer_cast<PlanNode>(jn)->rightRenames = renames;
    std::const_pointer_cast<PlanNode>(jn)->birthLevel = ctx.level;
    ctx.plan = jn;

    Binding b;
    b.type = bagT->element;
    if (bagT->element->isTuple()) {
      for (const auto& [a, t] : bagT->element->attrs)
        b.attrCols.emplace_back(a, rightColName(a));
    } else {
      b.scalar = true;
      b.scalarCol = rightColName("value");
    }
    ctx.vars[var] = std::move(b);
    if (ctx.level > 0)
      ctx.marker = rkeys.empty() ? rightColName(rightS.cols.front().first)
                                 : rightColName(rkeys.front());
    else
      ctx.marker.clear();
  }

  void chainMatLookup(const std::string& var, const ExprPtr& src, Ctx& ctx) {
    std::string labelCol = ensureCol(toSExpr(src->e0, ctx), ctx, "lbl");
    auto dictIt = catalog_.inputs.find(src->name);
    if (dictIt == catalog_.inputs.end())
      fail("MissingInput", "no dictionary '" + src->name + "'", src->pos);
    const PlanSchema& dict = dictIt->second;
    std::vector<std::pair<std::string, std::string>> matCols;
    Binding b;
    b.type = src->type->element;
    PlanSchema cur = schemaOf(ctx.plan);
    for (const auto& [n, t] : dict.cols) {
      if (n == "label") continue;
      std::string out = cur.has(n) ? freshName(n + "$d") : n;
      usedNames_.insert(out);
      matCols.emplace_back(n, out);
      b.attrCols.emplace_back(n, out);
    }
    bool outer = ctx.level > 0;
    std::string marker = matCols.empty() ? labelCol : matCols.front().second;
    ctx.plan = matLookup(src->name, labelCol, outer, matCols, ctx.plan);
    if (outer) ctx.marker = marker;
    ctx.vars[var] = std::move(b);
  }

  // Applies a guard to the current rows: a filter at the root, a marker
  // nullification below it (rows must survive as phantoms).
  void applyGuard(const ExprPtr& cond, Ctx& ctx) {
    if (ctx.level == 0) {
      ctx.plan = select(toSExpr(cond, ctx), ctx.plan);
      return;
    }
    std::string marker = ctx.marker;
    if (marker.empty())
      marker =
          ensureCol(ScalarExpr::mkConst(Value::ofBool(true)), ctx, "present$");
    ctx.plan = select(toSExpr(cond, ctx), ctx.plan, {marker});
    ctx.marker = marker;
  }

  // Binds `var` over the rows of `src`, extending ctx.plan.
  void chainSource(const std::string& var, const ExprPtr& src,
                   const ExprPtr& cond, Ctx& ctx) {
    if (src->kind == Kind::Project && src->e0->kind == Kind::Var &&
        ctx.vars.count(src->e0->name)) {
      const Binding& owner = ctx.vars.at(src->e0->name);
      const std::string* bagCol = owner.col(src->name);
      if (!bagCol)
        fail("UnknownAttribute", "no attribute '" + src->name + "'", src->pos);
      chainUnnest(var, *bagCol, src->type, ctx);
      if (cond) applyGuard(cond, ctx);
      return;
    }
    if (isTopBag(src)) {
      chainTopBag(var, src->name, src->type, cond, ctx);
      return;
    }
    if (src->kind == Kind::MatLookup) {
      chainMatLookup(var, src, ctx);
      if (cond) applyGuard(cond, ctx);
      return;
    }
    // General source: build its rows recursively, then bind its outputs.
    LevelResult res = rowsOf(src, ctx);
    ctx.plan = res.plan;
    ctx.marker = res.marker;
    Binding b;
    b.type = src->type->element;
    if (res.scalarElem) {
      b.scalar = true;
      b.scalarCol = ensureCol(res.outs[0].expr, ctx, var);
    } else {
      for (const auto& c : res.outs)
        b.attrCols.emplace_back(c.name, ensureCol(c.expr, ctx, c.name));
    }
    ctx.vars[var] = std::move(b);
    if (cond) applyGuard(cond, ctx);
  }

  // ---- main recursion ----

  LevelResult rowsOf(const ExprPtr& e, Ctx& ctx) {
    switch (e->kind) {
      case Kind::ForUnion: {
        const ExprPtr& body = e->e1;
        if (body->kind == Kind::IfThen &&
            (isTopBag(e->e0) || freeVars(body->e0).count(e->name))) {
          chainSource(e->name, e->e0, body->e0, ctx);
          return rowsOf(body->e1, ctx);
        }
        chainSource(e->name, e->e0, nullptr, ctx);
        return rowsOf(body, ctx);
      }
      case Kind::IfThen: {
        if (ctx.level == 0) {
          if (!ctx.plan)
            fail("UnsupportedPattern", "top-level guard without input rows",
                 e->pos);
          ctx.plan = select(toSExpr(e->e0, ctx), ctx.plan);
          return rowsOf(e->e1, ctx);
        }
        LevelResult res = rowsOf(e->e1, ctx);
        return guardResult(e->e0, std::move(res), ctx);
      }
      case Kind::Singleton:
        return terminalTuple(e, ctx);
      case Kind::EmptyBag: {
        if (!ctx.plan)
          fail("UnsupportedPattern", "empty bag below the root needs rows",
               e->pos);
        LevelResult res;
        res.plan = ctx.plan;
        const TypePtr& elemT = e->type->element;
        res.scalarElem = !elemT->isTuple();
        if (res.scalarElem) {
          res.outs.push_back({"value", typedConst(defaultValue(elemT), elemT)});
        } else {
          for (const auto& [a, t] : elemT->attrs)
            res.outs.push_back({a, typedConst(defaultValue(t), t)});
        }
        auto falseC = makeExpr(Kind::Const, e->pos);
        falseC->constant = Value::ofBool(false);
        falseC->type = boolType();
        return guardResult(falseC, std::move(res), ctx);
      }
      case Kind::BagUnion:
        return unionRows(e, ctx);
      case Kind::SumBy:
        return sumByRows(e, ctx);
      case Kind::GroupBy:
        return groupByRows(e, ctx);
      case Kind::Dedup:
        return dedupRows(e, ctx);
      case Kind::Var:
      case Kind::Project:
      case Kind::MatLookup: {
        // A whole bag in rows position: loop-and-rebuild.
        std::string v = freshName("it$");
        auto loopVar = makeExpr(Kind::Var, e->pos);
        loopVar->name = v;
        loopVar->type = e->type->element;
        auto sing = makeExpr(Kind::Singleton, e->pos);
        sing->e0 = loopVar;
        sing->type = e->type;
        auto loop = makeExpr(Kind::ForUnion, e->pos);
        loop->name = v;
        loop->e0 = std::make_shared<NrcExpr>(*e);
        loop->e1 = sing;
        loop->type = e->type;
        return rowsOf(loop, ctx);
      }
      default:
        fail("UnsupportedPattern", "unsupported bag expression in unnesting",
             e->pos);
    }
  }

  LevelResult guardResult(const ExprPtr& cond, LevelResult res, Ctx& ctx) {
    ctx.plan = res.plan;
    PlanSchema s = schemaOf(ctx.plan);
    std::vector<ProjCol> cols;
    for (const auto& [n, t] : s.cols) cols.push_back({n, ScalarExpr::mkAttr(n)});
    std::vector<std::string> nullify;
    std::vector<ProjCol> outs;
    for (const auto& o : res.outs) {
      std::string g = freshName(o.name + "$g");
      cols.push_back({g, o.expr});
      nullify.push_back(g);
      outs.push_back({o.name, ScalarExpr::mkAttr(g)});
    }
    std::string pres = freshName("present$");
    cols.push_back({pres, res.marker.empty()
                              ? ScalarExpr::mkConst(Value::ofBool(true))
                              : ScalarExpr::mkAttr(res.marker)});
    nullify.push_back(pres);
    ctx.plan = project(std::move(cols), ctx.plan);
    ctx.plan = select(toSExpr(cond, ctx), ctx.plan, nullify);
    res.plan = ctx.plan;
    res.outs = std::move(outs);
    res.marker = pres;
    ctx.marker = pres;
    return res;
  }

  std::vector<std::string> contextCols(const Ctx& ctx) {
    std::vector<std::string> keep;
    auto add = [&](const std::string& c) {
      if (!c.empty() && std::find(keep.begin(), keep.end(), c) == keep.end())
        keep.push_back(c);
    };
    for (const auto& g : ctx.G) add(g);
    add(ctx.levelId);
    for (const auto& m : ctx.preserve) add(m);
    for (const auto& s : ctx.levelBags) add(s);
    return keep;
  }

  LevelResult unionRows(const ExprPtr& e, Ctx& ctx) {
    // Tag parent rows so the closing nest groups per parent regardless of
    // branch-internal ids.
    if (ctx.level > 0 && ctx.levelId.empty() && ctx.plan)
      ctx.levelId = addFreshId(ctx, "uID");

    Ctx ctxA = ctx;
    LevelResult a = rowsOf(e->e0, ctxA);
    Ctx ctxB = ctx;
    LevelResult b = rowsOf(e->e1, ctxB);

    std::vector<std::string> keep = contextCols(ctx);
    auto branchProject = [&](LevelResult& r, Ctx& bc) {
      std::vector<ProjCol> cols;
      for (const auto& k : keep) cols.push_back({k, ScalarExpr::mkAttr(k)});
      std::string pres = freshName("present$");
      cols.push_back({pres, r.marker.empty()
                                ? ScalarExpr::mkConst(Value::ofBool(true))
                                : ScalarExpr::mkAttr(r.marker)});
      std::vector<std::string> outNames;
      for (const auto& o : r.outs) {
        std::string g = freshName(o.name + "$u");
        cols.push_back({g, o.expr});
        outNames.push_back(g);
      }
      r.plan = project(std::move(cols), bc.plan);
      r.marker = pres;
      std::vector<ProjCol> outs;
      for (std::size_t i = 0; i < r.outs.size(); ++i)
        outs.push_back({r.outs[i].name, ScalarExpr::mkAttr(outNames[i])});
      r.outs = std::move(outs);
      return outNames;
    };
    auto namesA = branchProject(a, ctxA);
    auto namesB = branchProject(b, ctxB);

    // Rename branch B's generated columns onto branch A's schema.
    std::vector<ProjCol> bAlign;
    for (const auto& k : keep) bAlign.push_back({k, ScalarExpr::mkAttr(k)});
    bAlign.push_back({a.marker, ScalarExpr::mkAttr(b.marker)});
    for (std::size_t i = 0; i < namesA.size(); ++i)
      bAlign.push_back({namesA[i], ScalarExpr::mkAttr(namesB[i])});
    b.plan = project(std::move(bAlign), b.plan);

    LevelResult out;
    out.plan = unionAll(a.plan, b.plan);
    out.outs = a.outs;
    out.marker = a.marker;
    out.scalarElem = a.scalarElem || b.scalarElem;
    ctx.plan = out.plan;
    ctx.marker = out.marker;
    return out;
  }

  const ProjCol* findOut(const LevelResult& res, const std::string& name,
                         SourcePos pos) {
    for (const auto& o : res.outs)
      if (o.name == name) return &o;
    fail("UnknownAttribute",
         "no attribute '" + name + "' in aggregation input", pos);
  }

  std::vector<std::string> carriedFor(const std::vector<std::string>& preserve,
                                      const std::vector<std::string>& levelBags,
                                      const std::vector<std::string>& key,
                                      const PlanPtr& plan) {
    std::vector<std::string> carried;
    PlanSchema s = schemaOf(plan);
    auto want = [&](const std::string& c) {
      return !c.empty() && s.has(c) &&
             std::find(key.begin(), key.end(), c) == key.end() &&
             std::find(carried.begin(), carried.end(), c) == carried.end();
    };
    for (const auto& m : preserve)
      if (want(m)) carried.push_back(m);
    for (const auto& b : levelBags)
      if (want(b)) carried.push_back(b);
    return carried;
  }

  std::vector<std::string> aggKey(const Ctx& ctx) {
    std::vector<std::string> key = ctx.G;
    if (!ctx.levelId.empty() &&
        std::find(key.begin(), key.end(), ctx.levelId) == key.end())
      key.push_back(ctx.levelId);
    return key;
  }

  LevelResult sumByRows(const ExprPtr& e, Ctx& ctx) {
    LevelResult inner = rowsOf(e->e0, ctx);
    ctx.plan = inner.plan;
    std::vector<std::string> key = aggKey(ctx);
    std::vector<ProjCol> keyOuts;
    std::string firstKeyCol;
    for (const auto& k : e->keys) {
      const ProjCol* src = findOut(inner, k, e->pos);
      std::string col = ensureCol(src->expr, ctx, k);
      if (firstKeyCol.empty()) firstKeyCol = col;
      key.push_back(col);
      keyOuts.push_back({k, ScalarExpr::mkAttr(col)});
    }
    if (e->values.size() != 1)
      fail("UnsupportedPattern",
           "sumBy over multiple value attributes is not supported in plans",
           e->pos);
    std::vector<std::string> carried =
        carriedFor(ctx.preserve, ctx.levelBags, key, ctx.plan);
    const ProjCol* val = findOut(inner, e->values[0], e->pos);
    std::string sumCol = freshName(e->values[0]);
    ctx.plan = nestSum(key, val->expr, sumCol, ctx.plan,
                       inner.marker.empty()
                           ? std::vector<std::string>{}
                           : std::vector<std::string>{inner.marker},
                       carried);
    noteSchema(ctx.plan);
    LevelResult out;
    out.plan = ctx.plan;
    out.outs = keyOuts;
    out.outs.push_back({e->values[0], ScalarExpr::mkAttr(sumCol)});
    out.marker = firstKeyCol;
    ctx.marker = out.marker;
    return out;
  }

  LevelResult groupByRows(const ExprPtr& e, Ctx& ctx) {
    LevelResult inner = rowsOf(e->e0, ctx);
    ctx.plan = inner.plan;
    std::vector<std::string> key = aggKey(ctx);
    std::vector<ProjCol> keyOuts;
    std::string firstKeyCol;
    for (const auto& k : e->keys) {
      const ProjCol* src = findOut(inner, k, e->pos);
      std::string col = ensureCol(src->expr, ctx, k);
      if (firstKeyCol.empty()) firstKeyCol = col;
      key.push_back(col);
      keyOuts.push_back({k, ScalarExpr::mkAttr(col)});
    }
    std::vector<std::string> carried =
        carriedFor(ctx.preserve, ctx.levelBags, key, ctx.plan);
    std::vector<ProjCol> residual;
    for (const auto& o : inner.outs)
      if (std::find(e->keys.begin(), e->keys.end(), o.name) == e->keys.end())
        residual.push_back(o);
    std::string groupCol = freshName("group");
    ctx.plan = nestBag(key, residual, groupCol, ctx.plan,
                       inner.marker.empty()
                           ? std::vector<std::string>{}
                           : std::vector<std::string>{inner.marker},
                       carried);
    noteSchema(ctx.plan);
    LevelResult out;
    out.plan = ctx.plan;
    out.outs = keyOuts;
    out.outs.push_back({"group", ScalarExpr::mkAttr(groupCol)});
    out.marker = firstKeyCol;
    ctx.marker = out.marker;
    return out;
  }

  LevelResult dedupRows(const ExprPtr& e, Ctx& ctx) {
    LevelResult inner = rowsOf(e->e0, ctx);
    ctx.plan = inner.plan;
    std::vector<std::string> keep = contextCols(ctx);
    std::vector<ProjCol> cols;
    for (const auto& k : keep) cols.push_back({k, ScalarExpr::mkAttr(k)});
    std::vector<ProjCol> outs;
    for (const auto& o : inner.outs) {
      std::string g = freshName(o.name + "$d");
      cols.push_back({g, o.expr});
      outs.push_back({o.name, ScalarExpr::mkAttr(g)});
    }
    ctx.plan = dedupOp(project(std::move(cols), ctx.plan));
    LevelResult out;
    out.plan = ctx.plan;
    out.outs = std::move(outs);
    out.scalarElem = inner.scalarElem;
    out.marker = out.outs.empty() ? "" : out.outs.front().expr->attr;
    ctx.marker = out.marker;
    return out;
  }

  // ---- terminal tuples & level closing ----

  LevelResult terminalTuple(const ExprPtr& sing, Ctx& ctx) {
    const ExprPtr& elem = sing->e0;
    LevelResult res;

    if (!elem->type->isTuple()) {
      res.scalarElem = true;
      res.outs.push_back({"value", toSExpr(elem, ctx)});
      res.plan = ctx.plan;
      res.marker = ctx.marker;
      return res;
    }

    if (elem->kind != Kind::TupleCtor) {
      SExpr t = toSExpr(elem, ctx);
      if (t->kind != ScalarExpr::Kind::MkTuple)
        fail("UnsupportedPattern", "unsupported singleton element", elem->pos);
      for (const auto& [n, f] : t->fields) res.outs.push_back({n, f});
      res.plan = ctx.plan;
      res.marker = ctx.marker;
      return res;
    }

    std::vector<std::pair<std::string, ExprPtr>> bagFields;
    for (const auto& [name, f] : elem->fields) {
      if (f->type->isBag()) {
        if (SExpr inlined = toBagSExpr(f, ctx)) {
          res.outs.push_back({name, inlined});
        } else {
          bagFields.emplace_back(name, f);
          res.outs.push_back({name, nullptr});  // patched after closing
        }
      } else {
        res.outs.push_back({name, toSExpr(f, ctx)});
      }
    }

    if (!bagFields.empty()) {
      // Scalar outputs join the grouping prefix of the nested levels; inline
      // bag slots must survive the sibling nests as carried columns.
      std::vector<std::string> levelOutCols;
      for (auto& o : res.outs) {
        if (!o.expr) continue;
        if (o.expr->kind == ScalarExpr::Kind::Const) continue;
        PlanTyper typer(catalog_);
        if (typer.exprType(o.expr, schemaOf(ctx.plan))->isBag()) {
          std::string col = ensureCol(o.expr, ctx, o.name);
          o.expr = ScalarExpr::mkAttr(col);
          ctx.levelBags.push_back(col);
          continue;
        }
        std::string col = ensureCol(o.expr, ctx, o.name);
        o.expr = ScalarExpr::mkAttr(col);
        levelOutCols.push_back(col);
      }
      for (auto& [name, f] : bagFields) {
        SExpr bagExpr = closeBagAttr(name, f, levelOutCols, ctx);
        for (auto& o : res.outs)
          if (o.name == name && !o.expr) o.expr = bagExpr;
      }
    }

    res.plan = ctx.plan;
    res.marker = ctx.marker;
    return res;
  }

  // Peeks through aggregate/guard wrappers to the underlying loop source.
  static const NrcExpr* loopSourceOf(const ExprPtr& e) {
    const NrcExpr* cur = e.get();
    while (cur) {
      switch (cur->kind) {
        case Kind::SumBy:
        case Kind::GroupBy:
        case Kind::Dedup:
          cur = cur->e0.get();
          continue;
        case Kind::IfThen:
          cur = cur->e1.get();
          continue;
        case Kind::ForUnion:
          return cur;
        default:
          return nullptr;
      }
    }
    return nullptr;
  }

  SExpr closeBagAttr(const std::string& name, const ExprPtr& expr,
                     const std::vector<std::string>& levelOutCols, Ctx& ctx) {
    // Decorrelated (A-form) translation: group the right side by the join
    // key, then left-outer-join. Applies to correlated loops over top-level
    // bags whose body depends only on the loop variable.
    if (ctx.plan && expr->kind == Kind::ForUnion && isTopBag(expr->e0) &&
        expr->e1->kind == Kind::IfThen) {
      SplitCond sc = splitJoinCond(expr->e1->e0, expr->name);
      if (sc.supported && !sc.equalities.empty()) {
        bool bodyOnlyY = true;
        for (const auto& v : freeVars(expr->e1->e1))
          if (v != expr->name && !catalog_.inputs.count(v)) bodyOnlyY = false;
        if (bodyOnlyY) return closeAForm(name, expr, sc, ctx);
      }
    }

    Ctx child;
    child.level = ctx.level + 1;
    child.plan = ctx.plan;
    child.vars = ctx.vars;
    child.G = ctx.G;
    for (const auto& c : levelOutCols)
      if (std::find(child.G.begin(), child.G.end(), c) == child.G.end())
        child.G.push_back(c);
    child.preserve = ctx.preserve;
    if (!ctx.marker.empty()) child.preserve.push_back(ctx.marker);

    // The level id: the child's first outer-unnest provides it when the
    // source is a bag attribute; otherwise tag rows explicitly.
    bool idFromUnnest = false;
    if (const NrcExpr* loop = loopSourceOf(expr)) {
      const ExprPtr& src = loop->e0;
      if (src->kind == Kind::Project && src->e0->kind == Kind::Var &&
          ctx.vars.count(src->e0->name))
        idFromUnnest = true;
    }
    if (!idFromUnnest && ctx.plan) {
      Ctx tag = ctx;
      std::string id = addFreshId(tag, "rowID");
      ctx.plan = tag.plan;
      child.plan = tag.plan;
      child.G.push_back(id);
      child.levelId = id;
      noteSchema(ctx.plan);
    }

    LevelResult body = rowsOf(expr, child);

    std::vector<std::string> key = child.G;
    if (!child.levelId.empty() &&
        std::find(key.begin(), key.end(), child.levelId) == key.end())
      key.push_back(child.levelId);
    std::vector<std::string> carried =
        carriedFor(child.preserve, ctx.levelBags, key, body.plan);

    std::string bagCol = freshName(name);
    PlanPtr closed = nestBag(
        key, body.outs, bagCol, body.plan,
        body.marker.empty() ? std::vector<std::string>{}
                            : std::vector<std::string>{body.marker},
        carried);
    if (body.scalarElem)
      std::const_pointer_cast<PlanNode>(closed)->bagScalarElem = true;
    ctx.plan = closed;
    ctx.levelBags.push_back(bagCol);
    noteSchema(ctx.plan);
    return ScalarExpr::mkAttr(bagCol);
  }

  SExpr closeAForm(const std::string& name, const ExprPtr& expr, SplitCond& sc,
                   Ctx& ctx) {
    Ctx right;
    right.level = ctx.level + 1;
    right.plan = scan(expr->e0->name);
    noteSchema(right.plan);
    right.vars[expr->name] = scanBinding(expr->e0->type);
    for (const auto& p : sc.rightOnly)
      right.plan = select(toSExpr(p, right), right.plan);

    std::vector<std::string> rkeys;
    for (auto& [le, re] : sc.equalities)
      rkeys.push_back(ensureCol(toSExpr(re, right), right, "k"));
    std::vector<std::string> groupKeys;
    for (const auto& k : rkeys)
      if (std::find(groupKeys.begin(), groupKeys.end(), k) == groupKeys.end())
        groupKeys.push_back(k);
    right.G = groupKeys;

    LevelResult body = rowsOf(expr->e1->e1, right);

    std::string bagCol = freshName(name);
    PlanPtr grouped = nestBag(
        groupKeys, body.outs, bagCol, body.plan,
        body.marker.empty() ? std::vector<std::string>{}
                            : std::vector<std::string>{body.marker});
    if (body.scalarElem)
      std::const_pointer_cast<PlanNode>(grouped)->bagScalarElem = true;

    std::vector<std::string> lkeys;
    for (auto& [le, re] : sc.equalities)
      lkeys.push_back(ensureCol(toSExpr(le, ctx), ctx, "k"));

    PlanSchema leftS = schemaOf(ctx.plan);
    PlanSchema rightS = schemaOf(grouped);
    std::vector<std::pair<std::string, std::string>> renames;
    std::string bagColOut = bagCol;
    for (const auto& [n, t] : rightS.cols) {
      if (leftS.has(n)) {
        std::string renamed = freshName(n + "$r");
        renames.emplace_back(n, renamed);
        if (n == bagCol) bagColOut = renamed;
      } else {
        usedNames_.insert(n);
      }
    }
    PlanPtr joined = leftOuterJoin(lkeys, rkeys, ctx.plan, grouped);
    std::const_pointer_cast<PlanNode>(joined)->rightRenames = renames;
    std::const_pointer_cast<PlanNode>(joined)->birthLevel = ctx.level + 1;
    ctx.plan = joined;
    ctx.levelBags.push_back(bagColOut);
    noteSchema(ctx.plan);
    return ScalarExpr::mkAttr(bagColOut);
  }
};

}  // namespace

UnnestedProgram unnestProgram(const NrcProgram& typed, const SchemaEnv& env) {
  Unnester un(env);
  UnnestedProgram out;
  for (const auto& a : typed.assignments) {
    if (!a.expr->type)
      fail("PlanTypeError", "program must be typechecked before unnesting",
           a.pos);
    out.assignments.push_back(un.run(a.var, a.expr));
    un.catalog().addBag(a.var, a.expr->type);
  }
  out.catalog = un.catalog();
  return out;
}

UnnestedAssignment unnestExpr(const ExprPtr& typedExpr, const SchemaEnv& env,
                              const std::string& outVar) {
  Unnester un(env);
  UnnestedAssignment a = un.run(outVar, typedExpr);
  return a;
}

}  // namespace shredql
