#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "shredql/ast.hpp"

namespace shredql {

struct ScalarExpr;
using SExpr = std::shared_ptr<const ScalarExpr>;

/// Row-level expressions used by Select predicates, Project columns and Nest
/// aggregates. NULL propagates through arithmetic and comparisons.
struct ScalarExpr {
  enum class Kind {
    Attr,     // column reference
    Const,    // literal
    Bin,      // a op b (Not: unary on a)
    GetElem,  // get() over a bag-valued column; yields defaultVal when not a singleton
    MkTuple,  // tuple from fields
    MkBag,    // bag literal from element expressions
    MkLabel,  // label with tag and captured args
    FreshId,  // unique row id, scoped per plan execution
  };

  Kind kind;
  std::string attr;                                    // Attr
  Value constant;                                      // Const
  PrimOp op = PrimOp::Add;                             // Bin
  SExpr a, b;                                          // Bin, GetElem(a)
  std::vector<std::pair<std::string, SExpr>> fields;   // MkTuple
  std::vector<SExpr> elems;                            // MkBag
  int labelTag = 0;                                    // MkLabel
  std::vector<SExpr> args;                             // MkLabel
  Value defaultVal;                                    // GetElem
  TypePtr valueType;                                   // GetElem/MkBag element typing aid

  static SExpr mkAttr(std::string name);
  static SExpr mkConst(Value v);
  static SExpr mkBin(PrimOp op, SExpr a, SExpr b);
  static SExpr mkNot(SExpr a);
  static SExpr mkGet(SExpr bag, Value defaultVal, TypePtr elemType);
  static SExpr mkTuple(std::vector<std::pair<std::string, SExpr>> fields);
  static SExpr mkBag(std::vector<SExpr> elems, TypePtr elemType);
  static SExpr mkLabel(int tag, std::vector<SExpr> args);
  static SExpr mkFreshId();

  std::string str() const;
};

bool scalarExprEqual(const SExpr& a, const SExpr& b,
                     std::map<std::string, std::string>* attrMap = nullptr);

struct PlanNode;
using PlanPtr = std::shared_ptr<const PlanNode>;

struct ProjCol {
  std::string name;
  SExpr expr;
};

enum class AggKind { Sum, Bag };

/// Algebraic plan operators. NULL discipline (outer semantics):
///   - OuterUnnest extends every outer tuple with a unique id column and
///     NULL-extends id + element columns when the bag is empty or NULL.
///   - Join keys never match on NULL; LeftOuterJoin NULL-extends every right
///     slot of unmatched left rows.
///   - Nest casts NULL aggregation inputs to 0 (+) / no contribution (⊎). A
///     contribution is skipped when its presence columns (the value columns
///     if `presence` is empty) are all NULL; NULL bag slots inside kept
///     contributions become empty bags. A group whose rows are all skipped
///     by a non-empty `presence` list emits one row per input row, which
///     preserves multiplicities of NULL-extended outer tuples.
///   - `carried` columns are group-constant riders copied from the group.
struct PlanNode {
  enum class Kind {
    Scan, Select, Project, Join, LeftOuterJoin, Unnest, OuterUnnest,
    Nest, Cogroup, BagToDict, MatLookup, Dedup, LabelDomain, UnionAll,
  };

  Kind kind;
  PlanPtr left, right;  // left = only child for unary operators

  std::string inputVar;  // Scan source, MatLookup dictionary, LabelDomain source

  SExpr pred;                            // Select
  std::vector<std::string> nullifyAttrs; // Select: nullify instead of filter

  std::vector<ProjCol> cols;  // Project

  std::vector<std::string> leftKeys, rightKeys;  // Join/LeftOuterJoin/Cogroup
  // Collision renames applied to the right side's columns (old -> new); keeps
  // joins free of duplicate names without extra projection nodes.
  std::vector<std::pair<std::string, std::string>> rightRenames;

  std::string bagAttr;  // Unnest/OuterUnnest input col; Nest(⊎)/Cogroup output col
  std::vector<std::pair<std::string, std::string>> elemCols;  // (out col, elem attr; "" = scalar element)
  std::string idAttr;       // OuterUnnest id column
  bool keepBagCol = false;  // OuterUnnest: retain the unnested bag column

  AggKind agg = AggKind::Bag;         // Nest
  std::vector<std::string> key;       // Nest
  SExpr sumValue;                     // Nest(+)
  std::string sumAs;                  // Nest(+) output column
  std::vector<ProjCol> bagValue;      // Nest(⊎)/Cogroup collected tuple
  std::vector<std::string> presence;  // Nest contribution markers
  std::vector<std::string> carried;   // Nest group-constant riders
  bool localOnly = false;             // Nest: partition-local partial aggregate
  bool bagScalarElem = false;         // Nest(⊎)/Cogroup: collect bare scalars

  std::string labelAttr;  // BagToDict/MatLookup/LabelDomain label column
  bool outerLookup = true;                                    // MatLookup
  std::vector<std::pair<std::string, std::string>> matCols;   // MatLookup (dict attr -> out col)

  // Annotation: the nesting level the unnester created this node at (root =
  // 0). Ignored by equality and printing; used by structural invariant tests.
  int birthLevel = -1;
};

// ---- constructors ----------------------------------------------------------
PlanPtr scan(std::string var);
PlanPtr select(SExpr pred, PlanPtr child,
               std::vector<std::string> nullifyAttrs = {});
PlanPtr project(std::vector<ProjCol> cols, PlanPtr child);
PlanPtr join(std::vector<std::string> leftKeys, std::vector<std::string> rightKeys,
             PlanPtr l, PlanPtr r);
PlanPtr leftOuterJoin(std::vector<std::string> leftKeys,
                      std::vector<std::string> rightKeys, PlanPtr l, PlanPtr r);
PlanPtr unnest(std::string bagAttr,
               std::vector<std::pair<std::string, std::string>> elemCols,
               PlanPtr child);
PlanPtr outerUnnest(std::string bagAttr,
                    std::vector<std::pair<std::string, std::string>> elemCols,
                    std::string idAttr, PlanPtr child, bool keepBagCol = false);
PlanPtr nestSum(std::vector<std::string> key, SExpr value, std::string sumAs,
                PlanPtr child, std::vector<std::string> presence = {},
                std::vector<std::string> carried = {}, bool localOnly = false);
PlanPtr nestBag(std::vector<std::string> key, std::vector<ProjCol> value,
                std::string bagAttr, PlanPtr child,
                std::vector<std::string> presence = {},
                std::vector<std::string> carried = {});
PlanPtr cogroup(std::vector<std::string> leftKeys,
                std::vector<std::string> rightKeys, std::vector<ProjCol> value,
                std::string bagAttr, PlanPtr l, PlanPtr r);
PlanPtr bagToDict(std::string labelAttr, PlanPtr child);
PlanPtr matLookup(std::string dictVar, std::string labelAttr, bool outer,
                  std::vector<std::pair<std::string, std::string>> matCols,
                  PlanPtr child);
PlanPtr dedupOp(PlanPtr child);
PlanPtr labelDomain(std::string sourceVar, std::string labelAttr);
PlanPtr unionAll(PlanPtr l, PlanPtr r);

// ---- schemas ---------------------------------------------------------------

struct PlanSchema {
  std::vector<std::pair<std::string, TypePtr>> cols;
  std::vector<std::vector<std::string>> uniqueKeys;

  int find(const std::string& name) const;
  const TypePtr& type(const std::string& name) const;
  bool has(const std::string& name) const { return find(name) >= 0; }
  std::vector<std::string> names() const;
};

/// Catalog of plan inputs: base tables, prior assignments, dictionaries.
struct PlanCatalog {
  std::map<std::string, PlanSchema> inputs;

  static PlanSchema schemaOfBag(const TypePtr& bagType,
                                std::vector<std::vector<std::string>> uniqueKeys = {});
  void addBag(const std::string& var, const TypePtr& bagType,
              std::vector<std::vector<std::string>> uniqueKeys = {});
};

/// Plan typechecker: computes (and caches) the output schema of every node.
/// Errors: PlanTypeError, MissingInput.
class PlanTyper {
 public:
  explicit PlanTyper(const PlanCatalog& catalog) : catalog_(catalog) {}
  const PlanSchema& schema(const PlanPtr& node);
  TypePtr exprType(const SExpr& e, const PlanSchema& in);

 private:
  PlanSchema compute(const PlanPtr& node);
  const PlanCatalog& catalog_;
  std::unordered_map<const PlanNode*, PlanSchema> cache_;
};

// ---- serialization & structural equality -----------------------------------

/// One operator per line, children indented one step deeper.
std::string printPlan(const PlanPtr& plan);

struct PlanEqualOptions {
  bool ignoreScanNames = false;
};

/// Structural equality up to attribute ordering and generated id names.
bool planEqualStructural(const PlanPtr& a, const PlanPtr& b,
                         PlanEqualOptions opts = {});

/// All operators of the tree in preorder (for structural assertions).
void visitPlan(const PlanPtr& plan, const std::function<void(const PlanPtr&)>& fn);

}  // namespace shredql
