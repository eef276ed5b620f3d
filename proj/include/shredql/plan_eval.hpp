#pragma once

#include "shredql/plan.hpp"

namespace shredql {

struct RowSchema {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> index;

  static std::shared_ptr<const RowSchema> make(std::vector<std::string> names);
  int find(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? -1 : it->second;
  }
};
using RowSchemaPtr = std::shared_ptr<const RowSchema>;

/// Flat executor row: scalars, labels, NULL markers, and (between Nest and its
/// consumer) nested bag slots. Multiplicities are repetition-encoded.
struct Row {
  std::vector<Value> cells;
};

struct RowBag {
  RowSchemaPtr schema;
  std::vector<Row> rows;
};

/// Converts a nested bag Value into rows (one row per multiplicity unit).
RowBag valueToRows(const Value& bag, const TypePtr& bagType);

/// Converts rows back to a nested bag value, using the plan schema for column
/// types. NULL bag slots become empty bags (outer-operator cast); NULL scalars
/// in output are rejected. `scalarElement` forces bag-of-scalars output (the
/// single column is the element itself).
Value rowsToValue(const RowBag& rows, const PlanSchema& schema);
Value rowsToValue(const RowBag& rows, const PlanSchema& schema,
                  bool scalarElement);

/// Evaluates a scalar expression over a row. NULL operands propagate.
class ExprEval {
 public:
  ExprEval(RowSchemaPtr schema, std::uint64_t* freshCounter)
      : schema_(std::move(schema)), fresh_(freshCounter) {}
  Value eval(const SExpr& e, const Row& row) const;

 private:
  RowSchemaPtr schema_;
  std::uint64_t* fresh_;
};

using RowInputs = std::map<std::string, RowBag>;

/// Small-step structural interpreter over in-memory bags: the plan-level
/// oracle, single-threaded and independent of the partitioned executor.
RowBag evalPlan(const PlanPtr& plan, const PlanCatalog& catalog,
                const RowInputs& inputs);

/// Convenience wrapper returning a nested bag value.
Value evalPlanToValue(const PlanPtr& plan, const PlanCatalog& catalog,
                      const RowInputs& inputs);

// ---- shared operator kernels (used by the interpreter and the executor) ----

/// Key of a row under the given column indexes; NULL cells keep their marker.
std::vector<Value> rowKey(const Row& row, const std::vector<int>& idx);

struct NestOutput {
  std::vector<Row> rows;
};

/// Applies the Nest operator to a group-complete set of rows (all rows with
/// equal keys must be present). Shared between the reference interpreter and
/// each executor partition.
std::vector<Row> nestRows(const PlanNode& nest, const RowSchema& inSchema,
                          const std::vector<Row>& rows,
                          const RowSchema& outSchema,
                          const std::vector<TypePtr>& outTypes);

}  // namespace shredql
