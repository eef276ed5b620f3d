#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "shredql/base.hpp"
#include "shredql/types.hpp"

namespace shredql {

class Value;

/// Opaque stand-in for an inner bag: a dictionary tag plus the captured key
/// scalars that identify the bag instance. Equality is structural.
struct LabelVal {
  int tag = 0;
  std::vector<Value> key;
};

/// Runtime nested value. Bags are multisets stored as (value, count) pairs in
/// canonical (sorted, merged) order; element ordering is never observable.
/// Null is executor-internal: the NULL extension introduced by outer operators.
class Value {
 public:
  enum class Kind { Null, Int, Real, String, Bool, Date, Tuple, Bag, Label };

  using TupleAttrs = std::vector<std::pair<std::string, Value>>;
  using BagElems = std::vector<std::pair<Value, std::int64_t>>;

  Value() : rep_(std::monostate{}) {}

  static Value null() { return Value(); }
  static Value ofInt(std::int64_t v) { return Value(IntRep{v}); }
  static Value ofReal(double v) { return Value(RealRep{v}); }
  static Value ofString(std::string v) { return Value(StrRep{std::move(v)}); }
  static Value ofBool(bool v) { return Value(BoolRep{v}); }
  static Value ofDate(std::int32_t days) { return Value(DateRep{days}); }
  static Value tuple(TupleAttrs attrs);
  /// Builds a bag from repeated elements; normalizes to canonical form.
  static Value bag(std::vector<Value> elems);
  static Value bagCounted(BagElems elems);
  static Value emptyBag() { return bagCounted({}); }
  static Value label(int tag, std::vector<Value> key);

  Kind kind() const;
  bool isNull() const { return kind() == Kind::Null; }
  bool isBag() const { return kind() == Kind::Bag; }
  bool isTuple() const { return kind() == Kind::Tuple; }

  std::int64_t asInt() const;
  double asReal() const;
  const std::string& asString() const;
  bool asBool() const;
  std::int32_t asDate() const;
  const TupleAttrs& tupleAttrs() const;
  const BagElems& bagElems() const;
  const LabelVal& labelVal() const;

  /// Numeric view: int or real widened to double.
  double numeric() const;

  const Value* findAttr(const std::string& name) const;
  const Value& attr(const std::string& name) const;

  std::int64_t bagSize() const;  // total multiplicity

  /// Exact comparisons (total order over same-kind values; kinds ranked).
  friend bool operator==(const Value& a, const Value& b) { return cmp(a, b) == 0; }
  friend bool operator!=(const Value& a, const Value& b) { return cmp(a, b) != 0; }
  friend bool operator<(const Value& a, const Value& b) { return cmp(a, b) < 0; }
  static int cmp(const Value& a, const Value& b);

  std::uint64_t hash(std::uint64_t seed = 0x5d3) const;

  /// Canonical text form; bags print sorted so diffs are stable.
  std::string str() const;

 private:
  struct IntRep { std::int64_t v; };
  struct RealRep { double v; };
  struct StrRep { std::string v; };
  struct BoolRep { bool v; };
  struct DateRep { std::int32_t days; };
  struct TupleRep { TupleAttrs attrs; };
  struct BagRep { BagElems elems; };

  using Rep = std::variant<std::monostate, IntRep, RealRep, StrRep, BoolRep,
                           DateRep, std::shared_ptr<const TupleRep>,
                           std::shared_ptr<const BagRep>,
                           std::shared_ptr<const LabelVal>>;

  explicit Value(Rep rep) : rep_(std::move(rep)) {}

  Rep rep_;
};

/// Multiset equality at every nesting level; reals compared with relative
/// tolerance (default 1e-9) since different routes may sum in different
/// orders. Throws Error("TypeMismatch") on structurally incompatible values.
bool bagEqual(const Value& a, const Value& b, double relTol = 1e-9);

/// The per-type zero value returned by get() on empty or non-singleton bags.
Value defaultValue(const TypePtr& type);

/// Accumulates bag elements and normalizes once.
class BagBuilder {
 public:
  void add(Value v, std::int64_t count = 1);
  void addAll(const Value& bag, std::int64_t factor = 1);
  Value build();

 private:
  Value::BagElems elems_;
};

// Date helpers: days since 1970-01-01, ISO-8601 text.
std::int32_t parseDateDays(const std::string& iso, SourcePos pos = {});
std::string formatDateDays(std::int32_t days);

}  // namespace shredql
