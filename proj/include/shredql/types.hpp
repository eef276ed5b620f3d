#pragma once

#include <memory>
#include <string>
#include <vector>

#include "shredql/base.hpp"

namespace shredql {

enum class ScalarKind { Int, Real, String, Bool, Date };

std::string scalarKindName(ScalarKind k);

struct NrcType;
using TypePtr = std::shared_ptr<const NrcType>;

/// Source-language types: scalars, tuples, bags, and (shredded dialect only)
/// labels. Bag elements are restricted to tuples or scalars.
struct NrcType {
  enum class Kind { Scalar, Tuple, Bag, Label };

  Kind kind;
  ScalarKind scalar = ScalarKind::Int;                    // Kind::Scalar
  std::vector<std::pair<std::string, TypePtr>> attrs;     // Kind::Tuple
  TypePtr element;                                        // Kind::Bag
  int labelTag = 0;                                       // Kind::Label

  bool isScalar() const { return kind == Kind::Scalar; }
  bool isTuple() const { return kind == Kind::Tuple; }
  bool isBag() const { return kind == Kind::Bag; }
  bool isLabel() const { return kind == Kind::Label; }

  const TypePtr* findAttr(const std::string& name) const;

  /// A flat bag holds scalars or tuples whose attributes are all scalar.
  bool isFlatBag() const;
  bool isFlatElement() const;  // scalar, or tuple of scalars/labels

  std::string str() const;
};

TypePtr scalarType(ScalarKind k);
TypePtr intType();
TypePtr realType();
TypePtr stringType();
TypePtr boolType();
TypePtr dateType();
TypePtr labelType(int tag);
TypePtr tupleType(std::vector<std::pair<std::string, TypePtr>> attrs);
TypePtr bagType(TypePtr element);

bool typeEqual(const TypePtr& a, const TypePtr& b);

/// Parses the textual type grammar used by schema sidecars, e.g.
///   Bag(<cname: string, corders: Bag(<odate: date, oparts: Bag(<pid: int>)>)>)
TypePtr parseType(const std::string& text);

}  // namespace shredql
