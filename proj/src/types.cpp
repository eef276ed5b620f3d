#include "shredql/types.hpp"

#include <cctype>

namespace shredql {

std::string scalarKindName(ScalarKind k) {
  switch (k) {
    case ScalarKind::Int: return "int";
    case ScalarKind::Real: return "real";
    case ScalarKind::String: return "string";
    case ScalarKind::Bool: return "bool";
    case ScalarKind::Date: return "date";
  }
  return "?";
}

const TypePtr* NrcType::findAttr(const std::string& name) const {
  for (const auto& [n, t] : attrs)
    if (n == name) return &t;
  return nullptr;
}

bool NrcType::isFlatElement() const {
  if (isScalar() || isLabel()) return true;
  if (!isTuple()) return false;
  for (const auto& [n, t] : attrs)
    if (!t->isScalar() && !t->isLabel()) return false;
  return true;
}

bool NrcType::isFlatBag() const {
  return isBag() && element->isFlatElement();
}

std::string NrcType::str() const {
  switch (kind) {
    case Kind::Scalar:
      return scalarKindName(scalar);
    case Kind::Label:
      return "label";
    case Kind::Bag:
      return "Bag(" + element->str() + ")";
    case Kind::Tuple: {
      std::string s = "<";
      bool first = true;
      for (const auto& [n, t] : attrs) {
        if (!first) s += ", ";
        first = false;
        s += n + ": " + t->str();
      }
      return s + ">";
    }
  }
  return "?";
}

TypePtr scalarType(ScalarKind k) {
  auto t = std::make_shared<NrcType>();
  t->kind = NrcType::Kind::Scalar;
  t->scalar = k;
  return t;
}

TypePtr intType() { return scalarType(ScalarKind::Int); }
TypePtr realType() { return scalarType(ScalarKind::Real); }
TypePtr stringType() { return scalarType(ScalarKind::String); }
TypePtr boolType() { return scalarType(ScalarKind::Bool); }
TypePtr dateType() { return scalarType(ScalarKind::Date); }

TypePtr labelType(int tag) {
  auto t = std::make_shared<NrcType>();
  t->kind = NrcType::Kind::Label;
  t->labelTag = tag;
  return t;
}

TypePtr tupleType(std::vector<std::pair<std::string, TypePtr>> attrs) {
  auto t = std::make_shared<NrcType>();
  t->kind = NrcType::Kind::Tuple;
  for (std::size_t i = 0; i < attrs.size(); ++i)
    for (std::size_t j = i + 1; j < attrs.size(); ++j)
      if (attrs[i].first == attrs[j].first)
        fail("TypeMismatch", "duplicate tuple attribute '" + attrs[i].first + "'");
  t->attrs = std::move(attrs);
  return t;
}

TypePtr bagType(TypePtr element) {
  if (!element->isTuple() && !element->isScalar())
    fail("TypeMismatch", "bag element must be a tuple or scalar, got " + element->str());
  auto t = std::make_shared<NrcType>();
  t->kind = NrcType::Kind::Bag;
  t->element = std::move(element);
  return t;
}

bool typeEqual(const TypePtr& a, const TypePtr& b) {
  if (a.get() == b.get()) return true;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case NrcType::Kind::Scalar:
      return a->scalar == b->scalar;
    case NrcType::Kind::Label:
      return true;  // labels are interchangeable at the type level
    case NrcType::Kind::Bag:
      return typeEqual(a->element, b->element);
    case NrcType::Kind::Tuple: {
      if (a->attrs.size() != b->attrs.size()) return false;
      for (std::size_t i = 0; i < a->attrs.size(); ++i) {
        if (a->attrs[i].first != b->attrs[i].first) return false;
        if (!typeEqual(a->attrs[i].second, b->attrs[i].second)) return false;
      }
      return true;
    }
  }
  return false;
}

namespace {

struct TypeParser {
  const std::string& s;
  std::size_t i = 0;

  explicit TypeParser(const std::string& text) : s(text) {}

  void ws() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }

  bool eat(char c) {
    ws();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!eat(c)) fail("SyntaxError", std::string("expected '") + c + "' in type");
  }

  std::string ident() {
    ws();
    std::size_t start = i;
    while (i < s.size() &&
           (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_'))
      ++i;
    if (start == i) fail("SyntaxError", "expected identifier in type");
    return s.substr(start, i - start);
  }

  TypePtr type() {
    ws();
    if (i < s.size() && s[i] == '<') return tuple();
    std::string name = ident();
    if (name == "Bag") {
      expect('(');
      TypePtr el = type();
      expect(')');
      return bagType(el);
    }
    if (name == "int") return intType();
    if (name == "real") return realType();
    if (name == "string") return stringType();
    if (name == "bool") return boolType();
    if (name == "date") return dateType();
    if (name == "label") return labelType(0);
    fail("SyntaxError", "unknown type name '" + name + "'");
  }

  TypePtr tuple() {
    expect('<');
    std::vector<std::pair<std::string, TypePtr>> attrs;
    ws();
    if (!eat('>')) {
      do {
        std::string n = ident();
        expect(':');
        attrs.emplace_back(n, type());
      } while (eat(','));
      expect('>');
    }
    return tupleType(std::move(attrs));
  }
};

}  // namespace

TypePtr parseType(const std::string& text) {
  TypeParser p(text);
  TypePtr t = p.type();
  p.ws();
  if (p.i != text.size())
    fail("SyntaxError", "trailing characters in type: '" + text.substr(p.i) + "'");
  return t;
}

}  // namespace shredql
