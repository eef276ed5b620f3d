#include "shredql/value.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace shredql {

Value Value::tuple(TupleAttrs attrs) {
  auto rep = std::make_shared<TupleRep>();
  rep->attrs = std::move(attrs);
  return Value(Rep{std::move(rep)});
}

Value Value::bag(std::vector<Value> elems) {
  BagElems counted;
  counted.reserve(elems.size());
  for (auto& e : elems) counted.emplace_back(std::move(e), 1);
  return bagCounted(std::move(counted));
}

Value Value::bagCounted(BagElems elems) {
  std::sort(elems.begin(), elems.end(),
            [](const auto& a, const auto& b) { return cmp(a.first, b.first) < 0; });
  BagElems merged;
  for (auto& [v, c] : elems) {
    if (c <= 0) continue;
    if (!merged.empty() && cmp(merged.back().first, v) == 0)
      merged.back().second += c;
    else
      merged.emplace_back(std::move(v), c);
  }
  auto rep = std::make_shared<BagRep>();
  rep->elems = std::move(merged);
  return Value(Rep{std::move(rep)});
}

Value Value::label(int tag, std::vector<Value> key) {
  auto rep = std::make_shared<LabelVal>();
  rep->tag = tag;
  rep->key = std::move(key);
  return Value(Rep{std::move(rep)});
}

Value::Kind Value::kind() const {
  switch (rep_.index()) {
    case 0: return Kind::Null;
    case 1: return Kind::Int;
    case 2: return Kind::Real;
    case 3: return Kind::String;
    case 4: return Kind::Bool;
    case 5: return Kind::Date;
    case 6: return Kind::Tuple;
    case 7: return Kind::Bag;
    default: return Kind::Label;
  }
}

std::int64_t Value::asInt() const {
  if (auto* p = std::get_if<IntRep>(&rep_)) return p->v;
  fail("TypeMismatch", "value is not an int: " + str());
}

double Value::asReal() const {
  if (auto* p = std::get_if<RealRep>(&rep_)) return p->v;
  fail("TypeMismatch", "value is not a real: " + str());
}

const std::string& Value::asString() const {
  if (auto* p = std::get_if<StrRep>(&rep_)) return p->v;
  fail("TypeMismatch", "value is not a string: " + str());
}

bool Value::asBool() const {
  if (auto* p = std::get_if<BoolRep>(&rep_)) return p->v;
  fail("TypeMismatch", "value is not a bool: " + str());
}

std::int32_t Value::asDate() const {
  if (auto* p = std::get_if<DateRep>(&rep_)) return p->days;
  fail("TypeMismatch", "value is not a date: " + str());
}

const Value::TupleAttrs& Value::tupleAttrs() const {
  if (auto* p = std::get_if<std::shared_ptr<const TupleRep>>(&rep_))
    return (*p)->attrs;
  fail("TypeMismatch", "value is not a tuple: " + str());
}

const Value::BagElems& Value::bagElems() const {
  if (auto* p = std::get_if<std::shared_ptr<const BagRep>>(&rep_))
    return (*p)->elems;
  fail("TypeMismatch", "value is not a bag: " + str());
}

const LabelVal& Value::labelVal() const {
  if (auto* p = std::get_if<std::shared_ptr<const LabelVal>>(&rep_)) return **p;
  fail("TypeMismatch", "value is not a label: " + str());
}

double Value::numeric() const {
  if (auto* p = std::get_if<IntRep>(&rep_)) return static_cast<double>(p->v);
  if (auto* p = std::get_if<RealRep>(&rep_)) return p->v;
  fail("TypeMismatch", "value is not numeric: " + str());
}

const Value* Value::findAttr(const std::string& name) const {
  for (const auto& [n, v] : tupleAttrs())
    if (n == name) return &v;
  return nullptr;
}

const Value& Value::attr(const std::string& name) const {
  if (const Value* v = findAttr(name)) return *v;
  fail("UnknownAttribute", "tuple has no attribute '" + name + "': " + str());
}

std::int64_t Value::bagSize() const {
  std::int64_t n = 0;
  for (const auto& [v, c] : bagElems()) n += c;
  return n;
}

int Value::cmp(const Value& a, const Value& b) {
  int ka = static_cast<int>(a.kind()), kb = static_cast<int>(b.kind());
  if (ka != kb) return ka < kb ? -1 : 1;
  switch (a.kind()) {
    case Kind::Null:
      return 0;
    case Kind::Int: {
      auto x = a.asInt(), y = b.asInt();
      return x < y ? -1 : x > y ? 1 : 0;
    }
    case Kind::Real: {
      auto x = a.asReal(), y = b.asReal();
      return x < y ? -1 : x > y ? 1 : 0;
    }
    case Kind::String:
      return a.asString().compare(b.asString());
    case Kind::Bool:
      return a.asBool() == b.asBool() ? 0 : (a.asBool() ? 1 : -1);
    case Kind::Date: {
      auto x = a.asDate(), y = b.asDate();
      return x < y ? -1 : x > y ? 1 : 0;
    }
    case Kind::Tuple: {
      const auto& ta = a.tupleAttrs();
      const auto& tb = b.tupleAttrs();
      if (ta.size() != tb.size()) return ta.size() < tb.size() ? -1 : 1;
      for (std::size_t i = 0; i < ta.size(); ++i) {
        int c = ta[i].first.compare(tb[i].first);
        if (c != 0) return c;
        c = cmp(ta[i].second, tb[i].second);
        if (c != 0) return c;
      }
      return 0;
    }
    case Kind::Bag: {
      const auto& ba = a.bagElems();
      const auto& bb = b.bagElems();
      std::size_t n = std::min(ba.size(), bb.size());
      for (std::size_t i = 0; i < n; ++i) {
        int c = cmp(ba[i].first, bb[i].first);
        if (c != 0) return c;
        if (ba[i].second != bb[i].second)
          return ba[i].second < bb[i].second ? -1 : 1;
      }
      if (ba.size() != bb.size()) return ba.size() < bb.size() ? -1 : 1;
      return 0;
    }
    case Kind::Label: {
      const auto& la = a.labelVal();
      const auto& lb = b.labelVal();
      if (la.tag != lb.tag) return la.tag < lb.tag ? -1 : 1;
      if (la.key.size() != lb.key.size())
        return la.key.size() < lb.key.size() ? -1 : 1;
      for (std::size_t i = 0; i < la.key.size(); ++i) {
        int c = cmp(la.key[i], lb.key[i]);
        if (c != 0) return c;
      }
      return 0;
    }
  }
  return 0;
}

std::uint64_t Value::hash(std::uint64_t seed) const {
  std::uint64_t h = hashCombine(seed, static_cast<std::uint64_t>(kind()));
  switch (kind()) {
    case Kind::Null:
      return h;
    case Kind::Int:
      return hashCombine(h, static_cast<std::uint64_t>(asInt()));
    case Kind::Real: {
      double d = asReal();
      if (d == 0.0) d = 0.0;  // normalize -0.0
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(d));
      std::memcpy(&bits, &d, sizeof(bits));
      return hashCombine(h, bits);
    }
    case Kind::String: {
      for (char c : asString()) h = hashCombine(h, static_cast<unsigned char>(c));
      return h;
    }
    case Kind::Bool:
      return hashCombine(h, asBool() ? 1 : 0);
    case Kind::Date:
      return hashCombine(h, static_cast<std::uint64_t>(asDate()));
    case Kind::Tuple: {
      for (const auto& [n, v] : tupleAttrs()) h = v.hash(h);
      return h;
    }
    case Kind::Bag: {
      for (const auto& [v, c] : bagElems())
        h = hashCombine(v.hash(h), static_cast<std::uint64_t>(c));
      return h;
    }
    case Kind::Label: {
      const auto& l = labelVal();
      h = hashCombine(h, static_cast<std::uint64_t>(l.tag));
      for (const auto& v : l.key) h = v.hash(h);
      return h;
    }
  }
  return h;
}

std::string Value::str() const {
  switch (kind()) {
    case Kind::Null:
      return "NULL";
    case Kind::Int:
      return std::to_string(asInt());
    case Kind::Real: {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.12g", asReal());
      return buf;
    }
    case Kind::String:
      return "\"" + asString() + "\"";
    case Kind::Bool:
      return asBool() ? "true" : "false";
    case Kind::Date:
      return formatDateDays(asDate());
    case Kind::Tuple: {
      std::string s = "<";
      bool first = true;
      for (const auto& [n, v] : tupleAttrs()) {
        if (!first) s += ", ";
        first = false;
        s += n + " := " + v.str();
      }
      return s + ">";
    }
    case Kind::Bag: {
      std::string s = "{";
      bool first = true;
      for (const auto& [v, c] : bagElems()) {
        for (std::int64_t i = 0; i < c; ++i) {
          if (!first) s += ", ";
          first = false;
          s += v.str();
        }
      }
      return s + "}";
    }
    case Kind::Label: {
      const auto& l = labelVal();
      std::string s = "L" + std::to_string(l.tag) + "(";
      bool first = true;
      for (const auto& v : l.key) {
        if (!first) s += ",";
        first = false;
        s += v.str();
      }
      return s + ")";
    }
  }
  return "?";
}

namespace {

bool realsClose(double a, double b, double relTol) {
  if (a == b) return true;
  double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) <= relTol * scale;
}

bool valueEqualTol(const Value& a, const Value& b, double relTol);

bool bagEqualTol(const Value::BagElems& a, const Value::BagElems& b,
                 double relTol) {
  std::int64_t na = 0, nb = 0;
  for (const auto& [v, c] : a) na += c;
  for (const auto& [v, c] : b) nb += c;
  if (na != nb) return false;
  if (a.size() == b.size()) {
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i)
      ok = a[i].second == b[i].second &&
           valueEqualTol(a[i].first, b[i].first, relTol);
    if (ok) return true;
  }
  // Tolerant fallback: greedy multiset matching. Only reached when the exact
  // sorted orders disagree because of near-tie reals.
  if (na > 4096) return false;
  std::vector<std::pair<Value, std::int64_t>> rest(b.begin(), b.end());
  for (const auto& [v, c] : a) {
    std::int64_t need = c;
    for (auto& [w, avail] : rest) {
      if (avail <= 0) continue;
      if (valueEqualTol(v, w, relTol)) {
        std::int64_t take = std::min(need, avail);
        avail -= take;
        need -= take;
        if (need == 0) break;
      }
    }
    if (need != 0) return false;
  }
  return true;
}

bool valueEqualTol(const Value& a, const Value& b, double relTol) {
  if (a.kind() != b.kind()) {
    if (a.isNull() || b.isNull()) return false;
    fail("TypeMismatch", "bag_equal over incompatible values: " + a.str() +
                             " vs " + b.str());
  }
  switch (a.kind()) {
    case Value::Kind::Real:
      return realsClose(a.asReal(), b.asReal(), relTol);
    case Value::Kind::Tuple: {
      const auto& ta = a.tupleAttrs();
      const auto& tb = b.tupleAttrs();
      if (ta.size() != tb.size()) return false;
      for (const auto& [n, v] : ta) {
        const Value* w = b.findAttr(n);
        if (!w || !valueEqualTol(v, *w, relTol)) return false;
      }
      return true;
    }
    case Value::Kind::Bag:
      return bagEqualTol(a.bagElems(), b.bagElems(), relTol);
    default:
      return Value::cmp(a, b) == 0;
  }
}

}  // namespace

bool bagEqual(const Value& a, const Value& b, double relTol) {
  return valueEqualTol(a, b, relTol);
}

Value defaultValue(const TypePtr& type) {
  switch (type->kind) {
    case NrcType::Kind::Scalar:
      switch (type->scalar) {
        case ScalarKind::Int: return Value::ofInt(0);
        case ScalarKind::Real: return Value::ofReal(0.0);
        case ScalarKind::String: return Value::ofString("");
        case ScalarKind::Bool: return Value::ofBool(false);
        case ScalarKind::Date: return Value::ofDate(0);
      }
      break;
    case NrcType::Kind::Tuple: {
      Value::TupleAttrs attrs;
      for (const auto& [n, t] : type->attrs) attrs.emplace_back(n, defaultValue(t));
      return Value::tuple(std::move(attrs));
    }
    case NrcType::Kind::Bag:
      return Value::emptyBag();
    case NrcType::Kind::Label:
      return Value::label(type->labelTag, {});
  }
  return Value::null();
}

void BagBuilder::add(Value v, std::int64_t count) {
  if (count > 0) elems_.emplace_back(std::move(v), count);
}

void BagBuilder::addAll(const Value& bag, std::int64_t factor) {
  for (const auto& [v, c] : bag.bagElems()) add(v, c * factor);
}

Value BagBuilder::build() { return Value::bagCounted(std::move(elems_)); }

std::int32_t parseDateDays(const std::string& iso, SourcePos pos) {
  int y = 0, m = 0, d = 0;
  if (std::sscanf(iso.c_str(), "%d-%d-%d", &y, &m, &d) != 3 || m < 1 || m > 12 ||
      d < 1 || d > 31)
    fail("SyntaxError", "bad date literal '" + iso + "'", pos);
  // days_from_civil (Hinnant)
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int>(doe) - 719468;
}

std::string formatDateDays(std::int32_t days) {
  // civil_from_days (Hinnant)
  std::int64_t z = days + 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u",
                static_cast<long long>(y + (m <= 2)), m, d);
  return buf;
}

}  // namespace shredql
