#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "shredql/plan_eval.hpp"

using namespace shredql;

namespace {

SExpr attr(const char* a) { return ScalarExpr::mkAttr(a); }

RowBag bagOf(const std::vector<std::string>& names,
             std::vector<std::vector<Value>> rows) {
  RowBag b;
  b.schema = RowSchema::make(names);
  for (auto& r : rows) b.rows.push_back(Row{std::move(r)});
  return b;
}

PlanCatalog catalogWith(
    std::initializer_list<std::pair<const char*, const char*>> tables) {
  PlanCatalog cat;
  for (const auto& [name, type] : tables) cat.addBag(name, parseType(type));
  return cat;
}

Value sortedValue(const RowBag& rows, const PlanCatalog& cat, const PlanPtr& p) {
  PlanTyper typer(cat);
  return rowsToValue(rows, typer.schema(p));
}

}  // namespace

TEST_CASE("unnest expands bag attributes") {
  auto cat = catalogWith({{"R", "Bag(<x: int, a: Bag(<y: int>)>)"}});
  Value inner = Value::bag({Value::tuple({{"y", Value::ofInt(2)}}),
                            Value::tuple({{"y", Value::ofInt(3)}})});
  RowInputs inputs{{"R", bagOf({"x", "a"}, {{Value::ofInt(1), inner}})}};
  PlanPtr p = unnest("a", {{"y", "y"}}, scan("R"));
  RowBag out = evalPlan(p, cat, inputs);
  Value expected = Value::bag({
      Value::tuple({{"x", Value::ofInt(1)}, {"y", Value::ofInt(2)}}),
      Value::tuple({{"x", Value::ofInt(1)}, {"y", Value::ofInt(3)}}),
  });
  CHECK(bagEqual(sortedValue(out, cat, p), expected));
}

TEST_CASE("outer-unnest pairs empty bags with NULL and an id slot") {
  auto cat = catalogWith({{"R", "Bag(<x: int, a: Bag(<y: int>)>)"}});
  RowInputs inputs{{"R", bagOf({"x", "a"}, {{Value::ofInt(1), Value::emptyBag()}})}};
  PlanPtr p = outerUnnest("a", {{"y", "y"}}, "rid", scan("R"));
  RowBag out = evalPlan(p, cat, inputs);
  REQUIRE(out.rows.size() == 1);
  REQUIRE(out.schema->names == std::vector<std::string>{"x", "rid", "y"});
  CHECK(out.rows[0].cells[0] == Value::ofInt(1));
  CHECK(out.rows[0].cells[1].isNull());
  CHECK(out.rows[0].cells[2].isNull());
}

TEST_CASE("nest(+) casts NULL aggregation input to zero") {
  auto cat = catalogWith({{"R", "Bag(<x: int, a: Bag(<y: int>)>)"}});
  RowInputs inputs{{"R", bagOf({"x", "a"}, {{Value::ofInt(1), Value::emptyBag()}})}};
  PlanPtr p = nestSum({"x"}, attr("y"), "sum",
                      outerUnnest("a", {{"y", "y"}}, "rid", scan("R")));
  Value out = evalPlanToValue(p, cat, inputs);
  CHECK(bagEqual(out, Value::bag({Value::tuple(
                          {{"x", Value::ofInt(1)}, {"sum", Value::ofInt(0)}})})));
}

TEST_CASE("nest(bag) casts the NULL row to an empty bag") {
  auto cat = catalogWith({{"R", "Bag(<x: int, a: Bag(<y: int>)>)"}});
  RowInputs inputs{{"R", bagOf({"x", "a"},
                               {{Value::ofInt(1), Value::emptyBag()},
                                {Value::ofInt(2),
                                 Value::bag({Value::tuple({{"y", Value::ofInt(9)}})})}})}};
  PlanPtr p = nestBag({"x"}, {{"y", attr("y")}}, "grp",
                      outerUnnest("a", {{"y", "y"}}, "rid", scan("R")));
  Value out = evalPlanToValue(p, cat, inputs);
  Value expected = Value::bag({
      Value::tuple({{"x", Value::ofInt(1)}, {"grp", Value::emptyBag()}}),
      Value::tuple({{"x", Value::ofInt(2)},
                    {"grp", Value::bag({Value::tuple({{"y", Value::ofInt(9)}})})}}),
  });
  CHECK(bagEqual(out, expected));
}

TEST_CASE("duplicate empty outer tuples keep their multiplicity through nest") {
  auto cat = catalogWith({{"R", "Bag(<x: int, a: Bag(<y: int>)>)"}});
  // Two identical rows with empty bags: the nested result must contain two
  // output tuples, not one merged group.
  RowInputs inputs{{"R", bagOf({"x", "a"},
                               {{Value::ofInt(1), Value::emptyBag()},
                                {Value::ofInt(1), Value::emptyBag()}})}};
  PlanPtr un = outerUnnest("a", {{"y", "y"}}, "rid", scan("R"));
  PlanPtr p = nestBag({"rid", "x"}, {{"y", attr("y")}}, "grp", un, {"rid"});
  RowBag out = evalPlan(p, cat, inputs);
  CHECK(out.rows.size() == 2);
}

TEST_CASE("plan structural equality") {
  PlanPtr a = join({"k"}, {"k"}, scan("A"), scan("B"));
  PlanPtr b = join({"k"}, {"k"}, scan("A"), scan("B"));
  PlanPtr c = leftOuterJoin({"k"}, {"k"}, scan("A"), scan("B"));
  CHECK(planEqualStructural(a, b));
  CHECK_FALSE(planEqualStructural(a, c));

  // Projection attribute order is irrelevant.
  PlanPtr p1 = project({{"a", attr("a")}, {"b", attr("b")}}, scan("A"));
  PlanPtr p2 = project({{"b", attr("b")}, {"a", attr("a")}}, scan("A"));
  CHECK(planEqualStructural(p1, p2));

  // Generated id names match via a bijection (ids end in "ID").
  PlanPtr u1 = nestBag({"copID"}, {{"y", attr("y")}}, "g",
                       outerUnnest("a", {{"y", "y"}}, "copID", scan("A")));
  PlanPtr u2 = nestBag({"xID"}, {{"y", attr("y")}}, "g",
                       outerUnnest("a", {{"y", "y"}}, "xID", scan("A")));
  CHECK(planEqualStructural(u1, u2));

  // ... but the bijection must be consistent.
  PlanPtr u3 = nestBag({"x"}, {{"y", attr("y")}}, "g",
                       outerUnnest("a", {{"y", "y"}}, "xID", scan("A")));
  CHECK_FALSE(planEqualStructural(u1, u3));

  CHECK(planEqualStructural(scan("X"), scan("Y"), {.ignoreScanNames = true}));
}

TEST_CASE("plan print format is one operator per line") {
  PlanPtr p = project({{"x", attr("x")}},
                      join({"k"}, {"k"}, scan("A"), scan("B")));
  std::string s = printPlan(p);
  CHECK(s ==
        "project [x]\n"
        "  join [k] = [k]\n"
        "    scan A\n"
        "    scan B\n");
}

// ---- randomized properties --------------------------------------------------

namespace {

RowBag randomFlatBag(std::mt19937& rng, const std::vector<std::string>& names,
                     int maxRows, int keyDomain) {
  std::uniform_int_distribution<int> rowCount(0, maxRows);
  std::uniform_int_distribution<int> keyDist(0, keyDomain - 1);
  std::uniform_int_distribution<int> valDist(-5, 5);
  RowBag b;
  b.schema = RowSchema::make(names);
  int n = rowCount(rng);
  for (int i = 0; i < n; ++i) {
    Row r;
    for (std::size_t c = 0; c < names.size(); ++c)
      r.cells.push_back(c == 0 ? Value::ofInt(keyDist(rng))
                               : Value::ofInt(valDist(rng)));
    b.rows.push_back(std::move(r));
  }
  return b;
}

}  // namespace

TEST_CASE("cogroup equals left outer join followed by nest") {
  std::mt19937 rng(4242);
  auto cat = catalogWith({{"L", "Bag(<k: int, a: int>)"},
                          {"R", "Bag(<j: int, b: int>)"}});
  for (int trial = 0; trial < 60; ++trial) {
    RowInputs inputs{{"L", randomFlatBag(rng, {"k", "a"}, 24, 6)},
                     {"R", randomFlatBag(rng, {"j", "b"}, 24, 6)}};

    PlanPtr viaCogroup = cogroup({"k"}, {"j"}, {{"b", attr("b")}}, "grp",
                                 scan("L"), scan("R"));
    // The join route needs a per-left-row id so duplicate left tuples stay
    // distinct; it is projected away before comparing.
    PlanPtr tagged = project(
        {{"lid", ScalarExpr::mkFreshId()}, {"k", attr("k")}, {"a", attr("a")}},
        scan("L"));
    PlanPtr viaJoin = project(
        {{"k", attr("k")}, {"a", attr("a")}, {"grp", attr("grp")}},
        nestBag({"lid", "k", "a"}, {{"b", attr("b")}}, "grp",
                leftOuterJoin({"k"}, {"j"}, tagged, scan("R"))));

    Value v1 = evalPlanToValue(viaCogroup, cat, inputs);
    Value v2 = evalPlanToValue(viaJoin, cat, inputs);
    CHECK(bagEqual(v1, v2));
  }
}

TEST_CASE("join equals select over cartesian expansion") {
  std::mt19937 rng(777);
  auto cat = catalogWith({{"L", "Bag(<k: int, a: int>)"},
                          {"R", "Bag(<j: int, b: int>)"}});
  for (int trial = 0; trial < 60; ++trial) {
    RowInputs inputs{{"L", randomFlatBag(rng, {"k", "a"}, 20, 5)},
                     {"R", randomFlatBag(rng, {"j", "b"}, 20, 5)}};
    PlanPtr joined = join({"k"}, {"j"}, scan("L"), scan("R"));
    PlanPtr cross = select(
        ScalarExpr::mkBin(PrimOp::Eq, attr("k"), attr("j")),
        join({}, {}, scan("L"), scan("R")));  // empty key = cartesian product
    Value v1 = evalPlanToValue(joined, cat, inputs);
    Value v2 = evalPlanToValue(cross, cat, inputs);
    CHECK(bagEqual(v1, v2));
  }
}

TEST_CASE("left outer join preserves every left row") {
  std::mt19937 rng(99);
  auto cat = catalogWith({{"L", "Bag(<k: int, a: int>)"},
                          {"R", "Bag(<j: int, b: int>)"}});
  for (int trial = 0; trial < 40; ++trial) {
    RowInputs inputs{{"L", randomFlatBag(rng, {"k", "a"}, 20, 4)},
                     {"R", randomFlatBag(rng, {"j", "b"}, 20, 4)}};
    PlanPtr loj = leftOuterJoin({"k"}, {"j"}, scan("L"), scan("R"));
    RowBag out = evalPlan(loj, cat, inputs);

    // Count per distinct left row: output multiplicity >= input multiplicity.
    std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> inCount, outCount;
    for (const auto& r : inputs.at("L").rows)
      inCount[{r.cells[0].asInt(), r.cells[1].asInt()}]++;
    for (const auto& r : out.rows)
      outCount[{r.cells[0].asInt(), r.cells[1].asInt()}]++;
    for (const auto& [k, c] : inCount) CHECK(outCount[k] >= c);
  }
}

TEST_CASE("nest(bag) then unnest recovers the non-NULL pre-nest rows") {
  std::mt19937 rng(2024);
  auto cat = catalogWith({{"L", "Bag(<k: int, a: int>)"}});
  for (int trial = 0; trial < 40; ++trial) {
    RowInputs inputs{{"L", randomFlatBag(rng, {"k", "a"}, 24, 5)}};
    PlanPtr nested = nestBag({"k"}, {{"a", attr("a")}}, "grp", scan("L"));
    PlanPtr roundtrip = unnest("grp", {{"a", "a"}}, nested);
    Value v1 = evalPlanToValue(roundtrip, cat, inputs);
    Value v2 = evalPlanToValue(scan("L"), cat, inputs);
    CHECK(bagEqual(v1, v2));
  }
}

TEST_CASE("matlookup joins dictionaries by label") {
  PlanCatalog cat;
  cat.addBag("Top", parseType("Bag(<cname: string, corders: label>)"));
  cat.addBag("D", parseType("Bag(<label: label, odate: int>)"));
  auto lbl = [](int id) { return Value::label(1, {Value::ofInt(id)}); };
  RowInputs inputs{
      {"Top", bagOf({"cname", "corders"},
                    {{Value::ofString("alice"), lbl(1)},
                     {Value::ofString("bob"), lbl(2)},
                     {Value::ofString("dangling"), lbl(3)}})},
      {"D", bagOf({"label", "odate"},
                  {{lbl(1), Value::ofInt(10)}, {lbl(1), Value::ofInt(11)},
                   {lbl(2), Value::ofInt(20)}})},
  };
  PlanPtr p = matLookup("D", "corders", true, {{"odate", "odate"}}, scan("Top"));
  RowBag out = evalPlan(p, cat, inputs);
  CHECK(out.rows.size() == 4);  // alice x2, bob x1, dangling NULL-extended

  PlanPtr grouped = nestBag({"cname"}, {{"odate", attr("odate")}}, "orders", p);
  Value v = evalPlanToValue(grouped, cat, inputs);
  for (const auto& [t, c] : v.bagElems()) {
    if (t.attr("cname").asString() == "dangling")
      CHECK(t.attr("orders").bagSize() == 0);  // dangling label -> empty bag
    if (t.attr("cname").asString() == "alice")
      CHECK(t.attr("orders").bagSize() == 2);
  }
}

TEST_CASE("label domain deduplicates labels") {
  PlanCatalog cat;
  cat.addBag("Top", parseType("Bag(<corders: label>)"));
  auto lbl = [](int id) { return Value::label(1, {Value::ofInt(id)}); };
  RowInputs inputs{{"Top", bagOf({"corders"}, {{lbl(1)}, {lbl(1)}, {lbl(2)}})}};
  PlanPtr p = labelDomain("Top", "corders");
  RowBag out = evalPlan(p, cat, inputs);
  CHECK(out.rows.size() == 2);
  CHECK(out.schema->names == std::vector<std::string>{"label"});
}

TEST_CASE("plan typechecker rejects bad plans") {
  auto cat = catalogWith({{"R", "Bag(<x: int>)"}});
  CHECK_THROWS_AS((void)evalPlan(scan("missing"), cat, {}), Error);
  PlanPtr bad = project({{"y", attr("nope")}}, scan("R"));
  PlanTyper typer(cat);
  CHECK_THROWS_AS((void)typer.schema(bad), Error);
}
