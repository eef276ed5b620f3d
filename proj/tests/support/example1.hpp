// Shared test fixture: the customers/orders/parts running example.
// The expected result is computed by bruteForceTotals() below with plain
// nested loops and maps, independent of the evaluator and of every
// compilation route.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "shredql/eval.hpp"
#include "shredql/typecheck.hpp"

namespace testsupport {

using shredql::Value;

struct Op { int pid; double qty; };
struct Order { std::string odate; std::vector<Op> oparts; };
struct Customer { std::string cname; std::vector<Order> corders; };
struct Part { int pid; std::string pname; double price; };

struct Example1 {
  std::vector<Customer> customers;
  std::vector<Part> parts;
};

inline Example1 makeExample1() {
  // 3 customers / 5 orders / 20 line items / 10 parts, including a customer
  // with no orders, an order with no items, and items referencing missing
  // parts (pid 11, 12).
  Example1 fx;
  fx.customers = {
      {"alice",
       {{"1995-01-05", {{1, 2.0}, {2, 1.0}, {2, 3.0}, {7, 1.5}, {11, 4.0}}},
        {"1995-02-11", {{3, 1.0}, {3, 1.0}, {4, 2.5}}}}},
      {"bob",
       {{"1996-03-20", {}},
        {"1996-04-01", {{5, 2.0}, {5, 2.0}, {6, 1.0}, {1, 1.0}, {12, 9.0}, {8, 0.5}}},
        {"1996-05-15", {{9, 3.0}, {10, 1.0}, {10, 1.0}, {2, 2.0}, {7, 4.0}, {7, 4.0}}}}},
      {"carol", {}},
  };
  for (int pid = 1; pid <= 10; ++pid)
    fx.parts.push_back({pid, "part" + std::to_string(pid % 4), 10.0 + pid * 0.25});
  return fx;
}

inline Value opartsBag(const std::vector<Op>& ops, const std::vector<Part>& parts) {
  shredql::BagBuilder b;
  for (const auto& op : ops)
    b.add(Value::tuple({{"pid", Value::ofInt(op.pid)}, {"qty", Value::ofReal(op.qty)}}));
  (void)parts;
  return b.build();
}

inline Value copValue(const Example1& fx) {
  shredql::BagBuilder cop;
  for (const auto& c : fx.customers) {
    shredql::BagBuilder corders;
    for (const auto& o : c.corders) {
      corders.add(Value::tuple({{"odate", Value::ofDate(shredql::parseDateDays(o.odate))},
                                {"oparts", opartsBag(o.oparts, fx.parts)}}));
    }
    cop.add(Value::tuple({{"cname", Value::ofString(c.cname)},
                          {"corders", corders.build()}}));
  }
  return cop.build();
}

inline Value partValue(const Example1& fx) {
  shredql::BagBuilder b;
  for (const auto& p : fx.parts)
    b.add(Value::tuple({{"pid", Value::ofInt(p.pid)},
                        {"pname", Value::ofString(p.pname)},
                        {"price", Value::ofReal(p.price)}}));
  return b.build();
}

inline shredql::TypePtr copType() {
  return shredql::parseType(
      "Bag(<cname: string, corders: Bag(<odate: date, "
      "oparts: Bag(<pid: int, qty: real>)>)>)");
}

inline shredql::TypePtr partType() {
  return shredql::parseType("Bag(<pid: int, pname: string, price: real>)");
}

inline const char* example1Query() {
  return R"(
Q := for cop in COP union
  {< cname := cop.cname,
     corders := for co in cop.corders union
       {< odate := co.odate,
          oparts := sumBy[pname; total](
            for op in co.oparts union
              for p in Part union
                if op.pid == p.pid then
                  {< pname := p.pname, total := op.qty * p.price >}) >} >}
)";
}

inline shredql::SchemaEnv example1Schemas() {
  shredql::SchemaEnv env;
  env["COP"] = {copType(), {}};
  env["Part"] = {partType(), {{"pid"}}};
  return env;
}

inline shredql::ValueEnv example1Inputs() {
  const Example1 fx = makeExample1();
  return {{"COP", copValue(fx)}, {"Part", partValue(fx)}};
}

/// Independent oracle: plain nested loops + std::map, no Value machinery on
/// the way in. Produces the nested expected result for the running example.
inline Value bruteForceTotals(const Example1& fx) {
  shredql::BagBuilder out;
  for (const auto& c : fx.customers) {
    shredql::BagBuilder corders;
    for (const auto& o : c.corders) {
      std::map<std::string, double> totals;
      for (const auto& op : o.oparts)
        for (const auto& p : fx.parts)
          if (op.pid == p.pid) totals[p.pname] += op.qty * p.price;
      shredql::BagBuilder oparts;
      for (const auto& [pname, total] : totals)
        oparts.add(Value::tuple({{"pname", Value::ofString(pname)},
                                 {"total", Value::ofReal(total)}}));
      corders.add(Value::tuple({{"odate", Value::ofDate(shredql::parseDateDays(o.odate))},
                                {"oparts", oparts.build()}}));
    }
    out.add(Value::tuple({{"cname", Value::ofString(c.cname)},
                          {"corders", corders.build()}}));
  }
  return out.build();
}

}  // namespace testsupport
