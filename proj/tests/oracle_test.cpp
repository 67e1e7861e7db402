#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "secpol/error.hpp"
#include "secpol/oracle.hpp"
#include "secpol/synth.hpp"
#include "support.hpp"

namespace secpol {
namespace {

using testing::data_path;
using testing::tpch;

// ---------------------------------------------------------------------------
// Independent reference: each predicate hand-coded as loops over the instance.

struct Table {
  const RelationDef& def;
  const RelationInstance& inst;

  Table(const DatabaseInstance& db, const char* name) : def(db.schema().at(name)), inst(db.get(name)) {}
  const Value& at(const Tuple& t, const char* attr) const { return t[*def.index_of(attr)]; }
  Decimal dec(const Tuple& t, const char* attr) const { return *at(t, attr).as_decimal(); }
  std::int64_t num(const Tuple& t, const char* attr) const { return *at(t, attr).get_if<std::int64_t>(); }
  const std::string& str(const Tuple& t, const char* attr) const { return *at(t, attr).get_if<std::string>(); }
};

Decimal revenue(const Table& l, const Tuple& t) {
  return l.dec(t, "l_extendedprice") * (Decimal::from_int(1) - l.dec(t, "l_discount"));
}

// Line items of every order placed by customer `custkey`.
std::vector<const Tuple*> customer_lines(const DatabaseInstance& db, std::int64_t custkey) {
  Table o(db, "orders"), l(db, "lineitem");
  std::vector<const Tuple*> out;
  for (const auto& ot : o.inst.rows) {
    if (o.num(ot, "o_custkey") != custkey) continue;
    for (const auto& lt : l.inst.rows)
      if (l.num(lt, "l_orderkey") == o.num(ot, "o_orderkey")) out.push_back(&lt);
  }
  return out;
}

using RowPred = std::function<bool(const DatabaseInstance&, const Tuple&)>;

bool ref_spending(const DatabaseInstance& db, const Tuple& c) {
  Table ct(db, "customer"), l(db, "lineitem");
  Decimal sum(0, 2);
  for (const Tuple* lt : customer_lines(db, ct.num(c, "c_custkey"))) sum = sum + revenue(l, *lt);
  return sum > Decimal::from_int(5000);
}

bool ref_returns(const DatabaseInstance& db, const Tuple& c) {
  Table ct(db, "customer"), l(db, "lineitem");
  for (const Tuple* lt : customer_lines(db, ct.num(c, "c_custkey")))
    if (l.str(*lt, "l_returnflag") == "R") return true;
  return false;
}

bool ref_high_value_order(const DatabaseInstance& db, const Tuple& c) {
  Table ct(db, "customer"), o(db, "orders");
  for (const auto& ot : o.inst.rows)
    if (o.num(ot, "o_custkey") == ct.num(c, "c_custkey") && o.dec(ot, "o_totalprice") > Decimal::from_int(1000))
      return true;
  return false;
}

bool ref_three_suppliers(const DatabaseInstance& db, const Tuple& c) {
  Table ct(db, "customer"), l(db, "lineitem");
  std::set<std::int64_t> supps;
  for (const Tuple* lt : customer_lines(db, ct.num(c, "c_custkey"))) supps.insert(l.num(*lt, "l_suppkey"));
  return supps.size() >= 3;
}

bool ref_rich(const DatabaseInstance& db, const Tuple& c) {
  Table ct(db, "customer");
  return ct.dec(c, "c_acctbal") > Decimal::from_int(1000);
}

bool ref_revenue_share(const DatabaseInstance& db, const Tuple& lt) {
  Table l(db, "lineitem");
  Decimal total(0, 2);
  for (const auto& other : l.inst.rows)
    if (l.num(other, "l_orderkey") == l.num(lt, "l_orderkey")) total = total + revenue(l, other);
  return revenue(l, lt) >= Decimal(2, 1) * total;
}

RowPred ref_same_nation_as(std::string user) {
  return [user](const DatabaseInstance& db, const Tuple& lt) {
    Table l(db, "lineitem"), o(db, "orders"), c(db, "customer"), s(db, "supplier");
    for (const auto& ot : o.inst.rows) {
      if (o.num(ot, "o_orderkey") != l.num(lt, "l_orderkey")) continue;
      for (const auto& ctup : c.inst.rows) {
        if (c.num(ctup, "c_custkey") != o.num(ot, "o_custkey") || c.str(ctup, "c_name") != user) continue;
        for (const auto& st : s.inst.rows)
          if (s.num(st, "s_suppkey") == l.num(lt, "l_suppkey") &&
              s.num(st, "s_nationkey") == c.num(ctup, "c_nationkey"))
            return true;
      }
    }
    return false;
  };
}

Tuple key_of(const RelationDef& def, const Tuple& t) {
  Tuple k;
  for (auto i : def.key_indexes()) k.push_back(t[i]);
  return k;
}

std::set<Tuple> ref_full(const DatabaseInstance& db, const char* relation, const RowPred& p) {
  std::set<Tuple> out;
  const RelationDef& def = db.schema().at(relation);
  for (const auto& t : db.get(relation).rows)
    if (p(db, t)) out.insert(key_of(def, t));
  return out;
}

std::set<Tuple> all_keys(const DatabaseInstance& db, const char* relation) {
  return ref_full(db, relation, [](const DatabaseInstance&, const Tuple&) { return true; });
}

std::set<Tuple> intersect(const std::set<Tuple>& a, const std::set<Tuple>& b) {
  std::set<Tuple> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}
std::set<Tuple> unite(const std::set<Tuple>& a, const std::set<Tuple>& b) {
  std::set<Tuple> out = a;
  out.insert(b.begin(), b.end());
  return out;
}
std::set<Tuple> minus(const std::set<Tuple>& a, const std::set<Tuple>& b) {
  std::set<Tuple> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

// ---------------------------------------------------------------------------
// Policies under test

const char* kAtoms = R"(
predicate spending on customer c = (
  (SELECT COALESCE(SUM(l.l_extendedprice * (1 - l.l_discount)), 0)
     FROM orders o, lineitem l
    WHERE o.o_custkey = c.c_custkey AND l.l_orderkey = o.o_orderkey) > 5000);
predicate returns on customer c = (
  EXISTS (SELECT 1 FROM orders o, lineitem l
           WHERE o.o_custkey = c.c_custkey AND l.l_orderkey = o.o_orderkey AND l.l_returnflag = 'R'));

policy rich on customer using (c_acctbal > 1000) mask (c_phone => 'MASKED', * => keep);
policy high_value on customer c
  using (EXISTS (SELECT 1 FROM orders o WHERE o.o_custkey = c.c_custkey AND o.o_totalprice > 1000))
  suppress-otherwise;
policy no_returns on customer c
  using (NOT EXISTS (SELECT 1 FROM orders o, lineitem l
                      WHERE o.o_custkey = c.c_custkey AND l.l_orderkey = o.o_orderkey AND l.l_returnflag = 'R'))
  mask (c_address => null, c_comment => suppress, * => keep);
policy three_suppliers on customer c
  using (EXISTS (SELECT 1 FROM orders o, lineitem l
                  WHERE o.o_custkey = c.c_custkey AND l.l_orderkey = o.o_orderkey
                  GROUP BY o.o_custkey HAVING COUNT(DISTINCT l.l_suppkey) >= 3))
  mask (* => null);
policy big_spender on customer using (spending) suppress-otherwise;
policy returner on customer using (returns) mask (c_name => 'HIDDEN', * => keep);

policy revenue_share on lineitem l
  using (l.l_extendedprice * (1 - l.l_discount) >= 0.2 * (
           SELECT SUM(l2.l_extendedprice * (1 - l2.l_discount)) FROM lineitem l2
            WHERE l2.l_orderkey = l.l_orderkey))
  suppress-otherwise;
policy same_nation on lineitem l
  using (EXISTS (SELECT 1 FROM orders o, customer c, supplier s
                  WHERE l.l_orderkey = o.o_orderkey AND o.o_custkey = c.c_custkey
                    AND l.l_suppkey = s.s_suppkey AND c.c_name = :current_user
                    AND c.c_nationkey = s.s_nationkey))
  mask (l_comment => 'REDACTED', * => keep);

-- One enforced policy per table keeps the catalogue a valid document.
policy customer_catalogue on customer =
  (rich and (high_value and (no_returns and (three_suppliers and (big_spender and returner)))));
policy lineitem_catalogue on lineitem = (revenue_share or same_nation);
)";

const PolicySet& atoms() {
  static const PolicySet set = parse_policies(kAtoms, tpch());
  return set;
}

const AtomicPolicy& atom(const std::string& name) {
  return std::get<AtomicPolicy>(atoms().find_definition(name)->expr.node);
}
PolicyExpr leaf(const std::string& name) { return atomic(atom(name)); }
const PredicateExpr& named(const std::string& name) { return atoms().find_predicate(name)->body; }

struct AtomCase {
  const char* name;
  const char* relation;
  RowPred reference;
};

const std::vector<AtomCase>& customer_atoms() {
  static const std::vector<AtomCase> cases = {
      {"rich", "customer", ref_rich},
      {"high_value", "customer", ref_high_value_order},
      {"no_returns", "customer", [](const DatabaseInstance& db, const Tuple& c) { return !ref_returns(db, c); }},
      {"three_suppliers", "customer", ref_three_suppliers},
      {"big_spender", "customer", ref_spending},
      {"returner", "customer", ref_returns},
  };
  return cases;
}

EvalContext user_ctx(std::string user) {
  EvalContext ctx;
  ctx.current_user = std::move(user);
  return ctx;
}

std::vector<DatabaseInstance> random_instances(int n) {
  std::vector<DatabaseInstance> out;
  std::mt19937_64 rng(99);
  for (int i = 0; i < n; ++i) {
    SynthOptions o;
    o.seed = 1000 + static_cast<std::uint64_t>(i);
    o.customers = std::uniform_int_distribution<int>(4, 20)(rng);
    o.suppliers = std::uniform_int_distribution<int>(2, 6)(rng);
    o.parts = std::uniform_int_distribution<int>(3, 12)(rng);
    o.max_orders_per_customer = 3;
    o.max_lines_per_order = 5;
    out.push_back(synth_tpch(tpch(), o));
  }
  return out;
}

const std::vector<DatabaseInstance>& instances() {
  static const std::vector<DatabaseInstance> all = [] {
    auto v = random_instances(50);
    v.push_back(load_instance_dir(tpch(), data_path("fixtures/composite")));
    return v;
  }();
  return all;
}

// ---------------------------------------------------------------------------
// Worked composite example

const PolicySet& composite() {
  static const PolicySet set = parse_policies_file(data_path("policies/composite.pol"), tpch());
  return set;
}

TEST(CompositeExample, FullPartialAndNullRows) {
  DatabaseInstance db = load_instance_dir(tpch(), data_path("fixtures/composite"));
  const RelationDef& def = tpch().at("customer");
  MaskedRelation m = eval_policy(*composite().for_table("customer"), db, EvalContext{});
  ASSERT_EQ(m.rows.size(), 3u);
  const auto& base = db.get("customer").rows;

  EXPECT_EQ(m.rows[0].tag, VisibilityTag::Full);
  EXPECT_EQ(m.rows[0].values, base[0]);

  EXPECT_EQ(m.rows[1].tag, VisibilityTag::Masked);
  for (std::size_t i = 0; i < def.attributes.size(); ++i) {
    const std::string& a = def.attributes[i].name;
    if (a == "c_address" || a == "c_phone")
      EXPECT_EQ(m.rows[1].values[i], Value::text("MASKED")) << a;
    else
      EXPECT_EQ(m.rows[1].values[i], base[1][i]) << a;
  }

  EXPECT_EQ(m.rows[2].tag, VisibilityTag::Masked);
  for (std::size_t i = 0; i < def.attributes.size(); ++i) {
    const std::string& a = def.attributes[i].name;
    if (a == "c_custkey" || a == "c_name")
      EXPECT_EQ(m.rows[2].values[i], base[2][i]) << a;
    else
      EXPECT_TRUE(m.rows[2].values[i].is_null()) << a;
  }

  EXPECT_EQ(visible_set(m), (std::set<Tuple>{{Value::integer(1)}}));
  EXPECT_EQ(render(m, def),
            "c_custkey,visibility,c_custkey,c_name,c_address,c_nationkey,c_phone,c_acctbal,c_mktsegment,c_comment\n"
            "1,full,1,Customer#000000001,12 Elm St,7,17-123-456-7890,711.56,BUILDING,loyal\n"
            "2,masked,2,Customer#000000002,MASKED,7,MASKED,121.65,AUTOMOBILE,returns often\n"
            "3,masked,3,Customer#000000003,,,,,,\n");
}

TEST(CompositeExample, FixtureMatchesReferenceRegions) {
  DatabaseInstance db = load_instance_dir(tpch(), data_path("fixtures/composite"));
  const auto& rows = db.get("customer").rows;
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(ref_spending(db, rows[0]) && !ref_returns(db, rows[0]));
  EXPECT_TRUE(ref_spending(db, rows[1]) && ref_returns(db, rows[1]));
  EXPECT_FALSE(ref_spending(db, rows[2]));
}

TEST(CompositeExample, SecondLeafAloneMasksOnlyTheReturningBigSpender) {
  DatabaseInstance db = load_instance_dir(tpch(), data_path("fixtures/composite"));
  const auto& alpha2 = std::get<AtomicPolicy>(composite().find_definition("alpha2")->expr.node);
  MaskedRelation m = eval_atomic(alpha2, db, EvalContext{});
  ASSERT_EQ(m.rows.size(), 3u);
  EXPECT_EQ(m.rows[0].tag, VisibilityTag::Full);
  EXPECT_EQ(m.rows[1].tag, VisibilityTag::Masked);
  EXPECT_EQ(m.rows[1].applied_masks, std::vector<std::string>{"alpha2"});
  EXPECT_EQ(m.rows[2].tag, VisibilityTag::Full);
}

// ---------------------------------------------------------------------------
// Predicates and atomic policies on hand-built instances

DatabaseInstance hand_built(const std::map<std::string, std::string>& tables) { return load_instance(tpch(), tables); }

const char* kCustomerHeader = "c_custkey,c_name,c_address,c_nationkey,c_phone,c_acctbal,c_mktsegment,c_comment\n";
const char* kOrdersHeader =
    "o_orderkey,o_custkey,o_orderstatus,o_totalprice,o_orderdate,o_orderpriority,o_clerk,o_shippriority,o_comment\n";
const char* kLineHeader =
    "l_orderkey,l_partkey,l_suppkey,l_linenumber,l_quantity,l_extendedprice,l_discount,l_tax,l_returnflag,"
    "l_linestatus,l_shipdate,l_commitdate,l_receiptdate,l_shipinstruct,l_shipmode,l_comment\n";

std::string order_row(int key, int cust, const char* price) {
  return std::to_string(key) + "," + std::to_string(cust) + ",F," + price + ",1995-01-01,1-URGENT,c,0,x\n";
}
std::string line_row(int order, int line, const char* price, const char* disc, const char* flag) {
  return std::to_string(order) + ",1,1," + std::to_string(line) + ",1," + price + "," + disc + ",0," + flag +
         ",F,1995-01-02,1995-01-03,1995-01-04,NONE,AIR,x\n";
}

TEST(EvalPredicate, HighValueOrderExample) {
  DatabaseInstance db = hand_built({{"customer", std::string(kCustomerHeader) + "1,a,b,1,p,0,s,c\n"},
                                    {"orders", std::string(kOrdersHeader) + order_row(10, 1, "1500")}});
  const AtomicPolicy& a = atom("high_value");
  EXPECT_EQ(eval_predicate(a.predicate, tpch().at("customer"), db.get("customer").rows[0], db, {}), Truth::True);
}

TEST(EvalPredicate, TrueLiteral) {
  DatabaseInstance db = hand_built({{"customer", std::string(kCustomerHeader) + "1,a,b,1,p,0,s,c\n"}});
  EXPECT_EQ(eval_predicate(bool_lit(true), tpch().at("customer"), db.get("customer").rows[0], db, {}),
            Truth::True);
}

TEST(EvalPredicate, SpendingOfExactlyFiveThousandIsNotEnough) {
  DatabaseInstance db =
      hand_built({{"customer", std::string(kCustomerHeader) + "1,a,b,1,p,0,s,c\n2,a,b,1,p,0,s,c\n"},
                  {"orders", std::string(kOrdersHeader) + order_row(10, 1, "1") + order_row(11, 2, "1")},
                  {"lineitem", std::string(kLineHeader) + line_row(10, 1, "4000.00", "0.00", "N") +
                                   line_row(10, 2, "1250.00", "0.20", "N") + line_row(11, 1, "5000.01", "0", "N")}});
  const RelationDef& c = tpch().at("customer");
  const auto& rows = db.get("customer").rows;
  EXPECT_FALSE(ref_spending(db, rows[0]));
  EXPECT_EQ(eval_predicate(named("spending"), c, rows[0], db, {}), Truth::False);
  EXPECT_TRUE(ref_spending(db, rows[1]));
  EXPECT_EQ(eval_predicate(named("spending"), c, rows[1], db, {}), Truth::True);
}

TEST(EvalPredicate, EmptyAggregatesFollowSql) {
  DatabaseInstance db = hand_built({{"customer", std::string(kCustomerHeader) + "1,a,b,1,p,0,s,c\n"}});
  const RelationDef& c = tpch().at("customer");
  const Tuple& row = db.get("customer").rows[0];
  PolicySet set = parse_policies_unchecked(
      "predicate s on customer c = ((SELECT SUM(o.o_totalprice) FROM orders o WHERE o.o_custkey = c.c_custkey) > 0);"
      "predicate n on customer c = ((SELECT COUNT(*) FROM orders o WHERE o.o_custkey = c.c_custkey) = 0);"
      "predicate g on customer c = (EXISTS (SELECT 1 FROM orders o WHERE o.o_custkey = c.c_custkey "
      "GROUP BY o.o_custkey HAVING COUNT(*) = 0));",
      tpch());
  EXPECT_EQ(eval_predicate(set.find_predicate("s")->body, c, row, db, {}), Truth::Unknown);
  EXPECT_EQ(eval_predicate(set.find_predicate("n")->body, c, row, db, {}), Truth::True);
  EXPECT_EQ(eval_predicate(set.find_predicate("g")->body, c, row, db, {}), Truth::False);
}

TEST(EvalPredicate, Errors) {
  DatabaseInstance db =
      hand_built({{"customer", std::string(kCustomerHeader) + "1,a,b,0,p,0,s,c\n"},
                  {"orders", std::string(kOrdersHeader) + order_row(10, 1, "1") + order_row(11, 1, "2")}});
  const RelationDef& c = tpch().at("customer");
  const Tuple& row = db.get("customer").rows[0];
  PolicySet set = parse_policies_unchecked(
      "policy d on customer using (c_acctbal / c_nationkey > 1) suppress-otherwise;"
      "predicate u on customer = (c_name = :current_user);"
      "predicate m on customer c = ((SELECT o.o_totalprice FROM orders o WHERE o.o_custkey = c.c_custkey) > 0);",
      tpch());
  try {
    eval_atomic(std::get<AtomicPolicy>(set.find_definition("d")->expr.node), db, {});
    FAIL();
  } catch (const DivisionByZero& e) {
    EXPECT_NE(std::string(e.what()).find("customer"), std::string::npos);
  }
  EXPECT_THROW(eval_predicate(set.find_predicate("u")->body, c, row, db, {}), MissingContextParam);
  EXPECT_EQ(eval_predicate(set.find_predicate("u")->body, c, row, db, user_ctx("a")), Truth::True);
  EXPECT_THROW(eval_predicate(set.find_predicate("m")->body, c, row, db, {}), EvaluationError);
}

TEST(EvalAtomic, DegenerateRegions) {
  DatabaseInstance db = load_instance_dir(tpch(), data_path("fixtures/composite"));
  const RelationDef& def = tpch().at("customer");
  MaskedRelation all = eval_atomic(AtomicPolicy{"t", "customer", "", bool_lit(true), MaskSpec{}}, db, {});
  ASSERT_EQ(all.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(all.rows[i].tag, VisibilityTag::Full);
    EXPECT_EQ(all.rows[i].values, db.get("customer").rows[i]);
  }
  MaskSpec nulls{{}, MaskAction::null_out()};
  MaskedRelation none = eval_atomic(AtomicPolicy{"f", "customer", "", bool_lit(false), nulls}, db, {});
  for (const auto& r : none.rows) {
    EXPECT_EQ(r.tag, VisibilityTag::Masked);
    for (std::size_t i = 1; i < def.attributes.size(); ++i) EXPECT_TRUE(r.values[i].is_null());
    EXPECT_EQ(r.values[0], r.key[0]);
  }
  MaskedRelation gone = eval_atomic(AtomicPolicy{"g", "customer", "", bool_lit(false), MaskSpec::suppress_all()}, db, {});
  for (const auto& r : gone.rows) EXPECT_EQ(r.tag, VisibilityTag::SuppressedOut);
  EXPECT_EQ(render(gone, def), render(MaskedRelation{"customer", {}}, def));
}

TEST(VisibleSet, Examples) {
  MaskedRelation m{"customer",
                   {MaskedRow{{Value::integer(1)}, VisibilityTag::Full, {}, {}},
                    MaskedRow{{Value::integer(2)}, VisibilityTag::Masked, {}, {"a"}},
                    MaskedRow{{Value::integer(3)}, VisibilityTag::SuppressedOut, {}, {"a"}}}};
  EXPECT_EQ(visible_set(m).size(), 1u);
  EXPECT_TRUE(visible_set(MaskedRelation{"customer", {}}).empty());
}

// ---------------------------------------------------------------------------
// Overlapping masks

TEST(MaskMerge, StrictestActionWinsPerAttribute) {
  DatabaseInstance db = load_instance_dir(tpch(), data_path("fixtures/composite"));
  const RelationDef& def = tpch().at("customer");
  auto a = AtomicPolicy{"a", "customer", "", bool_lit(false),
                        MaskSpec{{{"c_phone", MaskAction::constant("A")}, {"c_comment", MaskAction::null_out()}},
                                 MaskAction::keep()}};
  auto b = AtomicPolicy{"b", "customer", "", bool_lit(false),
                        MaskSpec{{{"c_phone", MaskAction::constant("B")}, {"c_address", MaskAction::constant("B")},
                                  {"c_comment", MaskAction::constant("B")}, {"c_name", MaskAction::suppress()}},
                                 MaskAction::keep()}};
  MaskedRelation m = eval_policy(p_or(atomic(a), atomic(b)), db, {});
  const MaskedRow& r = m.rows[0];
  EXPECT_EQ(r.tag, VisibilityTag::Masked);
  EXPECT_EQ(r.applied_masks, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(r.values[*def.index_of("c_phone")], Value::text("A"));
  EXPECT_EQ(r.values[*def.index_of("c_address")], Value::text("B"));
  EXPECT_TRUE(r.values[*def.index_of("c_comment")].is_null());
  EXPECT_TRUE(r.values[*def.index_of("c_name")].is_suppressed());
  EXPECT_EQ(r.values[*def.index_of("c_acctbal")], db.get("customer").rows[0][*def.index_of("c_acctbal")]);

  MaskedRelation literal = eval_policy(p_or(atomic(a), atomic(b)), db, {}, EvalOptions{true});
  ASSERT_EQ(literal.rows.size(), 6u);
  EXPECT_EQ(literal.rows[0].applied_masks, std::vector<std::string>{"a"});
  EXPECT_EQ(literal.rows[1].applied_masks, std::vector<std::string>{"b"});
  EXPECT_EQ(literal.rows[1].values[*def.index_of("c_phone")], Value::text("B"));
}

TEST(MaskMerge, ConjunctionOnlyMasksFailedSides) {
  DatabaseInstance db = load_instance_dir(tpch(), data_path("fixtures/composite"));
  auto yes = AtomicPolicy{"yes", "customer", "", bool_lit(true), MaskSpec{{}, MaskAction::null_out()}};
  auto no = AtomicPolicy{"no", "customer", "", bool_lit(false), MaskSpec{{{"c_phone", MaskAction::constant("X")}}, {}}};
  MaskedRelation m = eval_policy(p_and(atomic(yes), atomic(no)), db, {});
  for (const auto& r : m.rows) {
    EXPECT_EQ(r.tag, VisibilityTag::Masked);
    EXPECT_EQ(r.applied_masks, std::vector<std::string>{"no"});
  }
}

// ---------------------------------------------------------------------------
// Properties over randomized instances plus the bundled fixture

TEST(OracleProperties, AtomsMatchIndependentReference) {
  for (const auto& db : instances()) {
    for (const auto& c : customer_atoms()) {
      MaskedRelation m = eval_atomic(atom(c.name), db, {});
      ASSERT_EQ(visible_set(m), ref_full(db, c.relation, c.reference)) << c.name;
    }
    EXPECT_EQ(visible_set(eval_atomic(atom("revenue_share"), db, {})), ref_full(db, "lineitem", ref_revenue_share));
    const auto& customers = db.get("customer").rows;
    std::string user = customers.empty() ? "nobody" : *customers[0][1].get_if<std::string>();
    EXPECT_EQ(visible_set(eval_atomic(atom("same_nation"), db, user_ctx(user))),
              ref_full(db, "lineitem", ref_same_nation_as(user)));
  }
}

TEST(OracleProperties, RegionPartitionAndFaithfulFullRows) {
  for (const auto& db : instances()) {
    const RelationDef& def = tpch().at("customer");
    const auto& base = db.get("customer").rows;
    for (const auto& c : customer_atoms()) {
      MaskedRelation m = eval_atomic(atom(c.name), db, {});
      ASSERT_EQ(m.rows.size(), base.size());
      std::set<Tuple> full, other;
      for (std::size_t i = 0; i < m.rows.size(); ++i) {
        const MaskedRow& r = m.rows[i];
        ASSERT_EQ(r.key, key_of(def, base[i]));
        (r.tag == VisibilityTag::Full ? full : other).insert(r.key);
        if (r.tag == VisibilityTag::Full) {
          EXPECT_EQ(r.values, base[i]);
        } else if (r.tag == VisibilityTag::Masked) {
          EXPECT_EQ(key_of(def, r.values), r.key);
        }
      }
      EXPECT_TRUE(intersect(full, other).empty());
      EXPECT_EQ(unite(full, other), all_keys(db, "customer"));
    }
  }
}

TEST(OracleProperties, FullRegionAlgebra) {
  const auto& cases = customer_atoms();
  for (const auto& db : instances()) {
    std::set<Tuple> keys = all_keys(db, "customer");
    std::vector<std::set<Tuple>> ref;
    for (const auto& c : cases) ref.push_back(ref_full(db, "customer", c.reference));
    std::set<Tuple> spend = ref_full(db, "customer", ref_spending);
    for (std::size_t i = 0; i < cases.size(); ++i) {
      PolicyExpr a = leaf(cases[i].name);
      EXPECT_EQ(visible_set(eval_policy(p_not(a), db, {})), minus(keys, ref[i]));
      EXPECT_EQ(visible_set(eval_policy(p_not(p_not(a)), db, {})), ref[i]);
      for (std::size_t j = 0; j < cases.size(); ++j) {
        PolicyExpr b = leaf(cases[j].name);
        EXPECT_EQ(visible_set(eval_policy(p_and(a, b), db, {})), intersect(ref[i], ref[j]));
        EXPECT_EQ(visible_set(eval_policy(p_or(a, b), db, {})), unite(ref[i], ref[j]));
        PolicyExpr cond = p_if("spending", named("spending"), a, b);
        EXPECT_EQ(visible_set(eval_policy(cond, db, {})),
                  unite(intersect(spend, ref[i]), intersect(minus(keys, spend), ref[j])));
      }
    }
  }
}

TEST(OracleProperties, ConditionalExpansion) {
  const auto& cases = customer_atoms();
  AtomicPolicy guard{"guard", "customer", "c", named("spending"), MaskSpec::suppress_all()};
  for (const auto& db : instances()) {
    for (std::size_t i = 0; i < cases.size(); ++i) {
      for (std::size_t j = 0; j < cases.size(); ++j) {
        PolicyExpr a = leaf(cases[i].name), b = leaf(cases[j].name);
        PolicyExpr cond = p_if("spending", named("spending"), a, b);
        PolicyExpr expanded = p_or(p_and(atomic(guard), a), p_and(p_not(atomic(guard)), b));
        EXPECT_EQ(visible_set(eval_policy(cond, db, {})), visible_set(eval_policy(expanded, db, {})));
      }
    }
  }
}

TEST(OracleProperties, ContradictionHasNoFullRows) {
  for (const auto& db : instances())
    for (const auto& c : customer_atoms()) {
      PolicyExpr a = leaf(c.name);
      EXPECT_TRUE(visible_set(eval_policy(p_and(a, p_not(a)), db, {})).empty()) << c.name;
    }
}

}  // namespace
}  // namespace secpol
