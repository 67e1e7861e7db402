#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "secpol/depgraph.hpp"
#include "secpol/error.hpp"
#include "support.hpp"

namespace secpol {
namespace {

using testing::data_path;
using testing::tpch;

PolicySet load(const char* file) { return parse_policies_file(data_path(file), tpch()); }

using Edge = std::pair<std::string, std::string>;

TEST(SchemaDag, TpchEdgesMirrorForeignKeys) {
  SchemaDag dag = schema_dag(tpch());
  EXPECT_EQ(dag.nodes.size(), 8u);
  for (const Edge& e : {Edge{"lineitem", "orders"}, Edge{"lineitem", "partsupp"}, Edge{"orders", "customer"},
                        Edge{"partsupp", "supplier"}, Edge{"partsupp", "part"}, Edge{"supplier", "nation"},
                        Edge{"customer", "nation"}, Edge{"nation", "region"}})
    EXPECT_NE(std::find(dag.edges.begin(), dag.edges.end(), e), dag.edges.end()) << e.first << "->" << e.second;
  std::size_t fks = 0;
  for (const auto& r : tpch().relations()) fks += r.foreign_keys.size();
  EXPECT_EQ(dag.edges.size(), fks);
}

TEST(SchemaDag, Ancestors) {
  SchemaDag dag = schema_dag(tpch());
  std::set<std::string> a = dag.ancestors("lineitem");
  for (const char* t : {"orders", "customer", "partsupp", "supplier", "part", "nation", "region"})
    EXPECT_TRUE(a.count(t)) << t;
  EXPECT_TRUE(dag.ancestors("region").empty());
}

TEST(SchemaDag, SingleRelation) {
  Schema s({RelationDef{"t", {{"k", DataType::Integer}}, {"k"}, {}}});
  SchemaDag dag = schema_dag(s);
  EXPECT_EQ(dag.nodes, std::vector<std::string>{"t"});
  EXPECT_TRUE(dag.edges.empty());
}

TEST(SchemaDag, ForeignKeyCycle) {
  Schema s({RelationDef{"a", {{"k", DataType::Integer}, {"b", DataType::Integer}}, {"k"}, {{{"b"}, "b", {"k"}}}},
            RelationDef{"b", {{"k", DataType::Integer}, {"a", DataType::Integer}}, {"k"}, {{{"a"}, "a", {"k"}}}}});
  EXPECT_THROW(schema_dag(s), SchemaFkCycle);
}

TEST(Refs, Examples) {
  PolicySet composite = load("policies/composite.pol");
  EXPECT_EQ(refs(*composite.for_table("customer")), (std::set<std::string>{"orders", "lineitem"}));
  PolicySet bare = parse_policies("policy p on customer using (c_acctbal > 0) suppress-otherwise;", tpch());
  EXPECT_TRUE(refs(*bare.for_table("customer")).empty());
  PolicySet self = parse_policies(
      "policy p on orders o using (EXISTS (SELECT 1 FROM orders o2 WHERE o2.o_custkey = o.o_custkey "
      "AND o2.o_orderstatus = 'F')) suppress-otherwise;",
      tpch());
  EXPECT_EQ(refs(*self.for_table("orders")), std::set<std::string>{"orders"});
}

TEST(Refs, StableUnderRoundTrip) {
  for (const char* f : {"policies/acyclic.pol", "policies/cyclic.pol", "policies/composite.pol"}) {
    PolicySet set = load(f);
    PolicySet again = parse_policies(print_policies(set, tpch()), tpch());
    for (const auto& t : set.tables()) EXPECT_EQ(refs(*set.for_table(t)), refs(*again.for_table(t))) << f << t;
  }
}

TEST(Acyclicity, AcyclicSuite) {
  PolicySet set = load("policies/acyclic.pol");
  CycleReport r = check_acyclicity(set, schema_dag(tpch()));
  EXPECT_FALSE(r.cyclic);
  EXPECT_TRUE(r.path.empty());
  EXPECT_TRUE(r.findings.empty());
  EXPECT_EQ(format_cycle(r), "ACYCLIC");
}

TEST(Acyclicity, DirectSelfReference) {
  PolicySet set = parse_policies(
      "policy p on orders o using (EXISTS (SELECT 1 FROM orders o2 WHERE o2.o_custkey = o.o_custkey)) "
      "suppress-otherwise;",
      tpch());
  CycleReport r = check_acyclicity(set, schema_dag(tpch()));
  EXPECT_TRUE(r.cyclic);
  EXPECT_EQ(r.path, (std::vector<std::string>{"orders", "orders"}));
  EXPECT_EQ(format_cycle(r), "CYCLIC: orders -> orders");
}

// Replays a witness path hop by hop through Refs.
void expect_valid_witness(const PolicySet& set, const CycleReport& r) {
  ASSERT_TRUE(r.cyclic);
  ASSERT_GE(r.path.size(), 2u);
  EXPECT_EQ(r.path.front(), r.path.back());
  for (std::size_t i = 0; i + 1 < r.path.size(); ++i) {
    const PolicyExpr* p = set.for_table(r.path[i]);
    ASSERT_NE(p, nullptr);
    EXPECT_TRUE(refs(*p).count(r.path[i + 1])) << r.path[i] << " -> " << r.path[i + 1];
    EXPECT_NE(set.for_table(r.path[i + 1]), nullptr);
  }
}

TEST(Acyclicity, CyclicSuiteHasWitnessAndFindings) {
  PolicySet set = load("policies/cyclic.pol");
  CycleReport r = check_acyclicity(set, schema_dag(tpch()));
  expect_valid_witness(set, r);
  // customer reads orders and supplier, neither an FK ancestor of customer.
  EXPECT_FALSE(r.findings.empty());
  EXPECT_THROW(assign_tiers(set, schema_dag(tpch())), CyclicPolicySet);
}

TEST(Acyclicity, MultiHopCycle) {
  PolicySet set = parse_policies(
      "policy a on customer c using (EXISTS (SELECT 1 FROM supplier s WHERE s.s_nationkey = c.c_nationkey)) "
      "suppress-otherwise;\n"
      "policy b on supplier s using (EXISTS (SELECT 1 FROM partsupp ps WHERE ps.ps_suppkey = s.s_suppkey)) "
      "suppress-otherwise;\n"
      "policy c on partsupp ps using (EXISTS (SELECT 1 FROM customer c WHERE c.c_custkey = ps.ps_partkey)) "
      "suppress-otherwise;",
      tpch());
  CycleReport r = check_acyclicity(set, schema_dag(tpch()));
  expect_valid_witness(set, r);
  EXPECT_EQ(r.path.size(), 4u);
}

TEST(Acyclicity, VerdictIsOrderIndependent) {
  const std::vector<std::string> stmts = {
      "policy a on customer c using (EXISTS (SELECT 1 FROM supplier s WHERE s.s_nationkey = c.c_nationkey)) "
      "suppress-otherwise;",
      "policy b on supplier s using (EXISTS (SELECT 1 FROM partsupp ps WHERE ps.ps_suppkey = s.s_suppkey)) "
      "suppress-otherwise;",
      "policy c on partsupp ps using (EXISTS (SELECT 1 FROM customer c WHERE c.c_custkey = ps.ps_partkey)) "
      "suppress-otherwise;",
      "policy d on lineitem l using (EXISTS (SELECT 1 FROM orders o WHERE o.o_orderkey = l.l_orderkey)) "
      "suppress-otherwise;",
      "policy e on orders using (o_totalprice > 10) suppress-otherwise;"};
  std::mt19937_64 rng(3);
  for (int drop = -1; drop < 3; ++drop) {
    std::vector<std::string> chosen;
    for (int i = 0; i < static_cast<int>(stmts.size()); ++i)
      if (i != drop) chosen.push_back(stmts[static_cast<std::size_t>(i)]);
    std::optional<bool> verdict;
    for (int trial = 0; trial < 10; ++trial) {
      std::shuffle(chosen.begin(), chosen.end(), rng);
      std::string doc;
      for (const auto& s : chosen) doc += s + "\n";
      bool cyclic = check_acyclicity(parse_policies(doc, tpch()), schema_dag(tpch())).cyclic;
      if (verdict) EXPECT_EQ(*verdict, cyclic);
      verdict = cyclic;
    }
    EXPECT_EQ(*verdict, drop < 0);
  }
}

TEST(Tiers, AcyclicSuite) {
  PolicySet set = load("policies/acyclic.pol");
  TierAssignment t = assign_tiers(set, schema_dag(tpch()));
  EXPECT_EQ(t.at("supplier"), 1);
  EXPECT_EQ(t.at("customer"), 1);
  EXPECT_EQ(t.at("partsupp"), 2);
  EXPECT_EQ(t.at("lineitem"), 3);
  for (const char* base : {"region", "nation", "part", "orders"}) EXPECT_EQ(t.at(base), 0) << base;
}

TEST(Tiers, ReferencesPointStrictlyDown) {
  PolicySet set = load("policies/acyclic.pol");
  TierAssignment t = assign_tiers(set, schema_dag(tpch()));
  for (const auto& table : set.tables())
    for (const auto& u : refs(*set.for_table(table))) EXPECT_LT(t.at(u), t.at(table)) << table << " reads " << u;
}

TEST(Tiers, SubqueryFreePolicyIsTierOne) {
  PolicySet set = parse_policies("policy p on customer using (c_acctbal > 0) suppress-otherwise;", tpch());
  EXPECT_EQ(assign_tiers(set, schema_dag(tpch())).at("customer"), 1);
}

}  // namespace
}  // namespace secpol
