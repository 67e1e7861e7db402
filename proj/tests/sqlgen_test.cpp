#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <regex>

#include "secpol/error.hpp"
#include "secpol/oracle.hpp"
#include "secpol/sqlgen.hpp"
#include "secpol/synth.hpp"
#include "support.hpp"

namespace secpol {
namespace {

using testing::data_path;
using testing::read_file;
using testing::tpch;

PolicySet load(const char* file) { return parse_policies_file(data_path(file), tpch()); }
PolicySet doc(const std::string& text) { return parse_policies(text, tpch()); }

std::string query(int n) { return read_file(data_path("queries/q" + std::to_string(n) + ".sql")); }

bool contains(const std::vector<std::string>& stmts, const std::string& needle) {
  return std::any_of(stmts.begin(), stmts.end(), [&](const std::string& s) { return s.find(needle) != s.npos; });
}

const char* const kTable2P =
    "policy p on orders o using (o.o_totalprice > 150000 AND o.o_orderstatus = 'F' "
    "AND o.o_orderdate > DATE '1994-12-31' "
    "AND EXISTS (SELECT 1 FROM orders o2 WHERE o2.o_custkey = o.o_custkey AND o2.o_orderstatus = 'F')) "
    "suppress-otherwise;";

TEST(Strategy, NamesRoundTrip) {
  for (Strategy s : all_strategies()) EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_EQ(all_strategies().size(), 5u);
  EXPECT_FALSE(parse_strategy("rls").has_value());
}

TEST(EmitRls, BareFilterPolicy) {
  EnforcementArtifact a = emit_rls(doc("policy p on customer using (c_acctbal > 1000) suppress-otherwise;"), tpch());
  EXPECT_EQ(a.setup_sql, (std::vector<std::string>{
                             "ALTER TABLE customer ENABLE ROW LEVEL SECURITY",
                             "ALTER TABLE customer FORCE ROW LEVEL SECURITY",
                             "CREATE POLICY secpol_customer ON customer FOR SELECT USING (c_acctbal > 1000)"}));
  EXPECT_TRUE(contains(a.teardown_sql, "DROP POLICY IF EXISTS secpol_customer ON customer"));
  EXPECT_TRUE(contains(a.teardown_sql, "DISABLE ROW LEVEL SECURITY"));
  EXPECT_EQ(a.policed_tables, std::vector<std::string>{"customer"});
  EXPECT_FALSE(a.per_query_rewrite);
}

TEST(EmitRls, MaskingPolicyRejected) {
  EXPECT_THROW(emit_rls(load("policies/composite.pol"), tpch()), RLSUnsupportedMasking);
  EXPECT_THROW(emit_indexed_rls(load("policies/composite.pol"), tpch()), RLSUnsupportedMasking);
  EXPECT_THROW(emit_udf(load("policies/composite.pol"), tpch()), RLSUnsupportedMasking);
}

TEST(EmitRls, CyclicSetRejected) {
  PolicySet cyclic = load("policies/cyclic.pol");
  EXPECT_THROW(emit_rls(cyclic, tpch()), CyclicPolicySet);
  EXPECT_THROW(emit_indexed_rls(cyclic, tpch()), CyclicPolicySet);
  EXPECT_THROW(emit_views(cyclic, tpch(), false), CyclicPolicySet);
  EXPECT_THROW(emit_inline(cyclic, tpch()), CyclicPolicySet);
  EXPECT_NO_THROW(emit_views(cyclic, tpch(), true));
  EXPECT_NO_THROW(emit_udf(cyclic, tpch()));
}

TEST(EmitRls, CompositionOperatorsRender) {
  PolicySet set = doc(
      "policy a on customer using (c_acctbal > 0) suppress-otherwise;\n"
      "policy b on customer using (c_mktsegment = 'BUILDING') suppress-otherwise;\n"
      "policy c on customer = (a and not b);");
  EXPECT_EQ(policy_condition_sql(*set.for_table("customer"), tpch(), "customer"),
            "(c_acctbal > 0) AND ((c_mktsegment = 'BUILDING') IS NOT TRUE)");
  PolicySet alt = doc(
      "predicate home on customer c = (c.c_nationkey = 1);\n"
      "policy a on customer using (c_acctbal > 0) suppress-otherwise;\n"
      "policy b on customer using (c_mktsegment = 'BUILDING') suppress-otherwise;\n"
      "policy c on customer = if home then a else (b or a);");
  std::string sql = policy_condition_sql(*alt.for_table("customer"), tpch(), "customer");
  EXPECT_EQ(sql, "CASE WHEN c_nationkey = 1 THEN (c_acctbal > 0) ELSE ((c_mktsegment = 'BUILDING') OR (c_acctbal > 0)) END");
}

TEST(AdviseIndexes, Table2Predicate) {
  EXPECT_EQ(advise_indexes(doc(kTable2P), tpch()),
            (std::vector<std::string>{
                "CREATE INDEX IF NOT EXISTS pcov_orders_o_custkey ON orders (o_custkey)",
                "CREATE INDEX IF NOT EXISTS pcov_orders_o_orderdate ON orders (o_orderdate)",
                "CREATE INDEX IF NOT EXISTS pcov_orders_o_orderstatus ON orders (o_orderstatus)",
                "CREATE INDEX IF NOT EXISTS pcov_orders_o_totalprice ON orders (o_totalprice)"}));
}

TEST(AdviseIndexes, EmptySet) { EXPECT_TRUE(advise_indexes(PolicySet{}, tpch()).empty()); }

TEST(AdviseIndexes, CompositeReadsSubqueryColumns) {
  std::vector<std::string> idx = advise_indexes(load("policies/composite.pol"), tpch());
  for (const char* s : {"pcov_lineitem_l_orderkey ON lineitem (l_orderkey)",
                        "pcov_lineitem_l_returnflag ON lineitem (l_returnflag)",
                        "pcov_orders_o_custkey ON orders (o_custkey)", "pcov_customer_c_custkey ON customer (c_custkey)"})
    EXPECT_TRUE(contains(idx, s)) << s;
}

class BundledSet : public ::testing::TestWithParam<const char*> {};

TEST_P(BundledSet, AdvisedIndexesAreDistinctAndExist) {
  std::vector<std::string> idx = advise_indexes(load(GetParam()), tpch());
  EXPECT_FALSE(idx.empty());
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
  static const std::regex shape(R"(CREATE INDEX IF NOT EXISTS pcov_(\w+) ON (\w+) \((\w+)\))");
  for (const auto& s : idx) {
    std::smatch m;
    ASSERT_TRUE(std::regex_match(s, m, shape)) << s;
    EXPECT_EQ(m[1].str(), m[2].str() + "_" + m[3].str());
    const RelationDef* rel = tpch().find(m[2].str());
    ASSERT_NE(rel, nullptr) << s;
    EXPECT_NE(rel->find(m[3].str()), nullptr) << s;
  }
}

TEST_P(BundledSet, TeardownUndoesEveryCreate) {
  PolicySet set = load(GetParam());
  for (Strategy s : all_strategies()) {
    EnforcementArtifact a;
    try {
      a = compile(s, set, tpch());
    } catch (const Error&) {
      continue;
    }
    static const std::regex created(R"(CREATE (POLICY|VIEW|FUNCTION|INDEX IF NOT EXISTS) (\w+))");
    for (const auto& stmt : a.setup_sql) {
      std::smatch m;
      if (!std::regex_search(stmt, m, created)) continue;
      std::string kind = m[1] == "INDEX IF NOT EXISTS" ? "INDEX" : m[1].str();
      EXPECT_TRUE(contains(a.teardown_sql, "DROP " + kind + " IF EXISTS " + m[2].str()))
          << to_string(s) << ": " << stmt;
    }
    for (const auto& t : a.policed_tables) EXPECT_TRUE(tpch().contains(t));
  }
}

TEST_P(BundledSet, InlineRewriteIsIdempotent) {
  PolicySet set = load(GetParam());
  EnforcementArtifact a;
  try {
    a = emit_inline(set, tpch());
  } catch (const CyclicPolicySet&) {
    GTEST_SKIP() << "cyclic set";
  }
  for (int q = 1; q <= 22; ++q) {
    std::string once = a.rewrite(query(q));
    EXPECT_EQ(a.rewrite(once), once) << "q" << q;
    EXPECT_EQ(once.rfind(kInlineMarker, 0), 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(Policies, BundledSet,
                         ::testing::Values("policies/acyclic.pol", "policies/composite.pol",
                                           "policies/cyclic.pol"),
                         [](const auto& info) { return std::filesystem::path(info.param).stem().string(); });

TEST(EmitViews, CompositeFollowsCteTemplate) {
  EnforcementArtifact a = emit_views(load("policies/composite.pol"), tpch(), false);
  ASSERT_EQ(a.setup_sql.size(), 1u);
  const std::string& v = a.setup_sql[0];
  EXPECT_EQ(v.rfind("CREATE VIEW v_customer AS WITH customer_spending AS", 0), 0u) << v;
  for (const char* part : {"customer_returns AS", "customer_status AS", "visibility_level",
                           "CASE WHEN visibility_level = 'FULL' THEN c_address", "'MASKED'",
                           "WHERE visibility_level <> 'SUPPRESSED'"})
    EXPECT_NE(v.find(part), std::string::npos) << part;
  EXPECT_EQ(v.find("security_barrier"), std::string::npos);
  EXPECT_EQ(a.teardown_sql, std::vector<std::string>{"DROP VIEW IF EXISTS v_customer"});
}

TEST(EmitViews, FilterPolicyIsSingleSelect) {
  EnforcementArtifact a =
      emit_views(doc("policy p on customer using (c_acctbal > 1000) suppress-otherwise;"), tpch(), true);
  EXPECT_EQ(a.setup_sql, std::vector<std::string>{
                             "CREATE VIEW v_customer WITH (security_barrier) AS SELECT * FROM customer "
                             "WHERE c_acctbal > 1000"});
}

TEST(EmitViews, QueriesReadViews) {
  EnforcementArtifact a = emit_views(load("policies/acyclic.pol"), tpch(), true);
  EXPECT_EQ(a.rewrite("SELECT count(*) FROM customer"), "SELECT count(*) FROM v_customer customer");
  EXPECT_EQ(a.rewrite("SELECT count(*) FROM customer c, orders o WHERE c.c_custkey = o.o_custkey"),
            "SELECT count(*) FROM v_customer c, orders o WHERE c.c_custkey = o.o_custkey");
  // Tiered: the partsupp view reads the supplier view.
  std::string ps = *std::find_if(a.setup_sql.begin(), a.setup_sql.end(),
                                 [](const std::string& s) { return s.find("v_partsupp") != s.npos; });
  EXPECT_NE(ps.find("FROM v_supplier"), std::string::npos) << ps;
}

TEST(RewriteInline, Table1Example) {
  PolicySet p = doc(
      "policy p on orders o using (o.o_orderstatus = 'F' AND o.o_totalprice > 100000 "
      "AND o.o_orderdate >= DATE '1995-01-01') suppress-otherwise;");
  EXPECT_EQ(rewrite_query_inline("SELECT count(*) FROM orders", p, tpch()),
            "/* secpol:inline */ SELECT count(*) FROM orders WHERE (orders.o_orderstatus = 'F' AND "
            "orders.o_totalprice > 100000 AND orders.o_orderdate >= DATE '1995-01-01')");
}

TEST(RewriteInline, ExistingWhereIsConjoined) {
  PolicySet p = doc("policy p on customer using (c_acctbal > 1000) suppress-otherwise;");
  EXPECT_EQ(rewrite_query_inline("SELECT c_name FROM customer c WHERE c_nationkey = 3 ORDER BY 1", p, tpch()),
            "/* secpol:inline */ SELECT c_name FROM customer c WHERE (c.c_acctbal > 1000) AND (c_nationkey = 3) "
            "ORDER BY 1");
}

TEST(RewriteInline, MarkedQueryUnchanged) {
  std::string q = std::string(kInlineMarker) + " SELECT * FROM customer";
  EXPECT_EQ(rewrite_query_inline(q, load("policies/acyclic.pol"), tpch()), q);
}

TEST(RewriteInline, Q6TouchesOnlyLineitem) {
  std::string out = rewrite_query_inline(query(6), load("policies/acyclic.pol"), tpch());
  EXPECT_NE(out.find("o_orderpriority = '1-URGENT'"), std::string::npos);
  EXPECT_EQ(out.find("c_acctbal"), std::string::npos);
  // The lineitem policy reads partsupp, which is itself policed, so the
  // partsupp and supplier policies arrive nested inside it.
  EXPECT_NE(out.find("ps_availqty > 1000"), std::string::npos);
  EXPECT_NE(out.find("r_name = 'EUROPE'"), std::string::npos);
  EXPECT_EQ(out.find("r_name = 'AMERICA'"), std::string::npos);
}

TEST(RewriteInline, MaskedTableBecomesDerivedTable) {
  std::string out = rewrite_query_inline("SELECT c_name FROM customer", load("policies/composite.pol"), tpch());
  EXPECT_NE(out.find("FROM (WITH customer_spending AS"), std::string::npos) << out;
  EXPECT_NE(out.find(") customer"), std::string::npos) << out;
}

TEST(RewriteInline, UnparseableFrom) {
  EXPECT_THROW(rewrite_query_inline("SELECT * FROM (", load("policies/acyclic.pol"), tpch()),
               UnparseableFromClause);
  EXPECT_THROW(rewrite_query_inline("SELECT * FROM", load("policies/acyclic.pol"), tpch()), UnparseableFromClause);
}

TEST(ActivatedPolicies, Examples) {
  PolicySet set = load("policies/acyclic.pol");
  EXPECT_EQ(activated_policies(query(6), set), std::set<std::string>{"lineitem"});
  EXPECT_EQ(activated_policies(query(2), set), (std::set<std::string>{"supplier", "partsupp"}));
  EXPECT_TRUE(activated_policies("SELECT 1", set).empty());
  // Q13 joins customer to orders; Q15 reads lineitem inside its CTE.
  EXPECT_EQ(activated_policies(query(13), set), std::set<std::string>{"customer"});
  EXPECT_EQ(activated_policies(query(15), set), (std::set<std::string>{"supplier", "lineitem"}));
}

TEST(ScanQuery, FromItems) {
  std::vector<SelectBlock> blocks = scan_query(
      "WITH x AS (SELECT * FROM region) SELECT * FROM x, public.nation AS n JOIN supplier s ON s.s_nationkey = "
      "n.n_nationkey WHERE EXISTS (SELECT 1 FROM part)");
  ASSERT_EQ(blocks.size(), 3u);
  std::vector<std::string> rels;
  for (const auto& b : blocks)
    for (const auto& t : b.tables) rels.push_back(t.relation + (t.in_join ? "*" : ""));
  std::sort(rels.begin(), rels.end());
  EXPECT_EQ(rels, (std::vector<std::string>{"nation*", "part", "region", "supplier*"}));
}

TEST(ScanQuery, AllBundledQueriesScan) {
  for (int q = 1; q <= 22; ++q) {
    std::vector<SelectBlock> blocks = scan_query(query(q));
    EXPECT_FALSE(blocks.empty()) << q;
    EXPECT_TRUE(std::any_of(blocks.begin(), blocks.end(), [](const SelectBlock& b) { return !b.tables.empty(); }))
        << q;
  }
}

TEST(EmitUdf, CyclicOrdersPolicy) {
  EnforcementArtifact a = emit_udf(doc(kTable2P), tpch());
  ASSERT_EQ(a.setup_sql.size(), 4u);
  const std::string& fn = a.setup_sql[0];
  EXPECT_EQ(fn.rfind("CREATE FUNCTION pol_orders(arg_o_orderkey bigint, arg_o_custkey bigint, ", 0), 0u) << fn;
  EXPECT_NE(fn.find("RETURNS boolean LANGUAGE sql STABLE SECURITY DEFINER"), std::string::npos);
  EXPECT_NE(fn.find("EXISTS (SELECT 1 FROM orders o2 WHERE o2.o_custkey = arg_o_custkey"), std::string::npos) << fn;
  EXPECT_EQ(a.setup_sql[3],
            "CREATE POLICY secpol_orders ON orders FOR SELECT USING (pol_orders(o_orderkey, o_custkey, "
            "o_orderstatus, o_totalprice, o_orderdate))");
  EXPECT_TRUE(contains(a.teardown_sql, "DROP FUNCTION IF EXISTS pol_orders(bigint, bigint, text, numeric, date)"));
}

TEST(EmitUdf, TrueBody) {
  EnforcementArtifact a = emit_udf(doc("policy p on customer using (true) suppress-otherwise;"), tpch());
  EXPECT_EQ(a.setup_sql[0],
            "CREATE FUNCTION pol_customer(arg_c_custkey bigint) RETURNS boolean LANGUAGE sql STABLE SECURITY "
            "DEFINER SET search_path = public AS $$ SELECT true $$");
}

TEST(SchemaDdl, TablesWithKeys) {
  std::vector<std::string> ddl = schema_ddl(tpch());
  ASSERT_EQ(ddl.size(), 8u);
  EXPECT_EQ(ddl[0].rfind("CREATE TABLE region (", 0), 0u);
  EXPECT_NE(ddl[0].find("PRIMARY KEY (r_regionkey)"), std::string::npos);
  EXPECT_TRUE(contains(ddl, "PRIMARY KEY (ps_partkey, ps_suppkey)"));
  EXPECT_EQ(schema_drop_ddl(tpch()).front(), "DROP TABLE IF EXISTS lineitem CASCADE");
}

TEST(StressSuite, Cases) {
  std::vector<StressCase> cases = gen_stress_suite(tpch());
  std::vector<std::string> names;
  for (const auto& c : cases) names.push_back(c.name);
  EXPECT_EQ(names, (std::vector<std::string>{"p_and_not_p", "p_and_not_q", "not_q_and_p", "p_and_not_q_indexed",
                                             "not_q_and_p_indexed"}));
  for (const auto& c : cases) {
    ASSERT_EQ(c.runs.size(), 2u);
    EXPECT_EQ(c.runs[0].mechanism, Strategy::InlineRewrite);
    EXPECT_EQ(c.runs[1].mechanism, Strategy::BlackBoxUDF);
    EXPECT_EQ(contains(c.runs[0].setup_sql, "CREATE INDEX"), c.indexed);
    EXPECT_EQ(contains(c.runs[1].setup_sql, "CREATE INDEX"), c.indexed);
  }
}

TEST(StressSuite, ContradictionQueryKeepsBothOperands) {
  const StressCase c = gen_stress_suite(tpch())[0];
  const std::string p = "(o_orderstatus = 'F' AND o_totalprice > 100000 AND o_orderdate >= DATE '1995-01-01')";
  EXPECT_EQ(c.composition, "p AND NOT p");
  EXPECT_EQ(c.runs[0].query, "SELECT count(*) FROM orders WHERE " + p + " AND NOT " + p);
}

TEST(StressSuite, UdfCallsFollowOperandOrder) {
  for (const auto& c : gen_stress_suite(tpch())) {
    const auto& setup = c.runs[1].setup_sql;
    auto it = std::find_if(setup.begin(), setup.end(),
                           [](const std::string& s) { return s.rfind("CREATE POLICY", 0) == 0; });
    ASSERT_NE(it, setup.end());
    const std::string& policy = *it;
    if (c.composition == "NOT q AND p") {
      std::size_t q = policy.find("NOT pol_orders_q("), p = policy.find("pol_orders_p(");
      ASSERT_NE(q, std::string::npos) << policy;
      ASSERT_NE(p, std::string::npos) << policy;
      EXPECT_LT(q, p);
    }
    if (c.composition == "p AND NOT q") EXPECT_LT(policy.find("pol_orders_p("), policy.find("NOT pol_orders_q("));
  }
}

// Both compositions are empty on every instance: the contradiction trivially,
// the negated pair because p implies q.
class StressOracle : public ::testing::TestWithParam<int> {};

TEST_P(StressOracle, VisibleSetsEmpty) {
  SynthOptions o;
  o.seed = static_cast<std::uint64_t>(GetParam());
  o.customers = 40;
  DatabaseInstance db = synth_tpch(tpch(), o);
  EvalContext ctx;
  std::size_t p_rows = 0;
  for (const auto& c : gen_stress_suite(tpch())) {
    EXPECT_TRUE(visible_set(eval_policy(c.policy, db, ctx)).empty()) << c.name;
    p_rows += visible_set(eval_policy(atomic(*leaves(c.policy)[0]), db, ctx)).size();
  }
  EXPECT_GT(p_rows, 0u) << "instance too small to exercise p";
}

INSTANTIATE_TEST_SUITE_P(Seeds, StressOracle, ::testing::Range(1, 6));

TEST(ExternalRewrite, IdentityPassThrough) {
  std::string q = "SELECT  *\nFROM orders\n";
  EXPECT_EQ(external_rewrite(q, "cat"), q);
  EXPECT_EQ(external_rewrite("", "cat"), "");
}

TEST(ExternalRewrite, LargeInputRoundTrips) {
  std::string q(1 << 20, 'x');
  EXPECT_EQ(external_rewrite(q, "cat"), q);
}

TEST(ExternalRewrite, WhitespaceNormalizer) {
  EXPECT_EQ(external_rewrite("SELECT  count(*)\n\tFROM   orders\n", "tr -s '[:space:]' ' '"),
            "SELECT count(*) FROM orders ");
}

TEST(ExternalRewrite, MissingCommand) {
  EXPECT_THROW(external_rewrite("SELECT 1", "/nonexistent/rewriter"), RewriterFailed);
  EXPECT_THROW(external_rewrite("SELECT 1", "exit 3"), RewriterFailed);
}

TEST(ExternalRewrite, CommandIgnoringInput) {
  std::string q(1 << 20, 'x');
  EXPECT_EQ(external_rewrite(q, "echo done"), "done\n");
}

TEST(ExternalRewrite, Timeout) {
  auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(external_rewrite("SELECT 1", "sleep 5", std::chrono::milliseconds(200)), RewriterTimeout);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(3));
}

TEST(Artifacts, ScriptAndManifest) {
  EXPECT_EQ(to_script({"SELECT 1", "SELECT 2"}), "SELECT 1;\nSELECT 2;\n");
  EnforcementArtifact a = emit_rls(load("policies/acyclic.pol"), tpch());
  auto dir = std::filesystem::temp_directory_path() / "secpol_artifact_test";
  std::filesystem::remove_all(dir);
  std::vector<std::string> files = write_artifact(a, dir.string());
  ASSERT_EQ(files.size(), 3u);
  for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
  EXPECT_EQ(read_file((dir / "pure-rls_setup.sql").string()), to_script(a.setup_sql));
  std::string manifest = read_file((dir / "pure-rls_manifest.json").string());
  for (const char* key : {"\"strategy\"", "\"pure-rls\"", "\"policed_tables\"", "\"requires_acyclic\"", "\"files\""})
    EXPECT_NE(manifest.find(key), std::string::npos) << key;
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace secpol
