#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "secpol/bench.hpp"
#include "secpol/csv.hpp"
#include "secpol/error.hpp"
#include "support.hpp"

namespace secpol {
namespace {

using testing::read_file;
using testing::tpch;

QueryRun run(const std::string& q, Strategy s, int rep, double plan, double exec) {
  QueryRun r;
  r.query_id = q;
  r.strategy = s;
  r.repetition = rep;
  r.planning_ms = plan;
  r.execution_ms = exec;
  r.plan_text = "{}";
  return r;
}

QueryRun timed_out(const std::string& q, Strategy s, int rep) {
  QueryRun r;
  r.query_id = q;
  r.strategy = s;
  r.repetition = rep;
  r.timed_out = true;
  return r;
}

std::vector<QueryRun> cell(const std::string& q, Strategy s, const std::vector<double>& exec) {
  std::vector<QueryRun> out;
  for (std::size_t i = 0; i < exec.size(); ++i) out.push_back(run(q, s, static_cast<int>(i), exec[i] / 10, exec[i]));
  return out;
}

std::vector<QueryRun> concat(std::vector<std::vector<QueryRun>> parts) {
  std::vector<QueryRun> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

const Ratio& ratio(const ResultMatrix& m, const std::string& q, Strategy s) { return m.ratios.at(CellKey{q, s}); }

TEST(Aggregate, Cardinality) {
  std::vector<QueryRun> runs;
  for (const char* q : {"q1", "q2"})
    for (Strategy s : {Strategy::PureRLS, Strategy::SecureView})
      for (int r = 0; r < 3; ++r) runs.push_back(run(q, s, r, 1, 2));
  ResultMatrix m = aggregate(runs);
  EXPECT_EQ(m.runs.size(), 12u);
  EXPECT_EQ(m.aggregates.size(), 4u);
  EXPECT_EQ(m.query_order, (std::vector<std::string>{"q1", "q2"}));
}

TEST(Aggregate, MedianOfOddAndEvenCounts) {
  ResultMatrix m = aggregate(concat({cell("a", Strategy::PureRLS, {120, 80, 100}),
                                     cell("b", Strategy::PureRLS, {10, 40, 20, 30})}));
  EXPECT_DOUBLE_EQ(*m.aggregates.at(CellKey{"a", Strategy::PureRLS}).execution_ms, 100.0);
  EXPECT_DOUBLE_EQ(*m.aggregates.at(CellKey{"a", Strategy::PureRLS}).planning_ms, 10.0);
  EXPECT_DOUBLE_EQ(*m.aggregates.at(CellKey{"b", Strategy::PureRLS}).execution_ms, 25.0);
}

TEST(Aggregate, TimeoutLeavesNoDuration) {
  std::vector<QueryRun> runs = cell("a", Strategy::PureRLS, {1, 2});
  runs.push_back(timed_out("a", Strategy::PureRLS, 2));
  const Cell& c = aggregate(runs).aggregates.at(CellKey{"a", Strategy::PureRLS});
  EXPECT_TRUE(c.timed_out);
  EXPECT_FALSE(c.execution_ms.has_value());
  EXPECT_FALSE(c.planning_ms.has_value());
}

TEST(Normalize, MediansNotMeans) {
  ResultMatrix m = normalize(aggregate(concat({cell("q", Strategy::SecureView, {120, 80, 100}),
                                               cell("q", Strategy::PureRLS, {100, 100, 100})})),
                             Strategy::PureRLS);
  EXPECT_DOUBLE_EQ(*ratio(m, "q", Strategy::SecureView).execution, 1.0);
  EXPECT_DOUBLE_EQ(*ratio(m, "q", Strategy::SecureView).planning, 1.0);
}

TEST(Normalize, HalfAsSlow) {
  ResultMatrix m = normalize(
      aggregate(concat({cell("q", Strategy::IndexedRLS, {50}), cell("q", Strategy::PureRLS, {100})})),
      Strategy::PureRLS);
  EXPECT_DOUBLE_EQ(*ratio(m, "q", Strategy::IndexedRLS).execution, 0.5);
  EXPECT_DOUBLE_EQ(*ratio(m, "q", Strategy::PureRLS).execution, 1.0);
  EXPECT_DOUBLE_EQ(*ratio(m, "q", Strategy::PureRLS).planning, 1.0);
  EXPECT_TRUE(ratio(m, "q", Strategy::PureRLS).marker.empty());
}

TEST(Normalize, TimeoutMarkers) {
  std::vector<QueryRun> runs = concat({cell("a", Strategy::SecureView, {10}), cell("b", Strategy::PureRLS, {10})});
  runs.push_back(timed_out("a", Strategy::PureRLS, 0));
  runs.push_back(timed_out("b", Strategy::SecureView, 0));
  QueryRun err = run("c", Strategy::SecureView, 0, 1, 1);
  err.planning_ms.reset();
  err.execution_ms.reset();
  err.failed = true;
  runs.push_back(err);
  runs.push_back(run("c", Strategy::PureRLS, 0, 1, 1));
  ResultMatrix m = normalize(aggregate(runs), Strategy::PureRLS);
  EXPECT_EQ(ratio(m, "a", Strategy::SecureView).marker, "baseline-timeout");
  EXPECT_FALSE(ratio(m, "a", Strategy::SecureView).execution.has_value());
  EXPECT_EQ(ratio(m, "a", Strategy::PureRLS).marker, "timeout");
  EXPECT_EQ(ratio(m, "b", Strategy::SecureView).marker, "timeout");
  EXPECT_FALSE(ratio(m, "b", Strategy::SecureView).planning.has_value());
  EXPECT_DOUBLE_EQ(*ratio(m, "b", Strategy::PureRLS).execution, 1.0);
  EXPECT_EQ(ratio(m, "c", Strategy::SecureView).marker, "error");
}

TEST(Normalize, ZeroBaseline) {
  ResultMatrix m = normalize(
      aggregate(concat({cell("q", Strategy::SecureView, {5}), cell("q", Strategy::PureRLS, {0})})),
      Strategy::PureRLS);
  EXPECT_EQ(ratio(m, "q", Strategy::SecureView).marker, "zero-baseline");
}

TEST(Normalize, MissingBaselineThrows) {
  ResultMatrix m = aggregate(cell("q", Strategy::SecureView, {5}));
  EXPECT_THROW(normalize(m, Strategy::PureRLS), MissingBaseline);
}

TEST(Normalize, ScaleInvariant) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ms(0.1, 500.0), scale(0.01, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<QueryRun> runs;
    for (int q = 0; q < 4; ++q)
      for (Strategy s : {Strategy::PureRLS, Strategy::IndexedRLS, Strategy::SecureView})
        for (int r = 0; r < 3; ++r) runs.push_back(run("q" + std::to_string(q), s, r, ms(rng), ms(rng)));
    double k = scale(rng);
    std::vector<QueryRun> scaled = runs;
    for (auto& r : scaled) {
      *r.planning_ms *= k;
      *r.execution_ms *= k;
    }
    ResultMatrix a = normalize(aggregate(runs), Strategy::PureRLS);
    ResultMatrix b = normalize(aggregate(scaled), Strategy::PureRLS);
    ASSERT_EQ(a.ratios.size(), b.ratios.size());
    for (const auto& [key, ra] : a.ratios) {
      const Ratio& rb = b.ratios.at(key);
      EXPECT_NEAR(*ra.execution, *rb.execution, 1e-9 * *ra.execution);
      EXPECT_NEAR(*ra.planning, *rb.planning, 1e-9 * *ra.planning);
    }
  }
}

TEST(BenchConfig, Check) {
  BenchConfig c;
  EXPECT_NO_THROW(c.check());
  c.repetitions = 0;
  EXPECT_THROW(c.check(), Error);
  c = BenchConfig{};
  c.timeout = std::chrono::milliseconds(0);
  EXPECT_THROW(c.check(), Error);
  c = BenchConfig{};
  c.baseline = Strategy::BlackBoxUDF;
  try {
    c.check();
    ADD_FAILURE() << "baseline outside the strategies accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "InvalidConfig");
  }
}

class Opacity : public ::testing::Test {
 protected:
  PolicySet set = parse_policies(
      "policy p on orders o using (o.o_orderstatus = 'F' AND o.o_totalprice > 100000 "
      "AND o.o_orderdate >= DATE '1995-01-01') suppress-otherwise;",
      tpch());
};

TEST_F(Opacity, UdfCallIsOpaque) {
  EXPECT_TRUE(verify_opacity("Seq Scan on orders\n  Filter: pol_orders(o_orderkey, o_orderstatus, o_totalprice)",
                             Strategy::BlackBoxUDF, set));
}

TEST_F(Opacity, UdfPlanLeakingPredicate) {
  EXPECT_FALSE(verify_opacity("Filter: (pol_orders(o_orderkey) AND (o_totalprice > 100000))",
                              Strategy::BlackBoxUDF, set));
  EXPECT_FALSE(verify_opacity("Filter: (pol_orders(o_orderkey) AND (o_totalprice > '100000'::numeric))",
                              Strategy::BlackBoxUDF, set));
  EXPECT_FALSE(verify_opacity("Filter: (pol_orders(o_orderkey) AND ((o_orderstatus)::text = 'F'::text))",
                              Strategy::BlackBoxUDF, set));
  EXPECT_FALSE(verify_opacity("Index Cond: (orders.o_orderdate >= '1995-01-01'::date) pol_orders(x)",
                              Strategy::BlackBoxUDF, set));
}

TEST_F(Opacity, UdfPlanWithoutCall) {
  EXPECT_FALSE(verify_opacity("Seq Scan on orders", Strategy::BlackBoxUDF, set));
}

TEST_F(Opacity, OtherLiteralsAreNotLeaks) {
  EXPECT_TRUE(verify_opacity("Filter: (pol_orders(o_orderkey) AND (o_totalprice > '1000000'::numeric))",
                             Strategy::BlackBoxUDF, set));
  EXPECT_TRUE(verify_opacity("Filter: (pol_orders(o_orderkey) AND (o_orderstatus = 'O'::bpchar))",
                             Strategy::BlackBoxUDF, set));
}

TEST_F(Opacity, QueryOwnComparisonsAreNotLeaks) {
  std::string q = "select count(*) from orders where o_orderstatus = 'F'";
  std::string plan = "Filter: (pol_orders(o_orderkey) AND (o_orderstatus = 'F'::text))";
  EXPECT_TRUE(verify_opacity(plan, Strategy::BlackBoxUDF, set, q));
  EXPECT_FALSE(verify_opacity(plan, Strategy::BlackBoxUDF, set));
}

TEST_F(Opacity, WhiteBoxNeedsPolicyColumn) {
  std::string plan = "Seq Scan on orders\n  Filter: ((o_totalprice > '100000'::numeric) AND (o_orderstatus = 'F'))";
  EXPECT_TRUE(verify_opacity(plan, Strategy::InlineRewrite, set));
  EXPECT_TRUE(verify_opacity(plan, Strategy::PureRLS, set));
  EXPECT_FALSE(verify_opacity("Seq Scan on orders", Strategy::PureRLS, set));
  // A longer identifier that merely contains the column name does not count.
  EXPECT_FALSE(verify_opacity("Filter: (x_o_totalprice_y > 1)", Strategy::SecureView, set));
}

TEST_F(Opacity, NoActivatedPolicyIsVacuous) {
  EXPECT_TRUE(verify_opacity("Seq Scan on region", Strategy::BlackBoxUDF, set, "select * from region"));
  EXPECT_TRUE(verify_opacity("Seq Scan on region", Strategy::PureRLS, set, "select * from region"));
}

class Report : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "secpol_report_test";
  void SetUp() override { std::filesystem::remove_all(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
  std::vector<csv::Row> rows(const char* file) { return csv::parse(read_file((dir / file).string())); }
};

TEST_F(Report, EmptyMatrixWritesHeaders) {
  std::vector<std::string> files = emit_report(ResultMatrix{}, dir.string());
  EXPECT_EQ(files.size(), 4u);
  EXPECT_EQ(read_file((dir / "results.csv").string()), "query,strategy,rep,planning_ms,execution_ms,timed_out\n");
  EXPECT_EQ(read_file((dir / "ratios.csv").string()), "query,strategy,planning_ratio,execution_ratio,marker\n");
  EXPECT_EQ(read_file((dir / "plot_planning.csv").string()), "query\n");
  EXPECT_EQ(read_file((dir / "plot_execution.csv").string()), "query\n");
}

TEST_F(Report, OneCell) {
  ResultMatrix m = normalize(aggregate({run("q1", Strategy::PureRLS, 0, 1.5, 20.25)}), Strategy::PureRLS);
  emit_report(m, dir.string());
  EXPECT_EQ(read_file((dir / "results.csv").string()),
            "query,strategy,rep,planning_ms,execution_ms,timed_out\nq1,pure-rls,0,1.500,20.250,false\n");
  EXPECT_EQ(read_file((dir / "ratios.csv").string()),
            "query,strategy,planning_ratio,execution_ratio,marker\nq1,pure-rls,1.000000,1.000000,\n");
  EXPECT_EQ(read_file((dir / "plot_execution.csv").string()), "query,pure-rls\nq1,1.000000\n");
}

TEST_F(Report, QuotingAndDeterminism) {
  std::vector<QueryRun> runs = {run("q,\"x\"", Strategy::SecureView, 0, 1, 2), run("q,\"x\"", Strategy::PureRLS, 0, 1, 4),
                                timed_out("q2", Strategy::PureRLS, 0), run("q2", Strategy::SecureView, 0, 1, 1)};
  ResultMatrix m = normalize(aggregate(runs), Strategy::PureRLS);
  emit_report(m, dir.string());
  std::string first = read_file((dir / "ratios.csv").string());
  emit_report(m, dir.string());
  EXPECT_EQ(read_file((dir / "ratios.csv").string()), first);

  std::vector<csv::Row> r = rows("ratios.csv");
  ASSERT_EQ(r.size(), 5u);
  // Queries in run order, strategies in canonical order.
  EXPECT_EQ(r[1], (csv::Row{"q,\"x\"", "pure-rls", "1.000000", "1.000000", ""}));
  EXPECT_EQ(r[2], (csv::Row{"q,\"x\"", "secure-view", "1.000000", "0.500000", ""}));
  EXPECT_EQ(r[3], (csv::Row{"q2", "pure-rls", "", "", "timeout"}));
  EXPECT_EQ(r[4], (csv::Row{"q2", "secure-view", "", "", "baseline-timeout"}));

  std::vector<csv::Row> res = rows("results.csv");
  ASSERT_EQ(res.size(), 5u);
  EXPECT_EQ(res[3], (csv::Row{"q2", "pure-rls", "0", "", "", "true"}));
  std::vector<csv::Row> plot = rows("plot_execution.csv");
  EXPECT_EQ(plot[0], (csv::Row{"query", "pure-rls", "secure-view"}));
  EXPECT_EQ(plot[2], (csv::Row{"q2", "", ""}));
}

TEST_F(Report, UnwritableDirectory) {
  EXPECT_THROW(emit_report(ResultMatrix{}, "/proc/secpol/report"), IoError);
}

TEST(StressTable, CompositionByMechanism) {
  std::vector<StressCase> cases = gen_stress_suite(tpch());
  std::vector<QueryRun> runs;
  for (const auto& c : cases) {
    runs.push_back(run(c.name, Strategy::InlineRewrite, 0, 1, 10));
    runs.push_back(run(c.name, Strategy::BlackBoxUDF, 0, 1, 30));
  }
  runs.back() = timed_out(cases.back().name, Strategy::BlackBoxUDF, 0);
  std::vector<csv::Row> t = csv::parse(stress_table(aggregate(runs), cases));
  ASSERT_EQ(t.size(), 1 + 2 * cases.size());
  EXPECT_EQ(t[0], (csv::Row{"case", "composition", "mechanism", "median_ms", "slowdown"}));
  EXPECT_EQ(t[1], (csv::Row{"p_and_not_p", "p AND NOT p", "inline-rewrite", "10.000", "1.000000"}));
  EXPECT_EQ(t[2], (csv::Row{"p_and_not_p", "p AND NOT p", "udf", "30.000", "3.000000"}));
  EXPECT_EQ(t.back()[4], "timeout");
}

TEST(FormatMs, FixedPoint) {
  EXPECT_EQ(format_ms(0), "0.000");
  EXPECT_EQ(format_ms(12.3456), "12.346");
}

}  // namespace
}  // namespace secpol
