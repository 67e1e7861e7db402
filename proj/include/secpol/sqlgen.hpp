#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "secpol/policy.hpp"
#include "secpol/relmodel.hpp"

namespace secpol {

enum class Strategy { PureRLS, IndexedRLS, SecureView, InlineRewrite, BlackBoxUDF };

/// Stable lowercase names: pure-rls, indexed-rls, secure-view, inline-rewrite, udf.
std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);
const std::vector<Strategy>& all_strategies();

/// Compiled enforcement for one strategy. Setup statements are individually
/// executable; running the teardown afterwards restores the policy state.
struct EnforcementArtifact {
  Strategy strategy = Strategy::PureRLS;
  std::vector<std::string> setup_sql;
  std::vector<std::string> teardown_sql;
  /// Query-to-query mapping for strategies that change the user query.
  std::function<std::string(const std::string&)> per_query_rewrite;
  std::vector<std::string> notes;
  std::vector<std::string> policed_tables;
  bool requires_acyclic = true;

  /// The rewritten query, or `query` itself when the strategy has no mapping.
  std::string rewrite(const std::string& query) const;
};

/// Filter policies only: ENABLE/FORCE row level security plus one
/// `CREATE POLICY secpol_<t>` per table. Throws RLSUnsupportedMasking or
/// CyclicPolicySet.
EnforcementArtifact emit_rls(const PolicySet& set, const Schema& schema);
/// emit_rls plus the advise_indexes script.
EnforcementArtifact emit_indexed_rls(const PolicySet& set, const Schema& schema);
/// One `CREATE INDEX IF NOT EXISTS pcov_<rel>_<col>` per distinct column read
/// by any policy predicate, sorted by relation then column.
std::vector<std::string> advise_indexes(const PolicySet& set, const Schema& schema);
/// One view `v_<t>` per policed table. Filter policies become a single
/// SELECT; masking policies use CTEs with a visibility_level column. Without
/// `barrier` the set must be acyclic.
EnforcementArtifact emit_views(const PolicySet& set, const Schema& schema, bool barrier);
/// Conjoins each activated policy into the WHERE clause of the SELECT that
/// reads the table. Tables inside explicit joins and masked tables are
/// replaced by derived tables instead. Idempotent.
std::string rewrite_query_inline(const std::string& query, const PolicySet& set, const Schema& schema);
EnforcementArtifact emit_inline(const PolicySet& set, const Schema& schema);
/// SECURITY DEFINER function `pol_<t>` per table, called from an RLS policy.
/// Admits cyclic sets; rejects masking policies.
EnforcementArtifact emit_udf(const PolicySet& set, const Schema& schema);
/// Dispatch by strategy; SecureView uses barrier views.
EnforcementArtifact compile(Strategy s, const PolicySet& set, const Schema& schema);

/// The visible-region boolean of `p`, with base-row columns qualified by
/// `qualifier` where a subquery makes them ambiguous.
std::string policy_condition_sql(const PolicyExpr& p, const Schema& schema, const std::string& qualifier);

/// CREATE TABLE statements (with primary keys) in schema order.
std::vector<std::string> schema_ddl(const Schema& schema);
/// DROP TABLE IF EXISTS statements in reverse schema order.
std::vector<std::string> schema_drop_ddl(const Schema& schema);

// ---------------------------------------------------------------------------
// Query scanning

struct FromTable {
  std::string relation;        // lowercased
  std::string alias;           // explicit alias, empty when absent
  std::size_t name_begin = 0;  // byte range of the (possibly schema-qualified) name
  std::size_t name_end = 0;
  std::size_t end = 0;         // one past the alias, or name_end
  bool in_join = false;        // participates in an explicit JOIN

  std::string qualifier() const { return alias.empty() ? relation : alias; }
};

/// One SELECT core of a query.
struct SelectBlock {
  std::vector<FromTable> tables;
  bool has_from = false;
  std::size_t from_end = 0;  // one past the last FROM-list token
  bool has_where = false;
  std::size_t where_begin = 0;  // first byte of the WHERE condition
  std::size_t where_end = 0;    // one past its last token
};

/// Every SELECT block, in source order, with its base-table FROM items. CTE
/// names are not reported as tables. Throws UnparseableFromClause.
std::vector<SelectBlock> scan_query(std::string_view sql);

/// Policed tables read anywhere in the query.
std::set<std::string> activated_policies(const std::string& query, const PolicySet& set);

/// Marker prepended by rewrite_query_inline.
inline constexpr std::string_view kInlineMarker = "/* secpol:inline */";

// ---------------------------------------------------------------------------
// Stress compositions

struct StressRun {
  Strategy mechanism = Strategy::InlineRewrite;
  std::vector<std::string> setup_sql;
  std::vector<std::string> teardown_sql;
  std::string query;
};

struct StressCase {
  std::string name;
  std::string composition;  // e.g. "p AND NOT q"
  bool indexed = false;
  /// The composed policy, for checking against the oracle.
  PolicyExpr policy;
  std::vector<StressRun> runs;  // InlineRewrite then BlackBoxUDF
};

/// The contradiction case and both orders of the negated composition, the
/// latter with and without policy-coverage indexes.
std::vector<StressCase> gen_stress_suite(const Schema& schema);

// ---------------------------------------------------------------------------
// Plumbing

/// Runs `command` through /bin/sh with `query` on stdin and returns stdout.
/// Throws RewriterFailed on a non-zero exit and RewriterTimeout on expiry.
std::string external_rewrite(const std::string& query, const std::string& command,
                             std::chrono::milliseconds timeout = std::chrono::seconds(30));

/// JSON index {strategy, files, policed_tables, requires_acyclic}.
std::string manifest_json(const EnforcementArtifact& artifact, const std::vector<std::string>& files);
/// Writes <strategy>_setup.sql, <strategy>_teardown.sql and
/// <strategy>_manifest.json under `dir`; returns the written paths.
std::vector<std::string> write_artifact(const EnforcementArtifact& artifact, const std::string& dir);
/// Statements joined as a script, one `;`-terminated statement per group.
std::string to_script(const std::vector<std::string>& statements);

}  // namespace secpol
