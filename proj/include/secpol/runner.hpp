#pragma once

#include <optional>
#include <string>
#include <vector>

#include "secpol/bench.hpp"
#include "secpol/oracle.hpp"
#include "secpol/pg.hpp"
#include "secpol/relmodel.hpp"

namespace secpol {

/// Drops every schema relation and leftover `pol_` functions, then creates
/// the relations empty.
void create_schema(pg::Connection& conn, const Schema& schema);

/// COPYs every relation of `db` (or only `tables` when given), then ANALYZEs.
void load_fixture(pg::Connection& conn, const DatabaseInstance& db, const std::vector<std::string>& tables = {});

/// Creates the NOLOGIN, non-superuser reader role if missing and grants it
/// read access to everything in the public schema.
void ensure_reader_role(pg::Connection& conn, const std::string& role);

/// Applies setup_sql in one transaction, refreshes statistics on the policed
/// tables and re-grants read access to `reader_role`. Throws SetupFailed.
void prepare_strategy(pg::Connection& conn, const EnforcementArtifact& artifact, const std::string& reader_role);
void prepare_statements(pg::Connection& conn, const std::vector<std::string>& setup,
                        const std::vector<std::string>& analyze_tables, const std::string& reader_role);

/// Runs teardown_sql; missing objects are not an error.
void teardown_strategy(pg::Connection& conn, const EnforcementArtifact& artifact);

/// Every strategy x query of `config` against the loaded database, as
/// `config.reader_role`, one statement at a time. Artifacts that cannot be
/// compiled for `set` record failed runs. ConnectionLost ends the suite with
/// `aborted` set and the runs gathered so far.
ResultMatrix run_suite(const BenchConfig& config, const Schema& schema, const PolicySet& set,
                       pg::Connection& conn);

/// Times the stress cases: each mechanism's setup, warmups, repetitions and
/// teardown. Query ids are case names.
ResultMatrix run_stress(const BenchConfig& config, const std::vector<StressCase>& cases, pg::Connection& conn);

/// Plain fetch of `sql` as `role` (empty: current role); rows sorted, NULL as nullopt.
using ResultRow = std::vector<std::optional<std::string>>;
std::vector<ResultRow> fetch_multiset(pg::Connection& conn, const std::string& sql, const std::string& role = "");

/// EXPLAIN (ANALYZE, FORMAT JSON) of `sql` as the current role.
QueryRun explain_analyze(pg::Connection& conn, const std::string& sql);

struct DiffCheck {
  std::string table;
  Strategy strategy = Strategy::PureRLS;
  bool masking = false;
  bool passed = false;
  /// Oracle rows that stay visible (filter) or rendered rows (masking),
  /// against the relation's size.
  std::size_t expected_rows = 0;
  std::size_t total_rows = 0;
  /// Why the strategy does not apply, or the first differing line.
  std::string detail;
  bool skipped = false;
};

struct DiffReport {
  std::vector<DiffCheck> checks;
  bool ok() const;
};

/// For each policed table t: the oracle's result for set.only(t) against the
/// database after applying each strategy to set.only(t). Filter policies
/// compare the visible key sets; masking policies compare the rendered
/// relation. The database must already hold exactly `db`.
DiffReport diff(pg::Connection& conn, const Schema& schema, const PolicySet& set, const DatabaseInstance& db,
                const std::string& reader_role, const std::vector<Strategy>& strategies = all_strategies());

/// Reads relation rows back as an instance (for round-trip checks).
RelationInstance read_relation(pg::Connection& conn, const RelationDef& def);

}  // namespace secpol
