#pragma once

#include <chrono>
#include <compare>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "secpol/policy.hpp"
#include "secpol/sqlgen.hpp"

namespace secpol {

struct BenchConfig {
  /// Connection URI; empty means libpq's PG* environment.
  std::string uri;
  std::vector<Strategy> strategies{Strategy::PureRLS, Strategy::IndexedRLS, Strategy::SecureView};
  /// Query id -> SQL text, run in this order.
  std::vector<std::pair<std::string, std::string>> queries;
  std::string policy_path;
  int repetitions = 3;
  int warmups = 1;
  std::chrono::milliseconds timeout = std::chrono::seconds(300);
  Strategy baseline = Strategy::PureRLS;
  /// Role the timed statements run as; must not bypass row level security.
  std::string reader_role = "secpol_reader";
  /// Optional external rewriter applied after inline rewriting.
  std::string rewriter_command;

  /// Throws Error of kind "InvalidConfig" when repetitions < 1, the timeout
  /// is not positive, or the baseline is not among the strategies.
  void check() const;
};

struct QueryRun {
  std::string query_id;
  Strategy strategy = Strategy::PureRLS;
  int repetition = 0;
  std::optional<double> planning_ms;
  std::optional<double> execution_ms;
  bool timed_out = false;
  /// Non-timeout failure; `error` holds the server message.
  bool failed = false;
  std::string error;
  std::string plan_text;
  /// Wall time of an external rewriter, kept apart from planning time.
  std::optional<double> rewrite_ms;
  /// Client-side begin and end of the timed statement, in ms since the
  /// suite started; consecutive runs never overlap.
  double started_ms = 0;
  double finished_ms = 0;
};

struct CellKey {
  std::string query;
  Strategy strategy = Strategy::PureRLS;
  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

/// Median over the completed repetitions of one (query, strategy) cell.
/// A cell with any timed-out or failed repetition carries no durations.
struct Cell {
  std::optional<double> planning_ms;
  std::optional<double> execution_ms;
  bool timed_out = false;
  bool failed = false;
};

struct Ratio {
  std::optional<double> planning;
  std::optional<double> execution;
  /// Set instead of ratios: "timeout", "baseline-timeout", "error",
  /// "baseline-error" or "zero-baseline".
  std::string marker;
};

struct ResultMatrix {
  std::vector<QueryRun> runs;
  /// Query ids in first-seen order.
  std::vector<std::string> query_order;
  std::map<CellKey, Cell> aggregates;
  std::map<CellKey, Ratio> ratios;
  /// Non-empty when the suite stopped early (connection lost).
  std::string aborted;
};

/// Builds query_order and aggregates from `runs`.
ResultMatrix aggregate(std::vector<QueryRun> runs);

/// Ratios of each cell's medians to the baseline strategy's medians for the
/// same query. Throws MissingBaseline when a query has no baseline cell.
ResultMatrix normalize(const ResultMatrix& matrix, Strategy baseline);

/// Black-box strategies: the plan calls a `pol_` function and shows none of
/// the policy's column-vs-literal comparisons. White-box strategies: the plan
/// names at least one column a policy reads. Only policies activated by
/// `query` are considered, and comparisons the query itself spells out are
/// not counted as leaks. Vacuously true when no policy is activated.
bool verify_opacity(const std::string& plan_text, Strategy strategy, const PolicySet& set,
                    const std::string& query = "");

/// results.csv, ratios.csv, plot_planning.csv and plot_execution.csv under
/// `dir`; returns the written paths. Throws IoError.
std::vector<std::string> emit_report(const ResultMatrix& matrix, const std::string& dir);

/// Per-case slowdown table (case, composition, mechanism, median_ms,
/// slowdown) where slowdown is relative to the fastest mechanism of the case.
std::string stress_table(const ResultMatrix& matrix, const std::vector<StressCase>& cases);

/// Fixed-point rendering used by every report column.
std::string format_ms(double v);

}  // namespace secpol
