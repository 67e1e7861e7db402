#pragma once

// Internal helpers shared by the SQL emitters.

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "secpol/policy.hpp"
#include "secpol/relmodel.hpp"

namespace secpol::sqlr {

/// How subquery reads of other policed relations are enforced.
enum class Nesting {
  None,    // raw tables: the database (RLS) or nobody applies their policies
  Views,   // read v_<u>
  Inline,  // read a derived table carrying u's policy
};

struct RenderCtx {
  const Schema* schema = nullptr;
  const PolicySet* set = nullptr;
  Nesting nesting = Nesting::None;
  /// Name the policed row is reachable under; empty when `params` is used.
  std::string qualifier;
  /// Qualify every base-row column, not just ambiguous ones.
  bool always_qualify = false;
  /// Base attribute -> function argument (UDF bodies).
  std::map<std::string, std::string> params;
  /// SQL for `:current_user`.
  std::string user_expr = "current_user";
};

std::string predicate(const PredicateExpr& p, const RenderCtx& ctx);

/// Visible-region boolean: PAnd -> AND, POr -> OR, PNot -> IS NOT TRUE,
/// IfThenElse -> CASE WHEN.
std::string condition(const PolicyExpr& p, const RenderCtx& ctx);

/// CTE-based masking query over `rel`; columns are the attributes followed by
/// visibility_level, and suppressed tuples are dropped.
std::string masking_body(const PolicyExpr& p, const RelationDef& rel, const RenderCtx& ctx);

/// SELECT yielding what a reader may see of `relation` under its policy.
std::string relation_source(const std::string& relation, const RenderCtx& ctx);

/// Every (relation, column) read by the policy, subqueries included.
void collect_columns(const PolicyExpr& p, std::set<std::pair<std::string, std::string>>& out);

/// Base-row attributes referenced anywhere in the policy.
std::set<std::string> base_attributes(const PolicyExpr& p);

/// Context parameters referenced anywhere in the policy.
std::set<std::string> context_params(const PolicyExpr& p);

/// PostgreSQL column type for a schema type.
std::string sql_type(DataType t);

}  // namespace secpol::sqlr
