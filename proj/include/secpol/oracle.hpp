#pragma once

#include <set>
#include <string>
#include <vector>

#include "secpol/policy.hpp"
#include "secpol/relmodel.hpp"

namespace secpol {

enum class VisibilityTag { Full, Masked, SuppressedOut };

std::string_view to_string(VisibilityTag t);

struct MaskedRow {
  Tuple key;  // primary-key values, in primary_key order
  VisibilityTag tag = VisibilityTag::Full;
  Tuple values;
  std::vector<std::string> applied_masks;

  friend bool operator==(const MaskedRow&, const MaskedRow&) = default;
};

struct MaskedRelation {
  std::string relation;
  std::vector<MaskedRow> rows;  // base-table order
};

/// SQL three-valued truth of `q` for one row of `relation`. Subqueries see the
/// raw instance; no other policy is applied to the tables they read.
Truth eval_predicate(const PredicateExpr& q, const RelationDef& relation, const Tuple& row,
                     const DatabaseInstance& db, const EvalContext& ctx);

/// One output row per base row: Full where Q is true, the mask applied where
/// Q is false or unknown, SuppressedOut when the mask suppresses everything.
MaskedRelation eval_atomic(const AtomicPolicy& alpha, const DatabaseInstance& db, const EvalContext& ctx);

struct EvalOptions {
  /// Emit one row per applicable mask instead of merging overlapping masks.
  bool literal_union = false;
};

MaskedRelation eval_policy(const PolicyExpr& p, const DatabaseInstance& db, const EvalContext& ctx,
                           const EvalOptions& options = {});

/// Keys of Full rows.
std::set<Tuple> visible_set(const MaskedRelation& m);

/// Comma-separated rendering: key columns, `visibility`, then every attribute.
/// SuppressedOut rows are omitted; Null and suppressed values render empty.
/// Rows are sorted by key.
std::string render(const MaskedRelation& m, const RelationDef& def);

}  // namespace secpol
