#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "secpol/policy.hpp"
#include "secpol/relmodel.hpp"

namespace secpol {

/// Foreign-key dependency graph: an edge t -> u for every FK of t targeting u.
struct SchemaDag {
  std::vector<std::string> nodes;                            // schema order
  std::vector<std::pair<std::string, std::string>> edges;    // schema then FK order

  std::vector<std::string> successors(const std::string& t) const;
  /// A(t): relations reachable from t, excluding t.
  std::set<std::string> ancestors(const std::string& t) const;
};

/// Throws SchemaFkCycle when the FK graph is cyclic.
SchemaDag schema_dag(const Schema& schema);

/// Relations named in any subquery FROM list of the policy, conditions included.
std::set<std::string> refs(const PolicyExpr& p);

/// Relations without a policy in `set`.
std::set<std::string> base_tables(const PolicySet& set, const SchemaDag& dag);

struct CycleReport {
  bool cyclic = false;
  /// t1 -> ... -> t1 when cyclic, otherwise empty.
  std::vector<std::string> path;
  /// Refs(P_t) outside A(t) ∪ B; reported, not enforced.
  std::vector<Finding> findings;
};

CycleReport check_acyclicity(const PolicySet& set, const SchemaDag& dag);
/// `CYCLIC: a -> b -> a`, or `ACYCLIC`.
std::string format_cycle(const CycleReport& report);

using TierAssignment = std::map<std::string, int>;

/// Tier of every schema relation. Throws CyclicPolicySet for a cyclic set.
TierAssignment assign_tiers(const PolicySet& set, const SchemaDag& dag);

}  // namespace secpol
