#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "secpol/ast.hpp"
#include "secpol/relmodel.hpp"

namespace secpol {

// ---------------------------------------------------------------------------
// Masking

/// Ordered by strictness: merging two actions keeps the larger one.
enum class MaskKind { Keep = 0, ConstantText = 1, NullOut = 2, Suppress = 3 };

struct MaskAction {
  MaskKind kind = MaskKind::Keep;
  std::string text;  // ConstantText only

  static MaskAction keep() { return {MaskKind::Keep, {}}; }
  static MaskAction null_out() { return {MaskKind::NullOut, {}}; }
  static MaskAction suppress() { return {MaskKind::Suppress, {}}; }
  static MaskAction constant(std::string s) { return {MaskKind::ConstantText, std::move(s)}; }

  friend bool operator==(const MaskAction&, const MaskAction&) = default;
};

struct MaskItem {
  std::string attribute;
  MaskAction action;
  friend bool operator==(const MaskItem&, const MaskItem&) = default;
};

/// The masking function μ: a per-attribute action list plus a default for
/// unlisted attributes. Every attribute mapped to Suppress means the tuple is
/// filtered out rather than presented.
struct MaskSpec {
  std::vector<MaskItem> items;
  MaskAction default_action = MaskAction::keep();

  static MaskSpec suppress_all() { return MaskSpec{{}, MaskAction::suppress()}; }

  /// True when every attribute is suppressed (tuple filter semantics).
  bool is_filter() const;
  /// Action for `attribute` of `rel`. Key attributes keep their value under
  /// non-filter masks unless listed explicitly.
  MaskAction action_for(const RelationDef& rel, std::string_view attribute) const;

  friend bool operator==(const MaskSpec&, const MaskSpec&) = default;
};

/// Per-attribute actions resolved against a relation, in attribute order.
struct ResolvedMask {
  std::vector<MaskAction> actions;
  /// Names of the atomic policies whose masks were merged into this one.
  std::vector<std::string> sources;

  bool suppresses_tuple() const;
  friend bool operator==(const ResolvedMask&, const ResolvedMask&) = default;
};

ResolvedMask resolve(const MaskSpec& mask, const RelationDef& rel, std::string source);
/// Strictest action per attribute (Suppress > NullOut > ConstantText > Keep);
/// ties between two constants keep the left operand.
ResolvedMask merge(const ResolvedMask& a, const ResolvedMask& b);

// ---------------------------------------------------------------------------
// Policies

/// α = ⟨R, Q, σ, π, μ⟩. Selection σ is by `predicate` and projection π is the
/// identity on the visible region, so neither is stored.
struct AtomicPolicy {
  std::string name;
  std::string relation;
  /// Surface alias for the policed row (printing only; the AST uses "").
  std::string alias;
  PredicateExpr predicate;
  MaskSpec mask;

  friend bool operator==(const AtomicPolicy&, const AtomicPolicy&) = default;
};

struct PolicyExpr;

struct PAnd {
  Box<PolicyExpr> lhs;
  Box<PolicyExpr> rhs;
  friend bool operator==(const PAnd&, const PAnd&) = default;
};

struct POr {
  Box<PolicyExpr> lhs;
  Box<PolicyExpr> rhs;
  friend bool operator==(const POr&, const POr&) = default;
};

struct PNot {
  Box<PolicyExpr> inner;
  friend bool operator==(const PNot&, const PNot&) = default;
};

struct IfThenElse {
  std::string cond_name;
  PredicateExpr cond;
  Box<PolicyExpr> then_branch;
  Box<PolicyExpr> else_branch;
  friend bool operator==(const IfThenElse&, const IfThenElse&) = default;
};

/// Composition grammar node (𝒫 / β / ι).
struct PolicyExpr {
  std::variant<AtomicPolicy, PAnd, POr, PNot, IfThenElse> node;
  /// Set when this subtree was introduced by naming another composed policy.
  std::string ref_name;

  friend bool operator==(const PolicyExpr&, const PolicyExpr&) = default;
};

PolicyExpr atomic(AtomicPolicy a);
PolicyExpr p_and(PolicyExpr a, PolicyExpr b);
PolicyExpr p_or(PolicyExpr a, PolicyExpr b);
PolicyExpr p_not(PolicyExpr a);
PolicyExpr p_if(std::string cond_name, PredicateExpr cond, PolicyExpr then_branch,
                PolicyExpr else_branch);

/// Atomic leaves in left-to-right order.
std::vector<const AtomicPolicy*> leaves(const PolicyExpr& p);
/// Relation of the first leaf.
const std::string& relation_of(const PolicyExpr& p);
/// True when every leaf carries a suppress-all mask.
bool is_filter_only(const PolicyExpr& p);

struct NamedPredicate {
  std::string name;
  std::string relation;
  std::string alias;
  PredicateExpr body;
  friend bool operator==(const NamedPredicate&, const NamedPredicate&) = default;
};

struct PolicyDef {
  std::string name;
  std::string relation;
  PolicyExpr expr;
  bool composed = false;  // declared with `= pexpr` rather than `using (...)`
  friend bool operator==(const PolicyDef&, const PolicyDef&) = default;
};

/// Parsed policy document: named predicates and policy definitions in
/// declaration order. A definition not referenced by any composition is the
/// enforced policy for its table; at most one per table.
class PolicySet {
 public:
  PolicySet() = default;

  void add_predicate(NamedPredicate p);
  void add_definition(PolicyDef d);
  /// Throws DuplicatePolicyForTable when some table ends up with more than
  /// one unreferenced definition.
  void seal() const;
  /// Convenience: a top-level definition named after its table.
  static PolicySet of(std::vector<PolicyExpr> table_policies);

  const std::vector<NamedPredicate>& predicates() const { return predicates_; }
  const std::vector<PolicyDef>& definitions() const { return definitions_; }
  const NamedPredicate* find_predicate(std::string_view name) const;
  const PolicyDef* find_definition(std::string_view name) const;

  /// Enforced policy per table, in declaration order.
  std::vector<std::string> tables() const;
  const PolicyExpr* for_table(std::string_view table) const;
  bool empty() const { return top_level_.empty(); }

  /// Copy restricted to the single top-level policy of `table`.
  PolicySet only(std::string_view table) const;

  friend bool operator==(const PolicySet& a, const PolicySet& b) {
    return a.predicates_ == b.predicates_ && a.definitions_ == b.definitions_;
  }

 private:
  void recompute_top_level();

  std::vector<NamedPredicate> predicates_;
  std::vector<PolicyDef> definitions_;
  std::vector<std::pair<std::string, std::string>> top_level_;  // table -> definition
};

// ---------------------------------------------------------------------------
// Documents

/// Parses and resolves a policy document, then validates it. The first
/// error-level finding is raised as its typed error (UnknownRelation,
/// UnknownAttribute, IncompatibleComposition, InvalidPolicy).
PolicySet parse_policies(std::string_view document, const Schema& schema);
PolicySet parse_policies_file(const std::string& path, const Schema& schema);
/// Parse and resolve only; unresolvable references are left for validate().
PolicySet parse_policies_unchecked(std::string_view document, const Schema& schema);

/// Canonical document; parse_policies(print_policies(s)) == s.
std::string print_policies(const PolicySet& set, const Schema& schema);
/// Predicate in the document's SQL-subset syntax. Base-row references use
/// `alias.` when an alias is given, otherwise they are left unqualified
/// when unambiguous and qualified by the relation name when not.
std::string print_predicate(const PredicateExpr& p, const Schema& schema,
                            const std::string& relation, const std::string& alias);

// ---------------------------------------------------------------------------
// Validation

struct Finding {
  std::string code;
  std::string policy;
  std::string message;
  friend bool operator==(const Finding&, const Finding&) = default;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const { return findings.empty(); }
};

ValidationReport validate(const PolicySet& set, const Schema& schema);

// ---------------------------------------------------------------------------
// Taxonomy

enum class PolicyClass { AttributePredicate, Existential, Universal, GroupingAggregate, Statistical };

std::string_view to_string(PolicyClass c);
PolicyClass classify(const AtomicPolicy& alpha);

}  // namespace secpol
