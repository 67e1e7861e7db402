#include "secpol/policy.hpp"

#include <algorithm>

#include "secpol/error.hpp"

namespace secpol {

bool MaskSpec::is_filter() const {
  if (default_action.kind != MaskKind::Suppress) return false;
  return std::all_of(items.begin(), items.end(),
                     [](const MaskItem& i) { return i.action.kind == MaskKind::Suppress; });
}

MaskAction MaskSpec::action_for(const RelationDef& rel, std::string_view attribute) const {
  for (const auto& item : items)
    if (item.attribute == attribute) return item.action;
  if (!is_filter() && rel.is_key_attribute(attribute)) return MaskAction::keep();
  return default_action;
}

bool ResolvedMask::suppresses_tuple() const {
  return !actions.empty() && std::all_of(actions.begin(), actions.end(), [](const MaskAction& a) {
    return a.kind == MaskKind::Suppress;
  });
}

ResolvedMask resolve(const MaskSpec& mask, const RelationDef& rel, std::string source) {
  ResolvedMask out;
  for (const auto& a : rel.attributes) out.actions.push_back(mask.action_for(rel, a.name));
  out.sources.push_back(std::move(source));
  return out;
}

ResolvedMask merge(const ResolvedMask& a, const ResolvedMask& b) {
  ResolvedMask out;
  out.actions.reserve(a.actions.size());
  for (std::size_t i = 0; i < a.actions.size(); ++i) {
    const MaskAction& x = a.actions[i];
    const MaskAction& y = b.actions[i];
    out.actions.push_back(static_cast<int>(y.kind) > static_cast<int>(x.kind) ? y : x);
  }
  out.sources = a.sources;
  for (const auto& s : b.sources)
    if (std::find(out.sources.begin(), out.sources.end(), s) == out.sources.end())
      out.sources.push_back(s);
  return out;
}

// ---------------------------------------------------------------------------

PolicyExpr atomic(AtomicPolicy a) { return PolicyExpr{std::move(a), {}}; }
PolicyExpr p_and(PolicyExpr a, PolicyExpr b) { return PolicyExpr{PAnd{std::move(a), std::move(b)}, {}}; }
PolicyExpr p_or(PolicyExpr a, PolicyExpr b) { return PolicyExpr{POr{std::move(a), std::move(b)}, {}}; }
PolicyExpr p_not(PolicyExpr a) { return PolicyExpr{PNot{std::move(a)}, {}}; }
PolicyExpr p_if(std::string cond_name, PredicateExpr cond, PolicyExpr then_branch,
                PolicyExpr else_branch) {
  return PolicyExpr{IfThenElse{std::move(cond_name), std::move(cond), std::move(then_branch),
                               std::move(else_branch)},
                    {}};
}

namespace {
void collect_leaves(const PolicyExpr& p, std::vector<const AtomicPolicy*>& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, AtomicPolicy>) {
          out.push_back(&n);
        } else if constexpr (std::is_same_v<T, PAnd> || std::is_same_v<T, POr>) {
          collect_leaves(*n.lhs, out);
          collect_leaves(*n.rhs, out);
        } else if constexpr (std::is_same_v<T, PNot>) {
          collect_leaves(*n.inner, out);
        } else {
          collect_leaves(*n.then_branch, out);
          collect_leaves(*n.else_branch, out);
        }
      },
      p.node);
}
}  // namespace

std::vector<const AtomicPolicy*> leaves(const PolicyExpr& p) {
  std::vector<const AtomicPolicy*> out;
  collect_leaves(p, out);
  return out;
}

const std::string& relation_of(const PolicyExpr& p) { return leaves(p).front()->relation; }

bool is_filter_only(const PolicyExpr& p) {
  auto ls = leaves(p);
  return std::all_of(ls.begin(), ls.end(), [](const AtomicPolicy* a) { return a->mask.is_filter(); });
}

// ---------------------------------------------------------------------------
// PolicySet

namespace {
void collect_refs(const PolicyExpr& p, std::vector<std::string>& out) {
  if (!p.ref_name.empty()) {
    out.push_back(p.ref_name);
    return;
  }
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, AtomicPolicy>) {
          out.push_back(n.name);
        } else if constexpr (std::is_same_v<T, PAnd> || std::is_same_v<T, POr>) {
          collect_refs(*n.lhs, out);
          collect_refs(*n.rhs, out);
        } else if constexpr (std::is_same_v<T, PNot>) {
          collect_refs(*n.inner, out);
        } else {
          collect_refs(*n.then_branch, out);
          collect_refs(*n.else_branch, out);
        }
      },
      p.node);
}
}  // namespace

void PolicySet::add_predicate(NamedPredicate p) { predicates_.push_back(std::move(p)); }

void PolicySet::add_definition(PolicyDef d) {
  definitions_.push_back(std::move(d));
  recompute_top_level();
}

void PolicySet::seal() const {
  std::vector<std::pair<std::string, std::string>> seen;
  for (const auto& [table, name] : top_level_) {
    for (const auto& [t, n] : seen)
      if (t == table)
        throw DuplicatePolicyForTable("table '" + table + "' has two enforced policies, '" + n + "' and '" +
                                      name + "'");
    seen.emplace_back(table, name);
  }
}

void PolicySet::recompute_top_level() {
  std::vector<std::string> referenced;
  for (const auto& d : definitions_)
    if (d.composed) collect_refs(d.expr, referenced);
  top_level_.clear();
  for (const auto& d : definitions_) {
    if (std::find(referenced.begin(), referenced.end(), d.name) != referenced.end()) continue;
    top_level_.emplace_back(d.relation, d.name);
  }
}

PolicySet PolicySet::of(std::vector<PolicyExpr> table_policies) {
  PolicySet set;
  for (auto& expr : table_policies) {
    if (std::holds_alternative<AtomicPolicy>(expr.node)) {
      const auto& a = std::get<AtomicPolicy>(expr.node);
      set.add_definition(PolicyDef{a.name, a.relation, expr, false});
      continue;
    }
    std::string rel = relation_of(expr);
    for (const AtomicPolicy* leaf : leaves(expr)) {
      if (set.find_definition(leaf->name)) continue;
      set.definitions_.push_back(PolicyDef{leaf->name, leaf->relation, atomic(*leaf), false});
    }
    set.add_definition(PolicyDef{rel + "_policy", rel, std::move(expr), true});
  }
  set.seal();
  return set;
}

const NamedPredicate* PolicySet::find_predicate(std::string_view name) const {
  for (const auto& p : predicates_)
    if (p.name == name) return &p;
  return nullptr;
}

const PolicyDef* PolicySet::find_definition(std::string_view name) const {
  for (const auto& d : definitions_)
    if (d.name == name) return &d;
  return nullptr;
}

std::vector<std::string> PolicySet::tables() const {
  std::vector<std::string> out;
  for (const auto& [table, name] : top_level_) out.push_back(table);
  return out;
}

const PolicyExpr* PolicySet::for_table(std::string_view table) const {
  for (const auto& [t, name] : top_level_)
    if (t == table) return &find_definition(name)->expr;
  return nullptr;
}

PolicySet PolicySet::only(std::string_view table) const {
  PolicySet out;
  out.predicates_ = predicates_;
  std::string top;
  for (const auto& [t, name] : top_level_)
    if (t == table) top = name;
  // Keep the definitions the top-level one depends on, plus itself.
  std::vector<std::string> needed{top};
  for (std::size_t i = 0; i < needed.size(); ++i) {
    const PolicyDef* d = find_definition(needed[i]);
    if (d && d->composed) collect_refs(d->expr, needed);
  }
  for (const auto& d : definitions_)
    if (std::find(needed.begin(), needed.end(), d.name) != needed.end()) out.definitions_.push_back(d);
  out.recompute_top_level();
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(PolicyClass c) {
  switch (c) {
    case PolicyClass::AttributePredicate: return "attribute";
    case PolicyClass::Existential: return "existential";
    case PolicyClass::Universal: return "universal";
    case PolicyClass::GroupingAggregate: return "grouping-aggregate";
    case PolicyClass::Statistical: return "statistical";
  }
  return "?";
}

}  // namespace secpol
