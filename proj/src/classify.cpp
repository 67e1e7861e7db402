#include "secpol/policy.hpp"

namespace secpol {

namespace {

// Root predicate and, when the root is a conjunction, its direct conjuncts.
std::vector<const PredicateExpr*> top_level(const PredicateExpr& p) {
  if (const auto* a = std::get_if<AndExpr>(&p.node)) {
    std::vector<const PredicateExpr*> out;
    for (const auto& c : a->children) out.push_back(&c);
    return out;
  }
  return {&p};
}

struct GroupingFinder : AstVisitor {
  bool found = false;
  void on_subquery(const SubquerySpec& q, int) override {
    if (!q.group_by.empty() || q.having) found = true;
  }
};

struct AggregateFinder : AstVisitor {
  bool found = false;
  void on_aggregate(const Aggregate&, int) override { found = true; }
};

bool has_aggregate(const SubquerySpec& q) {
  AggregateFinder f;
  walk(q, f);
  return f.found;
}

struct StatisticalFinder : AstVisitor {
  bool found = false;
  void on_comparison(const Comparison& c, int) override {
    for (const ScalarExpr* side : {&c.lhs, &c.rhs}) check(*side);
  }
  // The subquery may sit under arithmetic, e.g. `x >= 0.2 * (SELECT SUM(..))`.
  void check(const ScalarExpr& s) {
    if (const auto* q = std::get_if<ScalarSubquery>(&s.node)) {
      if (has_aggregate(*q->query)) found = true;
    } else if (const auto* a = std::get_if<Arith>(&s.node)) {
      check(*a->lhs);
      check(*a->rhs);
    } else if (const auto* c = std::get_if<Coalesce>(&s.node)) {
      for (const auto& arg : c->args) check(arg);
    }
  }
};

bool is_inner_column(const ScalarExpr& s) {
  const auto* c = std::get_if<ColumnRef>(&s.node);
  return c && !c->is_base();
}

// Join equalities (column = column) and filters of an inner column against a
// literal are the only conjuncts an existential body may carry.
bool plain_semi_join(const SubquerySpec& q) {
  if (!q.where) return true;
  for (const PredicateExpr* c : top_level(*q.where)) {
    const auto* cmp = std::get_if<Comparison>(&c->node);
    if (!cmp) return false;
    bool lcol = std::holds_alternative<ColumnRef>(cmp->lhs.node);
    bool rcol = std::holds_alternative<ColumnRef>(cmp->rhs.node);
    if (lcol && rcol && cmp->op == CompareOp::Eq) continue;
    bool llit = std::holds_alternative<Literal>(cmp->lhs.node);
    bool rlit = std::holds_alternative<Literal>(cmp->rhs.node);
    if ((is_inner_column(cmp->lhs) && rlit) || (llit && is_inner_column(cmp->rhs))) continue;
    return false;
  }
  return true;
}

}  // namespace

PolicyClass classify(const AtomicPolicy& alpha) {
  const auto roots = top_level(alpha.predicate);
  for (const PredicateExpr* r : roots)
    if (const auto* e = std::get_if<ExistsExpr>(&r->node); e && e->negated) return PolicyClass::Universal;

  GroupingFinder grouping;
  walk(alpha.predicate, grouping);
  if (grouping.found) return PolicyClass::GroupingAggregate;

  StatisticalFinder statistical;
  walk(alpha.predicate, statistical);
  if (statistical.found) return PolicyClass::Statistical;

  for (const PredicateExpr* r : roots)
    if (const auto* e = std::get_if<ExistsExpr>(&r->node); e && !e->negated && plain_semi_join(*e->query))
      return PolicyClass::Existential;
  return PolicyClass::AttributePredicate;
}

}  // namespace secpol
