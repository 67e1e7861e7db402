#include "secpol/ast.hpp"

namespace secpol {

PredicateExpr conjunction(std::vector<PredicateExpr> parts) {
  if (parts.empty()) return bool_lit(true);
  if (parts.size() == 1) return std::move(parts.front());
  return PredicateExpr{AndExpr{std::move(parts)}};
}

PredicateExpr disjunction(std::vector<PredicateExpr> parts) {
  if (parts.empty()) return bool_lit(false);
  if (parts.size() == 1) return std::move(parts.front());
  return PredicateExpr{OrExpr{std::move(parts)}};
}

std::string_view to_sql(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return "=";
    case CompareOp::Ne: return "<>";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
  }
  return "?";
}

std::string_view to_sql(ArithOp op) {
  switch (op) {
    case ArithOp::Add: return "+";
    case ArithOp::Sub: return "-";
    case ArithOp::Mul: return "*";
    case ArithOp::Div: return "/";
  }
  return "?";
}

std::string_view to_sql(AggFn fn) {
  switch (fn) {
    case AggFn::Count:
    case AggFn::CountDistinct: return "COUNT";
    case AggFn::Sum: return "SUM";
    case AggFn::Avg: return "AVG";
    case AggFn::Min: return "MIN";
    case AggFn::Max: return "MAX";
  }
  return "?";
}

void walk(const ScalarExpr& s, AstVisitor& v, int depth) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ColumnRef>) {
          v.on_column(n, depth);
        } else if constexpr (std::is_same_v<T, ContextParam>) {
          v.on_context_param(n);
        } else if constexpr (std::is_same_v<T, Arith>) {
          walk(*n.lhs, v, depth);
          walk(*n.rhs, v, depth);
        } else if constexpr (std::is_same_v<T, ScalarSubquery>) {
          walk(*n.query, v, depth + 1);
        } else if constexpr (std::is_same_v<T, Coalesce>) {
          for (const auto& a : n.args) walk(a, v, depth);
        } else if constexpr (std::is_same_v<T, Aggregate>) {
          v.on_aggregate(n, depth);
          if (n.arg) walk(**n.arg, v, depth);
        }
      },
      s.node);
}

void walk(const PredicateExpr& p, AstVisitor& v, int depth) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Comparison>) {
          v.on_comparison(n, depth);
          walk(n.lhs, v, depth);
          walk(n.rhs, v, depth);
        } else if constexpr (std::is_same_v<T, AndExpr> || std::is_same_v<T, OrExpr>) {
          for (const auto& c : n.children) walk(c, v, depth);
        } else if constexpr (std::is_same_v<T, NotExpr>) {
          walk(*n.inner, v, depth);
        } else if constexpr (std::is_same_v<T, ExistsExpr>) {
          walk(*n.query, v, depth + 1);
        }
      },
      p.node);
}

void walk(const SubquerySpec& q, AstVisitor& v, int depth) {
  v.on_subquery(q, depth);
  if (q.where) walk(*q.where, v, depth);
  for (const auto& g : q.group_by) v.on_column(g, depth);
  if (q.having) walk(*q.having, v, depth);
  if (q.select) walk(*q.select, v, depth);
}

}  // namespace secpol
