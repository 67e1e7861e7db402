#include <sstream>

#include "secpol/policy.hpp"

namespace secpol {

namespace {

class PredPrinter {
 public:
  PredPrinter(const Schema& schema, const std::string& relation, const std::string& alias)
      : schema_(schema), relation_(relation), alias_(alias) {}

  std::string pred(const PredicateExpr& p) {
    return std::visit([&](const auto& n) { return pred_node(n); }, p.node);
  }

  std::string scalar(const ScalarExpr& s) {
    return std::visit([&](const auto& n) { return scalar_node(n); }, s.node);
  }

 private:
  std::string child(const PredicateExpr& p) {
    if (std::holds_alternative<AndExpr>(p.node) || std::holds_alternative<OrExpr>(p.node))
      return "(" + pred(p) + ")";
    return pred(p);
  }

  std::string pred_node(const Comparison& c) {
    return scalar(c.lhs) + " " + std::string(to_sql(c.op)) + " " + scalar(c.rhs);
  }
  std::string pred_node(const AndExpr& a) { return join(a.children, " AND "); }
  std::string pred_node(const OrExpr& o) { return join(o.children, " OR "); }
  std::string pred_node(const NotExpr& n) { return "NOT (" + pred(*n.inner) + ")"; }
  std::string pred_node(const ExistsExpr& e) {
    return std::string(e.negated ? "NOT EXISTS (" : "EXISTS (") + subquery(*e.query) + ")";
  }
  std::string pred_node(const BoolLiteral& b) { return b.value ? "TRUE" : "FALSE"; }

  std::string join(const std::vector<PredicateExpr>& kids, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < kids.size(); ++i) {
      if (i) out += sep;
      out += child(kids[i]);
    }
    return out;
  }

  static int precedence(const ScalarExpr& s) {
    if (const auto* a = std::get_if<Arith>(&s.node))
      return a->op == ArithOp::Add || a->op == ArithOp::Sub ? 1 : 2;
    return 3;
  }

  std::string scalar_node(const ColumnRef& c) {
    if (!c.is_base()) return c.alias + "." + c.attribute;
    if (!alias_.empty()) return alias_ + "." + c.attribute;
    for (const auto& scope : scopes_)
      for (const auto& item : scope) {
        const RelationDef* rel = schema_.find(item.relation);
        if (rel && rel->find(c.attribute)) return relation_ + "." + c.attribute;
      }
    return c.attribute;
  }
  std::string scalar_node(const Literal& l) { return l.value.to_sql_literal(); }
  std::string scalar_node(const ContextParam& p) { return ":" + p.name; }
  std::string scalar_node(const Arith& a) {
    int mine = a.op == ArithOp::Add || a.op == ArithOp::Sub ? 1 : 2;
    std::string l = scalar(*a.lhs);
    std::string r = scalar(*a.rhs);
    if (precedence(*a.lhs) < mine) l = "(" + l + ")";
    if (precedence(*a.rhs) <= mine) r = "(" + r + ")";
    return l + " " + std::string(to_sql(a.op)) + " " + r;
  }
  std::string scalar_node(const ScalarSubquery& q) { return "(" + subquery(*q.query) + ")"; }
  std::string scalar_node(const Coalesce& c) {
    std::string out = "COALESCE(";
    for (std::size_t i = 0; i < c.args.size(); ++i) {
      if (i) out += ", ";
      out += scalar(c.args[i]);
    }
    return out + ")";
  }
  std::string scalar_node(const Aggregate& a) {
    std::string out(to_sql(a.fn));
    if (!a.arg) return out + "(*)";
    out += a.fn == AggFn::CountDistinct ? "(DISTINCT " : "(";
    return out + scalar(**a.arg) + ")";
  }

  std::string subquery(const SubquerySpec& q) {
    scopes_.push_back(q.from);
    std::string out = "SELECT " + (q.select ? scalar(*q.select) : std::string("1")) + " FROM ";
    for (std::size_t i = 0; i < q.from.size(); ++i) {
      if (i) out += ", ";
      out += q.from[i].relation;
      if (q.from[i].alias != q.from[i].relation) out += " " + q.from[i].alias;
    }
    if (q.where) out += " WHERE " + pred(*q.where);
    if (!q.group_by.empty()) {
      out += " GROUP BY ";
      for (std::size_t i = 0; i < q.group_by.size(); ++i) {
        if (i) out += ", ";
        out += scalar_node(q.group_by[i]);
      }
    }
    if (q.having) out += " HAVING " + pred(*q.having);
    scopes_.pop_back();
    return out;
  }

  const Schema& schema_;
  const std::string& relation_;
  const std::string& alias_;
  std::vector<std::vector<FromItem>> scopes_;
};

std::string quote_text(const std::string& s) { return Value::text(s).to_sql_literal(); }

std::string print_action(const MaskAction& a) {
  switch (a.kind) {
    case MaskKind::Keep: return "keep";
    case MaskKind::NullOut: return "null";
    case MaskKind::Suppress: return "suppress";
    case MaskKind::ConstantText: return quote_text(a.text);
  }
  return "keep";
}

std::string print_mask(const MaskSpec& m) {
  if (m.items.empty() && m.default_action.kind == MaskKind::Suppress) return "suppress-otherwise";
  std::string out = "mask (";
  for (const auto& item : m.items) out += item.attribute + " => " + print_action(item.action) + ", ";
  return out + "* => " + print_action(m.default_action) + ")";
}

std::string print_pexpr(const PolicyExpr& e) {
  if (!e.ref_name.empty()) return e.ref_name;
  return std::visit(
      [](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, AtomicPolicy>) {
          return n.name;
        } else if constexpr (std::is_same_v<T, PAnd>) {
          return "(" + print_pexpr(*n.lhs) + " and " + print_pexpr(*n.rhs) + ")";
        } else if constexpr (std::is_same_v<T, POr>) {
          return "(" + print_pexpr(*n.lhs) + " or " + print_pexpr(*n.rhs) + ")";
        } else if constexpr (std::is_same_v<T, PNot>) {
          return "not " + print_pexpr(*n.inner);
        } else {
          return "if " + n.cond_name + " then " + print_pexpr(*n.then_branch) + " else " +
                 print_pexpr(*n.else_branch);
        }
      },
      e.node);
}

std::string on_clause(const std::string& relation, const std::string& alias) {
  return alias.empty() ? relation : relation + " " + alias;
}

}  // namespace

std::string print_predicate(const PredicateExpr& p, const Schema& schema, const std::string& relation,
                            const std::string& alias) {
  return PredPrinter(schema, relation, alias).pred(p);
}

std::string print_policies(const PolicySet& set, const Schema& schema) {
  std::ostringstream out;
  out << "-- secpol policy document\n";
  for (const auto& p : set.predicates())
    out << "predicate " << p.name << " on " << on_clause(p.relation, p.alias) << " = ("
        << print_predicate(p.body, schema, p.relation, p.alias) << ");\n";
  if (!set.predicates().empty() && !set.definitions().empty()) out << "\n";
  for (const auto& d : set.definitions()) {
    if (d.composed) {
      out << "policy " << d.name << " on " << d.relation << " = " << print_pexpr(d.expr) << ";\n";
      continue;
    }
    const auto& a = std::get<AtomicPolicy>(d.expr.node);
    out << "policy " << a.name << " on " << on_clause(a.relation, a.alias) << "\n  using ("
        << print_predicate(a.predicate, schema, a.relation, a.alias) << ")\n  " << print_mask(a.mask)
        << ";\n";
  }
  return out.str();
}

}  // namespace secpol
