#include <optional>

#include "secpol/policy.hpp"

namespace secpol {

namespace {

// Coarse type lattice used for comparison checks.
enum class Ty { Unknown, Numeric, Text, Date, Boolean, Null };

Ty of_dtype(DataType t) {
  switch (t) {
    case DataType::Integer:
    case DataType::Decimal: return Ty::Numeric;
    case DataType::Text: return Ty::Text;
    case DataType::Date: return Ty::Date;
    case DataType::Boolean: return Ty::Boolean;
  }
  return Ty::Unknown;
}

Ty of_value(const Value& v) {
  if (v.is_null()) return Ty::Null;
  if (v.is_numeric()) return Ty::Numeric;
  if (v.get_if<std::string>()) return Ty::Text;
  if (v.get_if<Date>()) return Ty::Date;
  if (v.get_if<bool>()) return Ty::Boolean;
  return Ty::Unknown;
}

const char* ty_name(Ty t) {
  switch (t) {
    case Ty::Numeric: return "numeric";
    case Ty::Text: return "text";
    case Ty::Date: return "date";
    case Ty::Boolean: return "boolean";
    case Ty::Null: return "null";
    case Ty::Unknown: return "unknown";
  }
  return "unknown";
}

class Checker {
 public:
  Checker(const Schema& schema, std::vector<Finding>& out) : schema_(schema), out_(out) {}

  void check_predicate(const std::string& owner, const std::string& relation, const std::string& alias,
                       const PredicateExpr& p) {
    owner_ = owner;
    base_ = schema_.find(relation);
    alias_ = alias;
    scopes_.clear();
    if (!base_) {
      report("unknown-relation", "relation '" + relation + "' is not in the schema");
      return;
    }
    pred(p);
  }

  void report(const std::string& code, const std::string& message) {
    Finding f{code, owner_, message};
    for (const auto& g : out_)
      if (g == f) return;
    out_.push_back(std::move(f));
  }

  void set_owner(const std::string& owner) { owner_ = owner; }

 private:
  struct Bound {
    std::string alias;
    const RelationDef* rel;  // null when the relation is unknown
  };

  void pred(const PredicateExpr& p) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Comparison>) {
            Ty l = scalar(n.lhs, false);
            Ty r = scalar(n.rhs, false);
            check_comparable(n, l, r);
          } else if constexpr (std::is_same_v<T, AndExpr> || std::is_same_v<T, OrExpr>) {
            for (const auto& c : n.children) pred(c);
          } else if constexpr (std::is_same_v<T, NotExpr>) {
            pred(*n.inner);
          } else if constexpr (std::is_same_v<T, ExistsExpr>) {
            subquery(*n.query);
          }
        },
        p.node);
  }

  // Aggregates are allowed in a subquery's select list and HAVING clause.
  void pred_agg(const PredicateExpr& p, bool agg_ok) {
    bool saved = agg_ok_;
    agg_ok_ = agg_ok;
    pred(p);
    agg_ok_ = saved;
  }

  void check_comparable(const Comparison& c, Ty l, Ty r) {
    if (l == Ty::Unknown || r == Ty::Unknown || l == Ty::Null || r == Ty::Null || l == r) return;
    // A string literal compared with a date is read as a date literal.
    auto is_text_lit = [](const ScalarExpr& s) {
      const auto* lit = std::get_if<Literal>(&s.node);
      return lit && lit->value.get_if<std::string>() && Date::parse(*lit->value.get_if<std::string>());
    };
    if ((l == Ty::Date && r == Ty::Text && is_text_lit(c.rhs)) ||
        (r == Ty::Date && l == Ty::Text && is_text_lit(c.lhs)))
      return;
    report("type-mismatch", std::string("comparison between ") + ty_name(l) + " and " + ty_name(r));
  }

  Ty scalar(const ScalarExpr& s, bool in_agg) {
    return std::visit(
        [&](const auto& n) -> Ty {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, ColumnRef>) {
            return column(n);
          } else if constexpr (std::is_same_v<T, Literal>) {
            return of_value(n.value);
          } else if constexpr (std::is_same_v<T, ContextParam>) {
            return Ty::Unknown;
          } else if constexpr (std::is_same_v<T, Arith>) {
            Ty l = scalar(*n.lhs, in_agg);
            Ty r = scalar(*n.rhs, in_agg);
            bool date_shift = (n.op == ArithOp::Add || n.op == ArithOp::Sub) && l == Ty::Date && r == Ty::Numeric;
            if (date_shift) return Ty::Date;
            for (Ty t : {l, r})
              if (t != Ty::Numeric && t != Ty::Unknown && t != Ty::Null)
                report("type-mismatch", std::string("arithmetic on ") + ty_name(t) + " operand");
            return Ty::Numeric;
          } else if constexpr (std::is_same_v<T, ScalarSubquery>) {
            return subquery(*n.query);
          } else if constexpr (std::is_same_v<T, Coalesce>) {
            Ty out = Ty::Unknown;
            for (const auto& a : n.args) {
              Ty t = scalar(a, in_agg);
              if (out == Ty::Unknown || out == Ty::Null) out = t;
            }
            return out;
          } else {
            if (!agg_ok_ || in_agg)
              report("misplaced-aggregate", std::string(to_sql(n.fn)) +
                                                " may only appear in a subquery select list or HAVING clause");
            Ty arg = n.arg ? scalar(**n.arg, true) : Ty::Unknown;
            switch (n.fn) {
              case AggFn::Count:
              case AggFn::CountDistinct: return Ty::Numeric;
              case AggFn::Sum:
              case AggFn::Avg:
                if (arg != Ty::Numeric && arg != Ty::Unknown && arg != Ty::Null)
                  report("type-mismatch", std::string(to_sql(n.fn)) + " over " + ty_name(arg));
                return Ty::Numeric;
              default: return arg;
            }
          }
        },
        s.node);
  }

  Ty column(const ColumnRef& c) {
    if (c.is_base()) {
      const AttributeDef* a = base_->find(c.attribute);
      if (!a) {
        report("unknown-attribute", "'" + c.attribute + "' is not an attribute of '" + base_->name + "'");
        return Ty::Unknown;
      }
      return of_dtype(a->dtype);
    }
    for (auto s = scopes_.rbegin(); s != scopes_.rend(); ++s) {
      for (const auto& b : *s) {
        if (b.alias != c.alias) continue;
        if (!b.rel) return Ty::Unknown;
        const AttributeDef* a = b.rel->find(c.attribute);
        if (!a) {
          report("unknown-attribute",
                 "'" + c.attribute + "' is not an attribute of '" + b.rel->name + "' (alias " + c.alias + ")");
          return Ty::Unknown;
        }
        return of_dtype(a->dtype);
      }
    }
    report("unresolved-alias", "alias '" + c.alias + "' is not bound by any enclosing FROM clause");
    return Ty::Unknown;
  }

  Ty subquery(const SubquerySpec& q) {
    std::vector<Bound> scope;
    for (const auto& item : q.from) {
      const RelationDef* rel = schema_.find(item.relation);
      if (!rel) report("unknown-relation", "relation '" + item.relation + "' is not in the schema");
      for (const auto& b : scope)
        if (b.alias == item.alias) report("duplicate-alias", "alias '" + item.alias + "' is bound twice");
      if (!alias_.empty() && item.alias == alias_)
        report("alias-shadows-policy-relation",
               "subquery alias '" + item.alias + "' hides the policy relation alias");
      scope.push_back(Bound{item.alias, rel});
    }
    scopes_.push_back(std::move(scope));

    if (q.where) pred_agg(*q.where, false);
    for (const auto& g : q.group_by) column(g);
    Ty result = Ty::Numeric;
    if (q.select) {
      bool saved = agg_ok_;
      agg_ok_ = true;
      result = scalar(*q.select, false);
      agg_ok_ = saved;
    }
    if (q.having) {
      bool lone_aggregate = q.select && std::holds_alternative<Aggregate>(q.select->node);
      if (q.group_by.empty() && !lone_aggregate)
        report("having-without-grouping", "HAVING requires GROUP BY or a lone aggregate select");
      pred_agg(*q.having, true);
    }
    scopes_.pop_back();
    return result;
  }

  const Schema& schema_;
  std::vector<Finding>& out_;
  std::string owner_;
  const RelationDef* base_ = nullptr;
  std::string alias_;
  std::vector<std::vector<Bound>> scopes_;
  bool agg_ok_ = false;
};

void check_mask(Checker& checker, const AtomicPolicy& a, const RelationDef& rel) {
  for (const auto& item : a.mask.items) {
    const AttributeDef* attr = rel.find(item.attribute);
    if (!attr) {
      checker.report("unknown-attribute",
                     "mask lists '" + item.attribute + "', which is not an attribute of '" + rel.name + "'");
      continue;
    }
    if (item.action.kind == MaskKind::ConstantText && attr->dtype != DataType::Text)
      checker.report("mask-type-mismatch", "constant text mask on " + std::string(to_string(attr->dtype)) +
                                               " attribute '" + item.attribute + "'");
    if (!a.mask.is_filter() && item.action.kind != MaskKind::Keep && rel.is_key_attribute(item.attribute))
      checker.report("masked-primary-key", "key attribute '" + item.attribute + "' must stay visible");
  }
}

void check_composition(Checker& checker, const PolicySet& set, const PolicyExpr& e,
                       const std::string& relation) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, AtomicPolicy>) {
          if (n.relation != relation)
            checker.report("incompatible-composition",
                           "'" + n.name + "' is on '" + n.relation + "', not '" + relation + "'");
        } else if constexpr (std::is_same_v<T, PAnd> || std::is_same_v<T, POr>) {
          check_composition(checker, set, *n.lhs, relation);
          check_composition(checker, set, *n.rhs, relation);
        } else if constexpr (std::is_same_v<T, PNot>) {
          check_composition(checker, set, *n.inner, relation);
        } else {
          const NamedPredicate* np = set.find_predicate(n.cond_name);
          if (np && np->relation != relation)
            checker.report("incompatible-composition",
                           "condition '" + n.cond_name + "' is on '" + np->relation + "', not '" + relation + "'");
          check_composition(checker, set, *n.then_branch, relation);
          check_composition(checker, set, *n.else_branch, relation);
        }
      },
      e.node);
}

}  // namespace

ValidationReport validate(const PolicySet& set, const Schema& schema) {
  ValidationReport report;
  Checker checker(schema, report.findings);
  for (const auto& p : set.predicates()) checker.check_predicate(p.name, p.relation, p.alias, p.body);
  for (const auto& d : set.definitions()) {
    if (d.composed) {
      checker.set_owner(d.name);
      if (!schema.find(d.relation)) {
        checker.report("unknown-relation", "relation '" + d.relation + "' is not in the schema");
        continue;
      }
      check_composition(checker, set, d.expr, d.relation);
      continue;
    }
    const auto& a = std::get<AtomicPolicy>(d.expr.node);
    checker.check_predicate(a.name, a.relation, a.alias, a.predicate);
    if (const RelationDef* rel = schema.find(a.relation)) check_mask(checker, a, *rel);
  }
  return report;
}

}  // namespace secpol
