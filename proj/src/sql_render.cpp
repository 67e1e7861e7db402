#include "sql_render.hpp"

#include <algorithm>

#include "secpol/error.hpp"

namespace secpol::sqlr {

std::string sql_type(DataType t) {
  switch (t) {
    case DataType::Integer: return "bigint";
    case DataType::Decimal: return "numeric";
    case DataType::Text: return "text";
    case DataType::Date: return "date";
    case DataType::Boolean: return "boolean";
  }
  return "text";
}

namespace {

class Renderer {
 public:
  explicit Renderer(const RenderCtx& ctx) : ctx_(ctx) {}

  std::string pred(const PredicateExpr& p) {
    return std::visit([&](const auto& n) { return pred_node(n); }, p.node);
  }

  std::string scalar(const ScalarExpr& s) {
    return std::visit([&](const auto& n) { return scalar_node(n); }, s.node);
  }

 private:
  struct Bound {
    const FromItem* item;
    std::string name;  // alias as rendered
  };

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
  std::string pred_node(const BoolLiteral& b) { return b.value ? "true" : "false"; }

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
    if (!c.is_base()) {
      for (auto scope = scopes_.rbegin(); scope != scopes_.rend(); ++scope)
        for (const auto& b : *scope)
          if (b.item->alias == c.alias) return b.name + "." + c.attribute;
      return c.alias + "." + c.attribute;
    }
    if (auto it = ctx_.params.find(c.attribute); it != ctx_.params.end()) return it->second;
    if (ctx_.qualifier.empty()) return c.attribute;
    if (ctx_.always_qualify) return ctx_.qualifier + "." + c.attribute;
    for (const auto& scope : scopes_)
      for (const auto& b : scope) {
        const RelationDef* rel = ctx_.schema->find(b.item->relation);
        if (rel && rel->find(c.attribute)) return ctx_.qualifier + "." + c.attribute;
      }
    return c.attribute;
  }
  std::string scalar_node(const Literal& l) { return l.value.to_sql_literal(); }
  std::string scalar_node(const ContextParam& p) {
    if (auto it = ctx_.params.find(":" + p.name); it != ctx_.params.end()) return it->second;
    if (p.name == "current_user") return ctx_.user_expr;
    return "current_setting('secpol." + p.name + "')";
  }
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

  std::string source(const std::string& relation) {
    const bool policed = ctx_.set && ctx_.set->for_table(relation);
    if (!policed) return relation;
    switch (ctx_.nesting) {
      case Nesting::None: return relation;
      case Nesting::Views: return "v_" + relation;
      case Nesting::Inline: return "(" + relation_source(relation, ctx_) + ")";
    }
    return relation;
  }

  std::string subquery(const SubquerySpec& q) {
    std::vector<Bound> scope;
    for (const auto& item : q.from) {
      std::string name = item.alias;
      auto taken = [&](const std::string& n) {
        if (n == ctx_.qualifier) return true;
        return std::any_of(scope.begin(), scope.end(), [&](const Bound& b) { return b.name == n; });
      };
      for (int k = 1; taken(name); ++k) name = item.alias + "_" + std::to_string(k);
      scope.push_back(Bound{&item, name});
    }
    scopes_.push_back(scope);

    std::string out = "SELECT " + (q.select ? scalar(*q.select) : std::string("1")) + " FROM ";
    for (std::size_t i = 0; i < scope.size(); ++i) {
      if (i) out += ", ";
      out += source(scope[i].item->relation) + " " + scope[i].name;
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

  const RenderCtx& ctx_;
  std::vector<std::vector<Bound>> scopes_;
};

// Column collection with alias resolution.
class ColumnCollector {
 public:
  ColumnCollector(std::string relation, std::set<std::pair<std::string, std::string>>* cols,
                  std::set<std::string>* base, std::set<std::string>* params)
      : relation_(std::move(relation)), cols_(cols), base_(base), params_(params) {}

  void pred(const PredicateExpr& p) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Comparison>) {
            scalar(n.lhs);
            scalar(n.rhs);
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

 private:
  void column(const ColumnRef& c) {
    if (c.is_base()) {
      if (cols_) cols_->emplace(relation_, c.attribute);
      if (base_) base_->insert(c.attribute);
      return;
    }
    for (auto scope = scopes_.rbegin(); scope != scopes_.rend(); ++scope)
      for (const auto* item : *scope)
        if (item->alias == c.alias) {
          if (cols_) cols_->emplace(item->relation, c.attribute);
          return;
        }
  }

  void scalar(const ScalarExpr& s) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, ColumnRef>) {
            column(n);
          } else if constexpr (std::is_same_v<T, ContextParam>) {
            if (params_) params_->insert(n.name);
          } else if constexpr (std::is_same_v<T, Arith>) {
            scalar(*n.lhs);
            scalar(*n.rhs);
          } else if constexpr (std::is_same_v<T, ScalarSubquery>) {
            subquery(*n.query);
          } else if constexpr (std::is_same_v<T, Coalesce>) {
            for (const auto& a : n.args) scalar(a);
          } else if constexpr (std::is_same_v<T, Aggregate>) {
            if (n.arg) scalar(**n.arg);
          }
        },
        s.node);
  }

  void subquery(const SubquerySpec& q) {
    std::vector<const FromItem*> scope;
    for (const auto& f : q.from) scope.push_back(&f);
    scopes_.push_back(scope);
    if (q.select) scalar(*q.select);
    if (q.where) pred(*q.where);
    for (const auto& g : q.group_by) column(g);
    if (q.having) pred(*q.having);
    scopes_.pop_back();
  }

  std::string relation_;
  std::set<std::pair<std::string, std::string>>* cols_;
  std::set<std::string>* base_;
  std::set<std::string>* params_;
  std::vector<std::vector<const FromItem*>> scopes_;
};

template <class F>
void for_each_predicate(const PolicyExpr& p, F&& f) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, AtomicPolicy>) {
          f(n.predicate, n.relation);
        } else if constexpr (std::is_same_v<T, PAnd> || std::is_same_v<T, POr>) {
          for_each_predicate(*n.lhs, f);
          for_each_predicate(*n.rhs, f);
        } else if constexpr (std::is_same_v<T, PNot>) {
          for_each_predicate(*n.inner, f);
        } else {
          f(n.cond, relation_of(p));
          for_each_predicate(*n.then_branch, f);
          for_each_predicate(*n.else_branch, f);
        }
      },
      p.node);
}

// ---------------------------------------------------------------------------
// Masking template

struct Occurrence {
  const AtomicPolicy* atom;
  std::string in;  // condition under which its mask applies; empty = always
};

struct Symbolic {
  std::string full;
  std::vector<Occurrence> occ;
};

std::string conj(const std::string& a, const std::string& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  return "(" + a + " AND " + b + ")";
}

std::string disj(const std::vector<std::string>& parts) {
  if (parts.empty()) return "false";
  if (std::find(parts.begin(), parts.end(), std::string()) != parts.end()) return "true";
  if (parts.size() == 1) return parts.front();
  std::string out = "(";
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? " OR " : "") + parts[i];
  return out + ")";
}

template <class Flag>
Symbolic symbolic(const PolicyExpr& p, const Flag& flag) {
  return std::visit(
      [&](const auto& n) -> Symbolic {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, AtomicPolicy>) {
          return Symbolic{flag(n.predicate), {Occurrence{&n, ""}}};
        } else if constexpr (std::is_same_v<T, PAnd>) {
          Symbolic a = symbolic(*n.lhs, flag);
          Symbolic b = symbolic(*n.rhs, flag);
          Symbolic out{"(" + a.full + " AND " + b.full + ")", {}};
          // A side's masks apply when it failed or the whole conjunction holds.
          std::string keep_a = "(NOT " + a.full + " OR " + b.full + ")";
          std::string keep_b = "(NOT " + b.full + " OR " + a.full + ")";
          for (auto& o : a.occ) out.occ.push_back({o.atom, conj(keep_a, o.in)});
          for (auto& o : b.occ) out.occ.push_back({o.atom, conj(keep_b, o.in)});
          return out;
        } else if constexpr (std::is_same_v<T, POr>) {
          Symbolic a = symbolic(*n.lhs, flag);
          Symbolic b = symbolic(*n.rhs, flag);
          Symbolic out{"(" + a.full + " OR " + b.full + ")", std::move(a.occ)};
          for (auto& o : b.occ) out.occ.push_back(std::move(o));
          return out;
        } else if constexpr (std::is_same_v<T, PNot>) {
          Symbolic a = symbolic(*n.inner, flag);
          a.full = "(NOT " + a.full + ")";
          return a;
        } else {
          std::string c = flag(n.cond);
          Symbolic t = symbolic(*n.then_branch, flag);
          Symbolic e = symbolic(*n.else_branch, flag);
          Symbolic out{"(CASE WHEN " + c + " THEN " + t.full + " ELSE " + e.full + " END)", {}};
          for (auto& o : t.occ) out.occ.push_back({o.atom, conj(c, o.in)});
          for (auto& o : e.occ) out.occ.push_back({o.atom, conj("(NOT " + c + ")", o.in)});
          return out;
        }
      },
      p.node);
}

struct FlagCte {
  std::string short_name;
  const PredicateExpr* pred;
};

void gather_ctes(const PolicyExpr& p, std::vector<FlagCte>& out) {
  auto add = [&](const PredicateExpr& q, const std::string& hint) {
    for (const auto& c : out)
      if (*c.pred == q) return;
    std::string name = hint.empty() ? "cond" : hint;
    std::string base = name;
    auto taken = [&](const std::string& n) {
      return std::any_of(out.begin(), out.end(), [&](const FlagCte& c) { return c.short_name == n; });
    };
    for (int k = 1; taken(name); ++k) name = base + "_" + std::to_string(k);
    out.push_back(FlagCte{name, &q});
  };
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, AtomicPolicy>) {
          add(n.predicate, n.name);
        } else if constexpr (std::is_same_v<T, PAnd> || std::is_same_v<T, POr>) {
          gather_ctes(*n.lhs, out);
          gather_ctes(*n.rhs, out);
        } else if constexpr (std::is_same_v<T, PNot>) {
          gather_ctes(*n.inner, out);
        } else {
          add(n.cond, n.cond_name);
          gather_ctes(*n.then_branch, out);
          gather_ctes(*n.else_branch, out);
        }
      },
      p.node);
}

std::string quote_text(const std::string& s) { return Value::text(s).to_sql_literal(); }

}  // namespace

std::string predicate(const PredicateExpr& p, const RenderCtx& ctx) { return Renderer(ctx).pred(p); }

std::string condition(const PolicyExpr& p, const RenderCtx& ctx) {
  return std::visit(
      [&](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, AtomicPolicy>) {
          return predicate(n.predicate, ctx);
        } else if constexpr (std::is_same_v<T, PAnd>) {
          return "(" + condition(*n.lhs, ctx) + ") AND (" + condition(*n.rhs, ctx) + ")";
        } else if constexpr (std::is_same_v<T, POr>) {
          return "(" + condition(*n.lhs, ctx) + ") OR (" + condition(*n.rhs, ctx) + ")";
        } else if constexpr (std::is_same_v<T, PNot>) {
          // Unknown is not visible, so its complement is.
          return "(" + condition(*n.inner, ctx) + ") IS NOT TRUE";
        } else {
          return "CASE WHEN " + predicate(n.cond, ctx) + " THEN (" + condition(*n.then_branch, ctx) +
                 ") ELSE (" + condition(*n.else_branch, ctx) + ") END";
        }
      },
      p.node);
}

std::string masking_body(const PolicyExpr& p, const RelationDef& rel, const RenderCtx& outer) {
  RenderCtx ctx = outer;
  ctx.qualifier = rel.name;
  ctx.always_qualify = false;
  for (auto it = ctx.params.begin(); it != ctx.params.end();)
    it = it->first.rfind(":", 0) == 0 ? std::next(it) : ctx.params.erase(it);

  std::vector<FlagCte> ctes;
  gather_ctes(p, ctes);
  auto index_of = [&](const PredicateExpr& q) {
    for (std::size_t i = 0; i < ctes.size(); ++i)
      if (*ctes[i].pred == q) return i;
    throw EvaluationError("masking template: predicate without a CTE");
  };
  const std::string& key0 = rel.primary_key.front();
  auto raw_flag = [&](const PredicateExpr& q) {
    return "(f" + std::to_string(index_of(q)) + "." + key0 + " IS NOT NULL)";
  };
  auto col_flag = [&](const PredicateExpr& q) { return "pf_" + ctes[index_of(q)].short_name; };

  std::string keys;
  for (std::size_t i = 0; i < rel.primary_key.size(); ++i) keys += (i ? ", " : "") + rel.primary_key[i];

  std::string out = "WITH ";
  for (const auto& c : ctes)
    out += rel.name + "_" + c.short_name + " AS (SELECT " + keys + " FROM " + rel.name + " WHERE " +
           predicate(*c.pred, ctx) + "),\n";

  // Status CTE: one flag per predicate plus the visibility level.
  Symbolic raw = symbolic(p, raw_flag);
  std::vector<std::string> suppressed_parts;
  bool can_suppress = true;
  for (const auto& a : rel.attributes) {
    std::vector<std::string> ins;
    for (const auto& o : raw.occ)
      if (o.atom->mask.action_for(rel, a.name).kind == MaskKind::Suppress) ins.push_back(o.in);
    if (ins.empty()) {
      can_suppress = false;
      break;
    }
    std::string part = disj(ins);
    if (std::find(suppressed_parts.begin(), suppressed_parts.end(), part) == suppressed_parts.end())
      suppressed_parts.push_back(part);
  }
  out += rel.name + "_status AS (SELECT b.*";
  for (std::size_t i = 0; i < ctes.size(); ++i)
    out += ", " + raw_flag(*ctes[i].pred) + " AS pf_" + ctes[i].short_name;
  out += ", CASE WHEN " + raw.full + " THEN 'FULL'";
  if (can_suppress) {
    std::string all;
    for (std::size_t i = 0; i < suppressed_parts.size(); ++i) all += (i ? " AND " : "") + suppressed_parts[i];
    out += " WHEN " + all + " THEN 'SUPPRESSED'";
  }
  out += " ELSE 'MASKED' END AS visibility_level\n  FROM " + rel.name + " b";
  for (std::size_t i = 0; i < ctes.size(); ++i) {
    std::string f = "f" + std::to_string(i);
    out += " LEFT JOIN " + rel.name + "_" + ctes[i].short_name + " " + f + " ON ";
    for (std::size_t k = 0; k < rel.primary_key.size(); ++k)
      out += (k ? " AND " : "") + std::string("b.") + rel.primary_key[k] + " = " + f + "." + rel.primary_key[k];
  }
  out += ")\n";

  // Per-attribute projection.
  Symbolic named = symbolic(p, col_flag);
  out += "SELECT ";
  for (std::size_t ai = 0; ai < rel.attributes.size(); ++ai) {
    const auto& a = rel.attributes[ai];
    std::vector<std::string> nulls;
    std::vector<std::pair<std::string, std::string>> consts;
    for (const auto& o : named.occ) {
      MaskAction act = o.atom->mask.action_for(rel, a.name);
      if (act.kind == MaskKind::Suppress || act.kind == MaskKind::NullOut) nulls.push_back(o.in);
      else if (act.kind == MaskKind::ConstantText) consts.emplace_back(o.in.empty() ? "true" : o.in, act.text);
    }
    if (ai) out += ",\n       ";
    if (nulls.empty() && consts.empty()) {
      out += a.name;
      continue;
    }
    std::string value = consts.empty() || a.dtype == DataType::Text ? a.name : a.name + "::text";
    out += "CASE WHEN visibility_level = 'FULL' THEN " + value;
    if (!nulls.empty()) out += " WHEN " + disj(nulls) + " THEN NULL";
    for (const auto& [cond, text] : consts) out += " WHEN " + cond + " THEN " + quote_text(text);
    out += " ELSE " + value + " END AS " + a.name;
  }
  out += ",\n       visibility_level\n  FROM " + rel.name + "_status WHERE visibility_level <> 'SUPPRESSED'";
  return out;
}

std::string relation_source(const std::string& relation, const RenderCtx& outer) {
  const PolicyExpr* p = outer.set ? outer.set->for_table(relation) : nullptr;
  if (!p) return "SELECT * FROM " + relation;
  RenderCtx ctx = outer;
  ctx.qualifier = relation;
  ctx.always_qualify = false;
  for (auto it = ctx.params.begin(); it != ctx.params.end();)
    it = it->first.rfind(":", 0) == 0 ? std::next(it) : ctx.params.erase(it);
  if (is_filter_only(*p)) return "SELECT * FROM " + relation + " WHERE " + condition(*p, ctx);
  return masking_body(*p, outer.schema->at(relation), ctx);
}

void collect_columns(const PolicyExpr& p, std::set<std::pair<std::string, std::string>>& out) {
  for_each_predicate(p, [&](const PredicateExpr& q, const std::string& rel) {
    ColumnCollector(rel, &out, nullptr, nullptr).pred(q);
  });
}

std::set<std::string> base_attributes(const PolicyExpr& p) {
  std::set<std::string> out;
  for_each_predicate(p, [&](const PredicateExpr& q, const std::string& rel) {
    ColumnCollector(rel, nullptr, &out, nullptr).pred(q);
  });
  return out;
}

std::set<std::string> context_params(const PolicyExpr& p) {
  std::set<std::string> out;
  for_each_predicate(p, [&](const PredicateExpr& q, const std::string& rel) {
    ColumnCollector(rel, nullptr, nullptr, &out).pred(q);
  });
  return out;
}

}  // namespace secpol::sqlr
