#include "secpol/oracle.hpp"

#include <algorithm>
#include <map>

#include "secpol/csv.hpp"
#include "secpol/error.hpp"

namespace secpol {

std::string_view to_string(VisibilityTag t) {
  switch (t) {
    case VisibilityTag::Full: return "full";
    case VisibilityTag::Masked: return "masked";
    case VisibilityTag::SuppressedOut: return "suppressed";
  }
  return "?";
}

namespace {

// ---------------------------------------------------------------------------
// Scalar semantics (PostgreSQL flavoured)

Value arith(ArithOp op, const Value& a, const Value& b) {
  if (a.is_null() || b.is_null()) return Value::null();
  if (const auto* d = a.get_if<Date>()) {
    if (const auto* n = b.get_if<std::int64_t>()) {
      if (op == ArithOp::Add) return Value::date(Date{static_cast<std::int32_t>(d->days + *n)});
      if (op == ArithOp::Sub) return Value::date(Date{static_cast<std::int32_t>(d->days - *n)});
    }
    if (const auto* e = b.get_if<Date>(); e && op == ArithOp::Sub)
      return Value::integer(static_cast<std::int64_t>(d->days) - e->days);
    throw EvaluationError("unsupported date arithmetic");
  }
  if (const auto* d = b.get_if<Date>(); d && op == ArithOp::Add && a.get_if<std::int64_t>())
    return Value::date(Date{static_cast<std::int32_t>(d->days + *a.get_if<std::int64_t>())});
  if (!a.is_numeric() || !b.is_numeric()) throw EvaluationError("arithmetic on non-numeric values");

  const auto* x = a.get_if<std::int64_t>();
  const auto* y = b.get_if<std::int64_t>();
  if (x && y) {
    std::int64_t r = 0;
    switch (op) {
      case ArithOp::Add:
        if (__builtin_add_overflow(*x, *y, &r)) throw EvaluationError("integer out of range");
        return Value::integer(r);
      case ArithOp::Sub:
        if (__builtin_sub_overflow(*x, *y, &r)) throw EvaluationError("integer out of range");
        return Value::integer(r);
      case ArithOp::Mul:
        if (__builtin_mul_overflow(*x, *y, &r)) throw EvaluationError("integer out of range");
        return Value::integer(r);
      case ArithOp::Div:
        if (*y == 0) throw DivisionByZero("division by zero");
        return Value::integer(*x / *y);
    }
  }
  Decimal l = *a.as_decimal();
  Decimal r = *b.as_decimal();
  switch (op) {
    case ArithOp::Add: return Value::decimal(l + r);
    case ArithOp::Sub: return Value::decimal(l - r);
    case ArithOp::Mul: return Value::decimal(l * r);
    case ArithOp::Div: return Value::decimal(divide(l, r));
  }
  return Value::null();
}

// Text compared with a date is read as an ISO date.
Value coerce_for(const Value& v, const Value& other) {
  const auto* s = v.get_if<std::string>();
  if (s && other.get_if<Date>()) {
    auto d = Date::parse(*s);
    if (!d) throw TypeMismatch("'" + *s + "' is not a valid date");
    return Value::date(*d);
  }
  return v;
}

Truth compare(CompareOp op, const Value& lhs, const Value& rhs) {
  if (lhs.is_null() || rhs.is_null()) return Truth::Unknown;
  Value a = coerce_for(lhs, rhs);
  Value b = coerce_for(rhs, lhs);
  bool same = (a.is_numeric() && b.is_numeric()) || a.storage().index() == b.storage().index();
  if (!same) throw TypeMismatch("cannot compare " + a.to_sql_literal() + " with " + b.to_sql_literal());
  auto ord = a <=> b;
  bool r = false;
  switch (op) {
    case CompareOp::Eq: r = ord == 0; break;
    case CompareOp::Ne: r = ord != 0; break;
    case CompareOp::Lt: r = ord < 0; break;
    case CompareOp::Le: r = ord <= 0; break;
    case CompareOp::Gt: r = ord > 0; break;
    case CompareOp::Ge: r = ord >= 0; break;
  }
  return r ? Truth::True : Truth::False;
}

struct ValueLess {
  bool operator()(const Value& a, const Value& b) const { return (a <=> b) < 0; }
};
struct TupleLess {
  bool operator()(const Tuple& a, const Tuple& b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), ValueLess{});
  }
};

void flatten_and(const PredicateExpr& p, std::vector<const PredicateExpr*>& out) {
  if (const auto* a = std::get_if<AndExpr>(&p.node)) {
    for (const auto& c : a->children) flatten_and(c, out);
  } else {
    out.push_back(&p);
  }
}

// Column references a subtree makes to aliases it does not bind itself.
struct FreeRefs {
  std::vector<std::vector<std::string>> bound;  // per nested subquery depth
  std::vector<ColumnRef> refs;

  void collect(const PredicateExpr& p) { walk_pred(p); }
  void collect(const ScalarExpr& s) { walk_scalar(s); }

  void add(const ColumnRef& c) {
    for (const auto& level : bound)
      if (std::find(level.begin(), level.end(), c.alias) != level.end() && !c.is_base()) return;
    if (std::find(refs.begin(), refs.end(), c) == refs.end()) refs.push_back(c);
  }
  void walk_sub(const SubquerySpec& q) {
    std::vector<std::string> names;
    for (const auto& f : q.from) names.push_back(f.alias);
    bound.push_back(std::move(names));
    if (q.where) walk_pred(*q.where);
    for (const auto& g : q.group_by) add(g);
    if (q.having) walk_pred(*q.having);
    if (q.select) walk_scalar(*q.select);
    bound.pop_back();
  }
  void walk_pred(const PredicateExpr& p) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Comparison>) {
            walk_scalar(n.lhs);
            walk_scalar(n.rhs);
          } else if constexpr (std::is_same_v<T, AndExpr> || std::is_same_v<T, OrExpr>) {
            for (const auto& c : n.children) walk_pred(c);
          } else if constexpr (std::is_same_v<T, NotExpr>) {
            walk_pred(*n.inner);
          } else if constexpr (std::is_same_v<T, ExistsExpr>) {
            walk_sub(*n.query);
          }
        },
        p.node);
  }
  void walk_scalar(const ScalarExpr& s) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, ColumnRef>) {
            add(n);
          } else if constexpr (std::is_same_v<T, Arith>) {
            walk_scalar(*n.lhs);
            walk_scalar(*n.rhs);
          } else if constexpr (std::is_same_v<T, ScalarSubquery>) {
            walk_sub(*n.query);
          } else if constexpr (std::is_same_v<T, Coalesce>) {
            for (const auto& a : n.args) walk_scalar(a);
          } else if constexpr (std::is_same_v<T, Aggregate>) {
            if (n.arg) walk_scalar(**n.arg);
          }
        },
        s.node);
  }
};

std::vector<ColumnRef> free_refs(const SubquerySpec& q) {
  FreeRefs f;
  f.walk_sub(q);
  return f.refs;
}

bool contains_aggregate(const ScalarExpr& s) {
  // Aggregates inside a nested subquery belong to that subquery.
  return std::visit(
      [](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Aggregate>) {
          return true;
        } else if constexpr (std::is_same_v<T, Arith>) {
          return contains_aggregate(*n.lhs) || contains_aggregate(*n.rhs);
        } else if constexpr (std::is_same_v<T, Coalesce>) {
          return std::any_of(n.args.begin(), n.args.end(), [](const ScalarExpr& a) { return contains_aggregate(a); });
        } else {
          return false;
        }
      },
      s.node);
}

// ---------------------------------------------------------------------------
// Evaluator

class Evaluator {
 public:
  Evaluator(const DatabaseInstance& db, const EvalContext& ctx) : db_(db), ctx_(ctx) {}

  Truth truth(const PredicateExpr& p, const RelationDef& rel, const Tuple& row) {
    base_rel_ = &rel;
    base_row_ = &row;
    frames_.clear();
    return pred(p);
  }

 private:
  using Combo = std::vector<const Tuple*>;

  struct Frame {
    const SubquerySpec* query;
    std::vector<const RelationDef*> rels;
    Combo rows;                         // current binding, one tuple per FROM item
    const std::vector<Combo>* group = nullptr;  // set while evaluating select/HAVING
  };

  struct Probe {
    std::size_t attr;
    const ScalarExpr* key;
  };

  struct Plan {
    std::vector<const RelationDef*> rels;
    std::vector<const PredicateExpr*> constant;             // no FROM alias involved
    std::vector<std::vector<const PredicateExpr*>> filters;  // checked once item k is bound
    std::vector<std::optional<Probe>> probes;
    std::vector<ColumnRef> outer;  // correlation refs (cache key)
    bool aggregate_select = false;
  };

  using Index = std::map<Value, std::vector<std::size_t>, ValueLess>;

  // -- plans ---------------------------------------------------------------

  const Plan& plan_for(const SubquerySpec& q) {
    auto it = plans_.find(&q);
    if (it != plans_.end()) return it->second;
    Plan plan;
    for (const auto& item : q.from) {
      const RelationDef* rel = db_.schema().find(item.relation);
      if (!rel) throw UnknownRelation("relation '" + item.relation + "' is not in the schema");
      plan.rels.push_back(rel);
    }
    plan.filters.resize(q.from.size());
    plan.probes.resize(q.from.size());
    auto level_of = [&](const std::vector<ColumnRef>& refs) {
      int level = -1;
      for (const auto& r : refs)
        for (std::size_t i = 0; i < q.from.size(); ++i)
          if (!r.is_base() && q.from[i].alias == r.alias) level = std::max(level, static_cast<int>(i));
      return level;
    };
    if (q.where) {
      std::vector<const PredicateExpr*> conjuncts;
      flatten_and(*q.where, conjuncts);
      for (const PredicateExpr* c : conjuncts) {
        FreeRefs f;
        f.collect(*c);
        int level = level_of(f.refs);
        if (level < 0) {
          plan.constant.push_back(c);
          continue;
        }
        plan.filters[static_cast<std::size_t>(level)].push_back(c);
        // An equality pinning a column of item `level` to something already
        // bound can drive an index lookup.
        const auto* cmp = std::get_if<Comparison>(&c->node);
        if (!cmp || cmp->op != CompareOp::Eq || plan.probes[static_cast<std::size_t>(level)]) continue;
        for (int side = 0; side < 2; ++side) {
          const ScalarExpr& mine = side == 0 ? cmp->lhs : cmp->rhs;
          const ScalarExpr& other = side == 0 ? cmp->rhs : cmp->lhs;
          const auto* col = std::get_if<ColumnRef>(&mine.node);
          if (!col || col->alias != q.from[static_cast<std::size_t>(level)].alias) continue;
          FreeRefs g;
          g.collect(other);
          if (level_of(g.refs) >= level) continue;
          auto idx = plan.rels[static_cast<std::size_t>(level)]->index_of(col->attribute);
          if (!idx) continue;
          plan.probes[static_cast<std::size_t>(level)] = Probe{*idx, &other};
          break;
        }
      }
    }
    plan.outer = free_refs(q);
    plan.aggregate_select = q.select && contains_aggregate(*q.select);
    return plans_.emplace(&q, std::move(plan)).first->second;
  }

  const Index& index_for(const RelationDef& rel, std::size_t attr) {
    auto key = std::make_pair(rel.name, attr);
    auto it = indexes_.find(key);
    if (it != indexes_.end()) return it->second;
    Index idx;
    const auto& rows = db_.get(rel.name).rows;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (!rows[i][attr].is_null()) idx[rows[i][attr]].push_back(i);
    return indexes_.emplace(key, std::move(idx)).first->second;
  }

  // -- enumeration ---------------------------------------------------------

  // Every FROM binding satisfying WHERE, in nested-loop order.
  std::vector<Combo> qualifying(const SubquerySpec& q, const Plan& plan) {
    std::vector<Combo> out;
    for (const PredicateExpr* c : plan.constant)
      if (pred(*c) != Truth::True) return out;
    frames_.push_back(Frame{&q, plan.rels, Combo(q.from.size(), nullptr)});
    try {
      enumerate(q, plan, 0, out);
    } catch (...) {
      frames_.pop_back();
      throw;
    }
    frames_.pop_back();
    return out;
  }

  void enumerate(const SubquerySpec& q, const Plan& plan, std::size_t level, std::vector<Combo>& out) {
    if (level == q.from.size()) {
      out.push_back(frames_.back().rows);
      return;
    }
    const auto& rows = db_.get(plan.rels[level]->name).rows;
    auto visit = [&](const Tuple& t) {
      frames_.back().rows[level] = &t;
      for (const PredicateExpr* c : plan.filters[level])
        if (pred(*c) != Truth::True) return;
      enumerate(q, plan, level + 1, out);
    };
    if (const auto& probe = plan.probes[level]) {
      // The key expression only reads earlier items and outer scopes.
      Value key = scalar(*probe->key);
      if (key.is_null()) return;
      DataType dt = plan.rels[level]->attributes[probe->attr].dtype;
      if (dt == DataType::Date) key = coerce_for(key, Value::date(Date{}));
      const Index& idx = index_for(*plan.rels[level], probe->attr);
      auto it = idx.find(key);
      if (it == idx.end()) return;
      for (std::size_t i : it->second) visit(rows[i]);
    } else {
      for (const auto& t : rows) visit(t);
    }
    frames_.back().rows[level] = nullptr;
  }

  // Groups of qualifying bindings. Without GROUP BY an aggregate query forms
  // a single (possibly empty) group; a plain query forms one group per row.
  std::vector<std::vector<Combo>> groups(const SubquerySpec& q, const Plan& plan, bool aggregate) {
    std::vector<Combo> rows = qualifying(q, plan);
    std::vector<std::vector<Combo>> out;
    if (!q.group_by.empty()) {
      std::map<Tuple, std::size_t, TupleLess> where;
      frames_.push_back(Frame{&q, plan.rels, {}});
      for (auto& combo : rows) {
        frames_.back().rows = combo;
        Tuple key;
        for (const auto& g : q.group_by) key.push_back(column(g));
        auto [it, fresh] = where.emplace(std::move(key), out.size());
        if (fresh) out.emplace_back();
        out[it->second].push_back(std::move(combo));
      }
      frames_.pop_back();
    } else if (aggregate) {
      out.push_back(std::move(rows));
    } else {
      for (auto& combo : rows) out.push_back({std::move(combo)});
    }
    return out;
  }

  // Runs `fn` with the group bound as the innermost frame.
  template <class Fn>
  auto in_group(const SubquerySpec& q, const Plan& plan, const std::vector<Combo>& group, Fn fn) {
    Frame f{&q, plan.rels, group.empty() ? Combo(q.from.size(), nullptr) : group.front(), &group};
    frames_.push_back(std::move(f));
    try {
      auto r = fn();
      frames_.pop_back();
      return r;
    } catch (...) {
      frames_.pop_back();
      throw;
    }
  }

  std::vector<Value> cache_key(const Plan& plan) {
    std::vector<Value> key;
    for (const auto& r : plan.outer) key.push_back(column(r));
    return key;
  }

  bool exists(const SubquerySpec& q) {
    const Plan& plan = plan_for(q);
    auto key = std::make_pair(&q, cache_key(plan));
    if (auto it = exists_cache_.find(key); it != exists_cache_.end()) return it->second;
    bool aggregate = q.having.has_value() || plan.aggregate_select;
    bool found = false;
    if (q.group_by.empty() && !aggregate) {
      found = !qualifying(q, plan).empty();
    } else {
      for (const auto& g : groups(q, plan, aggregate)) {
        bool keep = !q.having || in_group(q, plan, g, [&] { return pred(*q.having); }) == Truth::True;
        if (keep) {
          found = true;
          break;
        }
      }
    }
    exists_cache_.emplace(std::move(key), found);
    return found;
  }

  Value scalar_subquery(const SubquerySpec& q) {
    if (!q.select) throw EvaluationError("scalar subquery without a select expression");
    const Plan& plan = plan_for(q);
    auto key = std::make_pair(&q, cache_key(plan));
    if (auto it = scalar_cache_.find(key); it != scalar_cache_.end()) return it->second;
    bool aggregate = q.having.has_value() || plan.aggregate_select;
    std::vector<Value> results;
    for (const auto& g : groups(q, plan, aggregate)) {
      in_group(q, plan, g, [&] {
        if (!q.having || pred(*q.having) == Truth::True) results.push_back(scalar(*q.select));
        return 0;
      });
      if (results.size() > 1) throw EvaluationError("scalar subquery returned more than one row");
    }
    Value v = results.empty() ? Value::null() : results.front();
    scalar_cache_.emplace(std::move(key), v);
    return v;
  }

  // -- expressions ---------------------------------------------------------

  Value column(const ColumnRef& c) {
    if (!c.is_base()) {
      for (auto f = frames_.rbegin(); f != frames_.rend(); ++f) {
        const auto& from = f->query->from;
        for (std::size_t i = 0; i < from.size(); ++i) {
          if (from[i].alias != c.alias) continue;
          const Tuple* t = f->rows.empty() ? nullptr : f->rows[i];
          if (!t) return Value::null();  // empty aggregate group
          auto idx = f->rels[i]->index_of(c.attribute);
          if (!idx) throw UnknownAttribute("'" + c.attribute + "' is not an attribute of '" + from[i].relation + "'");
          return (*t)[*idx];
        }
      }
      throw UnknownAttribute("alias '" + c.alias + "' is not bound");
    }
    auto idx = base_rel_->index_of(c.attribute);
    if (!idx) throw UnknownAttribute("'" + c.attribute + "' is not an attribute of '" + base_rel_->name + "'");
    return (*base_row_)[*idx];
  }

  Value context(const ContextParam& p) {
    if (p.name == "current_user") {
      if (ctx_.current_user.empty()) throw MissingContextParam("no value bound for :current_user");
      return Value::text(ctx_.current_user);
    }
    auto it = ctx_.session_params.find(p.name);
    if (it == ctx_.session_params.end()) throw MissingContextParam("no value bound for :" + p.name);
    return it->second;
  }

  Value aggregate(const Aggregate& a) {
    // The innermost frame carrying a group owns the aggregate.
    Frame* owner = nullptr;
    for (auto f = frames_.rbegin(); f != frames_.rend(); ++f)
      if (f->group) {
        owner = &*f;
        break;
      }
    if (!owner) throw EvaluationError("aggregate outside of a grouped subquery");
    const std::vector<Combo>& group = *owner->group;
    Combo saved = owner->rows;
    const std::vector<Combo>* saved_group = owner->group;
    owner->group = nullptr;  // nested aggregates are not allowed
    std::vector<Value> values;
    try {
      for (const auto& combo : group) {
        owner->rows = combo;
        values.push_back(a.arg ? scalar(**a.arg) : Value::integer(1));
      }
    } catch (...) {
      owner->rows = saved;
      owner->group = saved_group;
      throw;
    }
    owner->rows = saved;
    owner->group = saved_group;

    std::vector<Value> present;
    for (auto& v : values)
      if (!v.is_null()) present.push_back(std::move(v));
    switch (a.fn) {
      case AggFn::Count:
        return Value::integer(static_cast<std::int64_t>(a.arg ? present.size() : group.size()));
      case AggFn::CountDistinct: {
        std::sort(present.begin(), present.end(), ValueLess{});
        auto end = std::unique(present.begin(), present.end());
        return Value::integer(static_cast<std::int64_t>(end - present.begin()));
      }
      case AggFn::Sum:
      case AggFn::Avg: {
        if (present.empty()) return Value::null();
        Value sum = present.front();
        for (std::size_t i = 1; i < present.size(); ++i) sum = arith(ArithOp::Add, sum, present[i]);
        if (a.fn == AggFn::Sum) return sum;
        return Value::decimal(divide(*sum.as_decimal(), Decimal::from_int(static_cast<std::int64_t>(present.size()))));
      }
      case AggFn::Min:
      case AggFn::Max: {
        if (present.empty()) return Value::null();
        auto it = a.fn == AggFn::Min ? std::min_element(present.begin(), present.end(), ValueLess{})
                                     : std::max_element(present.begin(), present.end(), ValueLess{});
        return *it;
      }
    }
    return Value::null();
  }

  Value scalar(const ScalarExpr& s) {
    return std::visit(
        [&](const auto& n) -> Value {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, ColumnRef>) {
            return column(n);
          } else if constexpr (std::is_same_v<T, Literal>) {
            return n.value;
          } else if constexpr (std::is_same_v<T, ContextParam>) {
            return context(n);
          } else if constexpr (std::is_same_v<T, Arith>) {
            return arith(n.op, scalar(*n.lhs), scalar(*n.rhs));
          } else if constexpr (std::is_same_v<T, ScalarSubquery>) {
            return scalar_subquery(*n.query);
          } else if constexpr (std::is_same_v<T, Coalesce>) {
            for (const auto& a : n.args) {
              Value v = scalar(a);
              if (!v.is_null()) return v;
            }
            return Value::null();
          } else {
            return aggregate(n);
          }
        },
        s.node);
  }

  Truth pred(const PredicateExpr& p) {
    return std::visit(
        [&](const auto& n) -> Truth {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Comparison>) {
            return compare(n.op, scalar(n.lhs), scalar(n.rhs));
          } else if constexpr (std::is_same_v<T, AndExpr>) {
            Truth t = Truth::True;
            for (const auto& c : n.children) {
              t = truth_and(t, pred(c));
              if (t == Truth::False) break;
            }
            return t;
          } else if constexpr (std::is_same_v<T, OrExpr>) {
            Truth t = Truth::False;
            for (const auto& c : n.children) {
              t = truth_or(t, pred(c));
              if (t == Truth::True) break;
            }
            return t;
          } else if constexpr (std::is_same_v<T, NotExpr>) {
            return truth_not(pred(*n.inner));
          } else if constexpr (std::is_same_v<T, ExistsExpr>) {
            bool e = exists(*n.query);
            return (e != n.negated) ? Truth::True : Truth::False;
          } else {
            return n.value ? Truth::True : Truth::False;
          }
        },
        p.node);
  }

  const DatabaseInstance& db_;
  const EvalContext& ctx_;
  const RelationDef* base_rel_ = nullptr;
  const Tuple* base_row_ = nullptr;
  std::vector<Frame> frames_;
  std::map<const SubquerySpec*, Plan> plans_;
  std::map<std::pair<std::string, std::size_t>, Index> indexes_;

  struct CacheLess {
    bool operator()(const std::pair<const SubquerySpec*, std::vector<Value>>& a,
                    const std::pair<const SubquerySpec*, std::vector<Value>>& b) const {
      if (a.first != b.first) return a.first < b.first;
      return TupleLess{}(a.second, b.second);
    }
  };
  std::map<std::pair<const SubquerySpec*, std::vector<Value>>, bool, CacheLess> exists_cache_;
  std::map<std::pair<const SubquerySpec*, std::vector<Value>>, Value, CacheLess> scalar_cache_;
};

// ---------------------------------------------------------------------------
// Policy semantics

// Per-row result: whether the row is fully visible, and the masks that apply
// when it is not (kept even for visible rows so negation can use them).
struct Outcome {
  bool full = false;
  std::vector<ResolvedMask> masks;
};

void append_masks(std::vector<ResolvedMask>& out, const std::vector<ResolvedMask>& in) {
  for (const auto& m : in)
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
}

Tuple key_of(const RelationDef& def, const Tuple& row) {
  Tuple key;
  for (std::size_t i : def.key_indexes()) key.push_back(row[i]);
  return key;
}

std::string describe_key(const RelationDef& def, const Tuple& row) {
  std::string out;
  auto idx = def.key_indexes();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) out += ", ";
    out += def.attributes[idx[i]].name + "=" + row[idx[i]].to_string();
  }
  return out;
}

class PolicyEvaluator {
 public:
  PolicyEvaluator(const DatabaseInstance& db, const EvalContext& ctx, const RelationDef& def)
      : eval_(db, ctx), def_(def) {}

  Outcome outcome(const PolicyExpr& p, const Tuple& row) {
    return std::visit(
        [&](const auto& n) -> Outcome {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, AtomicPolicy>) {
            Outcome o;
            o.full = truth(n.predicate, row) == Truth::True;
            o.masks.push_back(resolved(n));
            return o;
          } else if constexpr (std::is_same_v<T, PAnd>) {
            Outcome a = outcome(*n.lhs, row);
            Outcome b = outcome(*n.rhs, row);
            Outcome o;
            o.full = a.full && b.full;
            if (!a.full || o.full) append_masks(o.masks, a.masks);
            if (!b.full || o.full) append_masks(o.masks, b.masks);
            return o;
          } else if constexpr (std::is_same_v<T, POr>) {
            Outcome a = outcome(*n.lhs, row);
            Outcome b = outcome(*n.rhs, row);
            Outcome o;
            o.full = a.full || b.full;
            append_masks(o.masks, a.masks);
            append_masks(o.masks, b.masks);
            return o;
          } else if constexpr (std::is_same_v<T, PNot>) {
            Outcome o = outcome(*n.inner, row);
            o.full = !o.full;
            return o;
          } else {
            // Unknown takes the else branch, as CASE WHEN does.
            bool cond = truth(n.cond, row) == Truth::True;
            return outcome(cond ? *n.then_branch : *n.else_branch, row);
          }
        },
        p.node);
  }

 private:
  Truth truth(const PredicateExpr& q, const Tuple& row) {
    try {
      return eval_.truth(q, def_, row);
    } catch (const DivisionByZero& e) {
      throw DivisionByZero(std::string(e.what()) + " evaluating " + def_.name + " (" + describe_key(def_, row) + ")");
    }
  }

  const ResolvedMask& resolved(const AtomicPolicy& a) {
    auto it = masks_.find(&a);
    if (it == masks_.end()) it = masks_.emplace(&a, resolve(a.mask, def_, a.name)).first;
    return it->second;
  }

  Evaluator eval_;
  const RelationDef& def_;
  std::map<const AtomicPolicy*, ResolvedMask> masks_;
};

MaskedRow apply(const RelationDef& def, const Tuple& row, const ResolvedMask& mask) {
  MaskedRow out;
  out.key = key_of(def, row);
  out.applied_masks = mask.sources;
  if (mask.suppresses_tuple()) {
    out.tag = VisibilityTag::SuppressedOut;
    out.values.assign(row.size(), Value::suppressed());
    return out;
  }
  out.tag = VisibilityTag::Masked;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const MaskAction& a = mask.actions[i];
    switch (a.kind) {
      case MaskKind::Keep: out.values.push_back(row[i]); break;
      case MaskKind::NullOut: out.values.push_back(Value::null()); break;
      case MaskKind::ConstantText: out.values.push_back(Value::text(a.text)); break;
      case MaskKind::Suppress: out.values.push_back(Value::suppressed()); break;
    }
  }
  return out;
}

}  // namespace

Truth eval_predicate(const PredicateExpr& q, const RelationDef& relation, const Tuple& row,
                     const DatabaseInstance& db, const EvalContext& ctx) {
  Evaluator e(db, ctx);
  return e.truth(q, relation, row);
}

MaskedRelation eval_atomic(const AtomicPolicy& alpha, const DatabaseInstance& db, const EvalContext& ctx) {
  return eval_policy(atomic(alpha), db, ctx);
}

MaskedRelation eval_policy(const PolicyExpr& p, const DatabaseInstance& db, const EvalContext& ctx,
                           const EvalOptions& options) {
  const std::string& rel = relation_of(p);
  const RelationDef& def = db.schema().at(rel);
  PolicyEvaluator pe(db, ctx, def);
  MaskedRelation out{rel, {}};
  for (const Tuple& row : db.get(rel).rows) {
    Outcome o = pe.outcome(p, row);
    if (o.full) {
      out.rows.push_back(MaskedRow{key_of(def, row), VisibilityTag::Full, row, {}});
      continue;
    }
    if (options.literal_union) {
      for (const auto& m : o.masks) out.rows.push_back(apply(def, row, m));
      continue;
    }
    ResolvedMask merged = o.masks.front();
    for (std::size_t i = 1; i < o.masks.size(); ++i) merged = merge(merged, o.masks[i]);
    out.rows.push_back(apply(def, row, merged));
  }
  return out;
}

std::set<Tuple> visible_set(const MaskedRelation& m) {
  std::set<Tuple> out;
  for (const auto& r : m.rows)
    if (r.tag == VisibilityTag::Full) out.insert(r.key);
  return out;
}

std::string render(const MaskedRelation& m, const RelationDef& def) {
  std::vector<std::string> header;
  for (const auto& k : def.primary_key) header.push_back(k);
  header.push_back("visibility");
  for (const auto& a : def.attributes) header.push_back(a.name);

  std::vector<const MaskedRow*> rows;
  for (const auto& r : m.rows)
    if (r.tag != VisibilityTag::SuppressedOut) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const MaskedRow* a, const MaskedRow* b) { return TupleLess{}(a->key, b->key); });

  std::string out = csv::format_row(header) + "\n";
  for (const MaskedRow* r : rows) {
    std::vector<std::string> cells;
    for (const auto& k : r->key) cells.push_back(k.to_string());
    cells.emplace_back(to_string(r->tag));
    for (const auto& v : r->values) cells.push_back(v.to_string());
    out += csv::format_row(cells) + "\n";
  }
  return out;
}

}  // namespace secpol
