#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "secpol/value.hpp"

namespace secpol {

/// Immutable, shareable owner of a recursive AST child. Compares by value.
template <class T>
class Box {
 public:
  Box(T value) : ptr_(std::make_shared<const T>(std::move(value))) {}  // NOLINT(implicit)

  const T& operator*() const { return *ptr_; }
  const T* operator->() const { return ptr_.get(); }
  const T* get() const { return ptr_.get(); }

  friend bool operator==(const Box& a, const Box& b) { return a.ptr_ == b.ptr_ || *a.ptr_ == *b.ptr_; }

 private:
  std::shared_ptr<const T> ptr_;
};

struct ScalarExpr;
struct PredicateExpr;
struct SubquerySpec;

/// Column reference. An empty alias names the policed row itself (the policy
/// relation); any other alias is bound by an enclosing subquery FROM item.
struct ColumnRef {
  std::string alias;
  std::string attribute;

  bool is_base() const { return alias.empty(); }
  friend bool operator==(const ColumnRef&, const ColumnRef&) = default;
};

struct Literal {
  Value value;
  friend bool operator==(const Literal&, const Literal&) = default;
};

/// `:name` parameter resolved against the EvalContext (`:current_user`).
struct ContextParam {
  std::string name;
  friend bool operator==(const ContextParam&, const ContextParam&) = default;
};

enum class ArithOp { Add, Sub, Mul, Div };

struct Arith {
  ArithOp op;
  Box<ScalarExpr> lhs;
  Box<ScalarExpr> rhs;
  friend bool operator==(const Arith&, const Arith&) = default;
};

struct ScalarSubquery {
  Box<SubquerySpec> query;
  friend bool operator==(const ScalarSubquery&, const ScalarSubquery&) = default;
};

struct Coalesce {
  std::vector<ScalarExpr> args;
  friend bool operator==(const Coalesce&, const Coalesce&) = default;
};

enum class AggFn { Count, CountDistinct, Sum, Avg, Min, Max };

struct Aggregate {
  AggFn fn;
  /// Absent only for COUNT(*).
  std::optional<Box<ScalarExpr>> arg;
  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct ScalarExpr {
  std::variant<ColumnRef, Literal, ContextParam, Arith, ScalarSubquery, Coalesce, Aggregate> node;
  friend bool operator==(const ScalarExpr&, const ScalarExpr&) = default;
};

enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge };

struct Comparison {
  CompareOp op;
  ScalarExpr lhs;
  ScalarExpr rhs;
  friend bool operator==(const Comparison&, const Comparison&) = default;
};

/// Conjunction with at least two children.
struct AndExpr {
  std::vector<PredicateExpr> children;
  friend bool operator==(const AndExpr&, const AndExpr&) = default;
};

/// Disjunction with at least two children.
struct OrExpr {
  std::vector<PredicateExpr> children;
  friend bool operator==(const OrExpr&, const OrExpr&) = default;
};

struct NotExpr {
  Box<PredicateExpr> inner;
  friend bool operator==(const NotExpr&, const NotExpr&) = default;
};

/// EXISTS (negated = false) or NOT EXISTS (negated = true).
struct ExistsExpr {
  bool negated = false;
  Box<SubquerySpec> query;
  friend bool operator==(const ExistsExpr&, const ExistsExpr&) = default;
};

struct BoolLiteral {
  bool value = true;
  friend bool operator==(const BoolLiteral&, const BoolLiteral&) = default;
};

struct PredicateExpr {
  std::variant<Comparison, AndExpr, OrExpr, NotExpr, ExistsExpr, BoolLiteral> node;
  friend bool operator==(const PredicateExpr&, const PredicateExpr&) = default;
};

struct FromItem {
  std::string relation;
  std::string alias;
  friend bool operator==(const FromItem&, const FromItem&) = default;
};

struct SubquerySpec {
  std::vector<FromItem> from;
  std::optional<PredicateExpr> where;
  std::vector<ColumnRef> group_by;
  std::optional<PredicateExpr> having;
  /// Absent means the constant `SELECT 1` marker.
  std::optional<ScalarExpr> select;

  friend bool operator==(const SubquerySpec&, const SubquerySpec&) = default;
};

// Convenience constructors, mostly for tests and generated policies.
inline ScalarExpr col(std::string alias, std::string attribute) {
  return ScalarExpr{ColumnRef{std::move(alias), std::move(attribute)}};
}
inline ScalarExpr base_col(std::string attribute) { return col("", std::move(attribute)); }
inline ScalarExpr lit(Value v) { return ScalarExpr{Literal{std::move(v)}}; }
inline PredicateExpr cmp(ScalarExpr lhs, CompareOp op, ScalarExpr rhs) {
  return PredicateExpr{Comparison{op, std::move(lhs), std::move(rhs)}};
}
inline PredicateExpr bool_lit(bool v) { return PredicateExpr{BoolLiteral{v}}; }
PredicateExpr conjunction(std::vector<PredicateExpr> parts);
PredicateExpr disjunction(std::vector<PredicateExpr> parts);
inline PredicateExpr negation(PredicateExpr p) { return PredicateExpr{NotExpr{std::move(p)}}; }

std::string_view to_sql(CompareOp op);
std::string_view to_sql(ArithOp op);
std::string_view to_sql(AggFn fn);

// Generic traversal helpers over predicate trees, including subqueries.
struct AstVisitor {
  virtual ~AstVisitor() = default;
  virtual void on_column(const ColumnRef&, int /*subquery_depth*/) {}
  virtual void on_comparison(const Comparison&, int /*subquery_depth*/) {}
  /// Called before descending into a subquery body.
  virtual void on_subquery(const SubquerySpec&, int /*subquery_depth*/) {}
  virtual void on_context_param(const ContextParam&) {}
  virtual void on_aggregate(const Aggregate&, int /*subquery_depth*/) {}
};

void walk(const PredicateExpr& p, AstVisitor& v, int depth = 0);
void walk(const ScalarExpr& s, AstVisitor& v, int depth = 0);
void walk(const SubquerySpec& q, AstVisitor& v, int depth = 0);

}  // namespace secpol
