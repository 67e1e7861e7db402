// Parser for the policy document language.
//
//   doc        := {pred_def | policy_def | compose_def}
//   pred_def   := "predicate" NAME "on" REL [["as"] ALIAS] "=" "(" sqlpred ")" ";"
//   policy_def := "policy" NAME "on" REL [["as"] ALIAS] "using" "(" sqlpred ")"
//                 ("mask" "(" maskitem {"," maskitem} ")" | "suppress-otherwise") ";"
//   compose_def:= "policy" NAME "on" REL "=" pexpr ";"
//   pexpr      := NAME | "(" pexpr ("and"|"or") pexpr ")" | "not" pexpr
//               | "if" NAME "then" pexpr "else" pexpr
//
// sqlpred is parsed into an untyped tree first and then lowered into
// PredicateExpr/ScalarExpr with column resolution against the schema.

#include <fstream>
#include <memory>
#include <sstream>

#include "secpol/error.hpp"
#include "secpol/lexer.hpp"
#include "secpol/policy.hpp"

namespace secpol {

namespace {

// ---------------------------------------------------------------------------
// Untyped expression tree

struct Node;
using NodePtr = std::unique_ptr<Node>;

struct SelectNode {
  std::vector<FromItem> from;
  NodePtr where;
  std::vector<NodePtr> group_by;
  NodePtr having;
  NodePtr select;  // null = SELECT 1
  const Token* at = nullptr;
};

struct Node {
  enum Kind { Or, And, Not, Cmp, Arith, Num, Str, DateLit, Bool, NullLit, Param, Exists, NotExists,
              Subquery, Coalesce, Agg, Ident } kind;
  const Token* at = nullptr;
  std::vector<NodePtr> kids;
  CompareOp cmp{};
  ArithOp arith{};
  AggFn agg{};
  bool star = false;
  std::string qualifier;  // Ident
  std::string name;       // Ident / Param / literal text
  std::unique_ptr<SelectNode> query;
};

NodePtr make(Node::Kind k, const Token* at) {
  auto n = std::make_unique<Node>();
  n->kind = k;
  n->at = at;
  return n;
}

class Parser {
 public:
  Parser(std::string_view src, const Schema& schema) : tokens_(tokenize(src)), schema_(schema) {}

  PolicySet parse_document();

 private:
  // token helpers
  const Token& peek(std::size_t k = 0) const {
    return tokens_[std::min(pos_ + k, tokens_.size() - 1)];
  }
  const Token& next() {
    const Token& t = peek();
    if (pos_ < tokens_.size() - 1) ++pos_;
    return t;
  }
  [[noreturn]] void fail(const Token& t, const std::string& msg) const {
    throw ParseError(t.line, t.column, msg + (t.kind == TokenKind::End ? " at end of input" : " near '" + t.text + "'"));
  }
  bool accept_kw(std::string_view kw) {
    if (peek().is_keyword(kw)) {
      next();
      return true;
    }
    return false;
  }
  bool accept_sym(std::string_view s) {
    if (peek().is_symbol(s)) {
      next();
      return true;
    }
    return false;
  }
  void expect_kw(std::string_view kw) {
    if (!accept_kw(kw)) fail(peek(), "expected '" + std::string(kw) + "'");
  }
  void expect_sym(std::string_view s) {
    if (!accept_sym(s)) fail(peek(), "expected '" + std::string(s) + "'");
  }
  std::string expect_name(const char* what) {
    const Token& t = peek();
    if (t.kind != TokenKind::Ident && t.kind != TokenKind::QuotedIdent) fail(t, std::string("expected ") + what);
    next();
    return t.kind == TokenKind::Ident ? to_lower(t.text) : t.text;
  }
  bool is_reserved(const Token& t) const;

  // document level
  void parse_predicate_def(PolicySet& set);
  void parse_policy_def(PolicySet& set);
  std::string parse_optional_alias();
  MaskSpec parse_mask();
  PolicyExpr parse_pexpr(PolicySet& set, const std::string& relation);

  // sqlpred
  NodePtr parse_or();
  NodePtr parse_and();
  NodePtr parse_not();
  NodePtr parse_cmp();
  NodePtr parse_add();
  NodePtr parse_mul();
  NodePtr parse_unary();
  NodePtr parse_primary();
  std::unique_ptr<SelectNode> parse_select();

  // lowering
  struct Scope {
    std::vector<FromItem> items;
  };
  struct LowerCtx {
    const PolicySet* set;
    std::string relation;  // policed relation
    std::string alias;     // its surface alias ("" = relation name only)
    std::vector<Scope> scopes;
  };
  PredicateExpr lower_pred(const Node& n, LowerCtx& ctx);
  ScalarExpr lower_scalar(const Node& n, LowerCtx& ctx);
  SubquerySpec lower_select(const SelectNode& s, LowerCtx& ctx);
  ColumnRef resolve_column(const Node& n, const LowerCtx& ctx) const;
  PredicateExpr lower_top(const Node& n, const PolicySet& set, const std::string& relation,
                          const std::string& alias);

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  const Schema& schema_;
};

bool Parser::is_reserved(const Token& t) const {
  static constexpr std::string_view words[] = {
      "select", "from", "where", "group", "by", "having", "and", "or", "not", "exists", "using",
      "mask", "on", "as", "then", "else", "if", "suppress", "policy", "predicate", "in"};
  for (auto w : words)
    if (t.is_keyword(w)) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Document

PolicySet Parser::parse_document() {
  PolicySet set;
  while (peek().kind != TokenKind::End) {
    if (peek().is_keyword("predicate")) {
      parse_predicate_def(set);
    } else if (peek().is_keyword("policy")) {
      parse_policy_def(set);
    } else {
      fail(peek(), "expected 'predicate' or 'policy'");
    }
  }
  set.seal();
  return set;
}

std::string Parser::parse_optional_alias() {
  if (accept_kw("as")) return expect_name("alias");
  const Token& t = peek();
  if ((t.kind == TokenKind::Ident && !is_reserved(t)) || t.kind == TokenKind::QuotedIdent)
    return expect_name("alias");
  return "";
}

void Parser::parse_predicate_def(PolicySet& set) {
  expect_kw("predicate");
  const Token& name_tok = peek();
  std::string name = expect_name("predicate name");
  if (set.find_predicate(name) || set.find_definition(name)) fail(name_tok, "duplicate name '" + name + "'");
  expect_kw("on");
  std::string rel = expect_name("relation name");
  std::string alias = parse_optional_alias();
  expect_sym("=");
  expect_sym("(");
  NodePtr body = parse_or();
  expect_sym(")");
  expect_sym(";");
  PredicateExpr p = lower_top(*body, set, rel, alias);
  set.add_predicate(NamedPredicate{name, rel, alias, std::move(p)});
}

void Parser::parse_policy_def(PolicySet& set) {
  expect_kw("policy");
  const Token& name_tok = peek();
  std::string name = expect_name("policy name");
  if (set.find_predicate(name) || set.find_definition(name)) fail(name_tok, "duplicate name '" + name + "'");
  expect_kw("on");
  std::string rel = expect_name("relation name");
  std::string alias = parse_optional_alias();
  if (accept_sym("=")) {
    PolicyExpr expr = parse_pexpr(set, rel);
    expect_sym(";");
    set.add_definition(PolicyDef{name, rel, std::move(expr), true});
    return;
  }
  expect_kw("using");
  expect_sym("(");
  NodePtr body = parse_or();
  expect_sym(")");
  MaskSpec mask = parse_mask();
  expect_sym(";");
  AtomicPolicy a{name, rel, alias, lower_top(*body, set, rel, alias), std::move(mask)};
  set.add_definition(PolicyDef{name, rel, atomic(std::move(a)), false});
}

MaskSpec Parser::parse_mask() {
  if (peek().is_keyword("suppress") && peek(1).is_symbol("-") && peek(2).is_keyword("otherwise")) {
    next();
    next();
    next();
    return MaskSpec::suppress_all();
  }
  if (!accept_kw("mask")) fail(peek(), "expected 'mask (...)' or 'suppress-otherwise'");
  expect_sym("(");
  MaskSpec spec;
  bool default_seen = false;
  do {
    const Token& at = peek();
    if (accept_sym("*")) {
      if (default_seen) fail(at, "default mask action given twice");
      default_seen = true;
      expect_sym("=>");
      if (accept_kw("keep")) spec.default_action = MaskAction::keep();
      else if (accept_kw("null")) spec.default_action = MaskAction::null_out();
      else if (accept_kw("suppress")) spec.default_action = MaskAction::suppress();
      else fail(peek(), "expected keep, null or suppress");
      continue;
    }
    std::string attr = expect_name("attribute name");
    for (const auto& item : spec.items)
      if (item.attribute == attr) fail(at, "attribute '" + attr + "' masked twice");
    expect_sym("=>");
    MaskAction action;
    if (accept_kw("keep")) action = MaskAction::keep();
    else if (accept_kw("null")) action = MaskAction::null_out();
    else if (accept_kw("suppress")) action = MaskAction::suppress();
    else if (peek().kind == TokenKind::String) action = MaskAction::constant(next().text);
    else fail(peek(), "expected keep, null, suppress or a string constant");
    spec.items.push_back(MaskItem{attr, std::move(action)});
  } while (accept_sym(","));
  expect_sym(")");
  return spec;
}

PolicyExpr Parser::parse_pexpr(PolicySet& set, const std::string& relation) {
  const Token& at = peek();
  if (accept_sym("(")) {
    PolicyExpr lhs = parse_pexpr(set, relation);
    if (accept_sym(")")) return lhs;
    bool is_and = false;
    if (accept_kw("and")) is_and = true;
    else if (!accept_kw("or")) fail(peek(), "expected 'and' or 'or'");
    PolicyExpr rhs = parse_pexpr(set, relation);
    expect_sym(")");
    return is_and ? p_and(std::move(lhs), std::move(rhs)) : p_or(std::move(lhs), std::move(rhs));
  }
  if (accept_kw("not")) return p_not(parse_pexpr(set, relation));
  if (accept_kw("if")) {
    const Token& cond_tok = peek();
    std::string cond = expect_name("predicate name");
    const NamedPredicate* np = set.find_predicate(cond);
    if (!np) fail(cond_tok, "unknown predicate '" + cond + "'");
    if (np->relation != relation)
      throw IncompatibleComposition("condition '" + cond + "' is on '" + np->relation +
                                    "' but the composed policy is on '" + relation + "'");
    expect_kw("then");
    PolicyExpr t = parse_pexpr(set, relation);
    expect_kw("else");
    PolicyExpr e = parse_pexpr(set, relation);
    return p_if(cond, np->body, std::move(t), std::move(e));
  }
  std::string name = expect_name("policy name");
  const PolicyDef* def = set.find_definition(name);
  if (!def) fail(at, "unknown policy '" + name + "'");
  if (def->relation != relation)
    throw IncompatibleComposition("policy '" + name + "' is on '" + def->relation +
                                  "' but the composed policy is on '" + relation + "'");
  PolicyExpr e = def->expr;
  if (def->composed) e.ref_name = name;
  return e;
}

// ---------------------------------------------------------------------------
// sqlpred

NodePtr Parser::parse_or() {
  const Token* at = &peek();
  NodePtr first = parse_and();
  if (!peek().is_keyword("or")) return first;
  auto n = make(Node::Or, at);
  n->kids.push_back(std::move(first));
  while (accept_kw("or")) n->kids.push_back(parse_and());
  return n;
}

NodePtr Parser::parse_and() {
  const Token* at = &peek();
  NodePtr first = parse_not();
  if (!peek().is_keyword("and")) return first;
  auto n = make(Node::And, at);
  n->kids.push_back(std::move(first));
  while (accept_kw("and")) n->kids.push_back(parse_not());
  return n;
}

NodePtr Parser::parse_not() {
  const Token* at = &peek();
  if (peek().is_keyword("not")) {
    next();
    if (peek().is_keyword("exists")) {
      next();
      expect_sym("(");
      auto n = make(Node::NotExists, at);
      n->query = parse_select();
      expect_sym(")");
      return n;
    }
    auto n = make(Node::Not, at);
    n->kids.push_back(parse_not());
    return n;
  }
  return parse_cmp();
}

NodePtr Parser::parse_cmp() {
  NodePtr lhs = parse_add();
  const Token& t = peek();
  static const std::pair<std::string_view, CompareOp> ops[] = {
      {"=", CompareOp::Eq}, {"<>", CompareOp::Ne}, {"!=", CompareOp::Ne}, {"<", CompareOp::Lt},
      {"<=", CompareOp::Le}, {">", CompareOp::Gt}, {">=", CompareOp::Ge}};
  for (const auto& [sym, op] : ops) {
    if (t.is_symbol(sym)) {
      next();
      auto n = make(Node::Cmp, &t);
      n->cmp = op;
      n->kids.push_back(std::move(lhs));
      n->kids.push_back(parse_add());
      return n;
    }
  }
  return lhs;
}

NodePtr Parser::parse_add() {
  NodePtr lhs = parse_mul();
  for (;;) {
    const Token& t = peek();
    ArithOp op;
    if (t.is_symbol("+")) op = ArithOp::Add;
    else if (t.is_symbol("-")) op = ArithOp::Sub;
    else return lhs;
    next();
    auto n = make(Node::Arith, &t);
    n->arith = op;
    n->kids.push_back(std::move(lhs));
    n->kids.push_back(parse_mul());
    lhs = std::move(n);
  }
}

NodePtr Parser::parse_mul() {
  NodePtr lhs = parse_unary();
  for (;;) {
    const Token& t = peek();
    ArithOp op;
    if (t.is_symbol("*")) op = ArithOp::Mul;
    else if (t.is_symbol("/")) op = ArithOp::Div;
    else return lhs;
    next();
    auto n = make(Node::Arith, &t);
    n->arith = op;
    n->kids.push_back(std::move(lhs));
    n->kids.push_back(parse_unary());
    lhs = std::move(n);
  }
}

NodePtr Parser::parse_unary() {
  const Token& t = peek();
  if (t.is_symbol("-") && peek(1).kind == TokenKind::Number) {
    next();
    auto n = make(Node::Num, &t);
    n->name = "-" + next().text;
    return n;
  }
  if (t.is_symbol("-")) fail(t, "unary minus is only supported on numeric literals");
  return parse_primary();
}

NodePtr Parser::parse_primary() {
  const Token& t = peek();
  switch (t.kind) {
    case TokenKind::Number: {
      next();
      auto n = make(Node::Num, &t);
      n->name = t.text;
      return n;
    }
    case TokenKind::String: {
      next();
      auto n = make(Node::Str, &t);
      n->name = t.text;
      return n;
    }
    case TokenKind::Param: {
      next();
      auto n = make(Node::Param, &t);
      n->name = to_lower(t.text);
      return n;
    }
    case TokenKind::Symbol:
      if (t.is_symbol("(")) {
        next();
        if (peek().is_keyword("select")) {
          auto n = make(Node::Subquery, &t);
          n->query = parse_select();
          expect_sym(")");
          return n;
        }
        NodePtr inner = parse_or();
        expect_sym(")");
        return inner;
      }
      fail(t, "unexpected symbol");
    case TokenKind::Ident:
    case TokenKind::QuotedIdent:
      break;
    default:
      fail(t, "unexpected token");
  }

  if (t.kind == TokenKind::Ident) {
    if (t.is_keyword("true") || t.is_keyword("false")) {
      next();
      auto n = make(Node::Bool, &t);
      n->name = to_lower(t.text);
      return n;
    }
    if (t.is_keyword("null")) {
      next();
      return make(Node::NullLit, &t);
    }
    if (t.is_keyword("date") && peek(1).kind == TokenKind::String) {
      next();
      auto n = make(Node::DateLit, &t);
      n->name = next().text;
      return n;
    }
    if (t.is_keyword("exists")) {
      next();
      expect_sym("(");
      auto n = make(Node::Exists, &t);
      n->query = parse_select();
      expect_sym(")");
      return n;
    }
    if (t.is_keyword("coalesce") && peek(1).is_symbol("(")) {
      next();
      next();
      auto n = make(Node::Coalesce, &t);
      do {
        n->kids.push_back(parse_add());
      } while (accept_sym(","));
      expect_sym(")");
      return n;
    }
    static const std::pair<std::string_view, AggFn> aggs[] = {
        {"count", AggFn::Count}, {"sum", AggFn::Sum}, {"avg", AggFn::Avg},
        {"min", AggFn::Min},     {"max", AggFn::Max}};
    for (const auto& [kw, fn] : aggs) {
      if (t.is_keyword(kw) && peek(1).is_symbol("(")) {
        next();
        next();
        auto n = make(Node::Agg, &t);
        n->agg = fn;
        if (fn == AggFn::Count && accept_sym("*")) {
          n->star = true;
        } else {
          if (accept_kw("distinct")) {
            if (fn != AggFn::Count) fail(t, "DISTINCT is only supported inside COUNT");
            n->agg = AggFn::CountDistinct;
          }
          n->kids.push_back(parse_add());
        }
        expect_sym(")");
        return n;
      }
    }
    if (is_reserved(t)) fail(t, "unexpected keyword");
  }

  next();
  auto n = make(Node::Ident, &t);
  std::string first = t.kind == TokenKind::Ident ? to_lower(t.text) : t.text;
  if (accept_sym(".")) {
    n->qualifier = first;
    n->name = expect_name("column name");
  } else {
    n->name = first;
  }
  return n;
}

std::unique_ptr<SelectNode> Parser::parse_select() {
  auto s = std::make_unique<SelectNode>();
  s->at = &peek();
  expect_kw("select");
  if ((peek().kind == TokenKind::Number && peek().text == "1" && peek(1).is_keyword("from")) ||
      (peek().is_symbol("*") && peek(1).is_keyword("from"))) {
    next();
  } else {
    s->select = parse_add();
  }
  expect_kw("from");
  do {
    FromItem item;
    item.relation = expect_name("relation name");
    item.alias = parse_optional_alias();
    if (item.alias.empty()) item.alias = item.relation;
    s->from.push_back(std::move(item));
  } while (accept_sym(","));
  if (accept_kw("where")) s->where = parse_or();
  if (accept_kw("group")) {
    expect_kw("by");
    do {
      s->group_by.push_back(parse_primary());
    } while (accept_sym(","));
  }
  if (accept_kw("having")) s->having = parse_or();
  return s;
}

// ---------------------------------------------------------------------------
// Lowering

PredicateExpr Parser::lower_top(const Node& n, const PolicySet& set, const std::string& relation,
                                const std::string& alias) {
  LowerCtx ctx{&set, relation, alias, {}};
  return lower_pred(n, ctx);
}

ColumnRef Parser::resolve_column(const Node& n, const LowerCtx& ctx) const {
  if (!n.qualifier.empty()) {
    for (auto s = ctx.scopes.rbegin(); s != ctx.scopes.rend(); ++s)
      for (const auto& item : s->items)
        if (item.alias == n.qualifier) return ColumnRef{n.qualifier, n.name};
    if (n.qualifier == ctx.alias || n.qualifier == ctx.relation) return ColumnRef{"", n.name};
    return ColumnRef{n.qualifier, n.name};  // left for validate(): unresolved alias
  }
  for (auto s = ctx.scopes.rbegin(); s != ctx.scopes.rend(); ++s) {
    const FromItem* hit = nullptr;
    for (const auto& item : s->items) {
      const RelationDef* rel = schema_.find(item.relation);
      if (rel && rel->find(n.name)) {
        if (hit) fail(*n.at, "ambiguous column '" + n.name + "'");
        hit = &item;
      }
    }
    if (hit) return ColumnRef{hit->alias, n.name};
  }
  return ColumnRef{"", n.name};
}

PredicateExpr Parser::lower_pred(const Node& n, LowerCtx& ctx) {
  switch (n.kind) {
    case Node::Or:
    case Node::And: {
      std::vector<PredicateExpr> kids;
      for (const auto& k : n.kids) kids.push_back(lower_pred(*k, ctx));
      if (n.kind == Node::Or) return PredicateExpr{OrExpr{std::move(kids)}};
      return PredicateExpr{AndExpr{std::move(kids)}};
    }
    case Node::Not:
      return negation(lower_pred(*n.kids[0], ctx));
    case Node::Cmp:
      return cmp(lower_scalar(*n.kids[0], ctx), n.cmp, lower_scalar(*n.kids[1], ctx));
    case Node::Bool:
      return bool_lit(n.name == "true");
    case Node::Exists:
    case Node::NotExists:
      return PredicateExpr{ExistsExpr{n.kind == Node::NotExists, lower_select(*n.query, ctx)}};
    case Node::Ident:
      if (n.qualifier.empty()) {
        if (const NamedPredicate* np = ctx.set->find_predicate(n.name)) {
          if (np->relation != ctx.relation)
            throw IncompatibleComposition("predicate '" + n.name + "' is on '" + np->relation +
                                          "', used in a predicate on '" + ctx.relation + "'");
          if (!ctx.scopes.empty())
            fail(*n.at, "named predicate '" + n.name + "' cannot be used inside a subquery");
          return np->body;
        }
      }
      fail(*n.at, "expected a boolean expression");
    default:
      fail(*n.at, "expected a boolean expression");
  }
}

ScalarExpr Parser::lower_scalar(const Node& n, LowerCtx& ctx) {
  switch (n.kind) {
    case Node::Num: {
      if (n.name.find('.') == std::string::npos) {
        auto v = parse_value(DataType::Integer, n.name);
        if (!v) fail(*n.at, "integer literal out of range");
        return lit(*v);
      }
      auto d = Decimal::parse(n.name);
      if (!d) fail(*n.at, "malformed number");
      return lit(Value::decimal(*d));
    }
    case Node::Str:
      return lit(Value::text(n.name));
    case Node::DateLit: {
      auto d = Date::parse(n.name);
      if (!d) fail(*n.at, "malformed date literal (expected YYYY-MM-DD)");
      return lit(Value::date(*d));
    }
    case Node::NullLit:
      return lit(Value::null());
    case Node::Bool:
      return lit(Value::boolean(n.name == "true"));
    case Node::Param:
      return ScalarExpr{ContextParam{n.name}};
    case Node::Ident:
      return ScalarExpr{resolve_column(n, ctx)};
    case Node::Arith:
      return ScalarExpr{Arith{n.arith, lower_scalar(*n.kids[0], ctx), lower_scalar(*n.kids[1], ctx)}};
    case Node::Subquery:
      return ScalarExpr{ScalarSubquery{lower_select(*n.query, ctx)}};
    case Node::Coalesce: {
      Coalesce c;
      for (const auto& k : n.kids) c.args.push_back(lower_scalar(*k, ctx));
      return ScalarExpr{std::move(c)};
    }
    case Node::Agg: {
      Aggregate a{n.agg, std::nullopt};
      if (!n.star) a.arg = Box<ScalarExpr>(lower_scalar(*n.kids[0], ctx));
      return ScalarExpr{std::move(a)};
    }
    default:
      fail(*n.at, "expected a scalar expression");
  }
}

SubquerySpec Parser::lower_select(const SelectNode& s, LowerCtx& ctx) {
  ctx.scopes.push_back(Scope{s.from});
  SubquerySpec q;
  q.from = s.from;
  if (s.where) q.where = lower_pred(*s.where, ctx);
  for (const auto& g : s.group_by) {
    ScalarExpr e = lower_scalar(*g, ctx);
    auto* c = std::get_if<ColumnRef>(&e.node);
    if (!c) fail(*g->at, "GROUP BY supports column references only");
    q.group_by.push_back(*c);
  }
  if (s.having) q.having = lower_pred(*s.having, ctx);
  if (s.select) q.select = lower_scalar(*s.select, ctx);
  ctx.scopes.pop_back();
  return q;
}

}  // namespace

PolicySet parse_policies_unchecked(std::string_view document, const Schema& schema) {
  Parser p(document, schema);
  return p.parse_document();
}

PolicySet parse_policies(std::string_view document, const Schema& schema) {
  PolicySet set = parse_policies_unchecked(document, schema);
  ValidationReport report = validate(set, schema);
  if (!report.ok()) {
    const Finding& f = report.findings.front();
    std::string msg = f.policy + ": " + f.message;
    if (f.code == "unknown-relation") throw UnknownRelation(msg);
    if (f.code == "unknown-attribute" || f.code == "unresolved-alias") throw UnknownAttribute(msg);
    if (f.code == "incompatible-composition") throw IncompatibleComposition(msg);
    throw InvalidPolicy(msg);
  }
  return set;
}

PolicySet parse_policies_file(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open policy file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_policies(ss.str(), schema);
}

}  // namespace secpol
