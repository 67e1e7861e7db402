#include <algorithm>
#include <initializer_list>

#include "secpol/error.hpp"
#include "secpol/lexer.hpp"
#include "secpol/sqlgen.hpp"

namespace secpol {

namespace {

// Keywords that end a clause of a SELECT core.
constexpr std::string_view kClauseEnd[] = {"where",  "group",     "having", "order",  "limit", "offset",
                                           "union",  "intersect", "except", "window", "fetch", "for"};
// Keywords that cannot be a bare table alias.
constexpr std::string_view kNotAlias[] = {
    "where", "group", "having", "order",   "limit", "offset", "union", "intersect", "except", "window",
    "fetch", "for",   "join",   "inner",   "left",  "right",  "full",  "cross",     "natural", "on",
    "using", "as",    "lateral"};
constexpr std::string_view kJoinWords[] = {"join", "inner", "left", "right", "full", "cross", "natural"};

template <std::size_t N>
bool is_one_of(const Token& t, const std::string_view (&words)[N]) {
  return std::any_of(std::begin(words), std::end(words), [&](std::string_view w) { return t.is_keyword(w); });
}

struct Stops {
  bool clause_end = false;  // kClauseEnd
  bool from = false;
  bool joins = false;  // kJoinWords
  bool comma = false;
};

class Scanner {
 public:
  explicit Scanner(std::string_view sql) : sql_(sql) {
    try {
      toks_ = tokenize(sql);
    } catch (const ParseError& e) {
      throw UnparseableFromClause(std::string("cannot tokenize query: ") + e.what());
    }
  }

  std::vector<SelectBlock> run() {
    query();
    if (peek().is_symbol(";")) advance();
    if (peek().kind != TokenKind::End) fail("unexpected trailing input");
    return std::move(blocks_);
  }

 private:
  const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  const Token& advance() {
    const Token& t = peek();
    if (pos_ + 1 < toks_.size()) ++pos_;
    else pos_ = toks_.size() - 1;
    last_end_ = t.offset + t.length;
    return t;
  }
  bool at_kw(std::string_view kw) const { return peek().is_keyword(kw); }
  bool accept_kw(std::string_view kw) {
    if (!at_kw(kw)) return false;
    advance();
    return true;
  }
  [[noreturn]] void fail(const std::string& what) const {
    const Token& t = peek();
    std::string near = t.kind == TokenKind::End ? std::string("end of input") : "'" + t.text + "'";
    throw UnparseableFromClause(what + " near " + near + " at " + std::to_string(t.line) + ":" +
                                std::to_string(t.column));
  }
  void expect_symbol(std::string_view s) {
    if (!peek().is_symbol(s)) fail("expected '" + std::string(s) + "'");
    advance();
  }
  bool starts_query(std::size_t k = 0) const { return peek(k).is_keyword("select") || peek(k).is_keyword("with"); }

  void query() {
    if (accept_kw("with")) {
      accept_kw("recursive");
      for (;;) {
        if (peek().kind != TokenKind::Ident && peek().kind != TokenKind::QuotedIdent) fail("expected CTE name");
        std::string name = to_lower(advance().text);
        if (peek().is_symbol("(")) skip_parens();
        if (!accept_kw("as")) fail("expected AS in WITH clause");
        if (accept_kw("not")) {
          if (!accept_kw("materialized")) fail("expected MATERIALIZED");
        } else {
          accept_kw("materialized");
        }
        expect_symbol("(");
        query();
        expect_symbol(")");
        ctes_.insert(name);
        if (!peek().is_symbol(",")) break;
        advance();
      }
    }
    operand();
    while (at_kw("union") || at_kw("intersect") || at_kw("except")) {
      advance();
      if (!accept_kw("all")) accept_kw("distinct");
      operand();
    }
    if (at_kw("order") || at_kw("limit") || at_kw("offset") || at_kw("fetch") || at_kw("for")) expr(Stops{});
  }

  void operand() {
    if (peek().is_symbol("(") && starts_query(1)) {
      advance();
      query();
      expect_symbol(")");
      return;
    }
    if (!at_kw("select")) fail("expected SELECT");
    select();
  }

  void select() {
    advance();  // SELECT
    std::size_t idx = blocks_.size();
    blocks_.emplace_back();
    expr(Stops{true, true, false, false});
    if (accept_kw("from")) {
      blocks_[idx].has_from = true;
      from_list(idx);
      blocks_[idx].from_end = last_end_;
    }
    if (accept_kw("where")) {
      blocks_[idx].has_where = true;
      blocks_[idx].where_begin = peek().offset;
      expr(Stops{true, false, false, false});
      blocks_[idx].where_end = last_end_;
      if (blocks_[idx].where_begin >= blocks_[idx].where_end) fail("empty WHERE clause");
    }
    if (accept_kw("group")) {
      if (!accept_kw("by")) fail("expected BY");
      expr(Stops{true, false, false, false});
    }
    if (accept_kw("having")) expr(Stops{true, false, false, false});
    if (accept_kw("window")) expr(Stops{true, false, false, false});
  }

  // Skips an expression, descending into parenthesized subqueries.
  void expr(const Stops& stops) {
    for (;;) {
      const Token& t = peek();
      if (t.kind == TokenKind::End || t.is_symbol(";") || t.is_symbol(")")) return;
      if (t.kind == TokenKind::Ident) {
        if (stops.clause_end && is_one_of(t, kClauseEnd)) return;
        if (stops.from && t.is_keyword("from")) return;
        if (stops.joins && is_one_of(t, kJoinWords)) return;
      }
      if (stops.comma && t.is_symbol(",")) return;
      if (t.is_symbol("(")) {
        advance();
        if (starts_query()) query();
        else expr(Stops{});
        expect_symbol(")");
        continue;
      }
      advance();
    }
  }

  void skip_parens() {
    expect_symbol("(");
    expr(Stops{});
    expect_symbol(")");
  }

  void from_list(std::size_t idx) {
    for (;;) {
      std::size_t first = blocks_[idx].tables.size();
      from_item(idx);
      bool joined = false;
      while (is_one_of(peek(), kJoinWords)) {
        joined = true;
        accept_kw("natural");
        if (!accept_kw("cross") && !accept_kw("inner")) {
          if (accept_kw("left") || accept_kw("right") || accept_kw("full")) accept_kw("outer");
        }
        if (!accept_kw("join")) fail("expected JOIN");
        from_item(idx);
        if (accept_kw("on")) {
          expr(Stops{true, false, true, true});
        } else if (accept_kw("using")) {
          skip_parens();
        }
      }
      if (joined)
        for (std::size_t i = first; i < blocks_[idx].tables.size(); ++i) blocks_[idx].tables[i].in_join = true;
      if (!peek().is_symbol(",")) break;
      advance();
    }
  }

  void alias_into(FromTable* table) {
    bool explicit_as = accept_kw("as");
    const Token& t = peek();
    bool name_like = t.kind == TokenKind::QuotedIdent || (t.kind == TokenKind::Ident && !is_one_of(t, kNotAlias));
    if (!name_like) {
      if (explicit_as) fail("expected alias after AS");
      return;
    }
    std::string alias = to_lower(advance().text);
    if (table) {
      table->alias = alias;
      table->end = last_end_;
    }
    if (peek().is_symbol("(")) skip_parens();  // column alias list
  }

  void from_item(std::size_t idx) {
    accept_kw("lateral");
    if (peek().is_symbol("(")) {
      advance();
      if (starts_query()) {
        query();
        expect_symbol(")");
      } else {
        // Parenthesized join tree.
        std::size_t first = blocks_[idx].tables.size();
        from_list(idx);
        expect_symbol(")");
        for (std::size_t i = first; i < blocks_[idx].tables.size(); ++i) blocks_[idx].tables[i].in_join = true;
      }
      alias_into(nullptr);
      return;
    }
    accept_kw("only");
    if (peek().kind != TokenKind::Ident && peek().kind != TokenKind::QuotedIdent) fail("expected table reference");
    if (is_one_of(peek(), kNotAlias) && peek().kind == TokenKind::Ident) fail("expected table reference");
    FromTable t;
    t.name_begin = peek().offset;
    std::string name = advance().text;
    while (peek().is_symbol(".")) {
      advance();
      if (peek().kind != TokenKind::Ident && peek().kind != TokenKind::QuotedIdent) fail("expected name after '.'");
      name = advance().text;
    }
    if (peek().is_symbol("(")) {
      // Set-returning function call: not a base table.
      skip_parens();
      alias_into(nullptr);
      return;
    }
    t.relation = to_lower(name);
    t.name_end = last_end_;
    t.end = last_end_;
    alias_into(&t);
    if (!ctes_.count(t.relation)) blocks_[idx].tables.push_back(std::move(t));
  }

  std::string_view sql_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::size_t last_end_ = 0;
  std::vector<SelectBlock> blocks_;
  std::set<std::string> ctes_;
};

}  // namespace

std::vector<SelectBlock> scan_query(std::string_view sql) { return Scanner(sql).run(); }

std::set<std::string> activated_policies(const std::string& query, const PolicySet& set) {
  std::set<std::string> out;
  for (const auto& block : scan_query(query))
    for (const auto& t : block.tables)
      if (set.for_table(t.relation)) out.insert(t.relation);
  return out;
}

}  // namespace secpol
