#include "secpol/lexer.hpp"

#include <cctype>

#include "secpol/error.hpp"

namespace secpol {

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool Token::is_keyword(std::string_view kw) const {
  if (kind != TokenKind::Ident || text.size() != kw.size()) return false;
  for (std::size_t i = 0; i < kw.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(text[i])) != std::tolower(static_cast<unsigned char>(kw[i])))
      return false;
  return true;
}

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$'; }

}  // namespace

std::vector<Token> tokenize(std::string_view src, bool keep_comments) {
  std::vector<Token> out;
  std::size_t i = 0, line = 1, col = 1;

  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };

  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Token t;
    t.offset = i;
    t.line = line;
    t.column = col;
    std::size_t start = i;

    if (c == '-' && i + 1 < src.size() && src[i + 1] == '-') {
      while (i < src.size() && src[i] != '\n') advance(1);
      t.kind = TokenKind::Comment;
      t.text = std::string(src.substr(start, i - start));
    } else if (c == '/' && i + 1 < src.size() && src[i + 1] == '*') {
      std::size_t end = src.find("*/", i + 2);
      if (end == std::string_view::npos) throw ParseError(t.line, t.column, "unterminated comment");
      advance(end + 2 - i);
      t.kind = TokenKind::Comment;
      t.text = std::string(src.substr(start, i - start));
    } else if (ident_start(c)) {
      while (i < src.size() && ident_char(src[i])) advance(1);
      t.kind = TokenKind::Ident;
      t.text = std::string(src.substr(start, i - start));
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      bool dot = false;
      while (i < src.size() && (std::isdigit(static_cast<unsigned char>(src[i])) || (src[i] == '.' && !dot))) {
        if (src[i] == '.') dot = true;
        advance(1);
      }
      t.kind = TokenKind::Number;
      t.text = std::string(src.substr(start, i - start));
    } else if (c == '\'') {
      advance(1);
      std::string s;
      for (;;) {
        if (i >= src.size()) throw ParseError(t.line, t.column, "unterminated string literal");
        if (src[i] == '\'') {
          if (i + 1 < src.size() && src[i + 1] == '\'') {
            s += '\'';
            advance(2);
            continue;
          }
          advance(1);
          break;
        }
        s += src[i];
        advance(1);
      }
      t.kind = TokenKind::String;
      t.text = std::move(s);
    } else if (c == '"') {
      advance(1);
      std::size_t end = src.find('"', i);
      if (end == std::string_view::npos) throw ParseError(t.line, t.column, "unterminated identifier");
      t.text = std::string(src.substr(i, end - i));
      advance(end + 1 - i);
      t.kind = TokenKind::QuotedIdent;
    } else if (c == ':' && i + 1 < src.size() && ident_start(src[i + 1])) {
      advance(1);
      std::size_t s = i;
      while (i < src.size() && ident_char(src[i])) advance(1);
      t.kind = TokenKind::Param;
      t.text = std::string(src.substr(s, i - s));
    } else {
      static constexpr std::string_view two[] = {"<=", ">=", "<>", "!=", "=>", "::", "||"};
      t.kind = TokenKind::Symbol;
      bool matched = false;
      for (auto sym : two) {
        if (src.substr(i, 2) == sym) {
          t.text = std::string(sym);
          advance(2);
          matched = true;
          break;
        }
      }
      if (!matched) {
        static constexpr std::string_view one = "()[],;.=<>+-*/%:|&^~!?{}@#";
        if (one.find(c) == std::string_view::npos)
          throw ParseError(t.line, t.column, std::string("unexpected character '") + c + "'");
        t.text = std::string(1, c);
        advance(1);
      }
    }
    t.length = i - start;
    if (t.kind == TokenKind::Comment && !keep_comments) continue;
    out.push_back(std::move(t));
  }
  Token end;
  end.kind = TokenKind::End;
  end.offset = src.size();
  end.line = line;
  end.column = col;
  out.push_back(end);
  return out;
}

}  // namespace secpol
