#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace secpol {

enum class TokenKind { Ident, QuotedIdent, Number, String, Param, Symbol, Comment, End };

struct Token {
  TokenKind kind = TokenKind::End;
  std::string text;        // identifiers keep their spelling; strings are unescaped
  std::size_t offset = 0;  // byte offset of the first character
  std::size_t length = 0;  // bytes covered in the source
  std::size_t line = 1;
  std::size_t column = 1;

  /// Case-insensitive keyword test for identifiers.
  bool is_keyword(std::string_view kw) const;
  bool is_symbol(std::string_view s) const { return kind == TokenKind::Symbol && text == s; }
};

/// SQL-flavoured tokenizer shared by the policy DSL and the query scanner.
/// `--` and `/* */` comments are dropped unless `keep_comments` is set.
/// Throws ParseError on unterminated strings/comments or stray characters.
std::vector<Token> tokenize(std::string_view source, bool keep_comments = false);

std::string to_lower(std::string_view s);

}  // namespace secpol
