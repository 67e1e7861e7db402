#include "secpol/csv.hpp"

#include "secpol/error.hpp"

namespace secpol::csv {

std::vector<Row> parse(std::string_view doc) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1, col = 1;
  std::size_t quote_line = 0, quote_col = 0;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < doc.size(); ++i, ++col) {
    char c = doc[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < doc.size() && doc[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') {
          ++line;
          col = 0;
        }
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        quote_line = line;
        quote_col = col;
        break;
      case ',':
        end_field();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        col = 0;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (in_quotes) throw ParseError(quote_line, quote_col, "unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::string format_row(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    out += quote(row[i]);
  }
  return out;
}

}  // namespace secpol::csv
