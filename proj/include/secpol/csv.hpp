#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace secpol::csv {

using Row = std::vector<std::string>;

/// RFC 4180 reader. Quoted fields may contain commas, quotes ("") and newlines.
/// Throws ParseError on an unterminated quote.
std::vector<Row> parse(std::string_view document);

/// Quotes a field only when it contains a comma, quote, or line break.
std::string quote(std::string_view field);
std::string format_row(const Row& row);

}  // namespace secpol::csv
