#include "secpol/value.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>

#include "secpol/error.hpp"

namespace secpol {

namespace {

__int128 pow10(int n) {
  __int128 r = 1;
  for (int i = 0; i < n; ++i) r *= 10;
  return r;
}

__int128 checked_mul(__int128 a, __int128 b) {
  __int128 r;
  if (__builtin_mul_overflow(a, b, &r)) throw EvaluationError("decimal overflow");
  return r;
}

__int128 checked_add(__int128 a, __int128 b) {
  __int128 r;
  if (__builtin_add_overflow(a, b, &r)) throw EvaluationError("decimal overflow");
  return r;
}

std::string int128_to_string(__int128 v) {
  if (v == 0) return "0";
  bool neg = v < 0;
  unsigned __int128 u = neg ? -static_cast<unsigned __int128>(v) : static_cast<unsigned __int128>(v);
  std::string s;
  while (u > 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
    u /= 10;
  }
  if (neg) s.push_back('-');
  std::reverse(s.begin(), s.end());
  return s;
}

// Division rounding half away from zero.
__int128 div_round(__int128 num, __int128 den) {
  __int128 q = num / den;
  __int128 r = num % den;
  if (r != 0) {
    __int128 twice = r < 0 ? -r : r;
    twice *= 2;
    __int128 aden = den < 0 ? -den : den;
    if (twice >= aden) q += ((num < 0) != (den < 0)) ? -1 : 1;
  }
  return q;
}

}  // namespace

std::string_view to_string(DataType t) {
  switch (t) {
    case DataType::Integer: return "integer";
    case DataType::Decimal: return "decimal";
    case DataType::Text: return "text";
    case DataType::Date: return "date";
    case DataType::Boolean: return "boolean";
  }
  return "?";
}

std::optional<DataType> parse_data_type(std::string_view name) {
  if (name == "integer") return DataType::Integer;
  if (name == "decimal") return DataType::Decimal;
  if (name == "text") return DataType::Text;
  if (name == "date") return DataType::Date;
  if (name == "boolean") return DataType::Boolean;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Decimal

Decimal::Decimal(__int128 mantissa, int scale) : mantissa_(mantissa), scale_(scale) {
  if (scale_ > kMaxScale) *this = rescaled(kMaxScale);
}

std::optional<Decimal> Decimal::parse(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::size_t i = 0;
  bool neg = false;
  if (text[0] == '-' || text[0] == '+') {
    neg = text[0] == '-';
    ++i;
  }
  __int128 m = 0;
  int scale = 0;
  bool seen_digit = false;
  bool seen_point = false;
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (c == '.') {
      if (seen_point) return std::nullopt;
      seen_point = true;
      continue;
    }
    if (c < '0' || c > '9') return std::nullopt;
    seen_digit = true;
    if (seen_point) {
      if (scale == kMaxScale) continue;  // truncate excess digits
      ++scale;
    }
    m = m * 10 + (c - '0');
    if (m > pow10(36)) return std::nullopt;
  }
  if (!seen_digit) return std::nullopt;
  return Decimal(neg ? -m : m, scale);
}

Decimal Decimal::rescaled(int scale) const {
  Decimal d;
  d.scale_ = scale;
  if (scale >= scale_) {
    d.mantissa_ = checked_mul(mantissa_, pow10(scale - scale_));
  } else {
    d.mantissa_ = div_round(mantissa_, pow10(scale_ - scale));
  }
  return d;
}

std::string Decimal::to_string() const {
  bool neg = mantissa_ < 0;
  std::string digits = int128_to_string(neg ? -mantissa_ : mantissa_);
  if (scale_ > 0) {
    if (static_cast<int>(digits.size()) <= scale_)
      digits.insert(0, static_cast<std::size_t>(scale_ - static_cast<int>(digits.size()) + 1), '0');
    digits.insert(digits.size() - static_cast<std::size_t>(scale_), ".");
  }
  return neg ? "-" + digits : digits;
}

double Decimal::to_double() const {
  return static_cast<double>(mantissa_) / static_cast<double>(pow10(scale_));
}

Decimal operator+(const Decimal& a, const Decimal& b) {
  int s = std::max(a.scale_, b.scale_);
  return Decimal(checked_add(a.rescaled(s).mantissa_, b.rescaled(s).mantissa_), s);
}

Decimal operator-(const Decimal& a, const Decimal& b) { return a + (-b); }

Decimal operator*(const Decimal& a, const Decimal& b) {
  return Decimal(checked_mul(a.mantissa_, b.mantissa_), a.scale_ + b.scale_);
}

namespace {

// Weight and leading digit of |m| * 10^-scale in base 10000, as PostgreSQL's
// numeric stores it.
std::pair<int, int> base10000_head(__int128 m, int scale) {
  if (m < 0) m = -m;
  std::string digits = int128_to_string(m);
  int exponent = static_cast<int>(digits.size()) - scale - 1;
  int weight = exponent >= 0 ? exponent / 4 : -((-exponent + 3) / 4);
  int lead = exponent - 4 * weight + 1;
  return {weight, std::stoi(digits.substr(0, static_cast<std::size_t>(lead)))};
}

}  // namespace

Decimal divide(const Decimal& a, const Decimal& b) {
  if (b.mantissa_ == 0) throw DivisionByZero("division by zero");
  // Result scale follows PostgreSQL's select_div_scale: at least 16
  // significant digits, never fewer fractional digits than either input.
  int target = std::max(a.scale_, b.scale_);
  if (a.mantissa_ != 0) {
    auto [w1, d1] = base10000_head(a.mantissa_, a.scale_);
    auto [w2, d2] = base10000_head(b.mantissa_, b.scale_);
    int qweight = w1 - w2 - (d1 <= d2 ? 1 : 0);
    target = std::max(target, 16 - qweight * 4);
  } else {
    target = std::max(target, 16);
  }
  target = std::clamp(target, 0, Decimal::kMaxScale);
  // a/b = (ma * 10^(target - sa + sb)) / mb  at scale `target`.
  int shift = target - a.scale_ + b.scale_;
  __int128 num = a.mantissa_;
  __int128 den = b.mantissa_;
  if (shift >= 0) {
    num = checked_mul(num, pow10(shift));
  } else {
    den = checked_mul(den, pow10(-shift));
  }
  return Decimal(div_round(num, den), target);
}

std::strong_ordering operator<=>(const Decimal& a, const Decimal& b) {
  int s = std::max(a.scale_, b.scale_);
  __int128 x = a.rescaled(s).mantissa_;
  __int128 y = b.rescaled(s).mantissa_;
  if (x < y) return std::strong_ordering::less;
  if (x > y) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

// ---------------------------------------------------------------------------
// Date

std::optional<Date> Date::parse(std::string_view iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  auto num = [&](std::size_t pos, std::size_t len, int& out) {
    auto [p, ec] = std::from_chars(iso.data() + pos, iso.data() + pos + len, out);
    return ec == std::errc() && p == iso.data() + pos + len;
  };
  if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date{static_cast<std::int32_t>(std::chrono::sys_days{ymd}.time_since_epoch().count())};
}

std::string Date::to_string() const {
  std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

// ---------------------------------------------------------------------------
// Value

std::optional<Decimal> Value::as_decimal() const {
  if (auto i = get_if<std::int64_t>()) return Decimal::from_int(*i);
  if (auto d = get_if<Decimal>()) return *d;
  return std::nullopt;
}

std::string Value::to_string() const {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Null> || std::is_same_v<T, Suppressed>) {
          return "";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(x);
        } else if constexpr (std::is_same_v<T, Decimal> || std::is_same_v<T, Date>) {
          return x.to_string();
        } else if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else {
          return x;
        }
      },
      v_);
}

std::string Value::to_sql_literal() const {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Null> || std::is_same_v<T, Suppressed>) {
          return "NULL";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(x);
        } else if constexpr (std::is_same_v<T, Decimal>) {
          return x.to_string();
        } else if constexpr (std::is_same_v<T, Date>) {
          return "DATE '" + x.to_string() + "'";
        } else if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else {
          std::string out = "'";
          for (char c : x) {
            if (c == '\'') out += "''";
            else out += c;
          }
          return out + "'";
        }
      },
      v_);
}

bool operator==(const Value& a, const Value& b) {
  if (a.is_numeric() && b.is_numeric()) return *a.as_decimal() == *b.as_decimal();
  return a.v_ == b.v_;
}

namespace {
int kind_rank(const Value& v) {
  switch (v.storage().index()) {
    case 0: return 0;  // Null
    case 6: return 1;  // Suppressed
    case 5: return 2;  // bool
    case 1:
    case 2: return 3;  // numeric
    case 4: return 4;  // date
    default: return 5;  // text
  }
}
}  // namespace

std::strong_ordering operator<=>(const Value& a, const Value& b) {
  int ra = kind_rank(a), rb = kind_rank(b);
  if (ra != rb) return ra <=> rb;
  switch (ra) {
    case 2: return *a.get_if<bool>() <=> *b.get_if<bool>();
    case 3: return *a.as_decimal() <=> *b.as_decimal();
    case 4: return *a.get_if<Date>() <=> *b.get_if<Date>();
    case 5: return a.get_if<std::string>()->compare(*b.get_if<std::string>()) <=> 0;
    default: return std::strong_ordering::equal;
  }
}

std::optional<Value> parse_value(DataType type, std::string_view text) {
  if (text.empty()) return Value::null();
  switch (type) {
    case DataType::Integer: {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) return std::nullopt;
      return Value::integer(v);
    }
    case DataType::Decimal: {
      auto d = Decimal::parse(text);
      if (!d) return std::nullopt;
      return Value::decimal(d->scale() <= 2 ? d->rescaled(2) : *d);
    }
    case DataType::Text:
      return Value::text(std::string(text));
    case DataType::Date: {
      auto d = Date::parse(text);
      if (!d) return std::nullopt;
      return Value::date(*d);
    }
    case DataType::Boolean:
      if (text == "true" || text == "t" || text == "TRUE") return Value::boolean(true);
      if (text == "false" || text == "f" || text == "FALSE") return Value::boolean(false);
      return std::nullopt;
  }
  return std::nullopt;
}

bool conforms(const Value& v, DataType type) {
  if (v.is_null()) return true;
  switch (type) {
    case DataType::Integer: return v.get_if<std::int64_t>() != nullptr;
    case DataType::Decimal: return v.get_if<Decimal>() != nullptr;
    case DataType::Text: return v.get_if<std::string>() != nullptr;
    case DataType::Date: return v.get_if<Date>() != nullptr;
    case DataType::Boolean: return v.get_if<bool>() != nullptr;
  }
  return false;
}

}  // namespace secpol
