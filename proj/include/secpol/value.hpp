#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace secpol {

enum class DataType { Integer, Decimal, Text, Date, Boolean };

std::string_view to_string(DataType t);
std::optional<DataType> parse_data_type(std::string_view name);

/// Exact decimal: mantissa * 10^-scale. Base values carry scale 2 (money);
/// products and quotients widen the scale up to `kMaxScale`.
class Decimal {
 public:
  static constexpr int kMaxScale = 18;

  Decimal() = default;
  Decimal(__int128 mantissa, int scale);

  static Decimal from_int(std::int64_t v) { return Decimal(v, 0); }
  /// Parses `[-]digits[.digits]`. Returns nullopt on malformed input.
  static std::optional<Decimal> parse(std::string_view text);

  __int128 mantissa() const { return mantissa_; }
  int scale() const { return scale_; }

  /// Same value expressed with `scale` fractional digits (rounds half away
  /// from zero when narrowing).
  Decimal rescaled(int scale) const;

  std::string to_string() const;
  double to_double() const;

  friend Decimal operator+(const Decimal& a, const Decimal& b);
  friend Decimal operator-(const Decimal& a, const Decimal& b);
  friend Decimal operator*(const Decimal& a, const Decimal& b);
  /// Throws DivisionByZero when `b` is zero.
  friend Decimal divide(const Decimal& a, const Decimal& b);
  Decimal operator-() const { return Decimal(-mantissa_, scale_); }

  friend std::strong_ordering operator<=>(const Decimal& a, const Decimal& b);
  friend bool operator==(const Decimal& a, const Decimal& b) {
    return (a <=> b) == std::strong_ordering::equal;
  }

  bool is_zero() const { return mantissa_ == 0; }

 private:
  __int128 mantissa_ = 0;
  int scale_ = 0;
};

/// Calendar date without time component, stored as days since 1970-01-01.
struct Date {
  std::int32_t days = 0;

  static std::optional<Date> parse(std::string_view iso);
  std::string to_string() const;

  friend auto operator<=>(const Date&, const Date&) = default;
};

struct Null {
  friend bool operator==(const Null&, const Null&) = default;
};

/// The suppressed marker (written ⊥ in the policy model). Distinct from Null;
/// only masking ever produces it.
struct Suppressed {
  friend bool operator==(const Suppressed&, const Suppressed&) = default;
};

class Value {
 public:
  using Storage =
      std::variant<Null, std::int64_t, Decimal, std::string, Date, bool, Suppressed>;

  Value() = default;

  static Value null() { return Value(Null{}); }
  static Value suppressed() { return Value(Suppressed{}); }
  static Value integer(std::int64_t v) { return Value(v); }
  static Value decimal(Decimal v) { return Value(v); }
  static Value text(std::string v) { return Value(std::move(v)); }
  static Value date(Date v) { return Value(v); }
  static Value boolean(bool v) { return Value(v); }

  bool is_null() const { return std::holds_alternative<Null>(v_); }
  bool is_suppressed() const { return std::holds_alternative<Suppressed>(v_); }
  bool is_numeric() const {
    return std::holds_alternative<std::int64_t>(v_) || std::holds_alternative<Decimal>(v_);
  }

  const Storage& storage() const { return v_; }

  template <class T>
  const T* get_if() const {
    return std::get_if<T>(&v_);
  }

  /// Numeric view (Int promoted to scale-0 Decimal).
  std::optional<Decimal> as_decimal() const;

  /// Canonical text used by CSV rendering: Null and Suppressed render empty.
  std::string to_string() const;
  /// SQL literal text (PostgreSQL dialect).
  std::string to_sql_literal() const;

  /// Structural equality. Numeric kinds compare by value; Suppressed equals
  /// only Suppressed; Null equals Null (this is identity, not SQL `=`).
  friend bool operator==(const Value& a, const Value& b);

  /// Total order for keys and sorting: Null < Suppressed < bool < numbers <
  /// dates < text.
  friend std::strong_ordering operator<=>(const Value& a, const Value& b);

 private:
  template <class T>
  explicit Value(T v) : v_(std::move(v)) {}

  Storage v_;
};

/// Parses a text cell into a value of `type`. Empty text is Null. Returns
/// nullopt when the text does not conform to the type.
std::optional<Value> parse_value(DataType type, std::string_view text);

bool conforms(const Value& v, DataType type);

/// SQL three-valued logic.
enum class Truth { False, True, Unknown };

inline Truth truth_not(Truth t) {
  switch (t) {
    case Truth::True: return Truth::False;
    case Truth::False: return Truth::True;
    default: return Truth::Unknown;
  }
}
inline Truth truth_and(Truth a, Truth b) {
  if (a == Truth::False || b == Truth::False) return Truth::False;
  if (a == Truth::Unknown || b == Truth::Unknown) return Truth::Unknown;
  return Truth::True;
}
inline Truth truth_or(Truth a, Truth b) {
  if (a == Truth::True || b == Truth::True) return Truth::True;
  if (a == Truth::Unknown || b == Truth::Unknown) return Truth::Unknown;
  return Truth::False;
}

}  // namespace secpol
