#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tlog {

// Exact signed rational with normalized int64 terms. Budget accounting and
// quantile ranks need exact arithmetic; binary floating point would make
// examples like 1.0 - 0.4 - 0.4 miss their expected remainders.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;  // always > 0

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d);  // throws InputError on d == 0

  static Rational from_decimal(std::string_view text);  // "0.4", "-1.25", "3"

  Rational operator+(const Rational& o) const;
  Rational operator-(const Rational& o) const;
  bool operator==(const Rational& o) const { return num == o.num && den == o.den; }
  bool operator<(const Rational& o) const;
  bool operator<=(const Rational& o) const { return *this < o || *this == o; }
  bool operator>(const Rational& o) const { return o < *this; }
  bool operator>=(const Rational& o) const { return o <= *this; }

  bool is_negative() const { return num < 0; }
  bool is_zero() const { return num == 0; }
  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const;  // "n/d", or "n" when den == 1
};

// ceil(q * n) for q >= 0; exact integer arithmetic.
std::uint64_t ceil_mul(const Rational& q, std::uint64_t n);

}  // namespace tlog
