#include "tlog/rational.hpp"

#include <numeric>

#include "tlog/errors.hpp"

namespace tlog {

namespace {

using Wide = __int128;

Rational normalized(Wide num, Wide den) {
  if (den == 0) throw InputError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const Wide a = num < 0 ? -num : num;
  Wide g = std::gcd(static_cast<unsigned long long>(a > 0 ? a : 1),
                    static_cast<unsigned long long>(den));
  if (g == 0) g = 1;
  num /= g;
  den /= g;
  if (num > INT64_MAX || num < INT64_MIN || den > INT64_MAX) {
    throw InputError("rational overflow");
  }
  Rational r;
  r.num = static_cast<std::int64_t>(num);
  r.den = static_cast<std::int64_t>(den);
  return r;
}

}  // namespace

Rational::Rational(std::int64_t n, std::int64_t d) {
  *this = normalized(n, d);
}

Rational Rational::from_decimal(std::string_view text) {
  if (text.empty()) throw InputError("empty decimal");
  bool negative = false;
  std::size_t pos = 0;
  if (text[0] == '+' || text[0] == '-') {
    negative = text[0] == '-';
    pos = 1;
  }
  Wide num = 0;
  Wide den = 1;
  bool seen_digit = false;
  bool seen_dot = false;
  for (; pos < text.size(); ++pos) {
    const char c = text[pos];
    if (c == '.') {
      if (seen_dot) throw InputError("malformed decimal");
      seen_dot = true;
      continue;
    }
    if (c < '0' || c > '9') throw InputError("malformed decimal");
    seen_digit = true;
    num = num * 10 + (c - '0');
    if (seen_dot) den *= 10;
    if (den > Wide(1000000000000000000LL)) throw InputError("decimal too precise");
  }
  if (!seen_digit) throw InputError("malformed decimal");
  return normalized(negative ? -num : num, den);
}

Rational Rational::operator+(const Rational& o) const {
  return normalized(Wide(num) * o.den + Wide(o.num) * den, Wide(den) * o.den);
}

Rational Rational::operator-(const Rational& o) const {
  return normalized(Wide(num) * o.den - Wide(o.num) * den, Wide(den) * o.den);
}

bool Rational::operator<(const Rational& o) const {
  return Wide(num) * o.den < Wide(o.num) * den;
}

std::string Rational::str() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

std::uint64_t ceil_mul(const Rational& q, std::uint64_t n) {
  if (q.is_negative()) throw InputError("ceil_mul requires a non-negative rational");
  const Wide prod = Wide(q.num) * Wide(n);
  const Wide den = q.den;
  return static_cast<std::uint64_t>((prod + den - 1) / den);
}

}  // namespace tlog
