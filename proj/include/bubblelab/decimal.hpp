#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bubblelab {

/// Fixed-point decimal with four fractional digits.
///
/// All cash arithmetic in a session runs on this type so that logs replay
/// bit-exactly regardless of platform floating-point behaviour. Products are
/// rounded half away from zero back to four digits (half-up for the
/// non-negative values the economy produces).
class Decimal {
 public:
  static constexpr std::int64_t kScale = 10000;
  static constexpr int kDigits = 4;

  constexpr Decimal() = default;

  static constexpr Decimal from_raw(std::int64_t raw) {
    Decimal d;
    d.raw_ = raw;
    return d;
  }
  static constexpr Decimal from_int(std::int64_t v) { return from_raw(v * kScale); }

  /// Nearest representable value to `v`; ties away from zero.
  static Decimal from_double(double v) {
    const double scaled = v * static_cast<double>(kScale);
    if (!(scaled < 9.2e18 && scaled > -9.2e18)) {
      throw std::out_of_range("Decimal::from_double: value out of range");
    }
    return from_raw(static_cast<std::int64_t>(scaled < 0 ? scaled - 0.5 : scaled + 0.5));
  }

  /// Parses "123", "-0.5", "14.0000". More than four fractional digits are
  /// rounded half away from zero.
  static Decimal parse(std::string_view text) {
    if (text.empty()) throw std::invalid_argument("Decimal::parse: empty string");
    std::size_t i = 0;
    bool negative = false;
    if (text[0] == '-' || text[0] == '+') {
      negative = text[0] == '-';
      i = 1;
    }
    std::int64_t whole = 0;
    bool any_digit = false;
    for (; i < text.size() && text[i] != '.'; ++i) {
      if (text[i] < '0' || text[i] > '9') {
        throw std::invalid_argument("Decimal::parse: bad character in '" + std::string(text) + "'");
      }
      if (whole > (std::numeric_limits<std::int64_t>::max() / kScale) / 10) {
        throw std::out_of_range("Decimal::parse: overflow");
      }
      whole = whole * 10 + (text[i] - '0');
      any_digit = true;
    }
    std::int64_t frac = 0;
    int frac_digits = 0;
    bool round_up = false;
    if (i < text.size()) {
      ++i;  // '.'
      for (; i < text.size(); ++i) {
        const char c = text[i];
        if (c < '0' || c > '9') {
          throw std::invalid_argument("Decimal::parse: bad character in '" + std::string(text) + "'");
        }
        any_digit = true;
        if (frac_digits < kDigits) {
          frac = frac * 10 + (c - '0');
          ++frac_digits;
        } else if (frac_digits == kDigits) {
          round_up = c >= '5';
          ++frac_digits;
        }
      }
    }
    if (!any_digit) throw std::invalid_argument("Decimal::parse: no digits in '" + std::string(text) + "'");
    for (int k = std::min(frac_digits, kDigits); k < kDigits; ++k) frac *= 10;
    std::int64_t raw = whole * kScale + frac + (round_up ? 1 : 0);
    return from_raw(negative ? -raw : raw);
  }

  [[nodiscard]] constexpr std::int64_t raw() const { return raw_; }
  [[nodiscard]] double to_double() const { return static_cast<double>(raw_) / static_cast<double>(kScale); }

  /// Canonical text: always four fractional digits ("128.0000").
  [[nodiscard]] std::string to_string() const {
    const std::int64_t mag = raw_ < 0 ? -raw_ : raw_;
    std::string frac = std::to_string(mag % kScale);
    frac.insert(0, static_cast<std::size_t>(kDigits) - frac.size(), '0');
    return (raw_ < 0 ? "-" : "") + std::to_string(mag / kScale) + "." + frac;
  }

  /// Human-facing text with trailing fractional zeros dropped ("128", "6.3").
  [[nodiscard]] std::string to_display() const {
    std::string s = to_string();
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
    return s;
  }

  constexpr Decimal operator-() const { return from_raw(-raw_); }
  constexpr Decimal& operator+=(Decimal o) {
    raw_ += o.raw_;
    return *this;
  }
  constexpr Decimal& operator-=(Decimal o) {
    raw_ -= o.raw_;
    return *this;
  }
  friend constexpr Decimal operator+(Decimal a, Decimal b) { return a += b; }
  friend constexpr Decimal operator-(Decimal a, Decimal b) { return a -= b; }

  /// Product rounded half away from zero to four digits.
  friend constexpr Decimal operator*(Decimal a, Decimal b) {
    const __int128 wide = static_cast<__int128>(a.raw_) * b.raw_;
    const __int128 half = kScale / 2;
    const __int128 q = wide >= 0 ? (wide + half) / kScale : (wide - half) / kScale;
    return from_raw(static_cast<std::int64_t>(q));
  }
  /// Quotient rounded half away from zero to four digits; `b` must be non-zero.
  friend constexpr Decimal operator/(Decimal a, Decimal b) {
    if (b.raw_ == 0) throw std::domain_error("Decimal: division by zero");
    const __int128 num = static_cast<__int128>(a.raw_) * kScale;
    const __int128 den = b.raw_;
    const bool negative = (num < 0) != (den < 0);
    const __int128 n = num < 0 ? -num : num;
    const __int128 d = den < 0 ? -den : den;
    const __int128 q = (2 * n + d) / (2 * d);
    return from_raw(static_cast<std::int64_t>(negative ? -q : q));
  }
  friend constexpr Decimal operator*(Decimal a, std::int64_t n) { return from_raw(a.raw_ * n); }
  friend constexpr Decimal operator*(std::int64_t n, Decimal a) { return from_raw(a.raw_ * n); }

  friend constexpr auto operator<=>(Decimal, Decimal) = default;
  friend constexpr bool operator==(Decimal, Decimal) = default;

 private:
  std::int64_t raw_ = 0;
};

inline Decimal abs(Decimal d) { return d.raw() < 0 ? -d : d; }

}  // namespace bubblelab
