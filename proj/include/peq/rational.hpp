#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <stdexcept>
#include <string>
#include <string_view>

namespace peq {

/// Exact rational number with arbitrary-precision integer parts.
/// Always stored in reduced form with a positive denominator.
using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline BigInt numerator(const Rational& r) { return boost::multiprecision::numerator(r); }
inline BigInt denominator(const Rational& r) { return boost::multiprecision::denominator(r); }

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

/// True iff r is an integer (denominator 1).
inline bool is_integer(const Rational& r) { return denominator(r) == 1; }

/// Parses "a/b", an integer "a", or a plain decimal such as "-0.25" into an
/// exact rational.  Decimals are read exactly (scaled by a power of ten), so
/// "0.1" means 1/10, not the nearest double.  Throws std::invalid_argument on
/// malformed input.
inline Rational parse_rational(std::string_view text) {
    auto fail = [&] { throw std::invalid_argument("malformed rational: '" + std::string(text) + "'"); };

    std::string_view s = text;
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (s.empty()) fail();

    const auto slash = s.find('/');
    if (slash != std::string_view::npos) {
        const std::string num(s.substr(0, slash));
        const std::string den(s.substr(slash + 1));
        if (num.empty() || den.empty()) fail();
        try {
            Rational r{BigInt(num), BigInt(den)};
            return r;
        } catch (const std::exception&) {
            fail();
        }
    }

    // Integer or decimal literal.
    bool neg = false;
    std::string_view body = s;
    if (body.front() == '+' || body.front() == '-') {
        neg = body.front() == '-';
        body.remove_prefix(1);
    }
    if (body.empty()) fail();

    std::string digits;
    long scale = 0;
    bool seen_dot = false, seen_digit = false;
    for (char c : body) {
        if (c == '.') {
            if (seen_dot) fail();
            seen_dot = true;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            digits.push_back(c);
            seen_digit = true;
            if (seen_dot) ++scale;
        } else {
            fail();
        }
    }
    if (!seen_digit) fail();

    BigInt n(digits);
    if (neg) n = -n;
    BigInt d = 1;
    for (long i = 0; i < scale; ++i) d *= 10;
    return Rational(n, d);
}

/// Renders r as "a" or "a/b".
inline std::string to_string(const Rational& r) {
    std::string out = numerator(r).str();
    if (!is_integer(r)) out += "/" + denominator(r).str();
    return out;
}

} // namespace peq
