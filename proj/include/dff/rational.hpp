#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>

namespace dff {

// Arbitrary-precision rational, used wherever a check is specified as exact.
using Rational = boost::multiprecision::cpp_rational;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

// Parses a plain decimal ("0.05", "1", ".125") into an exact rational.
inline Rational rational_from_decimal(const std::string& text) {
    std::string s = text;
    bool negative = false;
    if (!s.empty() && (s[0] == '+' || s[0] == '-')) {
        negative = s[0] == '-';
        s = s.substr(1);
    }
    auto dot = s.find('.');
    std::string digits = dot == std::string::npos ? s : s.substr(0, dot) + s.substr(dot + 1);
    if (digits.empty()) digits = "0";
    std::size_t frac_len = dot == std::string::npos ? 0 : s.size() - dot - 1;
    boost::multiprecision::cpp_int num(digits);
    boost::multiprecision::cpp_int den = 1;
    for (std::size_t i = 0; i < frac_len; ++i) den *= 10;
    Rational r(num, den);
    return negative ? -r : r;
}

}  // namespace dff
