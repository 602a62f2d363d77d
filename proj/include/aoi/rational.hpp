#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aoi {

/// Exact positive rational. Used for the global tick size and for snapping
/// configured time values (distribution support, wait grid) onto the tick
/// lattice without any floating-point rounding.
struct Rational {
    std::int64_t num = 1;
    std::int64_t den = 1;

    Rational() = default;

    Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
        if (den <= 0 || num < 0)
            throw std::invalid_argument("Rational: requires num >= 0 and den > 0");
        const std::int64_t g = std::gcd(num == 0 ? 1 : num, den);
        num /= g;
        den /= g;
    }

    /// Accepts an integer ("3"), a plain decimal ("0.25") or a fraction ("1/4").
    static Rational parse(std::string_view text) {
        auto trim = [](std::string_view s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
            return s;
        };
        text = trim(text);
        if (text.empty()) throw std::invalid_argument("Rational: empty text");

        if (auto slash = text.find('/'); slash != std::string_view::npos) {
            const std::int64_t n = parse_int(trim(text.substr(0, slash)));
            const std::int64_t d = parse_int(trim(text.substr(slash + 1)));
            return Rational(n, d);
        }

        const auto dot = text.find('.');
        if (dot == std::string_view::npos) return Rational(parse_int(text), 1);

        const std::string_view whole = text.substr(0, dot);
        const std::string_view frac = text.substr(dot + 1);
        if (frac.size() > 15) throw std::invalid_argument("Rational: too many decimal digits");
        std::int64_t den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        const std::int64_t w = whole.empty() ? 0 : parse_int(whole);
        const std::int64_t f = frac.empty() ? 0 : parse_int(frac);
        return Rational(w * den + f, den);
    }

    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }

    std::string str() const {
        return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
    }

    bool operator==(const Rational&) const = default;

  private:
    static std::int64_t parse_int(std::string_view s) {
        if (s.empty()) throw std::invalid_argument("Rational: bad integer");
        std::int64_t v = 0;
        for (char c : s) {
            if (c < '0' || c > '9') throw std::invalid_argument("Rational: bad digit in '" + std::string(s) + "'");
            v = v * 10 + (c - '0');
            if (v < 0) throw std::invalid_argument("Rational: overflow");
        }
        return v;
    }
};

/// Exact quotient value/tick if value is a non-negative integer multiple of
/// tick, std::nullopt otherwise.
inline std::optional<std::int64_t> exact_tick_count(const Rational& value, const Rational& tick) {
    // value/tick = (value.num * tick.den) / (value.den * tick.num)
    const __int128 p = static_cast<__int128>(value.num) * tick.den;
    const __int128 q = static_cast<__int128>(value.den) * tick.num;
    if (q == 0 || p % q != 0) return std::nullopt;
    const __int128 t = p / q;
    if (t < 0 || t > INT64_MAX) return std::nullopt;
    return static_cast<std::int64_t>(t);
}

}  // namespace aoi
