#pragma once

// Real polynomial phase-space symbols H(p,q) = sum c_mn p^m q^n and their
// text form `c*p^m*q^n + ...`.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "metriq/error.hpp"

namespace metriq {

inline constexpr int kMaxSymbolDegree = 8;

/// Exponent pair (m, n) of the monomial p^m q^n.
struct Monomial {
    int p = 0;
    int q = 0;
    int degree() const noexcept { return p + q; }
    auto operator<=>(const Monomial &) const = default;
};

/// 2x2 real matrix acting on (p, q) column vectors.
struct Mat2 {
    double a = 1, b = 0, c = 0, d = 1; // [[a, b], [c, d]]

    double det() const noexcept { return a * d - b * c; }
    std::array<double, 2> apply(double p, double q) const noexcept {
        return {a * p + b * q, c * p + d * q};
    }
    Mat2 inverse() const {
        const double dt = det();
        if (!(std::abs(dt) > 1e-300) || !std::isfinite(dt))
            throw SingularMapError("2x2 map is not invertible");
        return {d / dt, -b / dt, -c / dt, a / dt};
    }
    Mat2 transpose() const noexcept { return {a, c, b, d}; }
    friend Mat2 operator*(const Mat2 &x, const Mat2 &y) noexcept {
        return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d, x.c * y.a + x.d * y.c,
                x.c * y.b + x.d * y.d};
    }
};

namespace detail {

inline double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i)
        r = r * (n - k + i) / i;
    return std::round(r);
}

} // namespace detail

class PolySymbol {
  public:
    using Coefficients = std::map<Monomial, double>;

    PolySymbol() = default;
    explicit PolySymbol(Coefficients coeffs) {
        for (const auto &[mono, c] : coeffs)
            add_term(mono.p, mono.q, c);
    }

    static PolySymbol constant(double c) { return PolySymbol().add_term(0, 0, c); }
    static PolySymbol harmonic(double omega = 1.0) {
        return PolySymbol().add_term(2, 0, 0.5 * omega).add_term(0, 2, 0.5 * omega);
    }

    /// Adds c p^m q^n; terms cancelling to zero are dropped.
    PolySymbol &add_term(int m, int n, double c) {
        if (m < 0 || n < 0)
            throw ParseError("negative exponent in monomial");
        if (!std::isfinite(c))
            throw ParseError("non-finite coefficient");
        if (m + n > kMaxSymbolDegree)
            throw CapacityError("symbol degree " + std::to_string(m + n) + " exceeds " +
                                std::to_string(kMaxSymbolDegree));
        double &slot = coeffs_[{m, n}];
        slot += c;
        if (slot == 0.0)
            coeffs_.erase({m, n});
        return *this;
    }

    const Coefficients &coefficients() const noexcept { return coeffs_; }
    bool is_zero() const noexcept { return coeffs_.empty(); }

    int degree() const noexcept {
        int d = 0;
        for (const auto &[mono, c] : coeffs_)
            d = std::max(d, mono.degree());
        return d;
    }

    double coefficient(int m, int n) const {
        auto it = coeffs_.find({m, n});
        return it == coeffs_.end() ? 0.0 : it->second;
    }

    double operator()(double p, double q) const noexcept {
        double acc = 0.0;
        for (const auto &[mono, c] : coeffs_)
            acc += c * ipow(p, mono.p) * ipow(q, mono.q);
        return acc;
    }

    PolySymbol d_dp() const {
        PolySymbol r;
        for (const auto &[mono, c] : coeffs_)
            if (mono.p > 0)
                r.add_term(mono.p - 1, mono.q, c * mono.p);
        return r;
    }
    PolySymbol d_dq() const {
        PolySymbol r;
        for (const auto &[mono, c] : coeffs_)
            if (mono.q > 0)
                r.add_term(mono.p, mono.q - 1, c * mono.q);
        return r;
    }

    friend PolySymbol operator+(PolySymbol a, const PolySymbol &b) {
        for (const auto &[mono, c] : b.coeffs_)
            a.add_term(mono.p, mono.q, c);
        return a;
    }
    friend PolySymbol operator*(double s, const PolySymbol &a) {
        PolySymbol r;
        for (const auto &[mono, c] : a.coeffs_)
            r.add_term(mono.p, mono.q, s * c);
        return r;
    }

    /// The symbol expressed in new variables, where (p, q) = map (pn, qn).
    /// Evaluating the result at (pn, qn) equals evaluating this symbol at
    /// map(pn, qn), i.e. the symbol transforms as a scalar.
    PolySymbol compose_linear(const Mat2 &map) const {
        PolySymbol r;
        for (const auto &[mono, c] : coeffs_) {
            // (a pn + b qn)^m (c pn + d qn)^n
            const int m = mono.p, n = mono.q;
            for (int i = 0; i <= m; ++i)
                for (int j = 0; j <= n; ++j) {
                    const double w = detail::binomial(m, i) * detail::binomial(n, j) *
                                     ipow(map.a, i) * ipow(map.b, m - i) * ipow(map.c, j) *
                                     ipow(map.d, n - j);
                    if (w != 0.0)
                        r.add_term(i + j, (m - i) + (n - j), c * w);
                }
        }
        return r;
    }

    bool operator==(const PolySymbol &) const = default;

    /// Canonical text form, parseable by `parse`.
    std::string to_string() const {
        if (coeffs_.empty())
            return "0";
        std::ostringstream os;
        os.precision(17);
        bool first = true;
        for (const auto &[mono, c] : coeffs_) {
            double mag = c;
            if (first) {
                first = false;
            } else {
                os << (c < 0 ? " - " : " + ");
                mag = std::abs(c);
            }
            os << mag;
            if (mono.p > 0)
                os << "*p^" << mono.p;
            if (mono.q > 0)
                os << "*q^" << mono.q;
        }
        return os.str();
    }

    static PolySymbol parse(std::string_view text);

    static double ipow(double x, int k) noexcept {
        double r = 1.0;
        for (; k > 0; --k)
            r *= x;
        return r;
    }

  private:
    Coefficients coeffs_;
};

namespace detail {

class SymbolParser {
  public:
    explicit SymbolParser(std::string_view s) : s_(s) {}

    PolySymbol run() {
        PolySymbol out;
        skip_ws();
        if (at_end())
            fail("empty symbol");
        bool first = true;
        while (!at_end()) {
            double sign = 1.0;
            if (peek() == '+' || peek() == '-') {
                sign = get() == '-' ? -1.0 : 1.0;
                skip_ws();
            } else if (!first) {
                fail("expected '+' or '-'");
            }
            first = false;
            term(out, sign);
            skip_ws();
        }
        return out;
    }

  private:
    void term(PolySymbol &out, double sign) {
        double coeff = sign;
        int m = 0, n = 0;
        bool any = false;
        for (;;) {
            skip_ws();
            if (at_end())
                fail("dangling operator");
            const char c = peek();
            if (c == 'p' || c == 'q') {
                get();
                int e = 1;
                skip_ws();
                if (!at_end() && peek() == '^') {
                    get();
                    skip_ws();
                    e = exponent();
                }
                (c == 'p' ? m : n) += e;
            } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                coeff *= number();
            } else {
                fail(std::string("unexpected character '") + c + "'");
            }
            any = true;
            skip_ws();
            if (at_end() || peek() != '*')
                break;
            get();
        }
        if (!any)
            fail("empty term");
        out.add_term(m, n, coeff);
    }

    double number() {
        const char *begin = s_.data() + pos_;
        const char *end = s_.data() + s_.size();
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc() || ptr == begin)
            fail("malformed number");
        pos_ += static_cast<std::size_t>(ptr - begin);
        return v;
    }

    int exponent() {
        const char *begin = s_.data() + pos_;
        const char *end = s_.data() + s_.size();
        int v = 0;
        auto [ptr, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc() || ptr == begin || v < 0)
            fail("malformed exponent");
        pos_ += static_cast<std::size_t>(ptr - begin);
        return v;
    }

    [[noreturn]] void fail(const std::string &msg) const {
        throw ParseError("symbol parse error at offset " + std::to_string(pos_) + ": " + msg);
    }

    void skip_ws() {
        while (!at_end() && std::isspace(static_cast<unsigned char>(peek())))
            ++pos_;
    }
    bool at_end() const { return pos_ >= s_.size(); }
    char peek() const { return s_[pos_]; }
    char get() { return s_[pos_++]; }

    std::string_view s_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline PolySymbol PolySymbol::parse(std::string_view text) {
    return detail::SymbolParser(text).run();
}

/// Dense, allocation-free evaluator for hot loops.
class SymbolEvaluator {
  public:
    explicit SymbolEvaluator(const PolySymbol &h) : deg_(h.degree()) {
        const int n = deg_ + 1;
        table_.assign(static_cast<std::size_t>(n * n), 0.0);
        for (const auto &[mono, c] : h.coefficients())
            table_[static_cast<std::size_t>(mono.p * n + mono.q)] = c;
        zero_ = h.is_zero();
    }

    bool is_zero() const noexcept { return zero_; }

    double operator()(double p, double q) const noexcept {
        const int n = deg_ + 1;
        std::array<double, kMaxSymbolDegree + 1> qp{};
        qp[0] = 1.0;
        for (int k = 1; k < n; ++k)
            qp[static_cast<std::size_t>(k)] = qp[static_cast<std::size_t>(k - 1)] * q;
        double acc = 0.0;
        double pp = 1.0;
        for (int m = 0; m < n; ++m) {
            double row = 0.0;
            for (int k = 0; k + m < n; ++k)
                row += table_[static_cast<std::size_t>(m * n + k)] * qp[static_cast<std::size_t>(k)];
            acc += row * pp;
            pp *= p;
        }
        return acc;
    }

  private:
    int deg_;
    bool zero_ = true;
    std::vector<double> table_;
};

} // namespace metriq
