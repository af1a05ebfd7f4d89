#pragma once

// Antinormal-ordering quantization of polynomial symbols, the constant phase
// metric, and the fluctuation metric induced by a state.

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "metriq/canonical.hpp"
#include "metriq/coherent.hpp"
#include "metriq/fock.hpp"
#include "metriq/poly.hpp"

namespace metriq {

/// Constant metric A dp^2 + 2B dp dq + C dq^2.
struct PhaseMetric {
    double A = 1.0;
    double B = 0.0;
    double C = 1.0;

    PhaseMetric() = default;
    PhaseMetric(double a, double b, double c) : A(a), B(b), C(c) {
        if (!(A > 0.0) || !(C > 0.0) || !(A * C > B * B))
            throw ContractViolation("metric must satisfy A > 0, C > 0, AC > B^2");
    }

    /// hbar (dp^2 + dq^2).
    static PhaseMetric flat(double hbar) { return {hbar, 0.0, hbar}; }

    double determinant() const noexcept { return A * C - B * B; }
    double line_element(double dp, double dq) const noexcept {
        return A * dp * dp + 2.0 * B * dp * dq + C * dq * dq;
    }
};

/// The metric expressed in the coordinates produced by `map`, i.e. J^T g J
/// with J the Jacobian of (pb, qb) -> (p, q).
inline PhaseMetric metric_transform(const PhaseMetric &g, const CoordMap &map) {
    const Mat2 &j = map.inverse_matrix();
    // g in (p, q) order: [[A, B], [B, C]]
    const Mat2 gm{g.A, g.B, g.B, g.C};
    const Mat2 r = j.transpose() * gm * j;
    return {r.a, 0.5 * (r.b + r.c), r.d};
}

namespace detail {

/// p^m q^n = (-i)^m (hbar/2)^((m+n)/2) (z - zb)^m (z + zb)^n, expanded with
/// integer coefficients; key (j, k) stands for z^j zb^k.
inline std::map<std::pair<int, int>, std::int64_t> z_expansion(int m, int n) {
    std::map<std::pair<int, int>, std::int64_t> out;
    for (int i = 0; i <= m; ++i)
        for (int j = 0; j <= n; ++j) {
            auto c = static_cast<std::int64_t>(binomial(m, i)) * static_cast<std::int64_t>(binomial(n, j));
            if ((m - i) % 2 == 1)
                c = -c;
            out[{i + j, (m - i) + (n - j)}] += c;
        }
    return out;
}

inline cplx minus_i_pow(int m) {
    switch (m % 4) {
    case 0:
        return {1, 0};
    case 1:
        return {0, -1};
    case 2:
        return {-1, 0};
    default:
        return {0, 1};
    }
}

} // namespace detail

/// Operator obtained by writing the symbol in z = (q + ip)/sqrt(2 hbar), zb,
/// and replacing z^j zb^k by a^j (a^dagger)^k. Equivalent to the integral of
/// H(p,q) |p,q><p,q| dp dq / (2 pi hbar) over vacuum coherent states.
inline OperatorMatrix antinormal_quantize(const PolySymbol &sym, const HilbertDim &space) {
    const int deg = sym.degree();
    const int d = space.dim();
    if (d < 4 * deg)
        throw CapacityError("antinormal quantization of degree " + std::to_string(deg) +
                            " needs dim >= " + std::to_string(4 * deg));
    // a^j (a^dagger)^k is exact on the first d levels when built with deg extra levels.
    const int w = d + deg;
    const Matrix a = make_ladder(HilbertDim(std::max(w, 2), space.hbar())).entries();
    const Matrix ad = a.adjoint();
    std::vector<Matrix> a_pow(deg + 1), ad_pow(deg + 1);
    a_pow[0] = ad_pow[0] = Matrix::Identity(a.rows(), a.cols());
    for (int k = 1; k <= deg; ++k) {
        a_pow[k] = a_pow[k - 1] * a;
        ad_pow[k] = ad_pow[k - 1] * ad;
    }

    // Collect the complex coefficient of each z^j zb^k before building operators.
    std::map<std::pair<int, int>, cplx> zcoef;
    for (const auto &[mono, c] : sym.coefficients()) {
        const cplx pre = c * detail::minus_i_pow(mono.p) * std::pow(space.hbar() / 2.0, 0.5 * mono.degree());
        for (const auto &[jk, n] : detail::z_expansion(mono.p, mono.q))
            if (n != 0)
                zcoef[jk] += pre * static_cast<double>(n);
    }

    Matrix acc = Matrix::Zero(a.rows(), a.cols());
    for (const auto &[jk, c] : zcoef)
        acc += c * (a_pow[jk.first] * ad_pow[jk.second]);
    OperatorMatrix out(space, acc.topLeftCorner(d, d));
    return out.hermitian_part();
}

struct SymbolQuadrature {
    OperatorMatrix op;
    bool under_resolved = false;
    std::string warning;
};

/// Brute-force quantizer: sum of H(p,q) |p,q><p,q| over a midpoint grid with
/// the vacuum fiducial.
inline SymbolQuadrature antinormal_quantize_quadrature(const PolySymbol &sym, const HilbertDim &space,
                                                       const QuadratureGrid &grid,
                                                       const Execution &exec = {}) {
    const SymbolEvaluator h(sym);
    QuadratureResult q = coherent_quadrature(
        FiducialSpec::vacuum(), space, grid, [&](double p, double x) { return h(p, x); }, exec);
    SymbolQuadrature out{OperatorMatrix(space, q.matrix).hermitian_part(), q.under_resolved, q.warning};
    double scale = 0.0;
    for (const auto &[mono, c] : sym.coefficients())
        scale += std::abs(c) * PolySymbol::ipow(grid.radius, mono.degree());
    const double tail = scale * std::exp(-grid.radius * grid.radius / (4.0 * space.hbar()));
    if (!out.under_resolved && tail > 1e-6) {
        out.under_resolved = true;
        out.warning = "radius too small for the growth of the symbol";
    }
    return out;
}

/// Metric A = <(dQ)^2>, B = <dP dQ + dQ dP>/2, C = <(dP)^2> in the state
/// exp(-iqP/hbar) exp(ipQ/hbar)|psi>.
inline PhaseMetric fluctuation_metric(const StateVector &psi, const CoherentLabel &at = {}) {
    if (!psi.normalized())
        throw ContractViolation("fluctuation_metric requires a unit vector");
    const HilbertDim &space = psi.space();
    const int d = space.dim();
    int top = 0;
    for (int n = d - 1; n > 0; --n)
        if (std::abs(psi[n]) > 1e-15) {
            top = n;
            break;
        }
    // Second moments reach two levels above the support, so pad beyond it.
    const HilbertDim work(std::max(padded_dim(d, top, label_amplitude(at, space.hbar())), d + 2),
                          space.hbar());
    Vector v = Vector::Zero(work.dim());
    v.head(d) = psi.amps();
    if (at.p != 0.0 || at.q != 0.0)
        v = DisplacementEngine::get(work)->displace(at, v);

    const CanonicalPair qp = make_canonical_pair(work);
    const Vector qv = qp.Q.entries() * v;
    const Vector pv = qp.P.entries() * v;
    const double mq = v.dot(qv).real();
    const double mp = v.dot(pv).real();
    const Vector dq = qv - mq * v;
    const Vector dp = pv - mp * v;
    const double a = dq.squaredNorm();
    const double c = dp.squaredNorm();
    const double b = dp.dot(dq).real(); // Re <dP dQ> = <dP dQ + dQ dP>/2
    return {a, b, c};
}

} // namespace metriq
