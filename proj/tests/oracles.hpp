#pragma once

// Reference computations used only by the tests. None of them call into the
// library code they are checking.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using cplx = std::complex<double>;

/// Position-space wavefunction of exp(-iqP/hbar) exp(ipQ/hbar)|0>.
inline cplx coherent_wavefunction(double x, double p, double q, double hbar) {
    const double norm = std::pow(std::numbers::pi * hbar, -0.25);
    const double y = x - q;
    return norm * std::exp(-y * y / (2.0 * hbar)) * std::polar(1.0, p * y / hbar);
}

/// <p2,q2|p1,q1> by trapezoidal quadrature of the wavefunctions on a wide grid.
inline cplx overlap_quadrature(double p2, double q2, double p1, double q1, double hbar,
                               int nodes = 20001) {
    const double lo = std::min(q1, q2) - 14.0 * std::sqrt(hbar);
    const double hi = std::max(q1, q2) + 14.0 * std::sqrt(hbar);
    const double h = (hi - lo) / (nodes - 1);
    cplx acc = 0.0;
    for (int i = 0; i < nodes; ++i) {
        const double x = lo + h * i;
        const double w = (i == 0 || i == nodes - 1) ? 0.5 : 1.0;
        acc += w * std::conj(coherent_wavefunction(x, p2, q2, hbar)) * coherent_wavefunction(x, p1, q1, hbar);
    }
    return acc * h;
}

/// Quadratic Hamiltonian  pp p^2 + pq p q + qq q^2 + e.
struct Quadratic {
    double pp = 0, pq = 0, qq = 0, e = 0;
};

/// Exact expectation, over the discrete pinned Brownian bridge with L steps,
/// of exp{(i/hbar)(sum midpoint p dq - sum H(midpoint) dt)}, multiplied by
/// 2 pi hbar e^{nu T/2hbar} times the pinned mass. This is what the Monte
/// Carlo estimator converges to as n -> infinity at fixed (nu, L).
///
/// The path variables form a Gaussian with a block tridiagonal complex
/// symmetric precision matrix whose real part is positive definite. Block
/// elimination keeps every pivot in that class, so the principal logarithm of
/// each pivot eigenvalue gives the branch of sqrt(det) continuous from the
/// real (H = 0, hbar -> infinity) case.
inline cplx discrete_bridge_expectation(double nu, double T, int L, double hbar, const Quadratic &h,
                                        double ap, double aq, double bp, double bq) {
    using M2 = Eigen::Matrix2cd;
    using V2 = Eigen::Vector2cd;
    using M4 = Eigen::Matrix4cd;
    const double dt = T / L;
    const cplx i(0, 1);

    auto segment = [&](bool with_action) {
        M4 w = M4::Zero();
        const double c = 1.0 / (nu * dt);
        for (int k : {0, 1}) {
            w(k, k) += c;
            w(k + 2, k + 2) += c;
            w(k, k + 2) -= c;
            w(k + 2, k) -= c;
        }
        if (!with_action)
            return w;
        // u = (p_l, q_l, p_{l+1}, q_{l+1}); exponent +(i/hbar) u^T B u
        Eigen::Matrix4d b = Eigen::Matrix4d::Zero();
        b(0, 3) += 0.5;
        b(0, 1) -= 0.5;
        b(2, 3) += 0.5;
        b(2, 1) -= 0.5;
        Eigen::Vector4d mp(0.5, 0, 0.5, 0), mq(0, 0.5, 0, 0.5);
        b -= dt * (h.pp * mp * mp.transpose() + h.pq * mp * mq.transpose() + h.qq * mq * mq.transpose());
        return M4(w - (i / hbar) * (b + b.transpose()).cast<cplx>());
    };

    // log of the Gaussian integral over the interior, up to K-independent constants
    auto log_gauss = [&](const M4 &seg) {
        const M2 d_end_a = seg.topLeftCorner<2, 2>();
        const M2 d_end_b = seg.bottomRightCorner<2, 2>();
        const M2 d = d_end_a + d_end_b; // interior diagonal block
        const M2 e = seg.topRightCorner<2, 2>(); // coupling l -> l+1
        const V2 a(ap, aq), b(bp, bq);
        const int n = L - 1;
        std::vector<M2> s_inv(n);
        std::vector<V2> g(n);
        cplx logdet = 0.0;
        auto log_det2 = [](const M2 &m) {
            const cplx tr = m.trace(), det = m.determinant();
            const cplx disc = std::sqrt(tr * tr / 4.0 - det);
            return std::log(tr / 2.0 + disc) + std::log(tr / 2.0 - disc);
        };
        V2 h1 = -(e.transpose() * a);
        V2 hn = -(e * b);
        for (int l = 0; l < n; ++l) {
            M2 s = d;
            V2 rhs = V2::Zero();
            if (l == 0)
                rhs += h1;
            if (l == n - 1)
                rhs += hn;
            if (l > 0) {
                const M2 m = e.transpose() * s_inv[l - 1];
                s -= m * e;
                rhs -= m * g[l - 1];
            }
            logdet += log_det2(s);
            s_inv[l] = s.inverse();
            g[l] = rhs;
        }
        std::vector<V2> y(n);
        y[n - 1] = s_inv[n - 1] * g[n - 1];
        for (int l = n - 2; l >= 0; --l)
            y[l] = s_inv[l] * (g[l] - e * y[l + 1]);
        const cplx hy = (h1.transpose() * y[0])(0) + (hn.transpose() * y[n - 1])(0);
        const cplx bnd = (a.transpose() * d_end_a * a)(0) + (b.transpose() * d_end_b * b)(0);
        return -0.5 * bnd + 0.5 * hy - 0.5 * logdet;
    };

    const cplx lr = log_gauss(segment(true)) - log_gauss(segment(false));
    const double dp = bp - ap, dq = bq - aq;
    const double mass = std::exp(-(dp * dp + dq * dq) / (2.0 * nu * T)) / (2.0 * std::numbers::pi * nu * T);
    return 2.0 * std::numbers::pi * hbar * std::exp(nu * T / (2.0 * hbar)) * mass * std::exp(lr) *
           std::polar(1.0, -h.e * T / hbar);
}

} // namespace oracle
