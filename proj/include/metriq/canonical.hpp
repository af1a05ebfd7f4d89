#pragma once

// Linear canonical (det = 1) coordinate changes of the phase plane and their
// quadratic generating functions.

#include <cmath>
#include <string>

#include "metriq/error.hpp"
#include "metriq/poly.hpp"

namespace metriq {

/// (p, q) -> (pb, qb) = S (p, q) with det S = 1, together with the quadratic
/// G(pb, qb) satisfying dG = p dq - pb dqb.
class CoordMap {
  public:
    explicit CoordMap(const Mat2 &forward) : fwd_(forward) {
        const double det = forward.det();
        if (!std::isfinite(det) || std::abs(det) < 1e-300)
            throw SingularMapError("coordinate map is singular");
        if (std::abs(det - 1.0) > 1e-12)
            throw ContractViolation("coordinate map is not symplectic: det = " + std::to_string(det));
        inv_ = forward.inverse();
        // With (p, q) = inv (pb, qb) = [[a, b], [c, d]] (pb, qb) and ad - bc = 1,
        // p dq - pb dqb = d(ac pb^2 / 2 + bd qb^2 / 2 + bc pb qb).
        g_pp_ = 0.5 * inv_.a * inv_.c;
        g_qq_ = 0.5 * inv_.b * inv_.d;
        g_pq_ = inv_.b * inv_.c;
    }

    static CoordMap identity() { return CoordMap(Mat2{}); }
    /// pb = p / lambda, qb = lambda q.
    static CoordMap scaling(double lambda) { return CoordMap(Mat2{1.0 / lambda, 0.0, 0.0, lambda}); }
    /// Rotation of the (p, q) plane by angle theta.
    static CoordMap rotation(double theta) {
        const double c = std::cos(theta), s = std::sin(theta);
        return CoordMap(Mat2{c, -s, s, c});
    }

    const Mat2 &matrix() const noexcept { return fwd_; }
    const Mat2 &inverse_matrix() const noexcept { return inv_; }
    CoordMap inverse() const { return CoordMap(inv_); }

    std::array<double, 2> forward(double p, double q) const noexcept { return fwd_.apply(p, q); }
    std::array<double, 2> backward(double pb, double qb) const noexcept { return inv_.apply(pb, qb); }

    double generator(double pb, double qb) const noexcept {
        return g_pp_ * pb * pb + g_qq_ * qb * qb + g_pq_ * pb * qb;
    }

    /// Hamiltonian in the new coordinates, Hb(pb, qb) = H(p(pb, qb), q(pb, qb)).
    PolySymbol transform_symbol(const PolySymbol &h) const { return h.compose_linear(inv_); }

    /// Largest finite-difference mismatch between grad G and the coefficients
    /// of p dq - pb dqb, sampled on an n x n grid over [-extent, extent]^2.
    double generator_residual(double extent = 3.0, int n = 9, double step = 1e-4) const {
        double worst = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double pb = -extent + 2.0 * extent * i / (n - 1);
                const double qb = -extent + 2.0 * extent * j / (n - 1);
                const double p = inv_.a * pb + inv_.b * qb;
                const double dg_dp = (generator(pb + step, qb) - generator(pb - step, qb)) / (2 * step);
                const double dg_dq = (generator(pb, qb + step) - generator(pb, qb - step)) / (2 * step);
                worst = std::max(worst, std::abs(dg_dp - p * inv_.c));
                worst = std::max(worst, std::abs(dg_dq - (p * inv_.d - pb)));
            }
        return worst;
    }

  private:
    Mat2 fwd_;
    Mat2 inv_;
    double g_pp_ = 0, g_qq_ = 0, g_pq_ = 0;
};

} // namespace metriq
