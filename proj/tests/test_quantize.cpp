#include <random>

#include <gtest/gtest.h>

#include "metriq/quantize.hpp"

using namespace metriq;

namespace {

StateVector random_state(const HilbertDim &s, int support, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n;
    Vector v = Vector::Zero(s.dim());
    for (int k = 0; k < support; ++k)
        v(k) = cplx(n(gen), n(gen));
    return StateVector(s, v).normalized_copy();
}

RealVector low_spectrum(const OperatorMatrix &h, int count) {
    return hermitian_eig(h).values.head(count);
}

} // namespace

TEST(Antinormal, ConstantAndLinearSymbols) {
    const HilbertDim s(32, 0.7);
    EXPECT_LE(max_abs(antinormal_quantize(PolySymbol::constant(1.0), s).entries() - Matrix::Identity(32, 32)),
              1e-15);
    const CanonicalPair qp = make_canonical_pair(s);
    EXPECT_LE(max_abs(antinormal_quantize(PolySymbol::parse("q"), s).entries() - qp.Q.entries()), 1e-14);
    EXPECT_LE(max_abs(antinormal_quantize(PolySymbol::parse("p"), s).entries() - qp.P.entries()), 1e-14);
}

TEST(Antinormal, OscillatorIsShiftedNumberOperator) {
    for (double hbar : {0.5, 1.0, 2.0}) {
        const HilbertDim s(64, hbar);
        const OperatorMatrix h = antinormal_quantize(PolySymbol::harmonic(), s);
        const OperatorMatrix a = make_ladder(s);
        const Matrix expect = hbar * (a.adjoint() * a).entries() + hbar * Matrix::Identity(64, 64);
        EXPECT_LE(max_abs(h.entries() - expect), 1e-12);
        const RealVector ev = low_spectrum(h, 32);
        for (int n = 0; n < 32; ++n)
            EXPECT_NEAR(ev(n), hbar * (n + 1), 1e-8);
    }
}

TEST(Antinormal, LinearityAndHermiticity) {
    const HilbertDim s(40);
    const PolySymbol h1 = PolySymbol::parse("0.3*p^3*q - q^2 + 0.7*p");
    const PolySymbol h2 = PolySymbol::parse("p^2*q^2 - 0.25*q^4");
    const Matrix lhs = antinormal_quantize(2.0 * h1 + (-0.5) * h2, s).entries();
    const Matrix rhs = 2.0 * antinormal_quantize(h1, s).entries() - 0.5 * antinormal_quantize(h2, s).entries();
    EXPECT_LE(max_abs(lhs - rhs), 1e-12 * max_abs(lhs));
    const OperatorMatrix op = antinormal_quantize(h1, s);
    EXPECT_TRUE(op.hermitian());
}

TEST(Antinormal, CapacityPrecondition) {
    EXPECT_THROW(antinormal_quantize(PolySymbol::parse("q^4"), HilbertDim(15)), CapacityError);
    EXPECT_NO_THROW(antinormal_quantize(PolySymbol::parse("q^4"), HilbertDim(16)));
}

TEST(Antinormal, ClosedFormMatchesQuadrature) {
    const HilbertDim s(64);
    const QuadratureGrid grid{14.0, 280};
    const SymbolQuadrature ho = antinormal_quantize_quadrature(PolySymbol::harmonic(), s, grid);
    EXPECT_FALSE(ho.under_resolved) << ho.warning;
    for (int n = 0; n < 16; ++n)
        EXPECT_NEAR(ho.op(n, n).real(), n + 1.0, 1e-6);

    const QuadratureGrid wide{16.0, 320};
    for (const char *text : {"q^4", "0.5*p^2 + 0.5*q^2 + 0.1*q^4", "p*q", "p^3*q - 0.2*p^2*q^2"}) {
        const PolySymbol h = PolySymbol::parse(text);
        const Matrix exact = antinormal_quantize(h, s).entries().topLeftCorner(16, 16);
        const Matrix quad = antinormal_quantize_quadrature(h, s, wide).op.entries().topLeftCorner(16, 16);
        EXPECT_LE(max_abs(exact - quad), 1e-6) << text;
    }
}

TEST(Antinormal, QuadratureFlagsSmallRadius) {
    const SymbolQuadrature q =
        antinormal_quantize_quadrature(PolySymbol::parse("q^4"), HilbertDim(16), QuadratureGrid{5.0, 100});
    EXPECT_TRUE(q.under_resolved);
}

TEST(PhaseMetric, Invariants) {
    EXPECT_THROW(PhaseMetric(0.0, 0.0, 1.0), ContractViolation);
    EXPECT_THROW(PhaseMetric(1.0, 1.0, 1.0), ContractViolation);
    EXPECT_THROW(PhaseMetric(1.0, 0.0, -1.0), ContractViolation);
    const PhaseMetric g = PhaseMetric::flat(2.0);
    EXPECT_EQ(g.line_element(1.0, 1.0), 4.0);
}

TEST(PhaseMetric, Transforms) {
    const PhaseMetric g = PhaseMetric::flat(1.0);
    const PhaseMetric same = metric_transform(g, CoordMap::identity());
    EXPECT_EQ(same.A, 1.0);
    EXPECT_EQ(same.B, 0.0);
    EXPECT_EQ(same.C, 1.0);

    const double lambda = 1.5;
    const PhaseMetric sc = metric_transform(g, CoordMap::scaling(lambda));
    EXPECT_NEAR(sc.A, lambda * lambda, 1e-15);
    EXPECT_NEAR(sc.B, 0.0, 1e-15);
    EXPECT_NEAR(sc.C, 1.0 / (lambda * lambda), 1e-15);

    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int k = 0; k < 20; ++k) {
        const double a = u(gen), b = u(gen), c = u(gen);
        if (std::abs(a) < 0.2)
            continue;
        const CoordMap m(Mat2{a, b, c, (1.0 + b * c) / a});
        const PhaseMetric g0(1.3, 0.4, 0.9);
        const PhaseMetric back = metric_transform(metric_transform(g0, m), m.inverse());
        EXPECT_NEAR(back.A, g0.A, 1e-12 * (1 + std::abs(a * a)) * 10);
        EXPECT_NEAR(back.B, g0.B, 1e-11);
        EXPECT_NEAR(back.C, g0.C, 1e-11);
    }
}

TEST(FluctuationMetric, VacuumAndFirstExcited) {
    const HilbertDim s(64);
    const PhaseMetric g0 = fluctuation_metric(StateVector::basis(s, 0));
    EXPECT_NEAR(g0.A, 0.5, 1e-12);
    EXPECT_NEAR(g0.B, 0.0, 1e-12);
    EXPECT_NEAR(g0.C, 0.5, 1e-12);
    const PhaseMetric g1 = fluctuation_metric(StateVector::basis(s, 1));
    EXPECT_NEAR(g1.A, 1.5, 1e-12);
    EXPECT_NEAR(g1.B, 0.0, 1e-12);
    EXPECT_NEAR(g1.C, 1.5, 1e-12);
}

TEST(FluctuationMetric, ProportionalToHbar) {
    for (double hbar : {0.25, 0.5, 1.0, 2.0, 4.0}) {
        const PhaseMetric g = fluctuation_metric(StateVector::basis(HilbertDim(32, hbar), 0));
        EXPECT_NEAR(g.A / hbar, 0.5, 1e-10);
        EXPECT_NEAR(g.C / hbar, 0.5, 1e-10);
        EXPECT_NEAR(g.B, 0.0, 1e-12);
    }
}

TEST(FluctuationMetric, UncertaintyFloor) {
    const HilbertDim s(48);
    for (unsigned seed = 0; seed < 50; ++seed) {
        const PhaseMetric g = fluctuation_metric(random_state(s, 12, seed));
        EXPECT_GE(g.determinant(), 0.25 - 1e-10);
    }
}

// Fubini-Study metric of the family U[p,q]|psi> by finite differences of the
// coherent states: A = hbar^2 g_pp, B = -hbar^2 g_pq, C = hbar^2 g_qq.
TEST(FluctuationMetric, AgreesWithFubiniStudyOfTheFamily) {
    const HilbertDim s(40);
    const StateVector psi = random_state(s, 6, 42);
    const FiducialSpec fid = FiducialSpec::custom(psi);
    const CoherentLabel at{0.4, -0.3};
    const double e = 1e-4;
    auto state = [&](double dp, double dq) { return coherent_state({at.p + dp, at.q + dq}, fid, s).amps(); };
    const Vector v = state(0, 0);
    const Vector dp = (state(e, 0) - state(-e, 0)) / (2 * e);
    const Vector dq = (state(0, e) - state(0, -e)) / (2 * e);
    auto fs = [&](const Vector &x, const Vector &y) { return (x.dot(y) - x.dot(v) * v.dot(y)).real(); };
    const PhaseMetric g = fluctuation_metric(psi, at);
    EXPECT_NEAR(g.A, fs(dp, dp), 1e-7);
    EXPECT_NEAR(g.C, fs(dq, dq), 1e-7);
    EXPECT_NEAR(g.B, -fs(dp, dq), 1e-7);
    EXPECT_GT(std::abs(g.B), 1e-3); // the check is not vacuous
}

TEST(FluctuationMetric, ConstantAcrossLabels) {
    const HilbertDim s(64);
    const StateVector v0 = StateVector::basis(s, 0);
    const PhaseMetric g0 = fluctuation_metric(v0);
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int k = 0; k < 10; ++k) {
        const PhaseMetric g = fluctuation_metric(v0, {u(gen), u(gen)});
        EXPECT_NEAR(g.A, g0.A, 1e-8);
        EXPECT_NEAR(g.B, g0.B, 1e-8);
        EXPECT_NEAR(g.C, g0.C, 1e-8);
    }
}

TEST(FluctuationMetric, RequiresUnitVector) {
    const HilbertDim s(8);
    EXPECT_THROW(fluctuation_metric(StateVector(s, 2.0 * StateVector::basis(s, 0).amps())), ContractViolation);
}
