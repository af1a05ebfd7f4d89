#include <random>

#include <gtest/gtest.h>

#include "metriq/coherent.hpp"
#include "oracles.hpp"

using namespace metriq;

namespace {

std::vector<std::pair<CoherentLabel, CoherentLabel>> random_pairs(int n, double bound, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<std::pair<CoherentLabel, CoherentLabel>> out;
    for (int k = 0; k < n; ++k)
        out.push_back({{u(gen), u(gen)}, {u(gen), u(gen)}});
    return out;
}

// Random unit vector shifted so that <Q> = <P> = 0.
StateVector centred_fiducial(const HilbertDim &s, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n;
    Vector v = Vector::Zero(s.dim());
    for (int k = 0; k < 5; ++k)
        v(k) = cplx(n(gen), n(gen));
    StateVector eta = StateVector(s, v).normalized_copy();
    const CanonicalPair qp = make_canonical_pair(s);
    const double mq = eta.expectation(qp.Q).real();
    const double mp = eta.expectation(qp.P).real();
    // U[-mp, -mq] moves the means to the origin; pad to keep the cutoff away
    const HilbertDim wide(padded_dim(s.dim(), 4, label_amplitude({mp, mq}, s.hbar())), s.hbar());
    Vector big = Vector::Zero(wide.dim());
    big.head(s.dim()) = eta.amps();
    big = DisplacementEngine::get(wide)->displace({-mp, -mq}, big);
    return StateVector(s, big.head(s.dim())).normalized_copy();
}

} // namespace

TEST(Weyl, ZeroLabelIsIdentity) {
    const HilbertDim s(32);
    EXPECT_LE(max_abs(weyl({0, 0}, s).entries() - Matrix::Identity(32, 32)), 1e-13);
}

TEST(Weyl, Unitary) {
    const HilbertDim s(64);
    const Matrix u = weyl({0.7, -0.3}, s).entries();
    EXPECT_LE(max_abs(u.adjoint() * u - Matrix::Identity(64, 64)), 1e-10);
}

TEST(Weyl, LabelRadiusEnforced) {
    const HilbertDim s(64);
    EXPECT_THROW(weyl({11.0, 0.0}, s), LabelRadiusError);
    EXPECT_THROW(weyl({0.0, std::numeric_limits<double>::quiet_NaN()}, s), LabelRadiusError);
    EXPECT_NO_THROW(weyl({11.0, 0.0}, s, 20.0));
}

TEST(Weyl, OrderingConventionPinned) {
    // U[p,q] = exp(-iqP) exp(ipQ), not the symmetric displacement
    const HilbertDim s(48);
    const CoherentLabel l{0.8, 0.5};
    const StateVector a = coherent_state(l, FiducialSpec::vacuum(), s);
    // the vacuum amplitude carries the ordering phase e^{-ipq/2hbar} relative to |<0|p,q>|
    const cplx c0 = a[0];
    EXPECT_NEAR(std::arg(c0), -l.p * l.q / 2.0, 1e-10);
    EXPECT_NEAR(std::abs(c0), std::exp(-(l.p * l.p + l.q * l.q) / 4.0), 1e-10);
    // the symmetric form would give a real vacuum amplitude
    EXPECT_NEAR(std::arg(symmetric_weyl(l, HilbertDim(120)).entries()(0, 0)), 0.0, 1e-8);
}

TEST(WeylCompose, TrivialSecondFactor) {
    const HilbertDim s(64);
    EXPECT_LE(weyl_compose_check({1.0, -0.5}, {0.0, 0.0}, s), 1e-12);
}

TEST(WeylCompose, UnitLabels) {
    const HilbertDim s(128);
    // ordered product: U[1,0] U[0,1] = e^{i} U[1,1]
    EXPECT_LE(weyl_compose_check({1, 0}, {0, 1}, s), 1e-8);
    EXPECT_NEAR(std::arg(composition_phase({1, 0}, {0, 1}, 1.0, WeylConvention::Ordered)), 1.0, 1e-15);
    // symmetric displacements: the half-angle phase e^{i/2}
    EXPECT_LE(weyl_compose_check({1, 0}, {0, 1}, s, WeylConvention::Symmetric), 1e-8);
    EXPECT_NEAR(std::arg(composition_phase({1, 0}, {0, 1}, 1.0, WeylConvention::Symmetric)), 0.5, 1e-15);
}

TEST(WeylCompose, RandomPairsBothConventions) {
    const HilbertDim s(128);
    for (const auto &[l1, l2] : random_pairs(25, 2.0, 9)) {
        EXPECT_LE(weyl_compose_check(l1, l2, s), 1e-8);
        EXPECT_LE(weyl_compose_check(l1, l2, s, WeylConvention::Symmetric), 1e-8);
    }
}

TEST(WeylCompose, SwapOrderPhase) {
    const HilbertDim s(64), big(160);
    const auto eng = DisplacementEngine::get(big);
    for (const auto &[l1, l2] : random_pairs(10, 1.5, 4)) {
        const Matrix a = eng->weyl_block(l1, 64, 160) * eng->weyl_block(l2, 160, 64);
        const Matrix b = eng->weyl_block(l2, 64, 160) * eng->weyl_block(l1, 160, 64);
        const cplx ph = std::polar(1.0, l1.p * l2.q - l1.q * l2.p);
        EXPECT_LE(max_abs(a - ph * b), 1e-8);
    }
}

TEST(CoherentState, VacuumLabelIsGroundState) {
    const HilbertDim s(16);
    const StateVector v = coherent_state({0, 0}, FiducialSpec::vacuum(), s);
    EXPECT_LE((v.amps() - StateVector::basis(s, 0).amps()).norm(), 1e-14);
}

TEST(CoherentState, UnitNormAndRadiusGuard) {
    const HilbertDim s(64);
    for (const auto &[l, unused] : random_pairs(20, 3.0, 1)) {
        (void)unused;
        EXPECT_NEAR(coherent_state(l, FiducialSpec::vacuum(), s).norm(), 1.0, 1e-12);
    }
    EXPECT_THROW(coherent_state({9.0, 9.0}, FiducialSpec::vacuum(), HilbertDim(16)), LabelRadiusError);
}

TEST(CoherentState, ContinuitySlope) {
    const HilbertDim s(64);
    const FiducialSpec vac = FiducialSpec::vacuum();
    const Vector base = coherent_state({0.1, -0.2}, vac, s).amps();
    double worst = 0.0;
    for (double h : {1e-2, 1e-3, 1e-4})
        for (const auto &[dp, dq] : {std::pair{h, 0.0}, {0.0, h}, {h, -h}}) {
            const Vector moved = coherent_state({0.1 + dp, -0.2 + dq}, vac, s).amps();
            worst = std::max(worst, (moved - base).norm() / (std::abs(dp) + std::abs(dq)));
        }
    EXPECT_LE(worst, 2.0);
    EXPECT_GT(worst, 0.1);
}

TEST(CoherentState, MeanValues) {
    const HilbertDim s(64);
    const CanonicalPair qp = make_canonical_pair(s);
    for (const auto &[l, unused] : random_pairs(10, 2.0, 2)) {
        (void)unused;
        const StateVector v = coherent_state(l, FiducialSpec::vacuum(), s);
        EXPECT_NEAR(v.expectation(qp.Q).real(), l.q, 1e-8);
        EXPECT_NEAR(v.expectation(qp.P).real(), l.p, 1e-8);
    }
}

TEST(CoherentState, MeanValuesForGeneralFiducial) {
    const HilbertDim s(64);
    const CanonicalPair qp = make_canonical_pair(s);
    const StateVector eta = centred_fiducial(s, 17);
    ASSERT_NEAR(eta.expectation(qp.Q).real(), 0.0, 1e-10);
    ASSERT_NEAR(eta.expectation(qp.P).real(), 0.0, 1e-10);
    const FiducialSpec fid = FiducialSpec::custom(eta);
    EXPECT_GT(fid.annihilation_residual(s), 1e-3);
    for (const auto &[l, unused] : random_pairs(10, 2.0, 3)) {
        (void)unused;
        const StateVector v = coherent_state(l, fid, s);
        EXPECT_NEAR(v.expectation(qp.Q).real(), l.q, 1e-8);
        EXPECT_NEAR(v.expectation(qp.P).real(), l.p, 1e-8);
    }
}

TEST(CoherentState, CustomFiducialMustBeNormalized) {
    const HilbertDim s(8);
    EXPECT_THROW(FiducialSpec::custom(StateVector(s, Vector::Ones(8))), ContractViolation);
    const FiducialSpec fid = FiducialSpec::custom(StateVector::basis(s, 1));
    EXPECT_THROW(coherent_state({0, 0}, fid, HilbertDim(9)), InvalidDimension);
}

TEST(Overlap, MatchesPositionSpaceQuadrature) {
    const HilbertDim s(128);
    for (const auto &[a, b] : random_pairs(12, 2.0, 21)) {
        const cplx ours = overlap(b, a, FiducialSpec::vacuum(), s);
        const cplx ref = oracle::overlap_quadrature(b.p, b.q, a.p, a.q, 1.0);
        EXPECT_LE(std::abs(ours - ref), 1e-10);
        const double dp = b.p - a.p, dq = b.q - a.q;
        EXPECT_NEAR(std::norm(ours), std::exp(-(dp * dp + dq * dq) / 2.0), 1e-8);
    }
}

TEST(Overlap, OtherHbar) {
    const HilbertDim s(96, 0.5);
    const cplx ours = overlap({0.3, -0.4}, {-0.2, 0.6}, FiducialSpec::vacuum(), s);
    EXPECT_LE(std::abs(ours - oracle::overlap_quadrature(0.3, -0.4, -0.2, 0.6, 0.5)), 1e-10);
}

TEST(Overlap, HermitianAndBounded) {
    const HilbertDim s(64);
    for (const auto &[a, b] : random_pairs(10, 2.0, 8)) {
        const cplx ab = overlap(a, b, FiducialSpec::vacuum(), s);
        const cplx ba = overlap(b, a, FiducialSpec::vacuum(), s);
        EXPECT_LE(std::abs(ab - std::conj(ba)), 1e-14);
        EXPECT_LE(std::abs(ab), 1.0 + 1e-14);
        EXPECT_NEAR(std::abs(overlap(a, a, FiducialSpec::vacuum(), s)), 1.0, 1e-10);
    }
}

TEST(ResolutionOfUnity, DefaultGrid) {
    const HilbertDim s(64);
    const UnityReport r = resolution_of_unity_check(FiducialSpec::vacuum(), s, {12.0, 240});
    EXPECT_FALSE(r.under_resolved) << r.warning;
    EXPECT_EQ(r.levels, 32);
    EXPECT_LE(r.deviation, 1e-6);
    EXPECT_NEAR(r.diagonal_drift(0), 0.0, 1e-8);
    // leakage grows towards the cutoff
    double prev = 0.0;
    for (int block = 4; block < 8; ++block) {
        const double m = r.diagonal_drift.segment(block * 8, 8).maxCoeff();
        EXPECT_GE(m, prev);
        prev = m;
    }
}

TEST(ResolutionOfUnity, FlagsCoarseGrids) {
    const HilbertDim s(16);
    EXPECT_TRUE(resolution_of_unity_check(FiducialSpec::vacuum(), s, {12.0, 32}).under_resolved);
    EXPECT_TRUE(resolution_of_unity_check(FiducialSpec::vacuum(), s, {4.0, 80}).under_resolved);
}

TEST(ResolutionOfUnity, GeneralFiducial) {
    const HilbertDim s(32);
    const FiducialSpec fid = FiducialSpec::custom(centred_fiducial(s, 5));
    const UnityReport r = resolution_of_unity_check(fid, s, {12.0, 240});
    EXPECT_LE(r.deviation, 1e-6);
}

TEST(ResolutionOfUnity, ThreadCountDoesNotChangeResult) {
    const HilbertDim s(24);
    const UnityReport one = resolution_of_unity_check(FiducialSpec::vacuum(), s, {10.0, 120}, 0, 1e-6, {1});
    const UnityReport four = resolution_of_unity_check(FiducialSpec::vacuum(), s, {10.0, 120}, 0, 1e-6, {4});
    EXPECT_EQ(one.deviation, four.deviation);
    EXPECT_TRUE(one.diagonal_drift == four.diagonal_drift);
}
