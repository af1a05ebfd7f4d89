#include <random>

#include <gtest/gtest.h>

#include "metriq/fock.hpp"

using namespace metriq;

namespace {

OperatorMatrix random_hermitian(const HilbertDim &space, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n;
    Matrix m(space.dim(), space.dim());
    for (int i = 0; i < space.dim(); ++i)
        for (int j = 0; j < space.dim(); ++j)
            m(i, j) = cplx(n(gen), n(gen));
    return OperatorMatrix(space, m).hermitian_part();
}

} // namespace

TEST(HilbertDim, RejectsBadArguments) {
    EXPECT_THROW(HilbertDim(1), InvalidDimension);
    EXPECT_THROW(HilbertDim(0), InvalidDimension);
    EXPECT_THROW(HilbertDim(8, 0.0), InvalidDimension);
    EXPECT_THROW(HilbertDim(8, -1.0), InvalidDimension);
    EXPECT_NO_THROW(HilbertDim(2));
}

TEST(OperatorMatrix, ShapeAndSpaceChecks) {
    const HilbertDim s4(4), s5(5), s4h(4, 2.0);
    EXPECT_THROW(OperatorMatrix(s4, Matrix::Zero(3, 3)), InvalidDimension);
    EXPECT_THROW(OperatorMatrix::identity(s4) * OperatorMatrix::identity(s5), InvalidDimension);
    EXPECT_THROW(OperatorMatrix::identity(s4) + OperatorMatrix::identity(s4h), InvalidDimension);
    Matrix bad = Matrix::Identity(4, 4);
    bad(1, 2) = cplx(std::numeric_limits<double>::quiet_NaN(), 0);
    EXPECT_THROW(OperatorMatrix(s4, bad), ContractViolation);
}

TEST(Ladder, SmallestDimension) {
    const OperatorMatrix a = make_ladder(HilbertDim(2));
    EXPECT_EQ(a(0, 0), cplx(0));
    EXPECT_EQ(a(0, 1), cplx(1));
    EXPECT_EQ(a(1, 0), cplx(0));
    EXPECT_EQ(a(1, 1), cplx(0));
}

TEST(Ladder, AnnihilatesVacuumAndCounts) {
    const HilbertDim s(16);
    const OperatorMatrix a = make_ladder(s);
    EXPECT_EQ((a * StateVector::basis(s, 0)).norm(), 0.0);
    const OperatorMatrix n = a.adjoint() * a;
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            EXPECT_NEAR(std::abs(n(i, j) - cplx(i == j ? i : 0)), 0.0, 1e-13);
}

TEST(CanonicalPair, VacuumMeansAndAnnihilation) {
    const HilbertDim s(32);
    const CanonicalPair qp = make_canonical_pair(s);
    const StateVector v0 = StateVector::basis(s, 0);
    EXPECT_EQ(v0.expectation(qp.Q), cplx(0));
    EXPECT_EQ(v0.expectation(qp.P), cplx(0));
    const Vector r = (qp.Q.entries() + cplx(0, 1) * qp.P.entries()) * v0.amps();
    EXPECT_LE(r.norm(), 1e-15);
    EXPECT_TRUE(qp.Q.hermitian());
    EXPECT_TRUE(qp.P.hermitian());
}

TEST(CanonicalPair, CommutatorTruncationLaw) {
    const HilbertDim s(64);
    const CanonicalPair qp = make_canonical_pair(s);
    const Matrix c = commutator(qp.Q, qp.P).entries() - cplx(0, 1) * Matrix::Identity(64, 64);
    EXPECT_LE(max_abs(c.leftCols(63)), 1e-12);
    EXPECT_LE(max_abs(c.topRows(63)), 1e-12);
    // the whole deficit sits in the top corner: -i hbar dim there
    EXPECT_NEAR(std::abs(c(63, 63) - cplx(0, -64)), 0.0, 1e-12);
}

TEST(CanonicalPair, EntriesScaleWithRootHbar) {
    const CanonicalPair one = make_canonical_pair(HilbertDim(24, 1.0));
    const CanonicalPair two = make_canonical_pair(HilbertDim(24, 2.0));
    EXPECT_LE(max_abs(two.Q.entries() - std::sqrt(2.0) * one.Q.entries()), 1e-12);
    EXPECT_LE(max_abs(two.P.entries() - std::sqrt(2.0) * one.P.entries()), 1e-12);
}

TEST(HermitianEig, DiagonalAndNumberOperator) {
    const HilbertDim s3(3);
    Matrix m = Matrix::Zero(3, 3);
    m.diagonal() << 3, 1, 2;
    const EigenSystem es = hermitian_eig(OperatorMatrix(s3, m));
    EXPECT_NEAR(es.values(0), 1, 1e-14);
    EXPECT_NEAR(es.values(1), 2, 1e-14);
    EXPECT_NEAR(es.values(2), 3, 1e-14);

    const HilbertDim s8(8);
    const OperatorMatrix a = make_ladder(s8);
    const EigenSystem en = hermitian_eig(a.adjoint() * a);
    for (int n = 0; n < 8; ++n)
        EXPECT_NEAR(en.values(n), n, 1e-12);
}

TEST(HermitianEig, TruncatedPositionIsParitySymmetric) {
    const EigenSystem es = hermitian_eig(make_canonical_pair(HilbertDim(64)).Q);
    for (int i = 0; i < 64; ++i)
        EXPECT_NEAR(es.values(i), -es.values(63 - i), 1e-10);
    const Matrix u = es.vectors.entries();
    EXPECT_LE(max_abs(u.adjoint() * u - Matrix::Identity(64, 64)), 1e-12);
}

TEST(HermitianEig, RejectsNonHermitian) {
    EXPECT_THROW(hermitian_eig(make_ladder(HilbertDim(4))), ContractViolation);
}

TEST(Evolve, ZeroTimeIsIdentity) {
    const HilbertDim s(12);
    const OperatorMatrix h = random_hermitian(s, 1);
    const StateVector v = StateVector(s, Vector::Random(12)).normalized_copy();
    EXPECT_LE((evolve(h, 0.0, v).amps() - v.amps()).norm(), 1e-13);
}

TEST(Evolve, NumberStatePhase) {
    const HilbertDim s(10, 1.0);
    const OperatorMatrix a = make_ladder(s);
    const OperatorMatrix h = a.adjoint() * a;
    for (double t : {0.3, 1.0, 2.5}) {
        const StateVector out = evolve(h, t, StateVector::basis(s, 1));
        EXPECT_NEAR(std::abs(out[1] - std::polar(1.0, -t)), 0.0, 1e-13);
    }
}

TEST(Evolve, PreservesNormForRandomHamiltonians) {
    const HilbertDim s(20);
    for (unsigned seed = 0; seed < 10; ++seed) {
        const OperatorMatrix h = random_hermitian(s, seed);
        const StateVector v(s, Vector::Random(20));
        EXPECT_NEAR(evolve(h, 1.7 + seed, v).norm(), v.norm(), 1e-10);
    }
}

TEST(Evolve, RejectsMismatchedSpace) {
    const OperatorMatrix h = OperatorMatrix::identity(HilbertDim(4));
    EXPECT_THROW(evolve(h, 1.0, StateVector::basis(HilbertDim(5), 0)), InvalidDimension);
    EXPECT_THROW(evolve(make_ladder(HilbertDim(4)), 1.0, StateVector::basis(HilbertDim(4), 0)),
                 ContractViolation);
}

TEST(Propagator, GroupLaw) {
    const HilbertDim s(16);
    const OperatorMatrix h = random_hermitian(s, 7);
    const Matrix u = propagator(h, 1.2).entries();
    const Matrix u2 = propagator(h, 0.6).entries();
    EXPECT_LE(max_abs(u - u2 * u2), 1e-12);
}
