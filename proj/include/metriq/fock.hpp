#pragma once

// Truncated Fock-space linear algebra: ladder operators, the canonical pair,
// Hermitian eigendecomposition and unitary time evolution.
//
// Basis vectors |0>, ..., |dim-1> are the number states of a harmonic
// oscillator; every operator is stored as a dense complex matrix.

#include <cmath>
#include <complex>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "metriq/error.hpp"

namespace metriq {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kNormalizedTol = 1e-12;

/// Size of the truncated space together with the value of hbar used by every
/// operator built on it.
class HilbertDim {
  public:
    explicit HilbertDim(int dim, double hbar = 1.0) : dim_(dim), hbar_(hbar) {
        if (dim < 2)
            throw InvalidDimension("dimension must be >= 2, got " + std::to_string(dim));
        if (!(hbar > 0.0) || !std::isfinite(hbar))
            throw InvalidDimension("hbar must be positive and finite");
    }

    int dim() const noexcept { return dim_; }
    double hbar() const noexcept { return hbar_; }

    bool operator==(const HilbertDim &) const = default;

  private:
    int dim_;
    double hbar_;
};

inline double max_abs(const Matrix &m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

class StateVector;

/// Dense operator on a truncated space. Immutable; `hermitian()` is decided
/// once at construction.
class OperatorMatrix {
  public:
    OperatorMatrix(HilbertDim space, Matrix entries) : space_(space), m_(std::move(entries)) {
        if (m_.rows() != space_.dim() || m_.cols() != space_.dim())
            throw InvalidDimension("operator shape does not match space dimension");
        if (!m_.allFinite())
            throw ContractViolation("operator has non-finite entries");
        hermitian_ = max_abs(m_ - m_.adjoint()) <= kHermitianTol;
    }

    static OperatorMatrix identity(HilbertDim space) {
        return {space, Matrix::Identity(space.dim(), space.dim())};
    }
    static OperatorMatrix zero(HilbertDim space) {
        return {space, Matrix::Zero(space.dim(), space.dim())};
    }

    const HilbertDim &space() const noexcept { return space_; }
    int dim() const noexcept { return space_.dim(); }
    const Matrix &entries() const noexcept { return m_; }
    bool hermitian() const noexcept { return hermitian_; }
    cplx operator()(int row, int col) const { return m_(row, col); }

    OperatorMatrix adjoint() const { return {space_, m_.adjoint()}; }

    /// Exactly Hermitian copy, (A + A^dagger)/2.
    OperatorMatrix hermitian_part() const { return {space_, (m_ + m_.adjoint()) * 0.5}; }

    friend OperatorMatrix operator*(const OperatorMatrix &a, const OperatorMatrix &b) {
        check_same(a, b);
        return {a.space_, a.m_ * b.m_};
    }
    friend OperatorMatrix operator+(const OperatorMatrix &a, const OperatorMatrix &b) {
        check_same(a, b);
        return {a.space_, a.m_ + b.m_};
    }
    friend OperatorMatrix operator-(const OperatorMatrix &a, const OperatorMatrix &b) {
        check_same(a, b);
        return {a.space_, a.m_ - b.m_};
    }
    friend OperatorMatrix operator*(cplx s, const OperatorMatrix &a) { return {a.space_, s * a.m_}; }

    StateVector operator*(const StateVector &v) const;

  private:
    static void check_same(const OperatorMatrix &a, const OperatorMatrix &b) {
        if (!(a.space_ == b.space_))
            throw InvalidDimension("operators live on different spaces");
    }

    HilbertDim space_;
    Matrix m_;
    bool hermitian_ = false;
};

/// Amplitudes in the number basis.
class StateVector {
  public:
    StateVector(HilbertDim space, Vector amps) : space_(space), amps_(std::move(amps)) {
        if (amps_.size() != space_.dim())
            throw InvalidDimension("state length does not match space dimension");
        if (!amps_.allFinite())
            throw ContractViolation("state has non-finite amplitudes");
        normalized_ = std::abs(amps_.norm() - 1.0) <= kNormalizedTol;
    }

    /// Number state |n>.
    static StateVector basis(HilbertDim space, int n) {
        if (n < 0 || n >= space.dim())
            throw InvalidDimension("basis index out of range");
        Vector v = Vector::Zero(space.dim());
        v(n) = 1.0;
        return {space, std::move(v)};
    }

    const HilbertDim &space() const noexcept { return space_; }
    int dim() const noexcept { return space_.dim(); }
    const Vector &amps() const noexcept { return amps_; }
    bool normalized() const noexcept { return normalized_; }
    double norm() const { return amps_.norm(); }
    cplx operator[](int n) const { return amps_(n); }

    StateVector normalized_copy() const {
        const double n = amps_.norm();
        if (n == 0.0)
            throw ContractViolation("cannot normalize the zero vector");
        return {space_, amps_ / n};
    }

    /// <this|other>, antilinear in this.
    cplx inner(const StateVector &other) const { return amps_.dot(other.amps_); }

    /// <this|A|this>.
    cplx expectation(const OperatorMatrix &a) const { return amps_.dot(a.entries() * amps_); }

  private:
    HilbertDim space_;
    Vector amps_;
    bool normalized_ = false;
};

inline StateVector OperatorMatrix::operator*(const StateVector &v) const {
    if (!(v.space() == space_))
        throw InvalidDimension("state and operator live on different spaces");
    return {space_, m_ * v.amps()};
}

/// Annihilation operator, a|n> = sqrt(n)|n-1>.
inline OperatorMatrix make_ladder(HilbertDim space) {
    const int d = space.dim();
    Matrix a = Matrix::Zero(d, d);
    for (int n = 1; n < d; ++n)
        a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return {space, std::move(a)};
}

struct CanonicalPair {
    OperatorMatrix Q;
    OperatorMatrix P;
};

/// Q = sqrt(hbar/2)(a + a^dagger), P = i sqrt(hbar/2)(a^dagger - a).
inline CanonicalPair make_canonical_pair(HilbertDim space) {
    const Matrix a = make_ladder(space).entries();
    const Matrix ad = a.adjoint();
    const double s = std::sqrt(space.hbar() / 2.0);
    Matrix q = s * (a + ad);
    Matrix p = cplx(0.0, s) * (ad - a);
    return {OperatorMatrix(space, std::move(q)), OperatorMatrix(space, std::move(p))};
}

/// Eigenvalues ascending; columns of `vectors` are the matching eigenvectors.
struct EigenSystem {
    RealVector values;
    OperatorMatrix vectors;
};

inline EigenSystem hermitian_eig(const OperatorMatrix &a) {
    if (!a.hermitian())
        throw ContractViolation("hermitian_eig requires a Hermitian operator");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a.entries());
    if (solver.info() != Eigen::Success)
        throw ContractViolation("eigendecomposition did not converge");
    return {solver.eigenvalues(), OperatorMatrix(a.space(), solver.eigenvectors())};
}

/// V f(Lambda) V^dagger for a function applied to the spectrum.
template <class F>
Matrix spectral_apply(const EigenSystem &es, F &&f) {
    const Matrix &v = es.vectors.entries();
    Vector fl(es.values.size());
    for (Eigen::Index i = 0; i < es.values.size(); ++i)
        fl(i) = f(es.values(i));
    return v * fl.asDiagonal() * v.adjoint();
}

/// exp(i s A) for Hermitian A.
inline OperatorMatrix exp_i(const EigenSystem &es, double s) {
    return {es.vectors.space(),
            spectral_apply(es, [s](double l) { return std::polar(1.0, s * l); })};
}

/// exp(-i H T / hbar) as a matrix.
inline OperatorMatrix propagator(const OperatorMatrix &h, double t) {
    return exp_i(hermitian_eig(h), -t / h.space().hbar());
}

/// exp(-i H T / hbar) v.
inline StateVector evolve(const OperatorMatrix &h, double t, const StateVector &v) {
    if (!(v.space() == h.space()))
        throw InvalidDimension("state and Hamiltonian live on different spaces");
    const EigenSystem es = hermitian_eig(h);
    const Matrix &vecs = es.vectors.entries();
    Vector c = vecs.adjoint() * v.amps();
    const double s = -t / h.space().hbar();
    for (Eigen::Index i = 0; i < c.size(); ++i)
        c(i) *= std::polar(1.0, s * es.values(i));
    return {v.space(), vecs * c};
}

/// [A, B].
inline OperatorMatrix commutator(const OperatorMatrix &a, const OperatorMatrix &b) {
    return a * b - b * a;
}

} // namespace metriq
