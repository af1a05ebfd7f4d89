#pragma once

// Weyl operators U[p,q] = exp(-iqP/hbar) exp(ipQ/hbar), coherent states
// |p,q> = U[p,q]|eta>, their overlaps and the resolution of unity.
//
// Truncation: an exponential of the truncated Q or P is exactly unitary but is
// only faithful on levels well below the cutoff. `weyl` returns that exact
// product on the requested space. Everything that needs accurate matrix
// elements (coherent states, composition checks, quadratures) instead works
// in a padded space large enough to hold the displaced vectors and projects
// the result back onto the requested levels.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <tuple>
#include <utility>

#include "metriq/fock.hpp"
#include "metriq/parallel.hpp"

namespace metriq {

inline constexpr double kDefaultLabelRadius = 10.0;

/// Phase-space point labelling a coherent state.
struct CoherentLabel {
    double p = 0.0;
    double q = 0.0;

    friend CoherentLabel operator+(CoherentLabel a, CoherentLabel b) { return {a.p + b.p, a.q + b.q}; }
    bool operator==(const CoherentLabel &) const = default;
};

inline void check_label(const CoherentLabel &l, double radius = kDefaultLabelRadius) {
    if (!std::isfinite(l.p) || !std::isfinite(l.q))
        throw LabelRadiusError("coherent label is not finite");
    if (std::abs(l.p) > radius || std::abs(l.q) > radius)
        throw LabelRadiusError("coherent label (" + std::to_string(l.p) + ", " + std::to_string(l.q) +
                               ") exceeds label radius " + std::to_string(radius));
}

/// |alpha| of the oscillator coherent state with the same label.
inline double label_amplitude(const CoherentLabel &l, double hbar) {
    return std::sqrt((l.p * l.p + l.q * l.q) / (2.0 * hbar));
}

/// Which vector is displaced to generate the coherent-state family.
class FiducialSpec {
  public:
    static FiducialSpec vacuum() { return FiducialSpec(); }
    static FiducialSpec custom(StateVector eta) {
        if (!eta.normalized())
            throw ContractViolation("fiducial vector must have unit norm");
        return FiducialSpec(std::move(eta));
    }

    bool is_vacuum() const noexcept { return !custom_.has_value(); }

    StateVector state(const HilbertDim &space) const {
        if (!custom_)
            return StateVector::basis(space, 0);
        if (!(custom_->space() == space))
            throw InvalidDimension("fiducial vector lives on a different space");
        return *custom_;
    }

    /// Highest occupied level, used to size padded working spaces.
    int top_level() const {
        if (!custom_)
            return 0;
        const Vector &a = custom_->amps();
        for (Eigen::Index n = a.size() - 1; n > 0; --n)
            if (std::abs(a(n)) > 1e-15)
                return static_cast<int>(n);
        return 0;
    }

    /// ||(Q + iP)|eta>||; zero for the vacuum.
    double annihilation_residual(const HilbertDim &space) const;

  private:
    FiducialSpec() = default;
    explicit FiducialSpec(StateVector eta) : custom_(std::move(eta)) {}

    std::optional<StateVector> custom_;
};

/// Eigensystems of Q and P on one (possibly padded) space, shared by every
/// displacement evaluated there.
class DisplacementEngine {
  public:
    explicit DisplacementEngine(HilbertDim space) : space_(space) {
        const CanonicalPair qp = make_canonical_pair(space);
        EigenSystem eq = hermitian_eig(qp.Q);
        EigenSystem ep = hermitian_eig(qp.P);
        lq_ = std::move(eq.values);
        vq_ = eq.vectors.entries();
        lp_ = std::move(ep.values);
        vp_ = ep.vectors.entries();
        vp_adj_vq_ = vp_.adjoint() * vq_;
    }

    /// Shared instance per (dim, hbar); safe to call concurrently.
    static std::shared_ptr<const DisplacementEngine> get(HilbertDim space) {
        static std::mutex mutex;
        static std::map<std::pair<int, double>, std::shared_ptr<const DisplacementEngine>> cache;
        std::lock_guard lock(mutex);
        auto &slot = cache[{space.dim(), space.hbar()}];
        if (!slot)
            slot = std::make_shared<const DisplacementEngine>(space);
        return slot;
    }

    const HilbertDim &space() const noexcept { return space_; }
    int dim() const noexcept { return space_.dim(); }

    /// exp(-iqP/hbar) exp(ipQ/hbar) restricted to rows [0, rows) and columns [0, cols).
    Matrix weyl_block(const CoherentLabel &l, int rows, int cols) const {
        const double h = space_.hbar();
        const Matrix left = vp_.topRows(rows) * phases(lp_, -l.q / h).asDiagonal();
        const Matrix right = phases(lq_, l.p / h).asDiagonal() * vq_.topRows(cols).adjoint();
        if (rows <= cols)
            return (left * vp_adj_vq_) * right;
        return left * (vp_adj_vq_ * right);
    }

    Matrix weyl(const CoherentLabel &l) const { return weyl_block(l, dim(), dim()); }

    /// exp(-iqP/hbar) exp(ipQ/hbar) v for a full-length vector v.
    Vector displace(const CoherentLabel &l, const Vector &v) const {
        const double h = space_.hbar();
        Vector w = vq_.adjoint() * v;
        w = w.cwiseProduct(phases(lq_, l.p / h));
        w = vp_adj_vq_ * w;
        w = w.cwiseProduct(phases(lp_, -l.q / h));
        return vp_ * w;
    }

    const RealVector &q_eigenvalues() const noexcept { return lq_; }
    const RealVector &p_eigenvalues() const noexcept { return lp_; }
    const Matrix &q_eigenvectors() const noexcept { return vq_; }
    const Matrix &p_eigenvectors() const noexcept { return vp_; }
    const Matrix &p_adjoint_times_q() const noexcept { return vp_adj_vq_; }

    static Vector phases(const RealVector &lambda, double s) {
        Vector out(lambda.size());
        for (Eigen::Index i = 0; i < lambda.size(); ++i)
            out(i) = std::polar(1.0, s * lambda(i));
        return out;
    }

  private:
    HilbertDim space_;
    RealVector lq_, lp_;
    Matrix vq_, vp_, vp_adj_vq_;
};

/// Size of a padded space that holds every level below `top_level` displaced
/// by up to `alpha` without touching the cutoff. Rounded up to a multiple of
/// 64 so that nearby labels share one cached engine.
inline int padded_dim(int dim, int top_level, double alpha) {
    const double r = std::sqrt(static_cast<double>(std::max(top_level, 0))) + alpha + 6.0;
    const int need = (static_cast<int>(std::ceil(r * r)) + 63) / 64 * 64;
    return std::max(dim, need);
}

inline double FiducialSpec::annihilation_residual(const HilbertDim &space) const {
    if (!custom_)
        return 0.0;
    const CanonicalPair qp = make_canonical_pair(space);
    const Vector r = (qp.Q.entries() + cplx(0, 1) * qp.P.entries()) * custom_->amps();
    return r.norm();
}

/// U[p,q] on `space`, the exact product of the two truncated exponentials.
inline OperatorMatrix weyl(const CoherentLabel &label, const HilbertDim &space,
                           double label_radius = kDefaultLabelRadius) {
    check_label(label, label_radius);
    return {space, DisplacementEngine::get(space)->weyl(label)};
}

/// Symmetric displacement exp(i(pQ - qP)/hbar) = exp(ipq/2hbar) U[p,q].
inline OperatorMatrix symmetric_weyl(const CoherentLabel &label, const HilbertDim &space,
                                     double label_radius = kDefaultLabelRadius) {
    check_label(label, label_radius);
    const cplx phase = std::polar(1.0, label.p * label.q / (2.0 * space.hbar()));
    return {space, phase * DisplacementEngine::get(space)->weyl(label)};
}

/// Phase convention used by `weyl_compose_check`.
enum class WeylConvention {
    /// U[l1] U[l2] = exp(i p1 q2 / hbar) U[l1 + l2] for U = exp(-iqP) exp(ipQ).
    Ordered,
    /// W[l1] W[l2] = exp(i (p1 q2 - q1 p2) / 2hbar) W[l1 + l2] for W = exp(i(pQ - qP)).
    Symmetric,
};

/// Phase relating the product of two displacements to the displacement by the sum.
inline cplx composition_phase(const CoherentLabel &l1, const CoherentLabel &l2, double hbar,
                              WeylConvention conv) {
    const double arg = conv == WeylConvention::Ordered ? l1.p * l2.q / hbar
                                                       : (l1.p * l2.q - l1.q * l2.p) / (2.0 * hbar);
    return std::polar(1.0, arg);
}

/// Max-norm deviations from the multiplication law in both conventions.
struct ComposeDeviation {
    double ordered = 0.0;
    double symmetric = 0.0;
};

/// Max-norm deviation from the multiplication law on the levels of `space`,
/// evaluated in a padded space so that the cutoff does not enter. Both
/// conventions share the same three blocks since W[l] = exp(i p q / 2hbar) U[l].
inline ComposeDeviation weyl_compose_deviations(const CoherentLabel &l1, const CoherentLabel &l2,
                                                const HilbertDim &space,
                                                double label_radius = kDefaultLabelRadius) {
    check_label(l1, label_radius);
    check_label(l2, label_radius);
    const CoherentLabel l12 = l1 + l2;
    check_label(l12, label_radius);

    const double h = space.hbar();
    const double alpha = std::max(
        {label_amplitude(l1, h), label_amplitude(l2, h), label_amplitude(l12, h)});
    const int d = space.dim();
    const auto eng = DisplacementEngine::get(HilbertDim(padded_dim(d, d - 1, alpha), h));
    const int w = eng->dim();

    const Matrix u1u2 = eng->weyl_block(l1, d, w) * eng->weyl_block(l2, w, d);
    const Matrix u12 = eng->weyl_block(l12, d, d);
    auto sym = [&](const CoherentLabel &l) { return std::polar(1.0, l.p * l.q / (2.0 * h)); };
    ComposeDeviation r;
    r.ordered = max_abs(u1u2 - composition_phase(l1, l2, h, WeylConvention::Ordered) * u12);
    r.symmetric = max_abs((sym(l1) * sym(l2)) * u1u2 -
                          (composition_phase(l1, l2, h, WeylConvention::Symmetric) * sym(l12)) * u12);
    return r;
}

inline double weyl_compose_check(const CoherentLabel &l1, const CoherentLabel &l2,
                                 const HilbertDim &space,
                                 WeylConvention conv = WeylConvention::Ordered,
                                 double label_radius = kDefaultLabelRadius) {
    const ComposeDeviation r = weyl_compose_deviations(l1, l2, space, label_radius);
    return conv == WeylConvention::Ordered ? r.ordered : r.symmetric;
}

/// |p,q> = U[p,q]|eta>, computed in a padded space and projected onto
/// `space`. Throws LabelRadiusError if the projection loses more than 1e-10
/// of the norm (the label does not fit in the truncation).
inline StateVector coherent_state(const CoherentLabel &label, const FiducialSpec &fid,
                                  const HilbertDim &space,
                                  double label_radius = kDefaultLabelRadius) {
    check_label(label, label_radius);
    const StateVector eta = fid.state(space);
    const int d = space.dim();
    const auto eng = DisplacementEngine::get(
        HilbertDim(padded_dim(d, fid.top_level(), label_amplitude(label, space.hbar())), space.hbar()));
    Vector padded = Vector::Zero(eng->dim());
    padded.head(d) = eta.amps();
    const Vector full = eng->displace(label, padded);
    Vector head = full.head(d);
    if (std::abs(head.norm() - 1.0) > 1e-10)
        throw LabelRadiusError("coherent state at (" + std::to_string(label.p) + ", " +
                               std::to_string(label.q) + ") does not fit in " + std::to_string(d) +
                               " levels");
    return {space, std::move(head)};
}

/// <l2|l1>.
inline cplx overlap(const CoherentLabel &l2, const CoherentLabel &l1, const FiducialSpec &fid,
                    const HilbertDim &space, double label_radius = kDefaultLabelRadius) {
    return coherent_state(l2, fid, space, label_radius)
        .inner(coherent_state(l1, fid, space, label_radius));
}

/// Midpoint product rule on the square [-radius, radius]^2.
struct QuadratureGrid {
    double radius = 12.0;
    int nodes = 240;

    double step() const { return 2.0 * radius / nodes; }
    double node(int i) const { return -radius + step() * (i + 0.5); }
};

struct QuadratureResult {
    /// Sum over nodes of w(p,q) |p,q><p,q| dp dq / (2 pi hbar), on all levels of the space.
    Matrix matrix;
    bool under_resolved = false;
    std::string warning;
};

/// Integrates weight(p,q) |p,q><p,q| over the grid. Nodes whose coherent state
/// has no weight above ~1e-25 on the requested levels are skipped.
template <class Weight>
QuadratureResult coherent_quadrature(const FiducialSpec &fid, const HilbertDim &space,
                                     const QuadratureGrid &grid, Weight &&weight,
                                     const Execution &exec = {}) {
    if (grid.nodes < 1 || !(grid.radius > 0.0))
        throw ContractViolation("quadrature grid needs positive radius and node count");
    const int d = space.dim();
    const double h = space.hbar();
    const int top = fid.top_level();
    const double alpha_grid = grid.radius * std::sqrt(2.0) / std::sqrt(2.0 * h);
    const double alpha_cut = std::sqrt(static_cast<double>(d)) + std::sqrt(static_cast<double>(top)) + 8.0;
    const double alpha_max = std::min(alpha_grid, alpha_cut);
    const auto eng = DisplacementEngine::get(HilbertDim(padded_dim(d, top, alpha_max), h));
    const int w = eng->dim();

    Vector eta = Vector::Zero(w);
    eta.head(d) = fid.state(space).amps();
    const Vector eta_q = eng->q_eigenvectors().adjoint() * eta;

    const int m = grid.nodes;
    const double step = grid.step();
    const double measure = step * step / (2.0 * std::numbers::pi * h);

    // exp(-i q lambda_P / hbar) for every q node.
    Matrix p_phase(w, m);
    for (int j = 0; j < m; ++j)
        p_phase.col(j) = DisplacementEngine::phases(eng->p_eigenvalues(), -grid.node(j) / h);
    const Matrix vp_head = eng->p_eigenvectors().topRows(d);

    auto fold = [&](Matrix &acc, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const double p = grid.node(static_cast<int>(i));
            Vector t = eta_q.cwiseProduct(DisplacementEngine::phases(eng->q_eigenvalues(), p / h));
            t = eng->p_adjoint_times_q() * t;
            std::vector<int> cols;
            std::vector<double> wts;
            for (int j = 0; j < m; ++j) {
                const double q = grid.node(j);
                if (label_amplitude({p, q}, h) > alpha_cut)
                    continue;
                const double wt = weight(p, q);
                if (wt == 0.0)
                    continue;
                cols.push_back(j);
                wts.push_back(wt);
            }
            if (cols.empty())
                continue;
            Matrix phased(w, static_cast<Eigen::Index>(cols.size()));
            for (std::size_t k = 0; k < cols.size(); ++k)
                phased.col(static_cast<Eigen::Index>(k)) = p_phase.col(cols[k]).cwiseProduct(t);
            const Matrix states = vp_head * phased; // d x n_cols
            Matrix weighted = states;
            for (std::size_t k = 0; k < cols.size(); ++k)
                weighted.col(static_cast<Eigen::Index>(k)) *= wts[k];
            acc.noalias() += weighted * states.adjoint();
        }
    };
    Matrix sum = deterministic_reduce(static_cast<std::size_t>(m), 4, exec,
                                      Matrix::Zero(d, d).eval(), fold,
                                      [](const Matrix &a, const Matrix &b) { return (a + b).eval(); });

    QuadratureResult out{sum * measure, false, {}};
    if (m < 64) {
        out.under_resolved = true;
        out.warning = "fewer than 64 nodes per axis";
    } else if (step > 0.25 * std::sqrt(h)) {
        out.under_resolved = true;
        out.warning = "node spacing exceeds sqrt(hbar)/4";
    }
    return out;
}

struct UnityReport {
    /// max |I_K - 1| over the lowest `levels` levels.
    double deviation = 0.0;
    int levels = 0;
    /// |I(n,n) - 1| for every level n of the space.
    RealVector diagonal_drift;
    bool under_resolved = false;
    std::string warning;
};

/// Deviation of the quadrature of |p,q><p,q| dp dq / 2 pi hbar from the
/// identity on the lowest `levels` levels (default dim/2).
inline UnityReport resolution_of_unity_check(const FiducialSpec &fid, const HilbertDim &space,
                                             const QuadratureGrid &grid, int levels = 0,
                                             double target_tol = 1e-6, const Execution &exec = {}) {
    const int d = space.dim();
    if (levels <= 0)
        levels = d / 2;
    if (levels > d)
        throw InvalidDimension("cannot check more levels than the space has");
    QuadratureResult q = coherent_quadrature(fid, space, grid, [](double, double) { return 1.0; }, exec);
    UnityReport r;
    r.levels = levels;
    r.deviation = max_abs(q.matrix.topLeftCorner(levels, levels) - Matrix::Identity(levels, levels));
    r.diagonal_drift = (q.matrix.diagonal().array() - 1.0).abs().real();
    r.under_resolved = q.under_resolved;
    r.warning = q.warning;
    const double tail = std::exp(-grid.radius * grid.radius / (4.0 * space.hbar()));
    if (!r.under_resolved && tail > target_tol) {
        r.under_resolved = true;
        r.warning = "radius too small: Gaussian tail exceeds target tolerance";
    }
    return r;
}

} // namespace metriq
