#pragma once

// Classical Hamiltonian flow, boundary-value classification by shooting, and
// the exact coherent-state propagator used as the reference for path-integral
// estimates.
//
// Hamilton's equations q' = dH/dp, p' = -dH/dq are the stationarity
// conditions of both the p dq and the -q dp forms of the action; they differ
// by a boundary term only, so one integrator serves both.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "metriq/coherent.hpp"
#include "metriq/error.hpp"
#include "metriq/fock.hpp"
#include "metriq/poly.hpp"
#include "metriq/quantize.hpp"

namespace metriq {

struct PhasePoint {
    double p = 0.0;
    double q = 0.0;
};

/// Samples (p_l, q_l) at t_l = l dt, l = 0..L.
class PhasePath {
  public:
    PhasePath(double dt, std::vector<double> p, std::vector<double> q)
        : dt_(dt), p_(std::move(p)), q_(std::move(q)) {
        if (!(dt_ > 0.0) || !std::isfinite(dt_))
            throw ContractViolation("path time step must be positive");
        if (p_.size() != q_.size() || p_.size() < 2)
            throw ContractViolation("path needs at least one step and matching p, q lengths");
        for (std::size_t i = 0; i < p_.size(); ++i)
            if (!std::isfinite(p_[i]) || !std::isfinite(q_[i]))
                throw ContractViolation("path has non-finite points");
    }

    int steps() const noexcept { return static_cast<int>(p_.size()) - 1; }
    double dt() const noexcept { return dt_; }
    double duration() const noexcept { return dt_ * steps(); }
    double time(int l) const noexcept { return dt_ * l; }
    const std::vector<double> &p() const noexcept { return p_; }
    const std::vector<double> &q() const noexcept { return q_; }
    PhasePoint front() const { return {p_.front(), q_.front()}; }
    PhasePoint back() const { return {p_.back(), q_.back()}; }

    /// The same points traversed backwards in time.
    PhasePath reversed() const {
        return {dt_, std::vector<double>(p_.rbegin(), p_.rend()),
                std::vector<double>(q_.rbegin(), q_.rend())};
    }

  private:
    double dt_;
    std::vector<double> p_;
    std::vector<double> q_;
};

namespace detail {

struct HamiltonField {
    explicit HamiltonField(const PolySymbol &h) : dh_dp(h.d_dp()), dh_dq(h.d_dq()) {}
    SymbolEvaluator dh_dp;
    SymbolEvaluator dh_dq;

    PhasePoint operator()(const PhasePoint &x) const {
        return {-dh_dq(x.p, x.q), dh_dp(x.p, x.q)};
    }
};

/// Classical RK4 step of size dt.
inline PhasePoint rk4_step(const HamiltonField &f, const PhasePoint &x, double dt) {
    const PhasePoint k1 = f(x);
    const PhasePoint k2 = f({x.p + 0.5 * dt * k1.p, x.q + 0.5 * dt * k1.q});
    const PhasePoint k3 = f({x.p + 0.5 * dt * k2.p, x.q + 0.5 * dt * k2.q});
    const PhasePoint k4 = f({x.p + dt * k3.p, x.q + dt * k3.q});
    return {x.p + dt / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p),
            x.q + dt / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q)};
}

template <class Visit>
PhasePoint integrate(const PolySymbol &h, PhasePoint x, double duration, int steps, Visit &&visit) {
    const HamiltonField f(h);
    const double dt = duration / steps;
    for (int l = 0; l < steps; ++l) {
        const PhasePoint next = rk4_step(f, x, dt);
        if (!std::isfinite(next.p) || !std::isfinite(next.q))
            throw DivergenceError("Hamiltonian flow left the finite range at t = " +
                                      std::to_string(dt * (l + 1)),
                                  dt * l);
        x = next;
        visit(x);
    }
    return x;
}

inline void check_flow_args(const PolySymbol &h, int steps) {
    if (steps < 16)
        throw ContractViolation("flow needs at least 16 steps");
    if (h.degree() > kMaxSymbolDegree)
        throw CapacityError("symbol degree too high");
}

} // namespace detail

/// Fixed-step RK4 solution of Hamilton's equations over [0, duration].
inline PhasePath hamilton_flow(const PolySymbol &h, PhasePoint init, double duration, int steps) {
    detail::check_flow_args(h, steps);
    if (!(duration > 0.0))
        throw ContractViolation("flow duration must be positive");
    std::vector<double> p{init.p}, q{init.q};
    p.reserve(static_cast<std::size_t>(steps) + 1);
    q.reserve(static_cast<std::size_t>(steps) + 1);
    detail::integrate(h, init, duration, steps, [&](const PhasePoint &x) {
        p.push_back(x.p);
        q.push_back(x.q);
    });
    return {duration / steps, std::move(p), std::move(q)};
}

/// End point of the flow; `duration` may be negative (backwards in time).
inline PhasePoint flow_endpoint(const PolySymbol &h, PhasePoint init, double duration, int steps) {
    detail::check_flow_args(h, steps);
    return detail::integrate(h, init, duration, steps, [](const PhasePoint &) {});
}

enum class BvpClass { None, Unique, Many, OverSpecified };

inline const char *to_string(BvpClass c) {
    switch (c) {
    case BvpClass::None:
        return "None";
    case BvpClass::Unique:
        return "Unique";
    case BvpClass::Many:
        return "Many";
    case BvpClass::OverSpecified:
        return "OverSpecified";
    }
    return "?";
}

struct MomentumScan {
    double min = -5.0;
    double max = 5.0;
    int count = 256;
};

struct BvpOptions {
    int steps = 1024;
    double hit_tol = 1e-6;
    double root_tol = 1e-8;
};

struct BvpReport {
    BvpClass classification = BvpClass::None;
    /// Initial momenta that reach the target (shooting), or empty.
    std::vector<double> solutions;
    /// Momenta whose trajectories diverged.
    std::vector<double> flagged;
    /// True when every scanned momentum hits the target (degenerate case).
    bool whole_scan = false;
    double scan_spacing = 0.0;
    // Over-specified checks only.
    bool consistent = false;
    PhasePoint achieved;
    double distance = 0.0;
};

/// Shoots q(0) = q0 towards q(T) = qT over a momentum scan, refining sign
/// changes by bisection.
inline BvpReport bvp_shoot(const PolySymbol &h, double q0, double qT, double duration,
                           const MomentumScan &scan, const BvpOptions &opt = {}) {
    if (scan.count < 64)
        throw ContractViolation("momentum scan needs at least 64 points");
    if (!(scan.max > scan.min))
        throw ContractViolation("momentum scan range is empty");
    detail::check_flow_args(h, opt.steps);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto miss = [&](double p0) {
        try {
            return flow_endpoint(h, {p0, q0}, duration, opt.steps).q - qT;
        } catch (const DivergenceError &) {
            return nan;
        }
    };

    BvpReport r;
    r.scan_spacing = (scan.max - scan.min) / (scan.count - 1);
    std::vector<double> p0s(static_cast<std::size_t>(scan.count)), f(p0s.size());
    bool all_hit = true;
    for (int i = 0; i < scan.count; ++i) {
        p0s[i] = scan.min + r.scan_spacing * i;
        f[i] = miss(p0s[i]);
        if (std::isnan(f[i]))
            r.flagged.push_back(p0s[i]);
        else if (std::abs(f[i]) > opt.hit_tol)
            all_hit = false;
    }
    if (all_hit && r.flagged.size() < p0s.size()) {
        r.classification = BvpClass::Many;
        r.whole_scan = true;
        for (std::size_t i = 0; i < p0s.size(); ++i)
            if (!std::isnan(f[i]))
                r.solutions.push_back(p0s[i]);
        return r;
    }

    std::vector<double> roots;
    for (std::size_t i = 0; i < p0s.size(); ++i) {
        if (std::isnan(f[i]))
            continue;
        if (std::abs(f[i]) <= opt.hit_tol) {
            roots.push_back(p0s[i]);
            continue;
        }
        if (i + 1 < p0s.size() && !std::isnan(f[i + 1]) && std::abs(f[i + 1]) > opt.hit_tol &&
            (f[i] < 0) != (f[i + 1] < 0)) {
            double lo = p0s[i], hi = p0s[i + 1], flo = f[i];
            while (hi - lo > opt.root_tol) {
                const double mid = 0.5 * (lo + hi);
                const double fm = miss(mid);
                if (std::isnan(fm))
                    break;
                if ((fm < 0) == (flo < 0)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            const double root = 0.5 * (lo + hi);
            const double fr = miss(root);
            if (!std::isnan(fr) && std::abs(fr) <= opt.hit_tol)
                roots.push_back(root);
        }
    }
    std::sort(roots.begin(), roots.end());
    for (double x : roots)
        if (r.solutions.empty() || x - r.solutions.back() > 10.0 * opt.root_tol)
            r.solutions.push_back(x);

    r.classification = r.solutions.empty()     ? BvpClass::None
                       : r.solutions.size() == 1 ? BvpClass::Unique
                                                 : BvpClass::Many;
    return r;
}

/// Integrates from `init` and compares with the prescribed `final` point;
/// the data are consistent only when the distance is at most `tol`.
inline BvpReport bvp_overdetermined_check(const PolySymbol &h, PhasePoint init, PhasePoint final_point,
                                          double duration, int steps = 1024, double tol = 1e-6) {
    BvpReport r;
    r.classification = BvpClass::OverSpecified;
    r.achieved = flow_endpoint(h, init, duration, steps);
    r.distance = std::hypot(r.achieved.p - final_point.p, r.achieved.q - final_point.q);
    r.consistent = r.distance <= tol;
    return r;
}

struct PropagatorOptions {
    int max_dim = 256;
    double tol = 1e-8;
    double label_radius = kDefaultLabelRadius;
};

struct PropagatorResult {
    cplx value;
    int dim_used = 0;
    /// |value(dim) - value(dim / 2)| at the final escalation step.
    double truncation_delta = 0.0;
    bool converged = false;
};

/// <l2| exp(-i H T / hbar) |l1> for the single dimension of `space`.
inline cplx propagator_element(const OperatorMatrix &hamiltonian, const CoherentLabel &l1,
                               const CoherentLabel &l2, double duration,
                               double label_radius = kDefaultLabelRadius) {
    const HilbertDim &space = hamiltonian.space();
    const FiducialSpec vac = FiducialSpec::vacuum();
    const StateVector out = evolve(hamiltonian, duration, coherent_state(l1, vac, space, label_radius));
    return coherent_state(l2, vac, space, label_radius).inner(out);
}

/// <l2| exp(-i H T / hbar) |l1> with H the antinormal quantization of `sym`.
/// The dimension is doubled, starting from `space`, until two successive
/// results differ by less than `opt.tol`.
inline PropagatorResult exact_propagator(const PolySymbol &sym, const CoherentLabel &l1,
                                         const CoherentLabel &l2, double duration,
                                         const HilbertDim &space, const PropagatorOptions &opt = {}) {
    check_label(l1, opt.label_radius);
    check_label(l2, opt.label_radius);
    PropagatorResult r;
    bool have_prev = false;
    cplx prev;
    for (int d = space.dim(); d <= opt.max_dim; d *= 2) {
        const HilbertDim sp(d, space.hbar());
        cplx v;
        try {
            v = propagator_element(antinormal_quantize(sym, sp), l1, l2, duration, opt.label_radius);
        } catch (const LabelRadiusError &) {
            continue; // labels do not fit yet
        } catch (const CapacityError &) {
            continue;
        }
        r.value = v;
        r.dim_used = d;
        if (have_prev) {
            r.truncation_delta = std::abs(v - prev);
            if (r.truncation_delta < opt.tol) {
                r.converged = true;
                return r;
            }
        }
        prev = v;
        have_prev = true;
    }
    if (!have_prev)
        throw LabelRadiusError("labels do not fit in " + std::to_string(opt.max_dim) + " levels");
    return r;
}

} // namespace metriq
