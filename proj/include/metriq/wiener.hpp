#pragma once

// Monte Carlo evaluation of the continuous-time regularized phase-space path
// integral
//
//     2 pi hbar e^{nu T / 2 hbar} \int exp{(i/hbar) \int [p dq - H dt]} d mu_W^nu
//
// where mu_W^nu is the (unnormalized) Wiener measure with diffusion constant
// nu pinned at both ends. The measure factorizes into its total mass, the
// product of two heat kernels, times the law of two independent Brownian
// bridges; the estimator averages the action phase over exact bridge samples
// and multiplies by the constant prefactor.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "metriq/canonical.hpp"
#include "metriq/dynamics.hpp"
#include "metriq/error.hpp"
#include "metriq/parallel.hpp"
#include "metriq/poly.hpp"
#include "metriq/rng.hpp"

namespace metriq {

struct BridgeSpec {
    double nu = 1.0;
    double T = 1.0;
    int steps = 512;
    PhasePoint start;
    PhasePoint end;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(nu > 0.0) || !std::isfinite(nu))
            throw ContractViolation("diffusion constant nu must be positive");
        if (!(T > 0.0) || !std::isfinite(T))
            throw ContractViolation("duration T must be positive");
        if (steps < 64)
            throw ContractViolation("bridge needs at least 64 steps");
        if (!std::isfinite(start.p) || !std::isfinite(start.q) || !std::isfinite(end.p) ||
            !std::isfinite(end.q))
            throw ContractViolation("bridge endpoints must be finite");
    }
};

enum class StochasticRule { Stratonovich, Ito };

struct EstimatorResult {
    cplx mean;
    /// Standard errors of the real and imaginary parts of `mean`.
    double stderr_re = 0.0;
    double stderr_im = 0.0;
    long long n_samples = 0;
    /// Total mass of the pinned measure.
    double raw_mass = 0.0;
    /// 2 pi hbar e^{nu T / 2 hbar} raw_mass; |mean| can never exceed it.
    double prefactor = 0.0;

    /// Larger of the two per-component standard errors.
    double stderr() const noexcept { return std::max(stderr_re, stderr_im); }
    /// Standard error of the complex mean as a whole.
    double stderr_abs() const noexcept { return std::hypot(stderr_re, stderr_im); }
    /// Each component of `mean - target` within k of its standard error.
    bool within(cplx target, double k) const noexcept {
        return std::abs(mean.real() - target.real()) <= k * stderr_re &&
               std::abs(mean.imag() - target.imag()) <= k * stderr_im;
    }
};

struct EstimatorOptions {
    StochasticRule rule = StochasticRule::Stratonovich;
    /// Refuse when nu T / (2 hbar) exceeds this, unless `override_guard`.
    double guard = 6.0;
    bool override_guard = false;
    Execution exec;
};

inline constexpr std::size_t kSampleChunk = 2048;

/// Total mass of the pinned Wiener measure: the product of the two heat kernels.
inline double pinned_mass(const BridgeSpec &spec) {
    spec.validate();
    const double dp = spec.end.p - spec.start.p;
    const double dq = spec.end.q - spec.start.q;
    const double s = spec.nu * spec.T;
    return std::exp(-(dp * dp + dq * dq) / (2.0 * s)) / (2.0 * std::numbers::pi * s);
}

namespace detail {

/// Exact Brownian bridge on the grid: x_l = a + (l/L)(b - a) + W_l - (l/L) W_L.
inline void fill_bridge(double a, double b, double sigma_step, const double *z, int steps, double *x) {
    double w = 0.0;
    x[0] = 0.0;
    for (int l = 1; l <= steps; ++l) {
        w += sigma_step * z[l - 1];
        x[l] = w;
    }
    const double wl = x[steps];
    const double inv = 1.0 / steps;
    for (int l = 0; l <= steps; ++l) {
        const double s = l * inv;
        x[l] = a + s * (b - a) + x[l] - s * wl;
    }
    x[0] = a;
    x[steps] = b;
}

/// Per-sample scratch space for the bridge.
struct BridgeScratch {
    std::vector<double> z, p, q;
    explicit BridgeScratch(int steps)
        : z(static_cast<std::size_t>(steps)), p(static_cast<std::size_t>(steps) + 1),
          q(static_cast<std::size_t>(steps) + 1) {}
};

inline void sample_into(const BridgeSpec &spec, std::uint64_t index, BridgeScratch &s) {
    RandomStream rs(spec.seed, index);
    const double sigma = std::sqrt(spec.nu * spec.T / spec.steps);
    rs.normals(s.z.data(), s.z.size());
    fill_bridge(spec.start.p, spec.end.p, sigma, s.z.data(), spec.steps, s.p.data());
    rs.normals(s.z.data(), s.z.size());
    fill_bridge(spec.start.q, spec.end.q, sigma, s.z.data(), spec.steps, s.q.data());
}

inline double pdq(const double *p, const double *q, int steps, StochasticRule rule) {
    auto term = [&](int l) {
        const double dq = q[l + 1] - q[l];
        return rule == StochasticRule::Stratonovich ? 0.5 * (p[l + 1] + p[l]) * dq : p[l] * dq;
    };
    // Terms are paired from both ends so that the midpoint sum of a reversed
    // path is the exact negative of the original.
    double acc = 0.0;
    for (int l = 0; l < steps / 2; ++l)
        acc += term(l) + term(steps - 1 - l);
    if (steps % 2 == 1)
        acc += term(steps / 2);
    return acc;
}

/// Sum of H at segment midpoints times dt.
inline double h_integral(const double *p, const double *q, int steps, double dt,
                         const SymbolEvaluator &h) {
    if (h.is_zero())
        return 0.0;
    double acc = 0.0;
    for (int l = 0; l < steps; ++l)
        acc += h(0.5 * (p[l] + p[l + 1]), 0.5 * (q[l] + q[l + 1]));
    return acc * dt;
}

/// int p dq + extra - int H dt.
inline double action(const double *p, const double *q, int steps, double dt, const SymbolEvaluator &h,
                     StochasticRule rule, double extra = 0.0) {
    return (pdq(p, q, steps, rule) + extra) - h_integral(p, q, steps, dt, h);
}

/// Running sums for the real and imaginary parts of unit phases.
struct PhaseSums {
    double re = 0, im = 0, re2 = 0, im2 = 0;
    void add(cplx z) noexcept {
        re += z.real();
        im += z.imag();
        re2 += z.real() * z.real();
        im2 += z.imag() * z.imag();
    }
    friend PhaseSums operator+(const PhaseSums &a, const PhaseSums &b) noexcept {
        return {a.re + b.re, a.im + b.im, a.re2 + b.re2, a.im2 + b.im2};
    }
};

inline EstimatorResult finish(const PhaseSums &s, long long n, double prefactor, double mass) {
    const double dn = static_cast<double>(n);
    const double mre = s.re / dn, mim = s.im / dn;
    const double vre = std::max(0.0, (s.re2 - dn * mre * mre) / (dn - 1.0));
    const double vim = std::max(0.0, (s.im2 - dn * mim * mim) / (dn - 1.0));
    EstimatorResult r;
    r.mean = prefactor * cplx(mre, mim);
    r.stderr_re = prefactor * std::sqrt(vre / dn);
    r.stderr_im = prefactor * std::sqrt(vim / dn);
    r.n_samples = n;
    r.raw_mass = mass;
    r.prefactor = prefactor;
    return r;
}

inline void check_estimator_args(const BridgeSpec &spec, double hbar, long long n,
                                 const EstimatorOptions &opt) {
    spec.validate();
    if (!(hbar > 0.0))
        throw ContractViolation("hbar must be positive");
    if (n < 1000)
        throw ContractViolation("estimator needs at least 1000 samples");
    const double x = spec.nu * spec.T / (2.0 * hbar);
    if (!opt.override_guard && x > opt.guard)
        throw FeasibilityRefusal(
            "nu T / (2 hbar) = " + std::to_string(x) + " exceeds the feasibility guard " +
            std::to_string(opt.guard) +
            ": the prefactor e^{nu T/2hbar} amplifies the sampling noise beyond what the sample "
            "count can resolve");
}

} // namespace detail

/// One exact pinned bridge path for sample `index` of `spec`.
inline PhasePath sample_pinned_bridge(const BridgeSpec &spec, std::uint64_t index = 0) {
    spec.validate();
    detail::BridgeScratch s(spec.steps);
    detail::sample_into(spec, index, s);
    return {spec.T / spec.steps, std::move(s.p), std::move(s.q)};
}

/// Midpoint sum  sum (p_{l+1} + p_l)/2 (q_{l+1} - q_l).
inline double stratonovich_pdq(const PhasePath &path) {
    return detail::pdq(path.p().data(), path.q().data(), path.steps(), StochasticRule::Stratonovich);
}

/// Left-point sum  sum p_l (q_{l+1} - q_l).
inline double ito_pdq(const PhasePath &path) {
    return detail::pdq(path.p().data(), path.q().data(), path.steps(), StochasticRule::Ito);
}

/// exp{(i/hbar)(int p dq - sum H(midpoint) dt)}.
inline cplx action_phase(const PhasePath &path, const PolySymbol &h, double hbar,
                         StochasticRule rule = StochasticRule::Stratonovich) {
    const SymbolEvaluator ev(h);
    const double s = detail::action(path.p().data(), path.q().data(), path.steps(), path.dt(), ev, rule);
    return std::polar(1.0, s / hbar);
}

/// Prefactor 2 pi hbar e^{nu T / 2 hbar} times the pinned mass.
inline double estimator_prefactor(const BridgeSpec &spec, double hbar) {
    return 2.0 * std::numbers::pi * hbar * std::exp(spec.nu * spec.T / (2.0 * hbar)) * pinned_mass(spec);
}

/// Monte Carlo estimate of the regularized propagator at finite nu. Sample k
/// draws from RandomStream(seed, k); the result is bit-identical for any
/// thread count.
inline EstimatorResult estimate_propagator(const BridgeSpec &spec, const PolySymbol &sym, double hbar,
                                           long long n_samples, const EstimatorOptions &opt = {}) {
    detail::check_estimator_args(spec, hbar, n_samples, opt);
    const SymbolEvaluator ev(sym);
    const double dt = spec.T / spec.steps;
    const double mass = pinned_mass(spec);
    const double prefactor = estimator_prefactor(spec, hbar);

    auto fold = [&](detail::PhaseSums &acc, std::size_t b, std::size_t e) {
        detail::BridgeScratch s(spec.steps);
        for (std::size_t k = b; k < e; ++k) {
            detail::sample_into(spec, k, s);
            const double a = detail::action(s.p.data(), s.q.data(), spec.steps, dt, ev, opt.rule);
            if (!std::isfinite(a))
                throw PoisonedSampleError("non-finite action in sample " + std::to_string(k) +
                                              " (seed " + std::to_string(spec.seed) + ")",
                                          spec.seed, k);
            acc.add(std::polar(1.0, a / hbar));
        }
    };
    const detail::PhaseSums sums = deterministic_reduce(
        static_cast<std::size_t>(n_samples), kSampleChunk, opt.exec, detail::PhaseSums{}, fold,
        [](const detail::PhaseSums &a, const detail::PhaseSums &b) { return a + b; });

    EstimatorResult r = detail::finish(sums, n_samples, prefactor, mass);
    if (std::abs(r.mean) > prefactor * (1.0 + 1e-12))
        throw ContractViolation("estimate exceeds the unit-modulus bound");
    return r;
}

struct SweepRow {
    double nu = 0.0;
    EstimatorResult estimate;
    double error = 0.0;
};

struct SweepTable {
    std::vector<SweepRow> rows;
    cplx oracle;
    /// Errors never grow from one nu to the next by more than 2 combined sigma.
    bool monotone = true;
};

/// Estimates at each nu (same seed, endpoints and grid) against `oracle`.
inline SweepTable nu_sweep(BridgeSpec spec, const PolySymbol &sym, double hbar,
                           const std::vector<double> &nus, long long n_samples, cplx oracle,
                           const EstimatorOptions &opt = {}) {
    SweepTable t;
    t.oracle = oracle;
    for (double nu : nus) {
        spec.nu = nu;
        detail::check_estimator_args(spec, hbar, n_samples, opt);
    }
    for (double nu : nus) {
        spec.nu = nu;
        SweepRow row;
        row.nu = nu;
        row.estimate = estimate_propagator(spec, sym, hbar, n_samples, opt);
        row.error = std::abs(row.estimate.mean - oracle);
        t.rows.push_back(row);
    }
    for (std::size_t i = 1; i < t.rows.size(); ++i) {
        const double slack = 2.0 * std::hypot(t.rows[i].estimate.stderr_abs(),
                                              t.rows[i - 1].estimate.stderr_abs());
        if (t.rows[i].error > t.rows[i - 1].error + slack)
            t.monotone = false;
    }
    return t;
}

struct TransformedPath {
    PhasePath path;
    /// G(end) - G(start) in the new coordinates.
    double generator_increment = 0.0;
};

/// Maps every point of the path; int p dq = int pb dqb + generator_increment.
inline TransformedPath transform_path(const PhasePath &path, const CoordMap &map) {
    std::vector<double> pb(path.p().size()), qb(path.q().size());
    for (std::size_t l = 0; l < pb.size(); ++l) {
        const auto x = map.forward(path.p()[l], path.q()[l]);
        pb[l] = x[0];
        qb[l] = x[1];
    }
    const double g = map.generator(pb.back(), qb.back()) - map.generator(pb.front(), qb.front());
    return {PhasePath(path.dt(), std::move(pb), std::move(qb)), g};
}

struct CovarianceResult {
    EstimatorResult original;
    EstimatorResult transformed;
    /// Mean and standard errors of the per-sample difference (original - transformed).
    cplx difference;
    double diff_stderr_re = 0.0;
    double diff_stderr_im = 0.0;
    bool bitwise_identical = false;

    /// Paired difference within k standard errors, with a floating-point floor
    /// of 1e-12 times the prefactor for pathwise-exact identities.
    bool agree(double k = 3.0) const noexcept {
        const double floor = 1e-12 * original.prefactor;
        return std::abs(difference.real()) <= k * diff_stderr_re + floor &&
               std::abs(difference.imag()) <= k * diff_stderr_im + floor;
    }
};

/// Evaluates the estimator in the original and in the mapped coordinates on
/// the same bridge samples. The mapped integrand uses pb dqb + dG - Hb dt
/// with Hb(pb, qb) = H(p, q).
inline CovarianceResult covariance_check(const BridgeSpec &spec, const PolySymbol &sym,
                                         const CoordMap &map, double hbar, long long n_samples,
                                         const EstimatorOptions &opt = {}) {
    detail::check_estimator_args(spec, hbar, n_samples, opt);
    const SymbolEvaluator ev(sym);
    const SymbolEvaluator ev_bar(map.transform_symbol(sym));
    const double dt = spec.T / spec.steps;
    const double mass = pinned_mass(spec);
    const double prefactor = estimator_prefactor(spec, hbar);
    const int steps = spec.steps;

    struct Sums {
        detail::PhaseSums a, b, d;
        bool identical = true;
    };
    auto fold = [&](Sums &acc, std::size_t b, std::size_t e) {
        detail::BridgeScratch s(steps);
        std::vector<double> pb(s.p.size()), qb(s.q.size());
        for (std::size_t k = b; k < e; ++k) {
            detail::sample_into(spec, k, s);
            for (std::size_t l = 0; l < pb.size(); ++l) {
                const auto x = map.forward(s.p[l], s.q[l]);
                pb[l] = x[0];
                qb[l] = x[1];
            }
            const double g = map.generator(pb.back(), qb.back()) - map.generator(pb.front(), qb.front());
            const double a0 = detail::action(s.p.data(), s.q.data(), steps, dt, ev, opt.rule);
            const double a1 = detail::action(pb.data(), qb.data(), steps, dt, ev_bar, opt.rule, g);
            if (!std::isfinite(a0) || !std::isfinite(a1))
                throw PoisonedSampleError("non-finite action in sample " + std::to_string(k), spec.seed, k);
            const cplx z0 = std::polar(1.0, a0 / hbar);
            const cplx z1 = std::polar(1.0, a1 / hbar);
            acc.a.add(z0);
            acc.b.add(z1);
            acc.d.add(z0 - z1);
            acc.identical = acc.identical && std::bit_cast<std::uint64_t>(a0) == std::bit_cast<std::uint64_t>(a1);
        }
    };
    const Sums sums = deterministic_reduce(static_cast<std::size_t>(n_samples), kSampleChunk, opt.exec,
                                           Sums{}, fold, [](const Sums &x, const Sums &y) {
                                               return Sums{x.a + y.a, x.b + y.b, x.d + y.d,
                                                           x.identical && y.identical};
                                           });
    CovarianceResult r;
    r.original = detail::finish(sums.a, n_samples, prefactor, mass);
    r.transformed = detail::finish(sums.b, n_samples, prefactor, mass);
    const EstimatorResult d = detail::finish(sums.d, n_samples, prefactor, mass);
    r.difference = d.mean;
    r.diff_stderr_re = d.stderr_re;
    r.diff_stderr_im = d.stderr_im;
    r.bitwise_identical = sums.identical && r.original.mean == r.transformed.mean;
    return r;
}

// Path dumps: "WMCB", u32 version, u32 L, f64 T, f64 nu, then L + 1 records
// of (p, q) as f64, all little-endian.

inline constexpr std::uint32_t kPathDumpVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream &os, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i)
        os.put(static_cast<char>((u >> (8 * i)) & 0xFFu));
}

template <class T>
T get_le(std::istream &is) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        const int c = is.get();
        if (c == std::char_traits<char>::eof())
            throw ParseError("path dump is truncated");
        u |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return std::bit_cast<T>(u);
}

} // namespace detail

inline void write_path_dump(std::ostream &os, const PhasePath &path, double nu) {
    os.write("WMCB", 4);
    detail::put_le<std::uint32_t>(os, kPathDumpVersion);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(path.steps()));
    detail::put_le<double>(os, path.duration());
    detail::put_le<double>(os, nu);
    for (int l = 0; l <= path.steps(); ++l) {
        detail::put_le<double>(os, path.p()[static_cast<std::size_t>(l)]);
        detail::put_le<double>(os, path.q()[static_cast<std::size_t>(l)]);
    }
}

struct PathDump {
    PhasePath path;
    double T;
    double nu;
};

inline PathDump read_path_dump(std::istream &is) {
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "WMCB", 4) != 0)
        throw ParseError("not a path dump (bad magic)");
    const auto version = detail::get_le<std::uint32_t>(is);
    if (version != kPathDumpVersion)
        throw ParseError("unsupported path dump version " + std::to_string(version));
    const auto steps = detail::get_le<std::uint32_t>(is);
    const auto t = detail::get_le<double>(is);
    const auto nu = detail::get_le<double>(is);
    std::vector<double> p(steps + 1), q(steps + 1);
    for (std::uint32_t l = 0; l <= steps; ++l) {
        p[l] = detail::get_le<double>(is);
        q[l] = detail::get_le<double>(is);
    }
    return {PhasePath(t / steps, std::move(p), std::move(q)), t, nu};
}

} // namespace metriq
