// metriq: command-line harness for the phase-space quantization toolkit.
//
// Every subcommand prints a CSV table (default) or a JSON document holding the
// configuration echo, the results and the table. With --output PATH both
// PATH.csv and PATH.json are written, plus PATH.dat and PATH.gp for series.
// Exit codes: 0 success, 2 invalid input, 3 feasibility refusal, 4 numerical
// failure. Errors are reported as a single JSON line on stderr.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metriq/canonical.hpp"
#include "metriq/coherent.hpp"
#include "metriq/dynamics.hpp"
#include "metriq/fock.hpp"
#include "metriq/quantize.hpp"
#include "metriq/rng.hpp"
#include "metriq/wiener.hpp"

#ifndef METRIQ_VERSION
#define METRIQ_VERSION "0.1.0"
#endif

using json = nlohmann::ordered_json;
using namespace metriq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitRefused = 3;
constexpr int kExitNumerical = 4;

int exit_code_for(const Error &e) {
    if (dynamic_cast<const FeasibilityRefusal *>(&e))
        return kExitRefused;
    if (dynamic_cast<const DivergenceError *>(&e) || dynamic_cast<const PoisonedSampleError *>(&e))
        return kExitNumerical;
    return kExitInvalid;
}

void report_error(const std::string &kind, const std::string &message, int code, json extra = json::object()) {
    json j = {{"error", kind}, {"message", message}, {"exit", code}};
    for (auto &[k, v] : extra.items())
        j[k] = v;
    std::cerr << j.dump() << '\n';
}

void report_warning(const std::string &message) {
    std::cerr << json{{"warning", message}}.dump() << '\n';
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// "p,q" -> label.
CoherentLabel parse_point(const std::string &text, const char *what) {
    const auto comma = text.find(',');
    if (comma == std::string::npos)
        throw ParseError(std::string(what) + " must be given as p,q");
    try {
        std::size_t used = 0;
        const std::string a = text.substr(0, comma), b = text.substr(comma + 1);
        const double p = std::stod(a, &used);
        if (used != a.size())
            throw std::invalid_argument(a);
        const double q = std::stod(b, &used);
        if (used != b.size())
            throw std::invalid_argument(b);
        return {p, q};
    } catch (const std::logic_error &) {
        throw ParseError(std::string(what) + " is not a pair of numbers: '" + text + "'");
    }
}

std::vector<double> parse_list(const std::string &text, const char *what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size())
                throw std::invalid_argument(item);
        } catch (const std::logic_error &) {
            throw ParseError(std::string(what) + " has a malformed entry '" + item + "'");
        }
    }
    if (out.empty())
        throw ParseError(std::string(what) + " is empty");
    return out;
}

struct Table {
    std::vector<std::string> columns;
    std::vector<json> rows; // arrays aligned with columns

    std::string csv() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < columns.size(); ++i)
            os << (i ? "," : "") << columns[i];
        os << '\n';
        for (const json &r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i)
                    os << ',';
                const json &v = r[i];
                if (v.is_number_float())
                    os << fmt(v.get<double>());
                else if (v.is_string())
                    os << v.get<std::string>();
                else
                    os << v.dump();
            }
            os << '\n';
        }
        return os.str();
    }

    json to_json() const {
        json rs = json::array();
        for (const json &r : rows) {
            json o = json::object();
            for (std::size_t i = 0; i < columns.size(); ++i)
                o[columns[i]] = r[i];
            rs.push_back(o);
        }
        return {{"columns", columns}, {"rows", rs}};
    }
};

struct Outcome {
    json config = json::object();
    json results = json::object();
    Table table;
    /// Plot: x column and y columns of the table, when the table is a series.
    std::string plot_x;
    std::vector<std::string> plot_y;
    std::string plot_title;
};

struct Globals {
    std::string format = "csv";
    std::string output;
    unsigned threads = 0;
    std::string replay;
    double label_radius = kDefaultLabelRadius;
};

std::uint64_t default_seed() {
    if (const char *env = std::getenv("METRIQ_SEED")) {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used == std::strlen(env))
                return v;
        } catch (const std::logic_error &) {
        }
        throw ParseError(std::string("METRIQ_SEED is not an unsigned integer: '") + env + "'");
    }
    return 0;
}

PolySymbol symbol_arg(const std::string &text) { return PolySymbol::parse(text); }

StochasticRule rule_arg(const std::string &r) {
    return r == "ito" ? StochasticRule::Ito : StochasticRule::Stratonovich;
}

json result_json(const EstimatorResult &r) {
    return {{"re", r.mean.real()},        {"im", r.mean.imag()},       {"stderr_re", r.stderr_re},
            {"stderr_im", r.stderr_im},   {"stderr", r.stderr()},      {"n_samples", r.n_samples},
            {"pinned_mass", r.raw_mass},  {"prefactor", r.prefactor}};
}

// ---------------------------------------------------------------------------
// Subcommands. Each registers its options and returns a runner that validates
// everything up front and then computes.

using Runner = std::function<Outcome(const Globals &)>;

struct Command {
    CLI::App *app;
    Runner run;
};

Command add_check_unity(CLI::App &root) {
    auto *app = root.add_subcommand("check-unity", "Resolution of unity by coherent-state quadrature");
    struct P {
        int dim = 64, levels = 0, nodes = 240;
        double hbar = 1.0, radius = 12.0, tol = 1e-6;
        bool no_trunc = false;
    };
    auto p = std::make_shared<P>();
    app->add_option("--dim", p->dim, "Fock cutoff")->capture_default_str();
    app->add_option("--hbar", p->hbar)->capture_default_str();
    app->add_option("--radius", p->radius, "Half-width R of the square [-R,R]^2")->capture_default_str();
    app->add_option("--nodes", p->nodes, "Midpoint nodes per axis")->capture_default_str();
    app->add_option("--levels", p->levels, "Levels compared with the identity (default dim/2)");
    app->add_option("--tol", p->tol, "Target deviation")->capture_default_str();
    app->add_flag("--no-truncation-check", p->no_trunc, "Skip the re-run at 2*dim");
    return {app, [p](const Globals &g) {
                const HilbertDim space(p->dim, p->hbar);
                const QuadratureGrid grid{p->radius, p->nodes};
                if (grid.nodes < 1 || !(grid.radius > 0))
                    throw ContractViolation("--radius and --nodes must be positive");
                const int levels = p->levels > 0 ? p->levels : p->dim / 2;
                if (levels > p->dim)
                    throw InvalidDimension("--levels exceeds --dim");
                const Execution exec{g.threads};
                const UnityReport r =
                    resolution_of_unity_check(FiducialSpec::vacuum(), space, grid, levels, p->tol, exec);
                if (r.under_resolved)
                    report_warning(r.warning);
                Outcome o;
                o.config = {{"dim", p->dim},       {"hbar", p->hbar},   {"radius", p->radius},
                            {"nodes", p->nodes},   {"levels", levels},  {"tol", p->tol},
                            {"truncation_check", !p->no_trunc}};
                o.table.columns = {"dim", "hbar", "radius", "nodes", "levels", "deviation", "diag0_drift",
                                   "within_tol", "under_resolved"};
                json row = {p->dim, p->hbar, p->radius, p->nodes, levels, r.deviation, r.diagonal_drift(0),
                            r.deviation <= p->tol, r.under_resolved};
                std::vector<double> drift(r.diagonal_drift.data(), r.diagonal_drift.data() + r.diagonal_drift.size());
                o.results = {{"deviation", r.deviation}, {"diagonal_drift", drift}, {"warning", r.warning}};
                if (!p->no_trunc) {
                    const UnityReport r2 = resolution_of_unity_check(
                        FiducialSpec::vacuum(), HilbertDim(2 * p->dim, p->hbar), grid, levels, p->tol, exec);
                    o.table.columns.push_back("deviation_2dim");
                    row.push_back(r2.deviation);
                    o.results["deviation_2dim"] = r2.deviation;
                }
                o.table.rows.push_back(row);
                return o;
            }};
}

Command add_compose_check(CLI::App &root) {
    auto *app = root.add_subcommand("compose-check", "Weyl multiplication law on random label pairs");
    struct P {
        int dim = 128, pairs = 100;
        double hbar = 1.0, bound = 2.0;
        std::uint64_t seed = 0;
        std::string convention = "both";
        std::string l1, l2;
        bool no_trunc = false;
    };
    auto p = std::make_shared<P>();
    p->seed = default_seed();
    app->add_option("--dim", p->dim)->capture_default_str();
    app->add_option("--hbar", p->hbar)->capture_default_str();
    app->add_option("--pairs", p->pairs, "Number of random pairs")->capture_default_str();
    app->add_option("--bound", p->bound, "Labels drawn uniformly from [-bound, bound]^2")->capture_default_str();
    app->add_option("--seed", p->seed, "Seed (falls back to METRIQ_SEED)");
    app->add_option("--convention", p->convention, "ordered, symmetric or both")
        ->check(CLI::IsMember({"ordered", "symmetric", "both"}))
        ->capture_default_str();
    app->add_option("--l1", p->l1, "Single first label p,q (replaces the random pairs)");
    app->add_option("--l2", p->l2, "Single second label p,q");
    app->add_flag("--no-truncation-check", p->no_trunc, "Skip the re-run of the worst pair at 2*dim");
    return {app, [p](const Globals &g) {
                const HilbertDim space(p->dim, p->hbar);
                std::vector<std::pair<CoherentLabel, CoherentLabel>> pairs;
                if (!p->l1.empty() || !p->l2.empty()) {
                    if (p->l1.empty() || p->l2.empty())
                        throw ContractViolation("--l1 and --l2 must be given together");
                    pairs.push_back({parse_point(p->l1, "--l1"), parse_point(p->l2, "--l2")});
                } else {
                    if (p->pairs < 1)
                        throw ContractViolation("--pairs must be positive");
                    RandomStream rs(p->seed, 0);
                    auto u = [&] { return p->bound * (2.0 * rs.uniform() - 1.0); };
                    for (int k = 0; k < p->pairs; ++k) {
                        const CoherentLabel a{u(), u()};
                        const CoherentLabel b{u(), u()};
                        pairs.push_back({a, b});
                    }
                }
                for (const auto &[a, b] : pairs) {
                    check_label(a, g.label_radius);
                    check_label(b, g.label_radius);
                    check_label(a + b, g.label_radius);
                }
                const bool ord = p->convention != "symmetric";
                const bool sym = p->convention != "ordered";
                Outcome o;
                o.config = {{"dim", p->dim},   {"hbar", p->hbar}, {"pairs", static_cast<int>(pairs.size())},
                            {"bound", p->bound}, {"seed", p->seed}, {"convention", p->convention}};
                o.table.columns = {"p1", "q1", "p2", "q2"};
                if (ord)
                    o.table.columns.push_back("deviation_ordered");
                if (sym)
                    o.table.columns.push_back("deviation_symmetric");
                double worst = 0.0;
                std::size_t worst_i = 0;
                for (std::size_t i = 0; i < pairs.size(); ++i) {
                    const auto &[a, b] = pairs[i];
                    json row = {a.p, a.q, b.p, b.q};
                    const ComposeDeviation dev = weyl_compose_deviations(a, b, space, g.label_radius);
                    double here = 0.0;
                    if (ord) {
                        row.push_back(dev.ordered);
                        here = std::max(here, dev.ordered);
                    }
                    if (sym) {
                        row.push_back(dev.symmetric);
                        here = std::max(here, dev.symmetric);
                    }
                    if (here >= worst) {
                        worst = here;
                        worst_i = i;
                    }
                    o.table.rows.push_back(row);
                }
                o.results = {{"max_deviation", worst}};
                if (!p->no_trunc) {
                    const auto &[a, b] = pairs[worst_i];
                    const HilbertDim big(2 * p->dim, p->hbar);
                    o.results["worst_pair_2dim"] =
                        weyl_compose_check(a, b, big, ord ? WeylConvention::Ordered : WeylConvention::Symmetric,
                                           g.label_radius);
                }
                return o;
            }};
}

Command add_quantize_compare(CLI::App &root) {
    auto *app = root.add_subcommand("quantize-compare", "Closed-form antinormal operator versus quadrature");
    struct P {
        std::string symbol;
        int dim = 64, nodes = 280, levels = 0;
        double hbar = 1.0, radius = 14.0;
        bool no_trunc = false;
    };
    auto p = std::make_shared<P>();
    app->add_option("--symbol", p->symbol, "Polynomial H(p,q), e.g. \"0.5*p^2 + 0.5*q^2\"")->required();
    app->add_option("--dim", p->dim)->capture_default_str();
    app->add_option("--hbar", p->hbar)->capture_default_str();
    app->add_option("--radius", p->radius)->capture_default_str();
    app->add_option("--nodes", p->nodes)->capture_default_str();
    app->add_option("--levels", p->levels, "Levels compared (default dim/4)");
    app->add_flag("--no-truncation-check", p->no_trunc);
    return {app, [p](const Globals &g) {
                const PolySymbol h = symbol_arg(p->symbol);
                const HilbertDim space(p->dim, p->hbar);
                const int levels = p->levels > 0 ? p->levels : p->dim / 4;
                if (levels > p->dim)
                    throw InvalidDimension("--levels exceeds --dim");
                const OperatorMatrix exact = antinormal_quantize(h, space);
                const SymbolQuadrature quad =
                    antinormal_quantize_quadrature(h, space, {p->radius, p->nodes}, Execution{g.threads});
                if (quad.under_resolved)
                    report_warning(quad.warning);
                Outcome o;
                o.config = {{"symbol", h.to_string()}, {"dim", p->dim},     {"hbar", p->hbar},
                            {"radius", p->radius},     {"nodes", p->nodes}, {"levels", levels}};
                o.table.columns = {"n", "closed_form", "quadrature", "difference"};
                for (int n = 0; n < levels; ++n) {
                    const double a = exact(n, n).real(), b = quad.op(n, n).real();
                    o.table.rows.push_back(json{n, a, b, b - a});
                }
                const double dev = max_abs(exact.entries().topLeftCorner(levels, levels) -
                                           quad.op.entries().topLeftCorner(levels, levels));
                o.results = {{"max_deviation", dev}, {"under_resolved", quad.under_resolved}};
                if (!p->no_trunc) {
                    const OperatorMatrix big = antinormal_quantize(h, HilbertDim(2 * p->dim, p->hbar));
                    o.results["closed_form_drift_2dim"] = max_abs(
                        big.entries().topLeftCorner(levels, levels) - exact.entries().topLeftCorner(levels, levels));
                }
                o.plot_x = "n";
                o.plot_y = {"closed_form", "quadrature"};
                o.plot_title = "diagonal of the antinormal operator";
                return o;
            }};
}

Command add_spectrum(CLI::App &root) {
    auto *app = root.add_subcommand("spectrum", "Lowest eigenvalues of the antinormal quantization");
    struct P {
        std::string symbol;
        int dim = 64, count = 16;
        double hbar = 1.0;
        bool no_trunc = false;
    };
    auto p = std::make_shared<P>();
    app->add_option("--symbol", p->symbol)->required();
    app->add_option("--dim", p->dim)->capture_default_str();
    app->add_option("--hbar", p->hbar)->capture_default_str();
    app->add_option("--count", p->count, "Number of eigenvalues reported")->capture_default_str();
    app->add_flag("--no-truncation-check", p->no_trunc);
    return {app, [p](const Globals &) {
                const PolySymbol h = symbol_arg(p->symbol);
                const HilbertDim space(p->dim, p->hbar);
                if (p->count < 1 || p->count > p->dim)
                    throw ContractViolation("--count must lie in [1, dim]");
                const RealVector ev = hermitian_eig(antinormal_quantize(h, space)).values;
                RealVector ev2;
                if (!p->no_trunc)
                    ev2 = hermitian_eig(antinormal_quantize(h, HilbertDim(2 * p->dim, p->hbar))).values;
                Outcome o;
                o.config = {{"symbol", h.to_string()}, {"dim", p->dim}, {"hbar", p->hbar}, {"count", p->count}};
                o.table.columns = {"n", "eigenvalue"};
                if (!p->no_trunc)
                    o.table.columns.insert(o.table.columns.end(), {"eigenvalue_2dim", "drift"});
                double worst = 0.0;
                for (int n = 0; n < p->count; ++n) {
                    json row = {n, ev(n)};
                    if (!p->no_trunc) {
                        row.push_back(ev2(n));
                        row.push_back(ev2(n) - ev(n));
                        worst = std::max(worst, std::abs(ev2(n) - ev(n)));
                    }
                    o.table.rows.push_back(row);
                }
                if (!p->no_trunc)
                    o.results["max_drift_2dim"] = worst;
                o.plot_x = "n";
                o.plot_y = {"eigenvalue"};
                o.plot_title = "spectrum";
                return o;
            }};
}

Command add_metric(CLI::App &root) {
    auto *app = root.add_subcommand("metric", "Fluctuation metric (A, B, C) of a number-state fiducial");
    struct P {
        int dim = 64, level = 0, labels = 10;
        double hbar = 1.0, bound = 2.0;
        std::uint64_t seed = 0;
        bool no_trunc = false;
    };
    auto p = std::make_shared<P>();
    p->seed = default_seed();
    app->add_option("--dim", p->dim)->capture_default_str();
    app->add_option("--hbar", p->hbar)->capture_default_str();
    app->add_option("--level", p->level, "Fiducial number state |n>")->capture_default_str();
    app->add_option("--labels", p->labels, "Random labels besides the origin")->capture_default_str();
    app->add_option("--bound", p->bound)->capture_default_str();
    app->add_option("--seed", p->seed);
    app->add_flag("--no-truncation-check", p->no_trunc);
    return {app, [p](const Globals &g) {
                const HilbertDim space(p->dim, p->hbar);
                const StateVector psi = StateVector::basis(space, p->level);
                if (p->labels < 0)
                    throw ContractViolation("--labels must be non-negative");
                std::vector<CoherentLabel> at{{0, 0}};
                RandomStream rs(p->seed, 0);
                for (int k = 0; k < p->labels; ++k)
                    at.push_back({p->bound * (2 * rs.uniform() - 1), p->bound * (2 * rs.uniform() - 1)});
                for (const auto &l : at)
                    check_label(l, g.label_radius);
                Outcome o;
                o.config = {{"dim", p->dim},       {"hbar", p->hbar},   {"level", p->level},
                            {"labels", p->labels}, {"bound", p->bound}, {"seed", p->seed}};
                o.table.columns = {"p", "q", "A", "B", "C", "det"};
                const PhaseMetric g0 = fluctuation_metric(psi);
                double spread = 0.0;
                for (const auto &l : at) {
                    const PhaseMetric m = fluctuation_metric(psi, l);
                    spread = std::max({spread, std::abs(m.A - g0.A), std::abs(m.B - g0.B), std::abs(m.C - g0.C)});
                    o.table.rows.push_back(json{l.p, l.q, m.A, m.B, m.C, m.determinant()});
                }
                o.results = {{"A", g0.A}, {"B", g0.B}, {"C", g0.C}, {"max_label_spread", spread}};
                if (!p->no_trunc) {
                    const PhaseMetric m2 = fluctuation_metric(StateVector::basis(HilbertDim(2 * p->dim, p->hbar), p->level));
                    o.results["drift_2dim"] = std::max({std::abs(m2.A - g0.A), std::abs(m2.B - g0.B), std::abs(m2.C - g0.C)});
                }
                return o;
            }};
}

Command add_flow(CLI::App &root) {
    auto *app = root.add_subcommand("flow", "Hamiltonian flow by fixed-step RK4");
    struct P {
        std::string symbol, from = "0,1";
        double T = 2 * std::numbers::pi;
        int steps = 1024, every = 1;
    };
    auto p = std::make_shared<P>();
    app->add_option("--symbol", p->symbol)->required();
    app->add_option("--from", p->from, "Initial point p,q")->capture_default_str();
    app->add_option("--T", p->T, "Duration")->capture_default_str();
    app->add_option("--steps", p->steps)->capture_default_str();
    app->add_option("--every", p->every, "Print every n-th point")->capture_default_str();
    return {app, [p](const Globals &) {
                const PolySymbol h = symbol_arg(p->symbol);
                const CoherentLabel x0 = parse_point(p->from, "--from");
                if (p->every < 1)
                    throw ContractViolation("--every must be positive");
                const PhasePath path = hamilton_flow(h, {x0.p, x0.q}, p->T, p->steps);
                Outcome o;
                o.config = {{"symbol", h.to_string()}, {"from", {x0.p, x0.q}}, {"T", p->T}, {"steps", p->steps}};
                o.table.columns = {"t", "p", "q", "H"};
                for (int l = 0; l <= path.steps(); ++l) {
                    if (l % p->every != 0 && l != path.steps())
                        continue;
                    const double pp = path.p()[static_cast<std::size_t>(l)], qq = path.q()[static_cast<std::size_t>(l)];
                    o.table.rows.push_back(json{path.time(l), pp, qq, h(pp, qq)});
                }
                o.results = {{"end", {path.back().p, path.back().q}},
                             {"energy_drift", h(path.back().p, path.back().q) - h(x0.p, x0.q)}};
                o.plot_x = "q";
                o.plot_y = {"p"};
                o.plot_title = "phase portrait";
                return o;
            }};
}

Command add_bvp_demo(CLI::App &root) {
    auto *app = root.add_subcommand("bvp-demo", "Boundary-value classification by shooting");
    struct P {
        std::string symbol = "0.5*p^2 + 0.5*q^2";
        double q0 = 0.0, qT = 1.0, T = 2 * std::numbers::pi, pmin = -5, pmax = 5, hit_tol = 1e-6;
        int count = 256, steps = 1024;
        std::string from, to;
    };
    auto p = std::make_shared<P>();
    app->add_option("--symbol", p->symbol)->capture_default_str();
    app->add_option("--q0", p->q0)->capture_default_str();
    app->add_option("--qT", p->qT)->capture_default_str();
    app->add_option("--T", p->T)->capture_default_str();
    app->add_option("--pmin", p->pmin)->capture_default_str();
    app->add_option("--pmax", p->pmax)->capture_default_str();
    app->add_option("--count", p->count, "Momentum scan points")->capture_default_str();
    app->add_option("--steps", p->steps)->capture_default_str();
    app->add_option("--hit-tol", p->hit_tol)->capture_default_str();
    app->add_option("--from", p->from, "Over-specified check: initial p,q");
    app->add_option("--to", p->to, "Over-specified check: final p,q");
    return {app, [p](const Globals &) {
                const PolySymbol h = symbol_arg(p->symbol);
                Outcome o;
                if (!p->from.empty() || !p->to.empty()) {
                    if (p->from.empty() || p->to.empty())
                        throw ContractViolation("--from and --to must be given together");
                    const CoherentLabel a = parse_point(p->from, "--from"), b = parse_point(p->to, "--to");
                    const BvpReport r = bvp_overdetermined_check(h, {a.p, a.q}, {b.p, b.q}, p->T, p->steps, p->hit_tol);
                    o.config = {{"symbol", h.to_string()}, {"from", {a.p, a.q}}, {"to", {b.p, b.q}},
                                {"T", p->T},               {"steps", p->steps},  {"hit_tol", p->hit_tol}};
                    o.table.columns = {"classification", "consistent", "achieved_p", "achieved_q", "distance"};
                    o.table.rows.push_back(
                        json{to_string(r.classification), r.consistent, r.achieved.p, r.achieved.q, r.distance});
                    o.results = {{"classification", to_string(r.classification)}, {"consistent", r.consistent},
                                 {"distance", r.distance}};
                    return o;
                }
                const BvpReport r = bvp_shoot(h, p->q0, p->qT, p->T, {p->pmin, p->pmax, p->count},
                                              {p->steps, p->hit_tol, 1e-10});
                o.config = {{"symbol", h.to_string()}, {"q0", p->q0},       {"qT", p->qT},
                            {"T", p->T},               {"pmin", p->pmin},   {"pmax", p->pmax},
                            {"count", p->count},       {"steps", p->steps}, {"hit_tol", p->hit_tol}};
                o.table.columns = {"classification", "solutions", "whole_scan", "scan_spacing", "flagged"};
                o.table.rows.push_back(json{to_string(r.classification), static_cast<int>(r.solutions.size()),
                                            r.whole_scan, r.scan_spacing, static_cast<int>(r.flagged.size())});
                o.results = {{"classification", to_string(r.classification)},
                             {"solutions", r.solutions},
                             {"whole_scan", r.whole_scan},
                             {"flagged", r.flagged}};
                return o;
            }};
}

Command add_propagate_exact(CLI::App &root) {
    auto *app = root.add_subcommand("propagate-exact", "<to| exp(-iHT/hbar) |from> by matrix exponentiation");
    struct P {
        std::string symbol, from = "0,0", to = "0,0";
        double T = 1.0, hbar = 1.0, tol = 1e-8;
        int dim = 64, max_dim = 256;
    };
    auto p = std::make_shared<P>();
    app->add_option("--symbol", p->symbol)->required();
    app->add_option("--from", p->from)->capture_default_str();
    app->add_option("--to", p->to)->capture_default_str();
    app->add_option("--T", p->T)->capture_default_str();
    app->add_option("--hbar", p->hbar)->capture_default_str();
    app->add_option("--dim", p->dim, "Starting dimension")->capture_default_str();
    app->add_option("--max-dim", p->max_dim)->capture_default_str();
    app->add_option("--tol", p->tol, "Escalation tolerance")->capture_default_str();
    return {app, [p](const Globals &g) {
                const PolySymbol h = symbol_arg(p->symbol);
                const CoherentLabel a = parse_point(p->from, "--from"), b = parse_point(p->to, "--to");
                const HilbertDim space(p->dim, p->hbar);
                const PropagatorResult r = exact_propagator(h, a, b, p->T, space, {p->max_dim, p->tol, g.label_radius});
                if (!r.converged)
                    report_warning("dimension escalation stopped at " + std::to_string(r.dim_used) +
                                   " before reaching the tolerance");
                Outcome o;
                o.config = {{"symbol", h.to_string()}, {"from", {a.p, a.q}}, {"to", {b.p, b.q}}, {"T", p->T},
                            {"hbar", p->hbar},         {"dim", p->dim},      {"max_dim", p->max_dim}, {"tol", p->tol}};
                o.table.columns = {"re", "im", "abs", "arg", "dim_used", "truncation_delta", "converged"};
                o.table.rows.push_back(json{r.value.real(), r.value.imag(), std::abs(r.value), std::arg(r.value),
                                            r.dim_used, r.truncation_delta, r.converged});
                o.results = {{"re", r.value.real()},       {"im", r.value.imag()},
                             {"dim_used", r.dim_used},     {"truncation_delta", r.truncation_delta},
                             {"converged", r.converged}};
                return o;
            }};
}

struct McParams {
    std::string symbol = "0", from = "0,0", to = "0,0", rule = "stratonovich";
    double nu = 8.0, T = 1.0, hbar = 1.0, guard = 6.0;
    int steps = 512;
    long long samples = 1000000;
    std::uint64_t seed = 0;
    bool override_guard = false;
};

void add_mc_options(CLI::App *app, McParams &p, bool with_nu) {
    p.seed = default_seed();
    app->add_option("--symbol", p.symbol, "Polynomial H(p,q)")->capture_default_str();
    app->add_option("--from", p.from, "Initial label p,q")->capture_default_str();
    app->add_option("--to", p.to, "Final label p,q")->capture_default_str();
    if (with_nu)
        app->add_option("--nu", p.nu, "Diffusion constant")->capture_default_str();
    app->add_option("--T", p.T, "Duration")->capture_default_str();
    app->add_option("--hbar", p.hbar)->capture_default_str();
    app->add_option("--steps", p.steps, "Time steps L")->capture_default_str();
    app->add_option("--samples", p.samples, "Bridge samples")->capture_default_str();
    app->add_option("--seed", p.seed, "Seed (falls back to METRIQ_SEED)");
    app->add_option("--rule", p.rule, "Stochastic integral rule")
        ->check(CLI::IsMember({"stratonovich", "ito"}))
        ->capture_default_str();
    app->add_option("--guard", p.guard, "Feasibility bound on nu T / (2 hbar)")->capture_default_str();
    app->add_flag("--override-guard", p.override_guard, "Run beyond the feasibility guard");
}

BridgeSpec bridge_of(const McParams &p, const Globals &g) {
    const CoherentLabel a = parse_point(p.from, "--from"), b = parse_point(p.to, "--to");
    check_label(a, g.label_radius);
    check_label(b, g.label_radius);
    BridgeSpec s;
    s.nu = p.nu;
    s.T = p.T;
    s.steps = p.steps;
    s.start = {a.p, a.q};
    s.end = {b.p, b.q};
    s.seed = p.seed;
    s.validate();
    return s;
}

EstimatorOptions estimator_options(const McParams &p, const Globals &g) {
    EstimatorOptions o;
    o.rule = rule_arg(p.rule);
    o.guard = p.guard;
    o.override_guard = p.override_guard;
    o.exec.threads = g.threads;
    return o;
}

json mc_config(const McParams &p, const PolySymbol &h, const BridgeSpec &s) {
    return {{"symbol", h.to_string()}, {"from", {s.start.p, s.start.q}}, {"to", {s.end.p, s.end.q}},
            {"nu", p.nu},              {"T", p.T},                       {"hbar", p.hbar},
            {"steps", p.steps},        {"samples", p.samples},           {"seed", p.seed},
            {"rule", p.rule},          {"guard", p.guard},               {"override_guard", p.override_guard}};
}

Command add_propagate_mc(CLI::App &root) {
    auto *app = root.add_subcommand("propagate-mc", "Monte Carlo path-integral propagator at finite nu");
    auto p = std::make_shared<McParams>();
    auto compare = std::make_shared<bool>(false);
    auto dump = std::make_shared<std::string>();
    add_mc_options(app, *p, true);
    app->add_flag("--compare-exact", *compare, "Also compute the matrix-exponential value");
    app->add_option("--dump-path", *dump, "Write the first bridge sample as a binary path dump");
    return {app, [p, compare, dump](const Globals &g) {
                const PolySymbol h = symbol_arg(p->symbol);
                const BridgeSpec s = bridge_of(*p, g);
                const EstimatorOptions eo = estimator_options(*p, g);
                if (p->samples < 1000)
                    throw ContractViolation("--samples must be at least 1000");
                if (!eo.override_guard && s.nu * s.T / (2 * p->hbar) > eo.guard)
                    throw FeasibilityRefusal("nu T / (2 hbar) = " + fmt(s.nu * s.T / (2 * p->hbar)) +
                                             " exceeds the feasibility guard " + fmt(eo.guard) +
                                             "; pass --override-guard to run anyway");
                if (!dump->empty()) {
                    std::ofstream f(*dump, std::ios::binary);
                    if (!f)
                        throw ContractViolation("cannot open " + *dump);
                    write_path_dump(f, sample_pinned_bridge(s, 0), s.nu);
                }
                const EstimatorResult r = estimate_propagator(s, h, p->hbar, p->samples, eo);
                Outcome o;
                o.config = mc_config(*p, h, s);
                o.table.columns = {"nu", "re", "im", "stderr_re", "stderr_im", "stderr", "n_samples"};
                json row = {s.nu, r.mean.real(), r.mean.imag(), r.stderr_re, r.stderr_im, r.stderr(), r.n_samples};
                o.results = result_json(r);
                if (*compare) {
                    const PropagatorResult ex = exact_propagator(h, {s.start.p, s.start.q}, {s.end.p, s.end.q}, s.T,
                                                                 HilbertDim(64, p->hbar), {256, 1e-8, g.label_radius});
                    const cplx d = r.mean - ex.value;
                    const double z = std::max(std::abs(d.real()) / r.stderr_re, std::abs(d.imag()) / r.stderr_im);
                    o.table.columns.insert(o.table.columns.end(), {"exact_re", "exact_im", "nsigma"});
                    row.insert(row.end(), {ex.value.real(), ex.value.imag(), z});
                    o.results["exact"] = {{"re", ex.value.real()}, {"im", ex.value.imag()}, {"dim_used", ex.dim_used}};
                    o.results["nsigma"] = z;
                }
                o.table.rows.push_back(row);
                return o;
            }};
}

Command add_nu_sweep(CLI::App &root) {
    auto *app = root.add_subcommand("nu-sweep", "Estimates across nu against the exact propagator");
    auto p = std::make_shared<McParams>();
    auto nus = std::make_shared<std::string>("1,2,4,8");
    add_mc_options(app, *p, false);
    app->add_option("--nus", *nus, "Comma-separated nu values")->capture_default_str();
    return {app, [p, nus](const Globals &g) {
                const PolySymbol h = symbol_arg(p->symbol);
                const std::vector<double> list = parse_list(*nus, "--nus");
                p->nu = list.front();
                const BridgeSpec s = bridge_of(*p, g);
                const EstimatorOptions eo = estimator_options(*p, g);
                const PropagatorResult ex = exact_propagator(h, {s.start.p, s.start.q}, {s.end.p, s.end.q}, s.T,
                                                             HilbertDim(64, p->hbar), {256, 1e-8, g.label_radius});
                const SweepTable t = nu_sweep(s, h, p->hbar, list, p->samples, ex.value, eo);
                Outcome o;
                o.config = mc_config(*p, h, s);
                o.config.erase("nu");
                o.config["nus"] = list;
                o.table.columns = {"nu", "re", "im", "stderr_re", "stderr_im", "stderr", "error"};
                for (const SweepRow &r : t.rows)
                    o.table.rows.push_back(json{r.nu, r.estimate.mean.real(), r.estimate.mean.imag(),
                                                r.estimate.stderr_re, r.estimate.stderr_im, r.estimate.stderr(),
                                                r.error});
                o.results = {{"oracle", {{"re", ex.value.real()}, {"im", ex.value.imag()}}}, {"monotone", t.monotone}};
                o.plot_x = "nu";
                o.plot_y = {"error"};
                o.plot_title = "|estimate - exact| against nu";
                return o;
            }};
}

Command add_transform_check(CLI::App &root) {
    auto *app = root.add_subcommand("transform-check", "Estimator in original versus mapped coordinates");
    auto p = std::make_shared<McParams>();
    struct M {
        std::string map = "scaling";
        double lambda = 1.5, theta = std::numbers::pi / 6;
        std::string matrix;
        int paths = 1000;
    };
    auto m = std::make_shared<M>();
    add_mc_options(app, *p, true);
    p->samples = 200000;
    p->nu = 4.0;
    app->add_option("--map", m->map, "identity, scaling, rotation or matrix")
        ->check(CLI::IsMember({"identity", "scaling", "rotation", "matrix"}))
        ->capture_default_str();
    app->add_option("--lambda", m->lambda, "Scaling: pb = p / lambda, qb = lambda q")->capture_default_str();
    app->add_option("--theta", m->theta, "Rotation angle")->capture_default_str();
    app->add_option("--matrix", m->matrix, "a,b,c,d with ad - bc = 1");
    app->add_option("--paths", m->paths, "Bridges used for the pathwise residual")->capture_default_str();
    return {app, [p, m](const Globals &g) {
                const PolySymbol h = symbol_arg(p->symbol);
                const BridgeSpec s = bridge_of(*p, g);
                const EstimatorOptions eo = estimator_options(*p, g);
                CoordMap map = CoordMap::identity();
                json map_cfg = {{"kind", m->map}};
                if (m->map == "scaling") {
                    map = CoordMap::scaling(m->lambda);
                    map_cfg["lambda"] = m->lambda;
                } else if (m->map == "rotation") {
                    map = CoordMap::rotation(m->theta);
                    map_cfg["theta"] = m->theta;
                } else if (m->map == "matrix") {
                    const std::vector<double> v = parse_list(m->matrix, "--matrix");
                    if (v.size() != 4)
                        throw ParseError("--matrix needs four entries a,b,c,d");
                    map = CoordMap(Mat2{v[0], v[1], v[2], v[3]});
                    map_cfg["matrix"] = v;
                }
                if (m->paths < 1)
                    throw ContractViolation("--paths must be positive");
                double residual = 0.0;
                for (int k = 0; k < m->paths; ++k) {
                    const PhasePath path = sample_pinned_bridge(s, static_cast<std::uint64_t>(k));
                    const TransformedPath tp = transform_path(path, map);
                    residual = std::max(residual, std::abs(stratonovich_pdq(tp.path) + tp.generator_increment -
                                                           stratonovich_pdq(path)));
                }
                const CovarianceResult r = covariance_check(s, h, map, p->hbar, p->samples, eo);
                Outcome o;
                o.config = mc_config(*p, h, s);
                o.config["map"] = map_cfg;
                o.config["paths"] = m->paths;
                o.table.columns = {"coordinates", "re", "im", "stderr_re", "stderr_im"};
                o.table.rows.push_back(json{"original", r.original.mean.real(), r.original.mean.imag(),
                                            r.original.stderr_re, r.original.stderr_im});
                o.table.rows.push_back(json{"mapped", r.transformed.mean.real(), r.transformed.mean.imag(),
                                            r.transformed.stderr_re, r.transformed.stderr_im});
                o.table.rows.push_back(json{"difference", r.difference.real(), r.difference.imag(),
                                            r.diff_stderr_re, r.diff_stderr_im});
                o.results = {{"original", result_json(r.original)},
                             {"mapped", result_json(r.transformed)},
                             {"agree_3sigma", r.agree(3.0)},
                             {"bitwise_identical", r.bitwise_identical},
                             {"pathwise_residual_max", residual}};
                return o;
            }};
}

// ---------------------------------------------------------------------------

std::string version_string() { return std::string("metriq ") + METRIQ_VERSION; }

void write_file(const std::string &path, const std::string &text) {
    std::ofstream f(path);
    if (!f)
        throw ContractViolation("cannot write " + path);
    f << text;
}

void write_plot(const std::string &base, const Outcome &o) {
    std::ostringstream dat;
    dat << "#";
    for (const auto &c : o.table.columns)
        dat << ' ' << c;
    dat << '\n';
    for (const json &r : o.table.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i)
                dat << ' ';
            dat << (r[i].is_number_float() ? fmt(r[i].get<double>()) : r[i].dump());
        }
        dat << '\n';
    }
    write_file(base + ".dat", dat.str());

    auto col = [&](const std::string &name) {
        const auto it = std::find(o.table.columns.begin(), o.table.columns.end(), name);
        return std::to_string(it - o.table.columns.begin() + 1);
    };
    std::ostringstream gp;
    const std::string file = std::filesystem::path(base).filename().string() + ".dat";
    gp << "# gnuplot -persist " << std::filesystem::path(base).filename().string() << ".gp\n"
       << "set title \"" << o.plot_title << "\"\n"
       << "set xlabel \"" << o.plot_x << "\"\n"
       << "set key left top\n"
       << "plot ";
    for (std::size_t i = 0; i < o.plot_y.size(); ++i)
        gp << (i ? ", \\\n     " : "") << '"' << file << "\" using " << col(o.plot_x) << ':' << col(o.plot_y[i])
           << " with linespoints title \"" << o.plot_y[i] << '"';
    gp << '\n';
    write_file(base + ".gp", gp.str());
}

int run(const std::vector<std::string> &args) {
    CLI::App app{"Phase-space quantization and path-integral experiments", "metriq"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_version_flag("--version", version_string());
    app.require_subcommand(0, 1);
    app.fallthrough();

    Globals g;
    app.add_option("--format", g.format, "Output on stdout")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    app.add_option("--output", g.output, "Write PATH.csv and PATH.json (and PATH.dat, PATH.gp for series)");
    app.add_option("--threads", g.threads, "Worker threads (affects speed only)");
    app.add_option("--replay", g.replay, "Re-run the configuration recorded in a JSON output");
    app.add_option("--label-radius", g.label_radius, "Largest admissible |p|, |q|")->capture_default_str();

    std::vector<Command> commands = {
        add_check_unity(app),     add_compose_check(app),   add_quantize_compare(app), add_spectrum(app),
        add_metric(app),          add_flow(app),            add_bvp_demo(app),         add_propagate_exact(app),
        add_propagate_mc(app),    add_nu_sweep(app),        add_transform_check(app),
    };

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        report_error("usage", e.what(), kExitInvalid);
        return kExitInvalid;
    }

    if (!g.replay.empty()) {
        std::ifstream f(g.replay);
        if (!f)
            throw ParseError("cannot open replay file " + g.replay);
        json j;
        try {
            j = json::parse(f);
        } catch (const json::exception &e) {
            throw ParseError(std::string("replay file is not valid JSON: ") + e.what());
        }
        if (!j.contains("argv") || !j["argv"].is_array())
            throw ParseError("replay file has no argv array");
        std::vector<std::string> again = j["argv"].get<std::vector<std::string>>();
        // options given alongside --replay (output, format, threads) still apply
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--replay") {
                ++i;
                continue;
            }
            if (args[i].rfind("--replay=", 0) == 0)
                continue;
            again.push_back(args[i]);
        }
        return run(again);
    }
    if (g.threads == 0)
        g.threads = Execution::hardware().threads;

    const Command *chosen = nullptr;
    for (const Command &c : commands)
        if (c.app->parsed())
            chosen = &c;
    if (!chosen) {
        report_error("usage", "a subcommand is required (see --help)", kExitInvalid);
        return kExitInvalid;
    }

    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = chosen->run(g);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // argv without the output-only options, enough to reproduce the numbers
    std::vector<std::string> echo;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string &a = args[i];
        if (a == "--output" || a == "--format" || a == "--replay") {
            ++i;
            continue;
        }
        if (a.rfind("--output=", 0) == 0 || a.rfind("--format=", 0) == 0)
            continue;
        echo.push_back(a);
    }
    if (o.config.contains("seed")) {
        // pin a seed that came from METRIQ_SEED or the default
        echo.push_back("--seed");
        echo.push_back(std::to_string(o.config["seed"].get<std::uint64_t>()));
    }
    json doc = {{"tool", "metriq"},
                {"version", version_string()},
                {"subcommand", chosen->app->get_name()},
                {"argv", echo},
                {"config", o.config},
                {"label_radius", g.label_radius},
                {"threads", g.threads},
                {"wall_time_s", wall},
                {"results", o.results},
                {"table", o.table.to_json()}};
    if (o.config.contains("seed"))
        doc["seed"] = o.config["seed"];

    if (g.format == "json")
        std::cout << doc.dump(2) << '\n';
    else
        std::cout << o.table.csv();
    if (!g.output.empty()) {
        write_file(g.output + ".csv", o.table.csv());
        write_file(g.output + ".json", doc.dump(2) + "\n");
        if (!o.plot_x.empty())
            write_plot(g.output, o);
    }
    return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run(args);
    } catch (const PoisonedSampleError &e) {
        report_error(e.kind(), e.what(), kExitNumerical, {{"seed", e.seed()}, {"index", e.index()}});
        return kExitNumerical;
    } catch (const DivergenceError &e) {
        report_error(e.kind(), e.what(), kExitNumerical, {{"last_time", e.last_time()}});
        return kExitNumerical;
    } catch (const Error &e) {
        const int code = exit_code_for(e);
        report_error(e.kind(), e.what(), code);
        return code;
    } catch (const std::exception &e) {
        report_error("internal", e.what(), kExitNumerical);
        return kExitNumerical;
    }
}
