// Acceptance suite: one PASS/FAIL line per criterion.
//
//   fraclab_acceptance [--cache DIR] [criterion ...]
//
// Exit status 0 when every selected criterion passes, 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fraclab/dirichlet.hpp"
#include "fraclab/fractal.hpp"
#include "fraclab/heat.hpp"
#include "fraclab/resistance.hpp"
#include "fraclab/scaling.hpp"
#include "fraclab/verify.hpp"
#include "oracles.hpp"

using namespace fraclab;

namespace {

std::string g_cache;

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [x]");
    }
};

const ConditionReport& find(const std::vector<ConditionReport>& reps, const std::string& name) {
    for (const auto& r : reps)
        if (r.condition == name) return r;
    throw std::runtime_error("missing report " + name);
}

double fit_slope(const ConditionReport& r, const std::string& name) {
    const auto* f = r.find_fit(name);
    return f ? f->fit.slope : kNaN;
}

// Shared graphs and heat data, built on first use.
struct Setup {
    FamilyKind kind;
    int level;
    std::string exponents;
};

struct Bundle {
    std::unique_ptr<WeightedGraph> graph;
    ScalingExponents exps = ScalingExponents::uniform(1.0, 2.0);
    std::string label;
    HeatCheckOptions heat_options;
    std::unique_ptr<HeatContext> heat;
    std::vector<ConditionReport> heat_reports;
    std::vector<ConditionReport> harmonic;
    bool heat_done = false, harmonic_done = false, wbe_done = false;
};

std::map<std::string, Bundle> g_bundles;

Bundle& bundle(const Setup& s) {
    const std::string key = family_name(s.kind) + std::to_string(s.level) + "/" + s.exponents;
    auto& b = g_bundles[key];
    if (!b.graph) {
        b.graph = std::make_unique<WeightedGraph>(build_prefractal(s.kind, s.level));
        b.exps = preset(s.exponents);
        b.label = s.exponents;
    }
    return b;
}

const std::vector<ConditionReport>& heat_reports(Bundle& b, bool with_wbe = false) {
    if (!b.heat_done) {
        b.heat = std::make_unique<HeatContext>(prepare_heat(*b.graph, b.exps, b.heat_options, g_cache));
        b.heat_reports = check_heat_kernel_bounds(*b.graph, b.exps, *b.heat, b.heat_options, b.label);
        b.heat_done = true;
    }
    if (with_wbe && !b.wbe_done) {
        b.heat_reports.push_back(check_wbe(*b.graph, b.exps, *b.heat, b.heat_options, b.label));
        b.wbe_done = true;
    }
    return b.heat_reports;
}

const std::vector<ConditionReport>& harmonic_reports(Bundle& b) {
    if (!b.harmonic_done) {
        b.harmonic = check_harmonic_regularity(*b.graph, b.exps, {}, b.label);
        b.harmonic_done = true;
    }
    return b.harmonic;
}

const Setup kGasket7{FamilyKind::Gasket, 7, "gasket"};
const Setup kGasket5{FamilyKind::Gasket, 5, "gasket"};
const Setup kVicsek4{FamilyKind::Vicsek, 4, "vicsek"};
const Setup kCarpet4{FamilyKind::Carpet, 4, "carpet"};
const Setup kInterval8{FamilyKind::Interval, 8, "interval"};
const Setup kNegative{FamilyKind::Carpet, 4, "gasket"};

// 1. Gasket resistance renormalization.
Outcome criterion1() {
    Outcome o;
    const auto seq = compact_resistance_sequence(FamilyKind::Gasket, 1, 7);
    for (int n : {1, 2}) {
        const auto g = build_compact(FamilyKind::Gasket, n);
        const auto t = compact_terminals(g, FamilyKind::Gasket);
        const double dense = oracle::set_resistance(oracle::stiffness(g), t.source, t.sink);
        const double lib = seq.resistance[static_cast<std::size_t>(n - 1)];
        o.require(std::abs(dense - lib) < 1e-10 * dense, "R_" + std::to_string(n) + " dense " + fmt("%.10f", dense));
    }
    std::string ratios;
    bool ok = true;
    for (std::size_t i = 0; i < seq.ratios.size(); ++i) {
        if (seq.levels[i] < 3) continue;
        ratios += fmt(" %.6f", seq.ratios[i]);
        ok = ok && std::abs(seq.ratios[i] / (5.0 / 3.0) - 1.0) <= 0.01;
    }
    o.require(ok, "R_{n+1}/R_n (n=3..6):" + ratios + " vs 5/3 +-1%");
    return o;
}

// 2. Carpet resistance factor.
Outcome criterion2() {
    Outcome o;
    const auto seq = compact_resistance_sequence(FamilyKind::Carpet, 3, 5);
    bool inside = true;
    std::string ratios;
    for (double q : seq.ratios) {
        ratios += fmt(" %.5f", q);
        inside = inside && q >= 7.0 / 6.0 && q <= 1.5;
    }
    o.require(inside, "ratios" + ratios + " in [7/6, 3/2]");
    const bool toward = seq.ratios.size() == 2 &&
                        std::abs(seq.ratios[1] - kCarpetRho) <= std::abs(seq.ratios[0] - kCarpetRho);
    o.detail += std::string("; trend toward 1.25: ") + (toward ? "yes" : "no") + " (reported)";
    return o;
}

// 3. Volume exponents.
Outcome criterion3() {
    Outcome o;
    const std::pair<Setup, double> cases[] = {
        {kInterval8, 1.0},
        {kGasket7, std::log(3.0) / std::log(2.0)},
        {{FamilyKind::Vicsek, 6, "vicsek"}, std::log(5.0) / std::log(3.0)},
        {kCarpet4, std::log(8.0) / std::log(3.0)},
    };
    for (const auto& [s, alpha] : cases) {
        auto& b = bundle(s);
        const auto r = check_volume(*b.graph, b.exps, {}, b.label);
        const double slope = fit_slope(r, "volume");
        o.require(std::abs(slope - alpha) <= 0.1,
                  family_name(s.kind) + std::to_string(s.level) + fmt(" %.4f", slope) + fmt(" vs %.4f", alpha));
    }
    return o;
}

// 4. On-diagonal decay.
Outcome criterion4() {
    Outcome o;
    for (const auto& s : {kGasket5, kVicsek4}) {
        auto& b = bundle(s);
        const auto& diag = find(heat_reports(b), "on_diagonal");
        const double target = -b.exps.alpha2() / b.exps.beta2();
        const double pooled = fit_slope(diag, "on_diagonal");
        o.require(std::abs(pooled - target) <= 0.05,
                  family_name(s.kind) + std::to_string(s.level) + fmt(" %.4f", pooled) + fmt(" vs %.4f", target) +
                      fmt(" (centre vertex alone %.4f)", fit_slope(diag, "on_diagonal_centre")));
    }
    return o;
}

// 5. Hoelder exponent of harmonic functions.
Outcome criterion5() {
    Outcome o;
    for (const auto& [s, tol] : {std::pair{kGasket7, 0.05}, {kVicsek4, 0.05}, {kCarpet4, 0.1}}) {
        auto& b = bundle(s);
        const auto& hr = find(harmonic_reports(b), "HR");
        const double gamma = b.exps.gamma2();
        const double slope = fit_slope(hr, "HR_envelope");
        o.require(std::abs(slope - gamma) <= tol, family_name(s.kind) + std::to_string(s.level) + fmt(" %.4f", slope) +
                                                      fmt(" vs %.4f", gamma) + fmt(" +-%.2f", tol) +
                                                      fmt(" (%.0f samples)", double(hr.samples_used)));
    }
    return o;
}

// 6. Near-diagonal lower bound stability.
Outcome criterion6() {
    Outcome o;
    for (const auto& s : {kInterval8, kGasket7, kVicsek4, kCarpet4}) {
        auto& b = bundle(s);
        const auto& nle = find(heat_reports(b), "NLE");
        const auto* c = nle.find_constant("C_NLE(0.25)");
        std::string what = family_name(s.kind) + std::to_string(s.level);
        if (!c || c->scales.empty()) {
            o.require(false, what + " no data");
            continue;
        }
        // Time span of the eps = 1/4 samples; bracket scales are lengths.
        double t_lo = std::numeric_limits<double>::infinity(), t_hi = 0.0;
        for (const auto& row : nle.samples) {
            if (row[0] != 0.25) continue;
            t_lo = std::min(t_lo, row[1]);
            t_hi = std::max(t_hi, row[1]);
        }
        const double decades = t_hi > t_lo ? std::log10(t_hi / t_lo) : 0.0;
        const bool ok = c->min > 0.0 && c->variation() < 4.0 && decades >= 2.0;
        o.require(ok, what + fmt(" C in [%.3g,", c->min) + fmt(" %.3g]", c->max) + fmt(" var %.2f", c->variation()) +
                          fmt(" over %.2f decades of t", decades));
    }
    return o;
}

// 7. Zero-violation suites.
Outcome criterion7() {
    Outcome o;
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> nd;
    auto vec = [&](Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (auto& x : v) x = nd(rng);
        return v;
    };
    const double slack = 1e-12;
    auto graph_for = [&](int i) {
        if (i % 4 == 0) return build_prefractal(FamilyKind::Gasket, 3);
        if (i % 4 == 1) return build_prefractal(FamilyKind::Vicsek, 2);
        return oracle::random_graph(rng, 20 + static_cast<std::size_t>(i % 17), 25);
    };
    std::size_t bad[8] = {};
    const int n = 100;
    for (int i = 0; i < n; ++i) {
        const auto g = graph_for(i);
        const EnergyForm form(g);
        const auto size = static_cast<Eigen::Index>(g.size());
        std::vector<VertexId> all(g.size());
        for (VertexId v = 0; v < g.size(); ++v) all[v] = v;
        std::shuffle(all.begin(), all.end(), rng);

        // Maximum principle for the harmonic extension.
        std::vector<VertexId> y(all.begin(), all.begin() + 5);
        std::sort(y.begin(), y.end());
        const Eigen::VectorXd data = vec(5);
        const auto h = solve_harmonic(form, y, data);
        const double span = data.maxCoeff() - data.minCoeff();
        if (h.values.maxCoeff() > data.maxCoeff() + slack * span || h.values.minCoeff() < data.minCoeff() - slack * span)
            ++bad[0];

        // Morrey-Sobolev with the resistance metric.
        std::vector<VertexId> sorted(g.size());
        for (VertexId v = 0; v < g.size(); ++v) sorted[v] = v;
        const auto r = resistance_matrix(form, sorted);
        const Eigen::VectorXd u = vec(size);
        const double e = energy(form, form.make(u));
        for (Eigen::Index a = 0; a < size; ++a)
            for (Eigen::Index b = 0; b < size; ++b)
                if ((u(a) - u(b)) * (u(a) - u(b)) > r(a, b) * e * (1.0 + slack) + slack) ++bad[2];

        // Disjoint supports give nonpositive energy.
        Eigen::VectorXd p = Eigen::VectorXd::Zero(size), q = Eigen::VectorXd::Zero(size);
        for (Eigen::Index k = 0; k < size; ++k) (k % 2 ? p : q)(k) = std::abs(nd(rng)) * (nd(rng) > -0.5);
        const double pq = energy(form, form.make(p), form.make(q));
        if (pq > slack * std::sqrt(energy(form, form.make(p)) * energy(form, form.make(q)))) ++bad[3];

        // Markov property.
        const Eigen::VectorXd w = 0.5 + vec(size).array();
        const Eigen::VectorXd clamped = w.cwiseMax(0.0).cwiseMin(1.0);
        if (energy(form, form.make(clamped)) > energy(form, form.make(w)) * (1.0 + slack)) ++bad[4];

        // Triangle inequality.
        std::uniform_int_distribution<Eigen::Index> pick(0, size - 1);
        for (int k = 0; k < 20; ++k) {
            const auto a = pick(rng), b = pick(rng), c = pick(rng);
            if (r(a, c) > (r(a, b) + r(b, c)) * (1.0 + slack)) ++bad[5];
        }

        // Rayleigh monotonicity.
        std::vector<Vertex> vs(g.vertices().begin(), g.vertices().end());
        std::vector<Edge> es(g.edges().begin(), g.edges().end());
        es[std::uniform_int_distribution<std::size_t>(0, es.size() - 1)(rng)].conductance *= 2.5;
        const WeightedGraph stronger(vs, es, g.denominator(), g.lattice(), g.meta());
        const auto r2 = resistance_matrix(EnergyForm(stronger), sorted);
        if (((r2.array() - r.array() * (1.0 + slack)) > slack).any()) ++bad[6];

        // Trace form keeps resistances among the retained vertices.
        std::vector<VertexId> keep(all.begin(), all.begin() + 8);
        std::sort(keep.begin(), keep.end());
        const auto tr = trace_form(form, keep);
        std::vector<VertexId> local(keep.size());
        for (VertexId k = 0; k < keep.size(); ++k) local[k] = k;
        const auto rt = resistance_matrix(tr, local);
        for (std::size_t a = 0; a < keep.size(); ++a)
            for (std::size_t b = 0; b < keep.size(); ++b)
                if (std::abs(rt(a, b) - r(keep[a], keep[b])) > 1e-10 * std::max(1.0, r(keep[a], keep[b]))) ++bad[7];
    }
    // Oscillation inequality on fractal balls, 100 random boundary data each.
    std::size_t osc_trials = 0;
    for (const auto& [kind, level, radius] :
         {std::tuple{FamilyKind::Gasket, 4, 4.0}, {FamilyKind::Vicsek, 3, 5.0}, {FamilyKind::Carpet, 3, 4.0}}) {
        const auto g = build_prefractal(kind, level);
        OscillationOptions opt;
        opt.trials = 100;
        opt.slack = slack;
        const auto rep = oscillation_check(g, center_vertex(g), radius, opt);
        bad[1] += rep.violations;
        osc_trials += opt.trials;
    }
    const char* names[8] = {"max principle", "oscillation", "Morrey-Sobolev", "disjoint-support sign",
                            "Markov clamp", "triangle", "Rayleigh", "trace resistance"};
    std::string counts;
    std::size_t total = 0;
    for (int k = 0; k < 8; ++k) {
        total += bad[k];
        counts += std::string(k ? ", " : "") + names[k] + " " + std::to_string(bad[k]);
    }
    o.require(total == 0, std::to_string(n) + " instances per suite (" + std::to_string(osc_trials) +
                              " oscillation trials); violations: " + counts);
    return o;
}

// 8. Semigroup identities.
Outcome criterion8() {
    Outcome o;
    double cons = 0, sym = 0, ck = 0, cn = 0, fd = 0;
    std::mt19937_64 rng(8);
    for (int i = 0; i < 6; ++i) {
        const FamilyKind kinds[] = {FamilyKind::Gasket, FamilyKind::Vicsek, FamilyKind::Carpet};
        const auto g = i < 3 ? oracle::random_graph(rng, 40, 40) : build_prefractal(kinds[i - 3], i == 5 ? 2 : 3);
        const EnergyForm form(g);
        const auto s = spectrum(form);
        std::vector<VertexId> all(g.size());
        for (VertexId v = 0; v < g.size(); ++v) all[v] = v;
        const auto m = oracle::measure(g);
        for (double t : {0.3, 0.7, 1.0, 5.0}) {
            const auto p = heat_kernel_block(s, t, all, all);
            cons = std::max(cons, ((p * m).array() - 1.0).abs().maxCoeff());
            sym = std::max(sym, (p - p.transpose()).cwiseAbs().maxCoeff());
        }
        const auto a = heat_kernel_block(s, 0.3, all, all), b = heat_kernel_block(s, 0.7, all, all);
        const auto c = heat_kernel_block(s, 1.0, all, all);
        ck = std::max(ck, (a * m.asDiagonal() * b - c).cwiseAbs().maxCoeff());
        const std::vector<double> times = {0.2, 1.0, 4.0, 20.0};
        const std::vector<VertexId> src = {0, static_cast<VertexId>(g.size() / 2)};
        const auto ts = heat_kernel_table(s, times, src, all);
        const auto tc = heat_kernel_table(form, times, src, all, CrankNicolsonOptions{});
        for (std::size_t k = 0; k < times.size(); ++k) cn = std::max(cn, (ts.values[k] - tc.values[k]).cwiseAbs().maxCoeff());
        const double h = 1e-5;
        // Errors relative to |d/dt p_t(0,0)|; far entries sit at round-off level.
        for (double t : {0.5, 2.0, 6.0}) {
            const double scale = std::abs(dt_heat_kernel(s, t, 0, 0));
            for (VertexId y : {VertexId{0}, static_cast<VertexId>(g.size() / 3), static_cast<VertexId>(g.size() - 1)}) {
                const double d = dt_heat_kernel(s, t, 0, y);
                const double f = (heat_kernel(s, t + h, 0, y) - heat_kernel(s, t - h, 0, y)) / (2.0 * h);
                fd = std::max(fd, std::abs(f - d) / scale);
            }
        }
    }
    o.require(cons < 1e-8, fmt("conservation %.2e", cons));
    o.require(sym < 1e-12, fmt("symmetry %.2e", sym));
    o.require(ck < 1e-8, fmt("Chapman-Kolmogorov %.2e", ck));
    o.require(cn < 1e-6, fmt("spectral vs CN %.2e", cn));
    o.require(fd < 1e-6, fmt("d/dt vs finite difference %.2e", fd));
    return o;
}

// 9. Scaling function suite.
Outcome criterion9() {
    Outcome o;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double b1 = 2.0 + u(rng), b2 = 2.0 + u(rng);
        const auto e = ScalingExponents(b1 - 0.2 - 0.5 * u(rng), b2 - 0.2 - 0.5 * u(rng), b1, b2);
        const double r = std::exp(-4.0 + 8.0 * u(rng)), t = std::exp(-4.0 + 8.0 * u(rng));
        const double grid = oracle::upsilon_grid(e, r, t);
        worst = std::max(worst, std::abs(upsilon(e, r, t) - grid) / std::max(grid, 1e-300));
    }
    o.require(worst < 1e-8, fmt("upsilon vs grid sup %.2e rel", worst));
    int violations = 0;
    for (int i = 0; i < 20; ++i) {
        const double b1 = 2.0 + 1.5 * u(rng), b2 = 2.0 + 1.5 * u(rng), a = std::exp(-2.0 + 4.0 * u(rng));
        const auto e = ScalingExponents(b1 - 0.9, b2 - 0.9, b1, b2);
        const double bound = upsilon_gap_bound(e, a);
        double sup = -1e300;
        for (int p = 0; p < 200; ++p)
            for (int k = 0; k < 200; ++k) {
                const double t = std::exp(-8.0 + 16.0 * p / 199.0), s = std::exp(-8.0 + 16.0 * k / 199.0);
                sup = std::max(sup, a * psi_inv(e, t) / psi_inv(e, s) - t / s);
            }
        violations += sup > bound * (1.0 + 1e-12) + 1e-12;
    }
    o.require(violations == 0, std::to_string(violations) + " gap-bound violations in 20");
    const auto s = spectrum(EnergyForm(oracle::path(2)));
    double two = 0.0;
    for (double t : {1e-3, 0.1, 1.0, 3.0, 10.0}) {
        two = std::max(two, std::abs(heat_kernel(s, t, 0, 0) - (1.0 + std::exp(-2.0 * t)) / 2.0));
        two = std::max(two, std::abs(heat_kernel(s, t, 0, 1) - (1.0 - std::exp(-2.0 * t)) / 2.0));
    }
    o.require(two < 1e-12, fmt("two-vertex kernel %.2e", two));
    return o;
}

// 10. Equivalence matrix consistency and the negative control.
Outcome criterion10() {
    Outcome o;
    for (const auto& s : {kGasket7, kVicsek4}) {
        auto& b = bundle(s);
        std::vector<ConditionReport> reps = heat_reports(b, true);
        const auto& hr = harmonic_reports(b);
        reps.insert(reps.end(), hr.begin(), hr.end());
        const auto m = equivalence_matrix(reps);
        std::string row;
        for (const auto& name : equivalence_conditions())
            for (const auto& [c, v] : m.verdicts)
                if (c == name) row += " " + c + "=" + to_string(v);
        o.require(m.all_pass, family_name(s.kind) + std::to_string(s.level) + ":" + row);
    }
    auto& n = bundle(kNegative);
    const auto vol = check_volume(*n.graph, n.exps, {}, n.label);
    o.require(vol.verdict == Verdict::Fail, "control volume " + to_string(vol.verdict));
    std::vector<ConditionReport> reps = heat_reports(n);
    const auto& hr = harmonic_reports(n);
    reps.insert(reps.end(), hr.begin(), hr.end());
    std::string failed;
    for (const auto& r : reps)
        if (r.verdict == Verdict::Fail) failed += " " + r.condition;
    o.require(!failed.empty(), "control heat/harmonic failures:" + (failed.empty() ? std::string(" none") : failed));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                                            criterion6, criterion7, criterion8, criterion9, criterion10};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--cache") == 0 && i + 1 < argc) {
            g_cache = argv[++i];
        } else {
            selected.insert(std::atoi(argv[i]));
        }
    }
    bool all = true;
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) {
        if (!selected.empty() && !selected.count(k)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[static_cast<std::size_t>(k - 1)]();
        } catch (const std::exception& e) {
            out.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        all = all && out.pass;
        std::printf("criterion %2d %s  %s  (%.1f s)\n", k, out.pass ? "PASS" : "FAIL", out.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
