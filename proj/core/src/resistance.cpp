#include "fraclab/resistance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "fraclab/error.hpp"

namespace fraclab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_disjoint(std::size_t n, std::span<const VertexId> a, std::span<const VertexId> b) {
    if (a.empty() || b.empty()) throw DomainError("resistance needs two nonempty sets");
    std::vector<char> in_a(n, 0);
    for (auto v : a) {
        if (v >= n) throw DomainError("unknown vertex " + std::to_string(v));
        in_a[v] = 1;
    }
    for (auto v : b) {
        if (v >= n) throw DomainError("unknown vertex " + std::to_string(v));
        if (in_a[v]) throw DomainError("resistance sets overlap at vertex " + std::to_string(v));
    }
}

// Position of each vertex in `ids`, -1 if absent.
std::vector<std::ptrdiff_t> positions(std::size_t n, const std::vector<VertexId>& ids) {
    std::vector<std::ptrdiff_t> pos(n, -1);
    for (std::size_t i = 0; i < ids.size(); ++i) pos[ids[i]] = static_cast<std::ptrdiff_t>(i);
    return pos;
}

Eigen::VectorXd unit(std::size_t n, std::ptrdiff_t i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    e(i) = 1.0;
    return e;
}

}  // namespace

ResistanceResult effective_resistance(const EnergyForm& form, std::span<const VertexId> a,
                                      std::span<const VertexId> b, const SolverOptions& options) {
    check_disjoint(form.size(), a, b);
    std::vector<VertexId> fixed(a.begin(), a.end());
    fixed.insert(fixed.end(), b.begin(), b.end());
    Eigen::VectorXd g(static_cast<Eigen::Index>(fixed.size()));
    g.head(static_cast<Eigen::Index>(a.size())).setZero();
    g.tail(static_cast<Eigen::Index>(b.size())).setOnes();
    ResistanceResult r;
    r.potential = solve_harmonic(form, fixed, g, options);
    const double e = energy(form, r.potential);
    r.value = e > 0.0 ? 1.0 / e : kInf;
    return r;
}

ResistanceResult effective_resistance(const EnergyForm& form, const ResistanceQuery& q,
                                      const SolverOptions& options) {
    return effective_resistance(form, q.source, q.target, options);
}

double point_resistance(const EnergyForm& form, VertexId x, VertexId y, const SolverOptions& options) {
    const VertexId a[] = {x};
    const VertexId b[] = {y};
    return effective_resistance(form, a, b, options).value;
}

double resistance_to_complement(const EnergyForm& form, VertexId x, std::span<const VertexId> ball,
                                const SolverOptions& options) {
    if (ball.size() >= form.size()) throw DomainError("ball covers the whole graph");
    std::vector<VertexId> free(ball.begin(), ball.end());
    const auto it = std::find(free.begin(), free.end(), x);
    if (it == free.end()) throw DomainError("x must lie in the ball");
    const ReducedSystem system(form, free, options);
    const Eigen::VectorXd sol = system.solve(unit(free.size(), it - free.begin()));
    return sol(it - free.begin());
}

Eigen::MatrixXd resistance_matrix(const EnergyForm& form, std::span<const VertexId> points) {
    const auto k = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(k, k);
    if (k < 2) return r;
    const VertexId ground = points[0];
    const VertexId ground_set[] = {ground};
    auto free = complement(form.size(), ground_set);
    const auto pos = positions(form.size(), free);
    const ReducedSystem system(form, free, direct_solver(free.size()));
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(free.size()), k);
    for (Eigen::Index j = 1; j < k; ++j) rhs(pos[points[static_cast<std::size_t>(j)]], j) = 1.0;
    const Eigen::MatrixXd g = system.solve(rhs);
    // Green function grounded at points[0]: G_pq = g(pos[p], q), zero on the ground.
    Eigen::MatrixXd green = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 1; i < k; ++i) {
        for (Eigen::Index j = 1; j < k; ++j) green(i, j) = g(pos[points[static_cast<std::size_t>(i)]], j);
    }
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            if (i != j) r(i, j) = green(i, i) + green(j, j) - green(i, j) - green(j, i);
        }
    }
    return r;
}

ResistanceSequence compact_resistance_sequence(FamilyKind kind, int first, int last,
                                               const BuildOptions& build, const SolverOptions& solver) {
    if (first < 0 || last < first) throw DomainError("invalid level range");
    ResistanceSequence seq;
    for (int n = first; n <= last; ++n) {
        const auto g = build_compact(kind, n, build);
        const EnergyForm form(g);
        const auto t = compact_terminals(g, kind);
        auto r = effective_resistance(form, t.source, t.sink, solver);
        seq.levels.push_back(n);
        seq.resistance.push_back(r.value);
        seq.diagnostics.push_back(r.potential.diagnostics);
        if (seq.resistance.size() >= 2) {
            seq.ratios.push_back(seq.resistance.back() / seq.resistance[seq.resistance.size() - 2]);
        }
    }
    return seq;
}

ConditionReport resistance_scaling_fit(const WeightedGraph& graph, const ScalingExponents& exps,
                                       const ResistanceFitOptions& options,
                                       const std::string& exponents_label) {
    ConditionReport rep = make_report("resistance", graph, exps, exponents_label);
    rep.sample_columns = {"x", "y", "d", "R", "psi_over_phi", "ratio"};
    const auto window = mesoscopic_window(graph, options.window);
    rep.window.r_min = window.r_min;
    rep.window.r_max = window.r_max;
    if (!window.valid()) {
        rep.notes.push_back("mesoscopic window is empty");
        return rep;
    }
    const EnergyForm form(graph);
    Rng rng(options.seed);
    const auto targets = octave_radii(window.r_min, window.r_max, options.distances_per_octave);
    const double step = std::pow(2.0, 1.0 / options.distances_per_octave);
    const auto centers = sample_vertices(window.central, options.centers, rng);

    std::vector<double> d_all, r_all, q_all;
    for (const VertexId x : centers) {
        const auto dist = distances_from(graph, x);
        std::vector<VertexId> chosen;
        for (const double d : targets) {
            std::vector<VertexId> shell;
            for (VertexId y = 0; y < graph.size(); ++y) {
                if (dist[y] >= d && dist[y] < d * step) shell.push_back(y);
            }
            if (shell.empty()) {
                ++rep.skipped;
                continue;
            }
            std::uniform_int_distribution<std::size_t> pick(0, shell.size() - 1);
            chosen.push_back(shell[pick(rng)]);
        }
        if (chosen.empty()) continue;
        const VertexId ground[] = {x};
        auto free = complement(form.size(), ground);
        const auto pos = positions(form.size(), free);
        const ReducedSystem system(form, free, direct_solver(free.size()));
        for (const VertexId y : chosen) {
            const Eigen::VectorXd sol = system.solve(unit(free.size(), pos[y]));
            const double r = sol(pos[y]);
            const double q = ratio_psi_phi(exps, dist[y]);
            rep.samples.push_back({double(x), double(y), dist[y], r, q, r / q});
            d_all.push_back(dist[y]);
            r_all.push_back(r);
            q_all.push_back(q);
        }
    }
    rep.samples_used = r_all.size();
    if (r_all.size() < 2 || dyadic_span(d_all) <= 0.0) {
        rep.notes.push_back("not enough resistance samples");
        return rep;
    }

    ExponentFit main{"R_vs_psi_over_phi", "ls", fit_exponent(q_all, r_all), 1.0, options.slope_tolerance};
    ExponentFit by_d{"R_vs_d", "ls", fit_exponent(d_all, r_all), exps.gamma2(), options.slope_tolerance};
    rep.fits = {main, by_d};

    // Per-octave brackets of R / (Psi/Phi)(d) and ratios of mean R between octaves.
    std::map<int, std::vector<double>> bins, bins_r;
    for (std::size_t i = 0; i < r_all.size(); ++i) {
        const int b = log_bin(d_all[i], window.r_min, 1);
        bins[b].push_back(r_all[i] / q_all[i]);
        bins_r[b].push_back(r_all[i]);
    }
    auto upper = ConstantBracket::named("C_R_upper");
    auto lower = ConstantBracket::named("C_R_lower");
    for (const auto& [b, v] : bins) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        const double scale = window.r_min * std::pow(2.0, b);
        upper.add(scale, *hi);
        lower.add(scale, *lo);
    }
    rep.constants = {upper, lower};
    nlohmann::json ratios = nlohmann::json::array();
    double prev = 0.0;
    for (const auto& [b, v] : bins_r) {
        double mean = 0.0;
        for (double r : v) mean += r;
        mean /= static_cast<double>(v.size());
        if (prev > 0.0) ratios.push_back(mean / prev);
        prev = mean;
    }
    rep.details["octave_ratios"] = ratios;
    rep.details["C_R"] = {lower.min, upper.max};

    if (window.dyadic_scales() < 3.0 - 1e-9) {
        rep.verdict = Verdict::Inconclusive;
        rep.notes.push_back("window spans fewer than 3 dyadic scales");
    } else {
        rep.verdict = main.within_tolerance() ? Verdict::Pass : Verdict::Fail;
    }
    return rep;
}

ConditionReport oscillation_check(const WeightedGraph& graph, VertexId center, double radius,
                                  const OscillationOptions& options) {
    ConditionReport rep;
    rep.condition = "oscillation";
    rep.graph_hash = graph.content_hash();
    rep.graph_family = graph.meta().family;
    rep.graph_level = graph.meta().level;
    rep.graph_scale = graph.meta().scale;
    rep.exponents = "none";
    rep.window.r_min = rep.window.r_max = radius;
    rep.sample_columns = {"trial", "x", "y", "lhs", "rhs"};

    const auto b = ball(graph, center, radius);
    if (b.size() >= graph.size()) throw DomainError("oscillation check needs a proper ball");
    const EnergyForm form(graph);
    Rng rng(options.seed);
    auto points = sample_vertices(b, options.points, rng);
    if (std::find(points.begin(), points.end(), center) == points.end()) {
        points.front() = center;
        std::sort(points.begin(), points.end());
    }

    const ReducedSystem system(form, b, direct_solver(b.size()));
    const auto pos = positions(form.size(), b);
    std::vector<double> r_out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Eigen::VectorXd sol = system.solve(unit(b.size(), pos[points[i]]));
        r_out[i] = sol(pos[points[i]]);
    }
    const Eigen::MatrixXd r_in = resistance_matrix(form, points);

    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    double worst = kInf;
    const auto& outside = system.fixed_vertices();
    for (std::size_t trial = 0; trial < options.trials; ++trial) {
        Eigen::VectorXd g(static_cast<Eigen::Index>(outside.size()));
        for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = uniform(rng);
        const Potential u = system.extend(form, g);
        const double osc = g.maxCoeff() - g.minCoeff();
        for (std::size_t i = 0; i < points.size(); ++i) {
            for (std::size_t j = 0; j < points.size(); ++j) {
                if (i == j) continue;
                const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
                const double lhs = std::abs(u[points[i]] - u[points[j]]);
                const double rhs = r_in(ii, jj) / r_out[i] * osc;
                worst = std::min(worst, (rhs - lhs) / std::max(osc, 1e-300));
                if (lhs - rhs > options.slack * std::max(osc, 1e-300)) ++rep.violations;
                rep.samples.push_back({double(trial), double(points[i]), double(points[j]), lhs, rhs});
            }
        }
    }
    rep.samples_used = rep.samples.size();
    rep.details["worst_relative_slack"] = std::isfinite(worst) ? nlohmann::json(worst) : nlohmann::json(nullptr);
    rep.details["ball_size"] = b.size();
    rep.verdict = rep.violations == 0 ? Verdict::Pass : Verdict::Fail;
    return rep;
}

ConditionReport ball_resistance_check(const WeightedGraph& graph, const ScalingExponents& exps,
                                      const BallResistanceOptions& options,
                                      const std::string& exponents_label) {
    ConditionReport rep = make_report("ball_resistance", graph, exps, exponents_label);
    rep.sample_columns = {"x0", "r", "R", "normalized"};
    const auto window = mesoscopic_window(graph, options.window);
    auto radii = options.radii;
    if (radii.empty()) radii = octave_radii(window.r_min, window.r_max, options.radii_per_octave);
    if (radii.empty() || window.central.empty()) {
        rep.notes.push_back("no radii in the mesoscopic window");
        return rep;
    }
    std::sort(radii.begin(), radii.end());
    rep.window.r_min = radii.front();
    rep.window.r_max = radii.back();

    const EnergyForm form(graph);
    Rng rng(options.seed);
    const auto centers = sample_vertices(window.central, options.centers, rng);
    auto c = ConstantBracket::named("C_lower", options.factor_limit);
    for (const double r : radii) {
        double worst = kInf;
        for (const VertexId x : centers) {
            const auto b = ball(graph, x, r);
            if (b.size() >= graph.size()) {
                ++rep.skipped;
                continue;
            }
            const double res = resistance_to_complement(form, x, b, direct_solver(b.size()));
            const double normalized = res / ratio_psi_phi(exps, r);
            rep.samples.push_back({double(x), r, res, normalized});
            worst = std::min(worst, normalized);
        }
        if (std::isfinite(worst)) c.add(r, worst);
    }
    rep.samples_used = rep.samples.size();
    rep.constants = {c};
    if (c.per_scale.empty()) {
        rep.notes.push_back("every ball exhausted the graph");
        return rep;
    }
    if (rep.window.dyadic_scales() < 3.0 - 1e-9) {
        rep.verdict = Verdict::Inconclusive;
        rep.notes.push_back("radii span fewer than 3 dyadic scales");
    } else {
        rep.verdict = c.min > 0.0 && c.stable() ? Verdict::Pass : Verdict::Fail;
    }
    return rep;
}

}  // namespace fraclab
