#include "fraclab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "fraclab/error.hpp"
#include "fraclab/fractal.hpp"

namespace fraclab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kScaleSlack = 1e-9;
constexpr std::size_t kMinDomain = 8;

// V(x, r) = m(B(x, r)) from one distance vector, for many r.
class VolumeProfile {
public:
    VolumeProfile(const WeightedGraph& g, const std::vector<double>& dist) {
        std::vector<std::pair<double, double>> dm;
        dm.reserve(dist.size());
        for (VertexId v = 0; v < dist.size(); ++v) {
            if (std::isfinite(dist[v])) dm.emplace_back(dist[v], g.measure(v));
        }
        std::sort(dm.begin(), dm.end());
        d_.reserve(dm.size());
        cum_.reserve(dm.size());
        double acc = 0.0;
        for (const auto& [d, m] : dm) {
            acc += m;
            d_.push_back(d);
            cum_.push_back(acc);
        }
    }

    double operator()(double r) const {
        const auto k = std::lower_bound(d_.begin(), d_.end(), r) - d_.begin();
        return k == 0 ? 0.0 : cum_[static_cast<std::size_t>(k - 1)];
    }

private:
    std::vector<double> d_;
    std::vector<double> cum_;
};

bool scales_ok(double dyadic) { return dyadic >= 3.0 - kScaleSlack; }

double phi_over_psi(const ScalingExponents& e, double r) { return 1.0 / ratio_psi_phi(e, r); }

std::vector<double> default_c2_grid() {
    std::vector<double> out;
    for (int k = 0; k < 8; ++k) out.push_back(std::pow(16.0, -1.0 + k / 7.0));
    return out;
}

std::string eps_name(const std::string& prefix, double eps) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s(%.4g)", prefix.c_str(), eps);
    return buf;
}

// Per-scale aggregation: key = dyadic bin of a length scale.
struct ScaleAggregate {
    std::map<int, double> value;
    bool take_max = true;

    void add(int bin, double v) {
        auto [it, inserted] = value.emplace(bin, v);
        if (!inserted) it->second = take_max ? std::max(it->second, v) : std::min(it->second, v);
    }

    ConstantBracket bracket(const std::string& name, double origin, double factor_limit) const {
        auto c = ConstantBracket::named(name, factor_limit);
        for (const auto& [b, v] : value) c.add(origin * std::pow(2.0, b), v);
        return c;
    }
};

bool bracket_ok(const ConstantBracket& c) {
    return !c.per_scale.empty() && std::isfinite(c.max) && c.min > 0.0 && c.stable();
}

std::vector<char> membership(std::size_t n, std::span<const VertexId> ids) {
    std::vector<char> in(n, 0);
    for (auto v : ids) in[v] = 1;
    return in;
}

double mean_abs(const WeightedGraph& g, std::span<const VertexId> set, const Eigen::VectorXd& u) {
    double num = 0.0, den = 0.0;
    for (auto v : set) {
        num += std::abs(u(v)) * g.measure(v);
        den += g.measure(v);
    }
    return den > 0.0 ? num / den : 0.0;
}

// Host graph for the heat kernel: the pre-fractal `padding` levels up, within the cap.
std::pair<std::optional<WeightedGraph>, int> padded_host(const WeightedGraph& graph, int padding,
                                                         std::size_t cap) {
    if (padding <= 0 || graph.meta().scale != "prefractal") return {std::nullopt, 0};
    FamilyKind kind;
    try {
        kind = parse_family(graph.meta().family);
    } catch (const std::exception&) {
        return {std::nullopt, 0};
    }
    const int level = graph.meta().level;
    if (build_prefractal(kind, level).content_hash() != graph.content_hash()) return {std::nullopt, 0};
    std::optional<WeightedGraph> best;
    int used = 0;
    for (int p = 1; p <= padding; ++p) {
        auto host = build_prefractal(kind, level + p);
        if (host.size() > cap) break;
        best.emplace(std::move(host));
        used = p;
    }
    return {std::move(best), used};
}

}  // namespace

// ---------------------------------------------------------------------------------------
// Volume

ConditionReport check_volume(const WeightedGraph& graph, const ScalingExponents& exps,
                             const VolumeOptions& options, const std::string& exponents_label) {
    ConditionReport rep = make_report("volume", graph, exps, exponents_label);
    rep.sample_columns = {"x", "r", "V", "V_over_phi"};
    const auto window = mesoscopic_window(graph, options.window);
    rep.window.r_min = window.r_min;
    rep.window.r_max = window.r_max;
    if (!window.valid()) {
        rep.notes.push_back("mesoscopic window is empty");
        return rep;
    }
    const auto radii = octave_radii(window.r_min, window.r_max, options.radii_per_octave);
    Rng rng(options.seed);
    const auto centers = sample_vertices(window.central, options.centers, rng);

    std::vector<double> r_small, v_small, r_large, v_large;
    ScaleAggregate upper, lower;
    lower.take_max = false;
    for (const VertexId x : centers) {
        const VolumeProfile vol(graph, distances_from(graph, x));
        for (const double r : radii) {
            const double v = vol(r);
            if (!(v > 0.0)) {
                ++rep.skipped;
                continue;
            }
            const double q = v / phi(exps, r);
            rep.samples.push_back({double(x), r, v, q});
            (r < 1.0 ? r_small : r_large).push_back(r);
            (r < 1.0 ? v_small : v_large).push_back(v);
            const int bin = log_bin(r, window.r_min, options.radii_per_octave);
            upper.add(bin, q);
            lower.add(bin, q);
        }
    }
    rep.samples_used = rep.samples.size();
    auto c_up = upper.bracket("C_VR_upper", window.r_min, options.factor_limit);
    auto c_lo = lower.bracket("C_VR_lower", window.r_min, options.factor_limit);
    rep.constants = {c_up, c_lo};
    if (c_lo.min > 0.0) rep.details["C_VR"] = std::max(c_up.max, 1.0 / c_lo.min);

    auto distinct = [](std::vector<double> r) {
        std::sort(r.begin(), r.end());
        return std::unique(r.begin(), r.end()) - r.begin();
    };
    if (distinct(r_small) >= 2) {
        rep.fits.push_back({"volume_small", "ls", fit_exponent(r_small, v_small), exps.alpha1(),
                            options.slope_tolerance});
    }
    if (distinct(r_large) >= 2) {
        rep.fits.push_back({"volume", "ls", fit_exponent(r_large, v_large), exps.alpha2(),
                            options.slope_tolerance});
    }
    if (rep.fits.empty()) {
        rep.notes.push_back("not enough radii for a volume fit");
        return rep;
    }
    if (!scales_ok(window.dyadic_scales())) {
        rep.notes.push_back("window spans fewer than 3 dyadic scales");
        return rep;
    }
    const bool ok = std::all_of(rep.fits.begin(), rep.fits.end(),
                                [](const ExponentFit& f) { return f.within_tolerance(); });
    rep.verdict = ok ? Verdict::Pass : Verdict::Fail;
    if (!c_up.stable() || !c_lo.stable()) rep.notes.push_back("C_VR bracket varies by more than the factor limit");
    return rep;
}

// ---------------------------------------------------------------------------------------
// Heat kernel

HeatContext prepare_heat(const WeightedGraph& graph, const ScalingExponents& exps,
                         const HeatCheckOptions& options, const std::string& cache_dir) {
    HeatContext ctx;
    ctx.graph_hash = graph.content_hash();
    ctx.window = mesoscopic_window(graph, options.window);
    if (!ctx.window.valid()) throw DomainError("mesoscopic window is empty");
    auto [padded, used] = padded_host(graph, options.padding, options.dense_cap);
    ctx.padding = used;
    if (padded) {
        ctx.host.emplace(std::move(*padded));
    } else {
        ctx.host.emplace(graph);
    }
    const WeightedGraph& host = *ctx.host;
    ctx.times = heat_time_grid(exps, ctx.window, options.per_decade);

    ctx.centre = center_vertex(host);
    const auto dc = distances_from(host, ctx.centre);
    for (VertexId v = 0; v < host.size(); ++v) {
        if (dc[v] <= ctx.window.diameter / 4.0) ctx.pool.push_back(v);
        if (dc[v] <= ctx.window.diameter / 2.0) ctx.targets.push_back(v);
    }
    std::vector<VertexId> rest;
    for (auto v : ctx.pool) {
        if (v != ctx.centre) rest.push_back(v);
    }
    Rng rng(options.seed);
    const std::size_t extra = options.sources > 0 ? options.sources - 1 : 0;
    ctx.sources = {ctx.centre};
    for (auto v : sample_vertices(rest, extra, rng)) ctx.sources.push_back(v);

    for (const VertexId s : ctx.sources) {
        const auto d = distances_from(host, s);
        std::vector<double> row;
        row.reserve(ctx.targets.size());
        for (auto y : ctx.targets) row.push_back(d[y]);
        ctx.distance.push_back(std::move(row));
        const VolumeProfile vol(host, d);
        std::vector<double> v;
        for (const double t : ctx.times) v.push_back(vol(psi_inv(exps, t)));
        ctx.ball_volume.push_back(std::move(v));
    }

    const std::string key = heat_table_key(host.content_hash(), exps, ctx.times, ctx.sources, ctx.targets);
    std::string path;
    if (!cache_dir.empty()) {
        std::filesystem::create_directories(cache_dir);
        path = (std::filesystem::path(cache_dir) / ("heat-" + key + ".bin")).string();
        if (load_table(path, key, ctx.table)) return ctx;
    }
    const EnergyForm form(host);
    if (host.size() <= options.dense_cap) {
        ctx.spectrum.emplace(spectrum(form, options.dense_cap));
        ctx.table = heat_kernel_table(*ctx.spectrum, ctx.times, ctx.sources, ctx.targets);
    } else {
        ctx.table = heat_kernel_table(form, ctx.times, ctx.sources, ctx.targets, options.time_stepping);
    }
    ctx.table.key = key;
    if (!path.empty()) save_table(ctx.table, path);
    return ctx;
}

namespace {

void describe_heat(ConditionReport& rep, const HeatContext& heat) {
    rep.window.r_min = heat.window.r_min;
    rep.window.r_max = heat.window.r_max;
    if (!heat.times.empty()) {
        rep.window.t_min = heat.times.front();
        rep.window.t_max = heat.times.back();
    }
    rep.details["host_hash"] = heat.host->content_hash();
    rep.details["host_vertices"] = heat.host->size();
    rep.details["padding"] = heat.padding;
    rep.details["method"] = heat.table.method;
    rep.details["sources"] = heat.sources.size();
}

// Lookup helpers over a prepared context.
struct HeatView {
    const HeatContext& h;
    std::vector<std::size_t> source_col;  ///< target index of each source
    std::vector<std::vector<std::size_t>> by_distance;  ///< target indices sorted by distance from source i

    explicit HeatView(const HeatContext& heat) : h(heat) {
        for (auto s : h.sources) {
            const auto j = h.table.target_index(s);
            if (j == SIZE_MAX) throw DomainError("heat sources must be among the targets");
            source_col.push_back(j);
        }
        for (const auto& row : h.distance) {
            std::vector<std::size_t> idx(row.size());
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return row[a] < row[b]; });
            by_distance.push_back(std::move(idx));
        }
    }

    double p(std::size_t k, std::size_t i, std::size_t j) const {
        return h.table.values[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    double rate(std::size_t k, std::size_t i, std::size_t j) const {
        return h.table.rates[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    double diag(std::size_t k, std::size_t i) const { return p(k, i, source_col[i]); }

    // Number of targets within distance r of source i (prefix of by_distance[i]).
    std::size_t within(std::size_t i, double r) const {
        const auto& row = h.distance[i];
        const auto& idx = by_distance[i];
        std::size_t lo = 0, hi = idx.size();
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (row[idx[mid]] <= r) lo = mid + 1;
            else hi = mid;
        }
        return lo;
    }
};

struct C2Curve {
    std::vector<double> c2;
    std::vector<ScaleAggregate> sup;

    explicit C2Curve(std::vector<double> grid) : c2(std::move(grid)), sup(c2.size()) {}

    // Largest C2 whose per-scale sups are finite and stable; -1 if none.
    int select(double origin, double factor_limit) const {
        int best = -1;
        for (std::size_t k = 0; k < c2.size(); ++k) {
            if (bracket_ok(sup[k].bracket("", origin, factor_limit))) best = static_cast<int>(k);
        }
        return best;
    }

    nlohmann::json curve(double origin, double factor_limit) const {
        nlohmann::json out = nlohmann::json::array();
        for (std::size_t k = 0; k < c2.size(); ++k) {
            const auto b = sup[k].bracket("", origin, factor_limit);
            out.push_back({{"C2", c2[k]},
                           {"C1", std::isfinite(b.max) ? nlohmann::json(b.max) : nlohmann::json(nullptr)},
                           {"variation", std::isfinite(b.variation()) ? nlohmann::json(b.variation())
                                                                      : nlohmann::json(nullptr)}});
        }
        return out;
    }
};

}  // namespace

std::vector<ConditionReport> check_heat_kernel_bounds(const WeightedGraph& graph, const ScalingExponents& exps,
                                                      const HeatContext& heat, const HeatCheckOptions& options,
                                                      const std::string& exponents_label) {
    if (heat.graph_hash != graph.content_hash()) throw DomainError("heat context belongs to a different graph");
    const HeatView view(heat);
    const auto& w = heat.window;
    const bool scales = scales_ok(w.dyadic_scales());
    const std::size_t nt = heat.times.size(), ns = heat.sources.size();
    const double floor = heat.table.method == "spectral" ? options.floor : std::max(options.floor, 1e-6);
    const auto c2_grid = options.c2_grid.empty() ? default_c2_grid() : options.c2_grid;
    auto bin_of = [&](std::size_t k) { return log_bin(psi_inv(exps, heat.times[k]), w.r_min, 1); };
    auto finish = [&](ConditionReport& rep) {
        describe_heat(rep, heat);
        rep.samples_used = rep.samples.size();
        if (!scales) {
            rep.verdict = Verdict::Inconclusive;
            rep.notes.push_back("window spans fewer than 3 dyadic scales");
        }
    };
    std::vector<ConditionReport> out;

    // On-diagonal decay: pooled least squares of log p_t(x,x) against log t over the sources.
    {
        ConditionReport rep = make_report("on_diagonal", graph, exps, exponents_label);
        rep.sample_columns = {"t", "x", "p"};
        std::vector<double> t_all, p_all, t_c, p_c;
        for (std::size_t i = 0; i < ns; ++i) {
            for (std::size_t k = 0; k < nt; ++k) {
                const double p = view.diag(k, i);
                rep.samples.push_back({heat.times[k], double(heat.sources[i]), p});
                if (!(p > 0.0)) {
                    ++rep.skipped;
                    continue;
                }
                t_all.push_back(heat.times[k]);
                p_all.push_back(p);
                if (i == 0) {
                    t_c.push_back(heat.times[k]);
                    p_c.push_back(p);
                }
            }
        }
        const double target = w.r_max < 1.0 ? -exps.alpha1() / exps.beta1() : -exps.alpha2() / exps.beta2();
        if (t_all.size() >= 2 && dyadic_span(t_all) > 0.0) {
            rep.fits.push_back({"on_diagonal", "ls", fit_exponent(t_all, p_all), target, options.slope_tolerance});
            if (t_c.size() >= 2) {
                rep.fits.push_back({"on_diagonal_centre", "ls", fit_exponent(t_c, p_c), target, options.slope_tolerance});
            }
        }
        finish(rep);
        if (scales) {
            rep.verdict = !rep.fits.empty() && rep.fits.front().within_tolerance() ? Verdict::Pass : Verdict::Fail;
        }
        out.push_back(std::move(rep));
    }

    // UHK and Davies: sup over (t, x, y) of the normalized value, for each C2 of the grid.
    {
        ConditionReport uhk = make_report("UHK", graph, exps, exponents_label);
        ConditionReport dav = make_report("Davies", graph, exps, exponents_label);
        uhk.sample_columns = {"t", "x", "y", "d", "p", "V", "pV"};
        dav.sample_columns = {"t", "x", "y", "d", "dp_dt", "V", "tV_dp"};
        C2Curve c_uhk(c2_grid), c_dav(c2_grid);
        for (std::size_t k = 0; k < nt; ++k) {
            const double t = heat.times[k];
            const int bin = bin_of(k);
            for (std::size_t i = 0; i < ns; ++i) {
                const double v = heat.ball_volume[i][k];
                const double pxx = view.diag(k, i);
                double best_p = -1.0, best_r = -1.0;
                std::size_t arg_p = 0, arg_r = 0;
                for (std::size_t j = 0; j < heat.targets.size(); ++j) {
                    const double p = view.p(k, i, j);
                    if (!(p > floor * pxx)) {
                        ++uhk.skipped;
                        continue;
                    }
                    const double d = heat.distance[i][j];
                    const double r = std::abs(view.rate(k, i, j));
                    for (std::size_t c = 0; c < c2_grid.size(); ++c) {
                        const double e = std::exp(upsilon(exps, c2_grid[c] * d, t));
                        c_uhk.sup[c].add(bin, p * v * e);
                        c_dav.sup[c].add(bin, t * r * v * e);
                    }
                    if (p * v > best_p) {
                        best_p = p * v;
                        arg_p = j;
                    }
                    if (t * r * v > best_r) {
                        best_r = t * r * v;
                        arg_r = j;
                    }
                }
                if (best_p >= 0.0) {
                    uhk.samples.push_back({t, double(heat.sources[i]), double(heat.targets[arg_p]),
                                           heat.distance[i][arg_p], view.p(k, i, arg_p), v, best_p});
                    dav.samples.push_back({t, double(heat.sources[i]), double(heat.targets[arg_r]),
                                           heat.distance[i][arg_r], view.rate(k, i, arg_r), v, best_r});
                }
            }
        }
        for (auto* pr : {&uhk, &dav}) {
            auto& rep = *pr;
            const auto& curve = pr == &uhk ? c_uhk : c_dav;
            const int sel = curve.select(w.r_min, options.factor_limit);
            rep.details["C1_of_C2"] = curve.curve(w.r_min, options.factor_limit);
            rep.details["samples_note"] = "rows keep the pair with the largest p V (or t V |dp/dt|) per (t, x)";
            const std::size_t shown = sel >= 0 ? static_cast<std::size_t>(sel) : 0;
            rep.constants.push_back(curve.sup[shown].bracket(pr == &uhk ? "C1" : "C_Davies", w.r_min, options.factor_limit));
            rep.details["C2"] = curve.c2[shown];
            if (pr == &dav) dav.skipped = uhk.skipped;
            finish(rep);
            if (scales) rep.verdict = sel >= 0 ? Verdict::Pass : Verdict::Fail;
        }
        out.push_back(std::move(uhk));
        out.push_back(std::move(dav));
    }

    // NLE: inf of p_t(x,y) V(x, Psi^{-1}(t)) over d(x,y) < eps Psi^{-1}(t), per eps.
    {
        ConditionReport rep = make_report("NLE", graph, exps, exponents_label);
        rep.sample_columns = {"eps", "t", "x", "y", "d", "p", "V", "pV"};
        for (const double eps : options.nle_eps) {
            ScaleAggregate inf;
            inf.take_max = false;
            for (std::size_t k = 0; k < nt; ++k) {
                const double t = heat.times[k];
                const double radius = eps * psi_inv(exps, t);
                for (std::size_t i = 0; i < ns; ++i) {
                    const double v = heat.ball_volume[i][k];
                    double best = kInf;
                    std::size_t arg = 0;
                    const auto& idx = view.by_distance[i];
                    for (std::size_t q = 0; q < idx.size() && heat.distance[i][idx[q]] < radius; ++q) {
                        const double pv = view.p(k, i, idx[q]) * v;
                        if (pv < best) {
                            best = pv;
                            arg = idx[q];
                        }
                    }
                    if (!std::isfinite(best)) continue;
                    inf.add(bin_of(k), best);
                    rep.samples.push_back({eps, t, double(heat.sources[i]), double(heat.targets[arg]),
                                           heat.distance[i][arg], view.p(k, i, arg), v, best});
                }
            }
            rep.constants.push_back(inf.bracket(eps_name("C_NLE", eps), w.r_min, options.factor_limit));
        }
        rep.details["verdict_eps"] = options.nle_verdict_eps;
        rep.details["samples_note"] = "rows keep the near-diagonal pair with the smallest p V per (eps, t, x)";
        finish(rep);
        if (scales) {
            const auto* c = rep.find_constant(eps_name("C_NLE", options.nle_verdict_eps));
            rep.verdict = c && bracket_ok(*c) ? Verdict::Pass : Verdict::Fail;
        }
        out.push_back(std::move(rep));
    }

    // HHK and HHKexp over random configurations. y2 is always a source so that every
    // distance involved is known from the source distance rows.
    {
        ConditionReport hhk = make_report("HHK", graph, exps, exponents_label);
        ConditionReport hexp = make_report("HHKexp", graph, exps, exponents_label);
        hhk.sample_columns = {"t", "x1", "x2", "y1", "y2", "d_x", "d_y", "diff", "quotient"};
        hexp.sample_columns = {"t", "x", "y1", "y2", "d_x_y1", "d_x_y2", "d_y", "diff"};
        ScaleAggregate sup_hhk;
        C2Curve c_exp(c2_grid);
        Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
        std::uniform_int_distribution<std::size_t> pick_t(0, nt - 1), pick_s(0, ns - 1);
        std::bernoulli_distribution same(0.5);
        for (std::size_t n = 0; n < options.hhk_samples; ++n) {
            const std::size_t k = pick_t(rng);
            const double t = heat.times[k];
            const std::size_t i1 = pick_s(rng);
            const std::size_t i2 = same(rng) ? i1 : pick_s(rng);
            const std::size_t j2 = pick_s(rng);
            const std::size_t near = view.within(j2, 2.0 * psi_inv(exps, t));
            std::uniform_int_distribution<std::size_t> pick_y(0, std::max<std::size_t>(near, 1) - 1);
            const std::size_t y1 = view.by_distance[j2][pick_y(rng)];
            const std::size_t y2 = view.source_col[j2];
            const double d_x = heat.distance[i1][view.source_col[i2]];
            const double d_y = heat.distance[j2][y1];
            const int bin = bin_of(k);

            const double p1 = view.p(k, i1, y1), p2 = view.p(k, i2, y2);
            const double den = (d_x > 0.0 ? ratio_psi_phi(exps, d_x) : 0.0) + (d_y > 0.0 ? ratio_psi_phi(exps, d_y) : 0.0);
            if (den > 0.0) {
                const double q = t * std::abs(p1 - p2) / den;
                sup_hhk.add(bin, q);
                hhk.samples.push_back({t, double(heat.sources[i1]), double(heat.sources[i2]), double(heat.targets[y1]),
                                       double(heat.targets[y2]), d_x, d_y, std::abs(p1 - p2), q});
            } else {
                ++hhk.skipped;
            }

            // HHKexp with x = x1.
            if (!(d_y > 0.0)) {
                ++hexp.skipped;
                continue;
            }
            const double a = view.p(k, i1, y1), b = view.p(k, i1, y2);
            const double pxx = view.diag(k, i1);
            if (!(std::max(a, b) > floor * pxx)) {
                ++hexp.skipped;
                continue;
            }
            const double d1 = heat.distance[i1][y1], d2 = heat.distance[i1][y2];
            const double base = t * std::abs(a - b) / ratio_psi_phi(exps, d_y);
            for (std::size_t c = 0; c < c2_grid.size(); ++c) {
                const double e = std::exp(-upsilon(exps, c2_grid[c] * d1, t)) + std::exp(-upsilon(exps, c2_grid[c] * d2, t));
                c_exp.sup[c].add(bin, e > 0.0 ? base / e : kInf);
            }
            hexp.samples.push_back({t, double(heat.sources[i1]), double(heat.targets[y1]), double(heat.targets[y2]),
                                    d1, d2, d_y, std::abs(a - b)});
        }
        hhk.constants.push_back(sup_hhk.bracket("C_HHK", w.r_min, options.factor_limit));
        finish(hhk);
        if (scales) hhk.verdict = bracket_ok(hhk.constants.front()) ? Verdict::Pass : Verdict::Fail;

        const int sel = c_exp.select(w.r_min, options.factor_limit);
        const std::size_t shown = sel >= 0 ? static_cast<std::size_t>(sel) : 0;
        hexp.details["C1_of_C2"] = c_exp.curve(w.r_min, options.factor_limit);
        hexp.details["C2"] = c_exp.c2[shown];
        hexp.constants.push_back(c_exp.sup[shown].bracket("C1", w.r_min, options.factor_limit));
        finish(hexp);
        if (scales) hexp.verdict = sel >= 0 ? Verdict::Pass : Verdict::Fail;
        out.push_back(std::move(hhk));
        out.push_back(std::move(hexp));
    }
    return out;
}

ConditionReport check_wbe(const WeightedGraph& graph, const ScalingExponents& exps, const HeatContext& heat,
                          const HeatCheckOptions& options, const std::string& exponents_label) {
    if (heat.graph_hash != graph.content_hash()) throw DomainError("heat context belongs to a different graph");
    ConditionReport rep = make_report("wBE", graph, exps, exponents_label);
    rep.sample_columns = {"t", "family", "f", "x", "y", "d", "diff", "quotient"};
    const HeatView view(heat);
    const auto& w = heat.window;
    const auto& host = *heat.host;
    const std::size_t nt = heat.times.size(), ns = heat.sources.size(), ng = heat.targets.size();

    // Random +-1 data on the whole host, evolved to every time of the grid (targets x functions).
    Rng rng(options.seed ^ 0x51ed270b27c3a1f5ULL);
    std::bernoulli_distribution coin(0.5);
    Eigen::MatrixXd f(static_cast<Eigen::Index>(host.size()), static_cast<Eigen::Index>(options.wbe_functions));
    for (Eigen::Index c = 0; c < f.cols(); ++c) {
        for (Eigen::Index v = 0; v < f.rows(); ++v) f(v, c) = coin(rng) ? 1.0 : -1.0;
    }
    std::vector<Eigen::MatrixXd> evolved;
    if (f.cols() > 0) {
        const EnergyForm form(host);
        std::optional<Spectrum> local;
        const Spectrum* s = heat.spectrum ? &*heat.spectrum : nullptr;
        if (!s && host.size() <= options.dense_cap) {
            local.emplace(spectrum(form, options.dense_cap));
            s = &*local;
        }
        if (s) {
            const Eigen::MatrixXd coeff = s->eigenvectors.transpose() * (s->measure.asDiagonal() * f);
            Eigen::MatrixXd phi_t(static_cast<Eigen::Index>(ng), s->eigenvectors.cols());
            for (std::size_t j = 0; j < ng; ++j) phi_t.row(static_cast<Eigen::Index>(j)) = s->eigenvectors.row(heat.targets[j]);
            for (const double t : heat.times) {
                const Eigen::VectorXd decay = (-t * s->eigenvalues.array()).exp().matrix();
                evolved.push_back(phi_t * (decay.asDiagonal() * coeff));
            }
        } else {
            for (const auto& u : crank_nicolson_path(form, f, heat.times, options.time_stepping)) {
                Eigen::MatrixXd rows(static_cast<Eigen::Index>(ng), u.cols());
                for (std::size_t j = 0; j < ng; ++j) rows.row(static_cast<Eigen::Index>(j)) = u.row(heat.targets[j]);
                evolved.push_back(std::move(rows));
            }
        }
    }

    ScaleAggregate sup;
    const std::size_t indicators = std::min<std::size_t>(ns, 8);
    for (std::size_t k = 0; k < nt; ++k) {
        const double t = heat.times[k];
        const double scale = phi_over_psi(exps, psi_inv(exps, t));
        const int bin = log_bin(psi_inv(exps, t), w.r_min, 1);
        // Largest quotient per (t, function, x) is kept as the sample row.
        auto scan = [&](double family, double fid, std::size_t i, auto&& value_at) {
            const double ux = value_at(view.source_col[i]);
            double best = -1.0;
            std::size_t arg = 0;
            for (std::size_t j = 0; j < ng; ++j) {
                const double d = heat.distance[i][j];
                if (!(d > 0.0)) continue;
                const double q = phi_over_psi(exps, d) * std::abs(ux - value_at(j)) / scale;
                if (q > best) {
                    best = q;
                    arg = j;
                }
            }
            if (best < 0.0) return;
            sup.add(bin, best);
            rep.samples.push_back({t, family, fid, double(heat.sources[i]), double(heat.targets[arg]),
                                   heat.distance[i][arg], std::abs(ux - value_at(arg)), best});
        };
        for (std::size_t z = 0; z < indicators; ++z) {
            const double mz = host.measure(heat.sources[z]);
            for (std::size_t i = 0; i < ns; ++i) {
                // P_t 1_z (y) = p_t(z, y) m(z), read from row z by symmetry.
                scan(0.0, double(z), i, [&](std::size_t j) { return view.p(k, z, j) * mz; });
            }
        }
        if (!evolved.empty()) {
            for (Eigen::Index c = 0; c < evolved[k].cols(); ++c) {
                for (std::size_t i = 0; i < ns; ++i) {
                    scan(1.0, double(c), i, [&](std::size_t j) { return evolved[k](static_cast<Eigen::Index>(j), c); });
                }
            }
        }
        // Sign data f = sign(p_t(x, .) - p_t(y, .)) on the targets (0 elsewhere) attains
        // the sup over |f| <= 1 of P_t f(x) - P_t f(y) restricted to the targets.
        for (std::size_t i = 0; i < ns; ++i) {
            for (std::size_t i2 = i + 1; i2 < ns; ++i2) {
                const double d = heat.distance[i][view.source_col[i2]];
                if (!(d > 0.0)) continue;
                double diff = 0.0;
                for (std::size_t j = 0; j < ng; ++j) {
                    diff += std::abs(view.p(k, i, j) - view.p(k, i2, j)) * host.measure(heat.targets[j]);
                }
                const double q = phi_over_psi(exps, d) * diff / scale;
                sup.add(bin, q);
                rep.samples.push_back({t, 2.0, double(i2), double(heat.sources[i]), double(heat.sources[i2]), d, diff, q});
            }
        }
    }
    rep.constants.push_back(sup.bracket("C_wBE", w.r_min, options.factor_limit));
    rep.details["functions"] = {{"indicators", indicators}, {"rademacher", options.wbe_functions}, {"sign_pairs", ns * (ns - 1) / 2}};
    rep.details["samples_note"] =
        "family 0: indicator of source f; 1: random +-1 data f; 2: sign data of the source pair (x, y). "
        "Families 0 and 1 keep the largest quotient per (t, f, x)";
    describe_heat(rep, heat);
    rep.samples_used = rep.samples.size();
    if (!scales_ok(w.dyadic_scales())) {
        rep.notes.push_back("window spans fewer than 3 dyadic scales");
    } else {
        rep.verdict = bracket_ok(rep.constants.front()) ? Verdict::Pass : Verdict::Fail;
    }
    return rep;
}

// ---------------------------------------------------------------------------------------
// Harmonic regularity

namespace {

// F_2(x) = sum_{j <= [log2 r]} Phi(2^j) (mean over B(x, 2^j) of |f|^p)^{1/p}.
double poisson_tail(const WeightedGraph& g, const ScalingExponents& e, const std::vector<double>& dist_x,
                    VertexId x, const Eigen::VectorXd& f_abs, double r, double p) {
    const double h = g.min_edge_length();
    double sum = 0.0;
    int j = static_cast<int>(std::floor(std::log2(r)));
    for (;; --j) {
        const double radius = std::ldexp(1.0, j);
        if (radius <= h) break;
        double num = 0.0, den = 0.0;
        for (VertexId v = 0; v < dist_x.size(); ++v) {
            if (dist_x[v] < radius) {
                num += std::pow(f_abs(v), p) * g.measure(v);
                den += g.measure(v);
            }
        }
        sum += phi(e, radius) * std::pow(num / den, 1.0 / p);
    }
    // Below the edge length the ball is {x}: a geometric tail in Phi(2^j).
    for (; std::ldexp(1.0, j) >= 1.0; --j) sum += phi(e, std::ldexp(1.0, j)) * f_abs(x);
    const double q = std::pow(2.0, -e.alpha1());
    sum += phi(e, std::ldexp(1.0, j)) / (1.0 - q) * f_abs(x);
    return sum;
}

struct BallSetup {
    VertexId x0;
    double r;
    std::vector<VertexId> b, two_b;
};

std::vector<BallSetup> choose_balls(const WeightedGraph& graph, const MesoscopicWindow& window,
                                    const std::vector<double>& radii, std::size_t count, Rng& rng,
                                    std::size_t& skipped, std::size_t size_cap = SIZE_MAX) {
    std::vector<BallSetup> out;
    if (radii.empty() || window.central.empty()) return out;
    const auto boundary = membership(graph.size(), window_boundary(graph));
    std::uniform_int_distribution<std::size_t> pick(0, window.central.size() - 1);
    const std::size_t attempts = 4 * count;
    for (std::size_t a = 0; a < attempts && out.size() < count; ++a) {
        const double r = radii[out.size() % radii.size()];
        const VertexId x0 = window.central[pick(rng)];
        auto two_b = ball(graph, x0, 2.0 * r);
        const bool touches = std::any_of(two_b.begin(), two_b.end(), [&](VertexId v) { return boundary[v] != 0; });
        if (touches || two_b.size() >= graph.size() || two_b.size() > size_cap) {
            ++skipped;
            continue;
        }
        out.push_back({x0, r, ball(graph, x0, r), std::move(two_b)});
    }
    return out;
}

}  // namespace

std::vector<ConditionReport> check_harmonic_regularity(const WeightedGraph& graph, const ScalingExponents& exps,
                                                       const HarmonicOptions& options,
                                                       const std::string& exponents_label) {
    ConditionReport hr = make_report("HR", graph, exps, exponents_label);
    ConditionReport mv = make_report("MV", graph, exps, exponents_label);
    ConditionReport po = make_report("Poisson", graph, exps, exponents_label);
    const bool cable = graph.meta().cable_k > 1;
    ConditionReport grh = make_report("GRH", graph, exps, exponents_label);
    hr.sample_columns = {"ball", "trial", "r", "x", "y", "d", "diff", "mean_2B", "normalized"};
    mv.sample_columns = {"ball", "trial", "r", "sup_B", "mean_2B", "ratio"};
    po.sample_columns = {"ball", "trial", "r", "x", "y", "d", "quotient", "quotient_quarter_ball"};
    grh.sample_columns = {"ball", "trial", "r", "a", "b", "gradient", "normalized"};

    const auto window = mesoscopic_window(graph, options.window);
    std::vector<ConditionReport*> all = {&hr, &mv, &po};
    if (cable) all.push_back(&grh);
    for (auto* rep : all) {
        rep->window.r_min = window.r_min;
        rep->window.r_max = window.r_max;
    }
    auto finish_all = [&] {
        std::vector<ConditionReport> out;
        for (auto* rep : all) {
            rep->samples_used = rep->samples.size();
            out.push_back(std::move(*rep));
        }
        return out;
    };
    if (!window.valid()) {
        for (auto* rep : all) rep->notes.push_back("mesoscopic window is empty");
        return finish_all();
    }
    const EnergyForm form(graph);
    Rng rng(options.seed);
    const auto radii = octave_radii(window.r_min, window.r_max / 2.0, options.radii_per_octave);
    std::size_t skipped = 0;
    const auto balls = choose_balls(graph, window, radii, options.balls, rng, skipped);
    for (auto* rep : all) rep->skipped = skipped;
    if (balls.empty()) {
        for (auto* rep : all) rep->notes.push_back("no ball 2B fits inside the window");
        return finish_all();
    }

    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    ScaleAggregate c_h, c_mv, c_po, c_po4, c_grh;
    std::vector<double> env_d, env_y;
    const int per_octave = options.bins_per_octave;

    for (std::size_t bi = 0; bi < balls.size(); ++bi) {
        const auto& bs = balls[bi];
        const int rbin = log_bin(bs.r, window.r_min, options.radii_per_octave);
        const ReducedSystem system(form, bs.two_b, direct_solver(bs.two_b.size()));
        const auto& fixed = system.fixed_vertices();
        const auto& free = system.free_vertices();
        const double scale = phi_over_psi(exps, bs.r);

        // Anchors in B with distances to all of B.
        std::vector<VertexId> rest;
        for (auto v : bs.b) {
            if (v != bs.x0) rest.push_back(v);
        }
        std::vector<VertexId> anchors = {bs.x0};
        for (auto v : sample_vertices(rest, options.anchors > 0 ? options.anchors - 1 : 0, rng)) anchors.push_back(v);
        std::vector<std::vector<double>> adist;
        for (auto a : anchors) adist.push_back(distances_from(graph, a, MetricMode::Geodesic, 2.0 * bs.r));

        // Poisson points: (1/16)B and (1/4)B.
        const auto small16 = ball(graph, bs.x0, bs.r / 16.0);
        const auto small4 = ball(graph, bs.x0, bs.r / 4.0);
        std::vector<std::vector<double>> pdist;
        for (auto x : small4) pdist.push_back(distances_from(graph, x, MetricMode::Geodesic, 2.0 * bs.r));

        const std::size_t trials = options.trials / balls.size() + (bi < options.trials % balls.size() ? 1 : 0);
        for (std::size_t trial = 0; trial < trials; ++trial) {
            const bool rough = trial % 2 == 1;
            Eigen::VectorXd g(static_cast<Eigen::Index>(fixed.size()));
            for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rough ? (coin(rng) ? 1.0 : -1.0) : uniform(rng);
            const Potential u = system.extend(form, g);
            const double mean2b = mean_abs(graph, bs.two_b, u.values);
            if (!(mean2b > 0.0)) {
                ++hr.skipped;
                continue;
            }
            const double norm = scale * mean2b;

            // HR: per-bin maxima of |u(x) - u(y)| / norm against d, over anchor pairs.
            std::map<int, std::array<double, 4>> best;  // bin -> {y, d, x, yv}
            for (std::size_t ai = 0; ai < anchors.size(); ++ai) {
                const VertexId a = anchors[ai];
                for (const VertexId y : bs.b) {
                    const double d = adist[ai][y];
                    if (y == a || !(d > 0.0) || !std::isfinite(d)) continue;
                    const double yv = std::abs(u[a] - u[y]) / norm;
                    const int bin = log_bin(d, window.h, per_octave);
                    auto [it, ins] = best.emplace(bin, std::array<double, 4>{yv, d, double(a), double(y)});
                    if (!ins && yv > it->second[0]) it->second = {yv, d, double(a), double(y)};
                    c_h.add(rbin, phi_over_psi(exps, d) * yv);
                }
            }
            for (const auto& [bin, v] : best) {
                // Scale-free envelope: |u(x) - u(y)| / mean_2B |u| against d / r.
                env_d.push_back(v[1] / bs.r);
                env_y.push_back(v[0] * scale);
                hr.samples.push_back({double(bi), double(trial), bs.r, v[2], v[3], v[1], v[0] * norm, mean2b, v[0]});
            }

            // MV.
            double sup_b = 0.0;
            for (auto v : bs.b) sup_b = std::max(sup_b, std::abs(u[v]));
            c_mv.add(rbin, sup_b / mean2b);
            mv.samples.push_back({double(bi), double(trial), bs.r, sup_b, mean2b, sup_b / mean2b});

            // GRH on cable graphs: difference quotients along edges inside B.
            if (cable) {
                const auto in_b = membership(graph.size(), bs.b);
                double worst = 0.0;
                VertexId wa = 0, wb = 0;
                for (const auto& e : graph.edges()) {
                    if (!in_b[e.u] || !in_b[e.v]) continue;
                    const double q = std::abs(u[e.u] - u[e.v]) / e.length;
                    if (q > worst) {
                        worst = q;
                        wa = e.u;
                        wb = e.v;
                    }
                }
                c_grh.add(rbin, worst / norm);
                grh.samples.push_back({double(bi), double(trial), bs.r, double(wa), double(wb), worst, worst / norm});
            }

            // Poisson: u = harmonic part + solution of Delta w = f in 2B (Delta = -L), w = 0 outside.
            if (small4.size() >= 2) {
                Eigen::VectorXd fvals = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(graph.size()));
                Eigen::VectorXd rhs(static_cast<Eigen::Index>(free.size()));
                for (std::size_t i = 0; i < free.size(); ++i) {
                    const double fv = uniform(rng);
                    fvals(free[i]) = fv;
                    rhs(static_cast<Eigen::Index>(i)) = -fv * graph.measure(free[i]);
                }
                const Eigen::VectorXd w = system.solve(rhs);
                Eigen::VectorXd total = u.values;
                for (std::size_t i = 0; i < free.size(); ++i) total(free[i]) += w(static_cast<Eigen::Index>(i));
                const double mean_total = mean_abs(graph, bs.two_b, total);
                const Eigen::VectorXd f_abs = fvals.cwiseAbs();
                std::vector<double> tail;
                for (std::size_t i = 0; i < small4.size(); ++i) {
                    tail.push_back(poisson_tail(graph, exps, pdist[i], small4[i], f_abs, bs.r, options.poisson_p));
                }
                const auto in16 = membership(graph.size(), small16);
                double q16 = 0.0, q4 = 0.0;
                std::array<double, 3> arg{0, 0, 0};
                for (std::size_t i = 0; i < small4.size(); ++i) {
                    for (std::size_t j = i + 1; j < small4.size(); ++j) {
                        const double d = pdist[i][small4[j]];
                        if (!(d > 0.0) || !std::isfinite(d)) continue;
                        const double q = phi_over_psi(exps, d) * std::abs(total(small4[i]) - total(small4[j])) /
                                         (scale * mean_total + tail[i] + tail[j]);
                        q4 = std::max(q4, q);
                        if (in16[small4[i]] && in16[small4[j]] && q > q16) {
                            q16 = q;
                            arg = {double(small4[i]), double(small4[j]), d};
                        }
                    }
                }
                if (q16 > 0.0) c_po.add(rbin, q16);
                if (q4 > 0.0) c_po4.add(rbin, q4);
                po.samples.push_back({double(bi), double(trial), bs.r, arg[0], arg[1], arg[2], q16, q4});
            } else {
                ++po.skipped;
            }
        }
    }

    const bool scales = scales_ok(window.dyadic_scales());
    const double gamma_target = window.r_max < 1.0 ? exps.gamma1() : exps.gamma2();
    if (env_d.size() >= 2 && dyadic_span(env_d) > 0.0) {
        hr.fits.push_back({"HR_envelope", "envelope", fit_exponent(env_d, env_y, FitMode::Envelope, per_octave),
                           gamma_target, options.slope_tolerance});
    }
    hr.constants.push_back(c_h.bracket("C_H", window.r_min, options.factor_limit));
    mv.constants.push_back(c_mv.bracket("C_MV", window.r_min, options.factor_limit));
    po.constants.push_back(c_po.bracket("C_Poisson", window.r_min, options.factor_limit));
    po.details["C_Poisson_quarter_ball"] = c_po4.bracket("", window.r_min, options.factor_limit).max;
    po.details["p"] = options.poisson_p;
    po.notes.push_back("pairs restricted to (1/16)B; the (1/4)B value is reported only");
    hr.details["balls"] = balls.size();
    hr.details["samples_note"] = "rows keep the largest normalized difference per (trial, distance bin)";
    hr.details["envelope_axes"] = "|u(x)-u(y)| / mean_2B|u| against d(x,y) / r";
    if (cable) grh.constants.push_back(c_grh.bracket("C_GRH", window.r_min, options.factor_limit));

    for (auto* rep : all) {
        if (!scales) {
            rep->notes.push_back("window spans fewer than 3 dyadic scales");
            continue;
        }
        if (rep->constants.empty() || rep->constants.front().per_scale.empty()) {
            rep->notes.push_back("no usable samples");
            continue;
        }
        const bool stable = bracket_ok(rep->constants.front());
        if (rep == &hr) {
            const bool slope = !hr.fits.empty() && hr.fits.front().within_tolerance();
            rep->verdict = slope && stable ? Verdict::Pass : Verdict::Fail;
        } else {
            rep->verdict = stable ? Verdict::Pass : Verdict::Fail;
        }
    }
    return finish_all();
}

// ---------------------------------------------------------------------------------------
// Functional inequalities

double poincare_ratio(const WeightedGraph& graph, std::span<const VertexId> b, std::span<const VertexId> two_b) {
    const auto n = static_cast<Eigen::Index>(two_b.size());
    if (b.empty() || n < 2) throw DomainError("Poincare ratio needs a ball with at least two vertices");
    std::vector<std::ptrdiff_t> pos(graph.size(), -1);
    for (Eigen::Index i = 0; i < n; ++i) pos[two_b[static_cast<std::size_t>(i)]] = i;
    for (auto v : b) {
        if (pos[v] < 0) throw DomainError("B must be contained in 2B");
    }
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : graph.edges()) {
        const auto i = pos[e.u], j = pos[e.v];
        if (i < 0 || j < 0) continue;
        k(i, i) += e.conductance;
        k(j, j) += e.conductance;
        k(i, j) -= e.conductance;
        k(j, i) -= e.conductance;
    }
    // Centered mass form on B: M_B - m_B m_B^T / m(B).
    Eigen::VectorXd mb = Eigen::VectorXd::Zero(n);
    for (auto v : b) mb(pos[v]) = graph.measure(v);
    Eigen::MatrixXd a = Eigen::MatrixXd(mb.asDiagonal()) - mb * mb.transpose() / mb.sum();
    // Both forms vanish on constants; adding a rank-one term along the constants makes K
    // definite without changing the supremum.
    const double shift = k.diagonal().mean();
    k.array() += shift / static_cast<double>(n);
    const Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) throw SolverError("2B does not induce a connected subgraph");
    const Eigen::MatrixXd l = llt.matrixL();
    Eigen::MatrixXd c = l.triangularView<Eigen::Lower>().solve(a);
    c = l.triangularView<Eigen::Lower>().solve(c.transpose()).eval();
    c = 0.5 * (c + c.transpose()).eval();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double dirichlet_eigenvalue(const EnergyForm& form, std::span<const VertexId> d) {
    const auto n = static_cast<Eigen::Index>(d.size());
    if (n == 0) throw DomainError("empty Dirichlet domain");
    if (d.size() >= form.size()) throw DomainError("Dirichlet domain must be a proper subset");
    std::vector<std::ptrdiff_t> pos(form.size(), -1);
    for (Eigen::Index i = 0; i < n; ++i) pos[d[static_cast<std::size_t>(i)]] = i;
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    const auto& s = form.stiffness();
    for (int col = 0; col < s.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(s, col); it; ++it) {
            const auto i = pos[static_cast<std::size_t>(it.row())], j = pos[static_cast<std::size_t>(it.col())];
            if (i >= 0 && j >= 0) k(i, j) = it.value();
        }
    }
    Eigen::VectorXd inv_sqrt(n);
    for (Eigen::Index i = 0; i < n; ++i) inv_sqrt(i) = 1.0 / std::sqrt(form.measure()(d[static_cast<std::size_t>(i)]));
    const Eigen::MatrixXd sym = inv_sqrt.asDiagonal() * k * inv_sqrt.asDiagonal();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

std::vector<ConditionReport> check_functional_inequalities(const WeightedGraph& graph, const ScalingExponents& exps,
                                                           const FunctionalOptions& options, const HeatContext* heat,
                                                           const std::string& exponents_label) {
    ConditionReport pi = make_report("PI", graph, exps, exponents_label);
    ConditionReport fk = make_report("FK", graph, exps, exponents_label);
    pi.sample_columns = {"x0", "r", "ratio", "C_P"};
    fk.sample_columns = {"x0", "r", "mB_over_mD", "lambda1", "lambda1_psi"};
    const auto window = mesoscopic_window(graph, options.window);
    for (auto* rep : {&pi, &fk}) {
        rep->window.r_min = window.r_min;
        rep->window.r_max = window.r_max;
    }
    std::vector<ConditionReport> out;
    auto finish = [&] {
        for (auto* rep : {&pi, &fk}) {
            rep->samples_used = rep->samples.size();
            out.push_back(std::move(*rep));
        }
        if (heat) out.push_back(check_wbe(graph, exps, *heat, HeatCheckOptions{}, exponents_label));
        return out;
    };
    if (!window.valid()) {
        pi.notes.push_back("mesoscopic window is empty");
        fk.notes.push_back("mesoscopic window is empty");
        return finish();
    }
    const EnergyForm form(graph);
    Rng rng(options.seed);
    const auto radii = octave_radii(window.r_min, window.r_max / 2.0, options.radii_per_octave);
    std::size_t skipped = 0;
    const auto balls = choose_balls(graph, window, radii, options.balls * std::max<std::size_t>(radii.size(), 1), rng,
                                    skipped, options.dense_cap);
    pi.skipped = fk.skipped = skipped;

    ScaleAggregate c_p;
    std::vector<double> x_fk, y_fk, r_fk;
    for (const auto& bs : balls) {
        const int rbin = log_bin(bs.r, window.r_min, options.radii_per_octave);
        const double ratio = poincare_ratio(graph, bs.b, bs.two_b);
        c_p.add(rbin, ratio / psi(exps, bs.r));
        pi.samples.push_back({double(bs.x0), bs.r, ratio, ratio / psi(exps, bs.r)});

        // FK: random connected D grown inside B from a random seed.
        const auto in_b = membership(graph.size(), bs.b);
        double mb = 0.0;
        for (auto v : bs.b) mb += graph.measure(v);
        std::uniform_int_distribution<std::size_t> pick(0, bs.b.size() - 1);
        for (const double rho : options.density_ratios) {
            const std::size_t reps = rho >= 1.0 ? 1 : options.subsets_per_ratio;
            for (std::size_t s = 0; s < reps; ++s) {
                std::vector<VertexId> dset;
                if (rho >= 1.0) {
                    dset = bs.b;
                } else {
                    std::vector<char> in_d(graph.size(), 0);
                    std::vector<VertexId> frontier;
                    const VertexId seed = bs.b[pick(rng)];
                    double md = graph.measure(seed);
                    in_d[seed] = 1;
                    dset.push_back(seed);
                    for (const auto& inc : graph.neighbors(seed)) frontier.push_back(inc.to);
                    while (md < rho * mb && !frontier.empty()) {
                        std::uniform_int_distribution<std::size_t> pf(0, frontier.size() - 1);
                        const std::size_t idx = pf(rng);
                        const VertexId v = frontier[idx];
                        frontier[idx] = frontier.back();
                        frontier.pop_back();
                        if (in_d[v] || !in_b[v]) continue;
                        in_d[v] = 1;
                        dset.push_back(v);
                        md += graph.measure(v);
                        for (const auto& inc : graph.neighbors(v)) {
                            if (!in_d[inc.to] && in_b[inc.to]) frontier.push_back(inc.to);
                        }
                    }
                    std::sort(dset.begin(), dset.end());
                }
                // Domains of a few vertices only see the lattice, not the scale r.
                if (dset.size() < kMinDomain) {
                    ++fk.skipped;
                    continue;
                }
                double md = 0.0;
                for (auto v : dset) md += graph.measure(v);
                const double lambda = dirichlet_eigenvalue(form, dset);
                const double lp = lambda * psi(exps, bs.r);
                fk.samples.push_back({double(bs.x0), bs.r, mb / md, lambda, lp});
                x_fk.push_back(mb / md);
                y_fk.push_back(lp);
                r_fk.push_back(bs.r);
            }
        }
    }
    pi.constants.push_back(c_p.bracket("C_P", window.r_min, options.factor_limit));

    bool fk_ok = false;
    if (x_fk.size() >= 2 && dyadic_span(x_fk) > 0.0) {
        const auto fit = fit_exponent(x_fk, y_fk);
        fk.fits.push_back({"FK_nu", "ls", fit, kNaN, kNaN});
        fk.details["nu"] = fit.slope;
        fk.details["C_F_fit"] = std::exp(fit.intercept);
        ScaleAggregate c_f;
        c_f.take_max = false;
        for (std::size_t i = 0; i < x_fk.size(); ++i) {
            c_f.add(log_bin(r_fk[i], window.r_min, options.radii_per_octave), y_fk[i] / std::pow(x_fk[i], fit.slope));
        }
        fk.constants.push_back(c_f.bracket("C_F", window.r_min, options.factor_limit));
        fk_ok = fit.slope > 0.0 && bracket_ok(fk.constants.front());
    } else {
        fk.notes.push_back("not enough Dirichlet subsets for a fit");
    }
    if (!scales_ok(window.dyadic_scales())) {
        for (auto* rep : {&pi, &fk}) rep->notes.push_back("window spans fewer than 3 dyadic scales");
    } else {
        if (!pi.constants.front().per_scale.empty()) pi.verdict = bracket_ok(pi.constants.front()) ? Verdict::Pass : Verdict::Fail;
        if (!fk.fits.empty()) fk.verdict = fk_ok ? Verdict::Pass : Verdict::Fail;
    }
    return finish();
}

// ---------------------------------------------------------------------------------------
// Equivalence

EquivalenceSummary equivalence_matrix(std::span<const ConditionReport> reports) {
    if (reports.empty()) throw ConfigError("equivalence matrix needs at least one report");
    EquivalenceSummary s;
    s.graph_hash = reports.front().graph_hash;
    for (const auto& r : reports) {
        if (r.graph_hash != s.graph_hash) {
            throw ConfigError("refusing to aggregate reports from different graphs (" + s.graph_hash + ", " +
                              r.graph_hash + ")");
        }
        s.verdicts.emplace_back(r.condition, r.verdict);
    }
    std::set<Verdict> seen;
    bool all = true;
    for (const auto& name : equivalence_conditions()) {
        const auto it = std::find_if(s.verdicts.begin(), s.verdicts.end(), [&](const auto& p) { return p.first == name; });
        if (it == s.verdicts.end()) {
            s.missing.push_back(name);
            all = false;
            continue;
        }
        seen.insert(it->second);
        if (it->second != Verdict::Pass) all = false;
    }
    s.all_pass = all;
    s.flagged = seen.size() > 1;
    return s;
}

nlohmann::json to_json(const EquivalenceSummary& s) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [name, v] : s.verdicts) rows.push_back({{"condition", name}, {"verdict", to_string(v)}});
    return {{"graph_hash", s.graph_hash}, {"verdicts", rows},     {"all_pass", s.all_pass},
            {"flagged", s.flagged},       {"missing", s.missing}};
}

}  // namespace fraclab
