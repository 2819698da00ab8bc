#include "fraclab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "fraclab/error.hpp"
#include "fraclab/graph.hpp"
#include "fraclab/scaling.hpp"

namespace fraclab {

namespace {

struct Point {
    double x;
    double y;
};

LineFit least_squares(const std::vector<Point>& pts) {
    const auto n = static_cast<double>(pts.size());
    double sx = 0, sy = 0;
    for (const auto& p : pts) {
        sx += p.x;
        sy += p.y;
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (const auto& p : pts) {
        sxx += (p.x - mx) * (p.x - mx);
        sxy += (p.x - mx) * (p.y - my);
    }
    if (!(sxx > 0.0)) throw DomainError("fit needs at least two distinct x values");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss = 0;
    for (const auto& p : pts) {
        const double r = p.y - (f.slope * p.x + f.intercept);
        ss += r * r;
    }
    f.residual = std::sqrt(ss / n);
    f.samples = pts.size();
    return f;
}

// Upper concave hull of points sorted by x (monotone chain).
std::vector<Point> upper_hull(const std::vector<Point>& pts) {
    std::vector<Point> hull;
    for (const auto& p : pts) {
        while (hull.size() >= 2) {
            const Point& a = hull[hull.size() - 2];
            const Point& b = hull.back();
            const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            if (cross >= 0.0) {
                hull.pop_back();
            } else {
                break;
            }
        }
        hull.push_back(p);
    }
    return hull;
}

nlohmann::json number(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

int log_bin_index(double x, double origin, int per_octave) {
    return static_cast<int>(std::floor(std::log2(x / origin) * per_octave + 1e-9));
}

double read_number(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return kNaN;
    return j.at(key).get<double>();
}

}  // namespace

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Fail: return "fail";
        case Verdict::Inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

Verdict parse_verdict(const std::string& s) {
    if (s == "pass") return Verdict::Pass;
    if (s == "fail") return Verdict::Fail;
    if (s == "inconclusive") return Verdict::Inconclusive;
    throw ConfigError("unknown verdict '" + s + "'");
}

LineFit fit_exponent(std::span<const double> x, std::span<const double> y, FitMode mode,
                     int bins_per_octave) {
    if (x.size() != y.size()) throw DomainError("fit needs equally many x and y values");
    if (x.size() < 2) throw DomainError("fit needs at least two samples");
    std::vector<Point> pts;
    pts.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw DomainError("log-log fit needs finite positive samples");
        }
        pts.push_back({std::log(x[i]), std::log(y[i])});
    }
    if (mode == FitMode::LeastSquares) return least_squares(pts);

    if (bins_per_octave < 1) throw DomainError("bins_per_octave must be >= 1");
    const double x0 = *std::min_element(x.begin(), x.end());
    std::map<int, Point> best;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const int b = log_bin_index(x[i], x0, bins_per_octave);
        auto it = best.find(b);
        if (it == best.end() || pts[i].y > it->second.y) best[b] = pts[i];
    }
    std::vector<Point> maxima;
    for (const auto& [b, p] : best) maxima.push_back(p);
    std::sort(maxima.begin(), maxima.end(), [](const Point& a, const Point& b) { return a.x < b.x; });
    const auto hull = upper_hull(maxima);
    return least_squares(hull);
}

double dyadic_span(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (!(*lo > 0.0)) return 0.0;
    return std::log2(*hi / *lo);
}

bool ExponentFit::within_tolerance() const {
    return std::isfinite(fit.slope) && std::abs(fit.slope - target) <= tolerance;
}

ConstantBracket ConstantBracket::named(std::string name, double factor_limit) {
    ConstantBracket b;
    b.name = std::move(name);
    b.factor_limit = factor_limit;
    return b;
}

void ConstantBracket::add(double scale, double value) {
    scales.push_back(scale);
    per_scale.push_back(value);
    if (std::isnan(min) || value < min) min = value;
    if (std::isnan(max) || value > max) max = value;
}

double ConstantBracket::variation() const {
    if (per_scale.empty()) return std::numeric_limits<double>::infinity();
    const auto [lo, hi] = std::minmax_element(per_scale.begin(), per_scale.end());
    if (!(*lo > 0.0) || !std::isfinite(*hi)) return std::numeric_limits<double>::infinity();
    return *hi / *lo;
}

bool ConstantBracket::stable() const { return variation() < factor_limit; }

double ReportWindow::dyadic_scales() const {
    if (!(r_min > 0.0) || !(r_max > r_min)) return 0.0;
    return std::log2(r_max / r_min);
}

const ExponentFit* ConditionReport::find_fit(const std::string& name) const {
    for (const auto& f : fits) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

const ConstantBracket* ConditionReport::find_constant(const std::string& name) const {
    for (const auto& c : constants) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

ConditionReport make_report(const std::string& condition, const WeightedGraph& graph,
                            const ScalingExponents& exps, const std::string& exponents_label) {
    ConditionReport r;
    r.condition = condition;
    r.graph_hash = graph.content_hash();
    r.graph_family = graph.meta().family;
    r.graph_level = graph.meta().level;
    r.graph_scale = graph.meta().scale;
    r.exponents = exponents_label;
    r.alpha1 = exps.alpha1();
    r.alpha2 = exps.alpha2();
    r.beta1 = exps.beta1();
    r.beta2 = exps.beta2();
    r.relaxed = exps.relaxed();
    return r;
}

nlohmann::json to_json(const ConditionReport& r) {
    nlohmann::json j;
    j["schema"] = kReportSchema;
    j["condition"] = r.condition;
    j["graph"] = {{"hash", r.graph_hash},
                  {"family", r.graph_family},
                  {"level", r.graph_level},
                  {"scale", r.graph_scale}};
    j["exponents"] = {{"label", r.exponents},  {"alpha1", number(r.alpha1)},
                      {"alpha2", number(r.alpha2)}, {"beta1", number(r.beta1)},
                      {"beta2", number(r.beta2)},   {"relaxed", r.relaxed}};
    j["window"] = {{"r_min", number(r.window.r_min)},
                   {"r_max", number(r.window.r_max)},
                   {"t_min", number(r.window.t_min)},
                   {"t_max", number(r.window.t_max)}};
    auto fits = nlohmann::json::array();
    for (const auto& f : r.fits) {
        fits.push_back({{"name", f.name},
                        {"mode", f.mode},
                        {"slope", number(f.fit.slope)},
                        {"intercept", number(f.fit.intercept)},
                        {"residual", number(f.fit.residual)},
                        {"samples", f.fit.samples},
                        {"target", number(f.target)},
                        {"tolerance", number(f.tolerance)}});
    }
    j["fits"] = fits;
    auto constants = nlohmann::json::array();
    for (const auto& c : r.constants) {
        auto per = nlohmann::json::array();
        for (std::size_t i = 0; i < c.per_scale.size(); ++i) {
            per.push_back({number(c.scales[i]), number(c.per_scale[i])});
        }
        constants.push_back({{"name", c.name},
                             {"min", number(c.min)},
                             {"max", number(c.max)},
                             {"per_scale", per},
                             {"variation", number(c.variation())},
                             {"factor_limit", c.factor_limit}});
    }
    j["constants"] = constants;
    j["verdict"] = to_string(r.verdict);
    j["samples_used"] = r.samples_used;
    j["skipped"] = r.skipped;
    j["violations"] = r.violations;
    j["notes"] = r.notes;
    j["details"] = r.details;
    j["sample_columns"] = r.sample_columns;
    auto rows = nlohmann::json::array();
    for (const auto& row : r.samples) {
        auto jr = nlohmann::json::array();
        for (double v : row) jr.push_back(number(v));
        rows.push_back(std::move(jr));
    }
    j["samples"] = std::move(rows);
    return j;
}

ConditionReport report_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("schema")) throw ConfigError("report has no schema field");
    if (!j.at("schema").is_number_integer() || j.at("schema").get<int>() != kReportSchema) {
        throw ConfigError("report schema " + j.at("schema").dump() + " is not supported (expected " +
                          std::to_string(kReportSchema) + ")");
    }
    try {
        ConditionReport r;
        r.condition = j.at("condition").get<std::string>();
        const auto& g = j.at("graph");
        r.graph_hash = g.at("hash").get<std::string>();
        r.graph_family = g.at("family").get<std::string>();
        r.graph_level = g.at("level").get<int>();
        r.graph_scale = g.at("scale").get<std::string>();
        const auto& e = j.at("exponents");
        r.exponents = e.at("label").get<std::string>();
        r.alpha1 = read_number(e, "alpha1");
        r.alpha2 = read_number(e, "alpha2");
        r.beta1 = read_number(e, "beta1");
        r.beta2 = read_number(e, "beta2");
        r.relaxed = e.at("relaxed").get<bool>();
        const auto& w = j.at("window");
        r.window = {read_number(w, "r_min"), read_number(w, "r_max"), read_number(w, "t_min"),
                    read_number(w, "t_max")};
        for (const auto& f : j.at("fits")) {
            ExponentFit fit;
            fit.name = f.at("name").get<std::string>();
            fit.mode = f.at("mode").get<std::string>();
            fit.fit.slope = read_number(f, "slope");
            fit.fit.intercept = read_number(f, "intercept");
            fit.fit.residual = read_number(f, "residual");
            fit.fit.samples = f.at("samples").get<std::size_t>();
            fit.target = read_number(f, "target");
            fit.tolerance = read_number(f, "tolerance");
            r.fits.push_back(fit);
        }
        for (const auto& c : j.at("constants")) {
            ConstantBracket b;
            b.name = c.at("name").get<std::string>();
            b.min = read_number(c, "min");
            b.max = read_number(c, "max");
            b.factor_limit = c.at("factor_limit").get<double>();
            for (const auto& p : c.at("per_scale")) {
                b.scales.push_back(p.at(0).is_null() ? kNaN : p.at(0).get<double>());
                b.per_scale.push_back(p.at(1).is_null() ? kNaN : p.at(1).get<double>());
            }
            r.constants.push_back(b);
        }
        r.verdict = parse_verdict(j.at("verdict").get<std::string>());
        r.samples_used = j.at("samples_used").get<std::size_t>();
        r.skipped = j.at("skipped").get<std::size_t>();
        r.violations = j.at("violations").get<std::size_t>();
        r.notes = j.at("notes").get<std::vector<std::string>>();
        r.details = j.at("details");
        r.sample_columns = j.at("sample_columns").get<std::vector<std::string>>();
        for (const auto& row : j.at("samples")) {
            std::vector<double> values;
            for (const auto& v : row) values.push_back(v.is_null() ? kNaN : v.get<double>());
            r.samples.push_back(std::move(values));
        }
        return r;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("malformed report: ") + ex.what());
    }
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_samples_csv(const ConditionReport& r, std::ostream& out) {
    for (std::size_t i = 0; i < r.sample_columns.size(); ++i) {
        out << (i ? "," : "") << r.sample_columns[i];
    }
    out << '\n';
    for (const auto& row : r.samples) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
        out << '\n';
    }
}

}  // namespace fraclab
