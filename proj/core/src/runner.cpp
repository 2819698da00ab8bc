#include "fraclab/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fraclab/error.hpp"
#include "fraclab/resistance.hpp"

namespace fraclab {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kHeatGroup = {"on_diagonal", "UHK", "NLE", "HHK", "HHKexp", "Davies", "wBE"};
const std::vector<std::string> kHarmonicGroup = {"HR", "MV", "Poisson", "GRH"};
const std::vector<std::string> kFunctionalGroup = {"PI", "FK"};

bool wants(const RunConfig& c, const std::vector<std::string>& group) {
    return std::any_of(group.begin(), group.end(), [&](const std::string& n) {
        return std::find(c.conditions.begin(), c.conditions.end(), n) != c.conditions.end();
    });
}

// Collects problems instead of stopping at the first one.
class Validator {
public:
    std::vector<std::string> errors;

    void fail(const std::string& path, const std::string& what) { errors.push_back(path + ": " + what); }

    void only_keys(const nlohmann::json& obj, const std::string& path, std::initializer_list<const char*> keys) {
        for (const auto& [k, v] : obj.items()) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
                fail(path + "/" + k, "unknown key");
            }
        }
    }

    template <typename T>
    std::optional<T> get(const nlohmann::json& obj, const std::string& path, const char* key) {
        if (!obj.contains(key)) return std::nullopt;
        const auto& v = obj.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw std::invalid_argument("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw std::invalid_argument("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw std::invalid_argument("");
                if constexpr (std::is_unsigned_v<T>) {
                    if (v.get<std::int64_t>() < 0) throw std::invalid_argument("");
                }
            } else {
                if (!v.is_number()) throw std::invalid_argument("");
            }
            return v.get<T>();
        } catch (const std::exception&) {
            fail(path + "/" + key, "wrong type");
            return std::nullopt;
        }
    }

    template <typename T>
    void read(const nlohmann::json& obj, const std::string& path, const char* key, T& out) {
        if (auto v = get<T>(obj, path, key)) out = *v;
    }

    void positive(double v, const std::string& path) {
        if (!(v > 0.0)) fail(path, "must be > 0");
    }
};

ConfigError config_error(const std::vector<std::string>& errors) {
    std::string msg = "invalid config";
    for (const auto& e : errors) msg += "\n" + e;
    return ConfigError(msg);
}

std::string file_stem(const std::string& condition) {
    std::string out;
    for (const char c : condition) out += std::isalnum(static_cast<unsigned char>(c)) || c == '_' ? c : '_';
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

ConditionReport inconclusive_report(const std::string& name, const WeightedGraph& g, const RunConfig& c,
                                    const std::string& why) {
    ConditionReport r = make_report(name, g, c.exponents, c.exponents_label);
    r.notes.push_back(why);
    return r;
}

nlohmann::json summary_row(const ConditionReport& r) {
    nlohmann::json fits = nlohmann::json::array();
    for (const auto& f : r.fits) {
        fits.push_back({{"name", f.name}, {"slope", f.fit.slope}, {"target", f.target}, {"tolerance", f.tolerance}});
    }
    nlohmann::json constants = nlohmann::json::array();
    for (const auto& c : r.constants) {
        constants.push_back({{"name", c.name}, {"min", c.min}, {"max", c.max}, {"variation", c.variation()}});
    }
    return {{"condition", r.condition}, {"verdict", to_string(r.verdict)}, {"fits", fits},
            {"constants", constants},   {"samples_used", r.samples_used}, {"notes", r.notes}};
}

}  // namespace

const std::vector<std::string>& known_conditions() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n = {"volume", "resistance", "ball_resistance", "oscillation"};
        for (const auto* g : {&kHeatGroup, &kHarmonicGroup, &kFunctionalGroup}) n.insert(n.end(), g->begin(), g->end());
        return n;
    }();
    return names;
}

RunConfig parse_run_config(const nlohmann::json& j) {
    Validator v;
    RunConfig c;
    if (!j.is_object()) throw config_error({"/: config must be a JSON object"});
    v.only_keys(j, "", {"graph", "exponents", "conditions", "samples", "seed", "tolerances", "heat", "output_dir",
                        "cache", "write_graph"});

    // graph
    if (!j.contains("graph") || !j.at("graph").is_object()) {
        v.fail("/graph", "required object");
    } else {
        const auto& g = j.at("graph");
        v.only_keys(g, "/graph", {"family", "blowup", "level", "prefractal", "cable_k"});
        if (g.contains("family") == g.contains("blowup")) v.fail("/graph", "exactly one of family or blowup");
        if (auto f = v.get<std::string>(g, "/graph", "family")) {
            try {
                c.graph.family = parse_family(*f);
            } catch (const std::exception& e) {
                v.fail("/graph/family", e.what());
            }
        }
        if (g.contains("blowup")) {
            const auto& b = g.at("blowup");
            if (!b.is_object()) {
                v.fail("/graph/blowup", "must be an object");
            } else {
                v.only_keys(b, "/graph/blowup", {"cell", "model", "cell_level"});
                BlowupSpec spec;
                for (const char* key : {"cell", "model"}) {
                    auto name = v.get<std::string>(b, "/graph/blowup", key);
                    if (!name) {
                        v.fail(std::string("/graph/blowup/") + key, "required string");
                        continue;
                    }
                    try {
                        (std::string(key) == "cell" ? spec.cell : spec.model) = parse_family(*name);
                    } catch (const std::exception& e) {
                        v.fail(std::string("/graph/blowup/") + key, e.what());
                    }
                }
                v.read(b, "/graph/blowup", "cell_level", spec.cell_level);
                c.graph.blowup = spec;
            }
        }
        if (!g.contains("level")) v.fail("/graph/level", "required integer");
        v.read(g, "/graph", "level", c.graph.level);
        if (c.graph.level < 0) v.fail("/graph/level", "must be >= 0");
        v.read(g, "/graph", "prefractal", c.graph.prefractal);
        v.read(g, "/graph", "cable_k", c.graph.cable_k);
        if (c.graph.cable_k < 1) v.fail("/graph/cable_k", "must be >= 1");
        if (c.graph.blowup) c.graph.blowup->level = c.graph.level;
    }

    // exponents
    if (!j.contains("exponents")) {
        v.fail("/exponents", "required preset name or object");
    } else if (j.at("exponents").is_string()) {
        c.exponents_label = j.at("exponents").get<std::string>();
        try {
            c.exponents = preset(c.exponents_label);
        } catch (const std::exception& e) {
            v.fail("/exponents", e.what());
        }
    } else if (j.at("exponents").is_object()) {
        const auto& e = j.at("exponents");
        v.only_keys(e, "/exponents", {"alpha1", "alpha2", "beta1", "beta2", "relaxed"});
        double a[4] = {kNaN, kNaN, kNaN, kNaN};
        const char* names[4] = {"alpha1", "alpha2", "beta1", "beta2"};
        for (int i = 0; i < 4; ++i) {
            if (!e.contains(names[i])) v.fail(std::string("/exponents/") + names[i], "required number");
            v.read(e, "/exponents", names[i], a[i]);
        }
        bool relaxed = false;
        v.read(e, "/exponents", "relaxed", relaxed);
        c.exponents_label = "explicit";
        try {
            c.exponents = ScalingExponents(a[0], a[1], a[2], a[3], relaxed ? ExponentMode::Relaxed : ExponentMode::Strict);
        } catch (const std::exception& ex) {
            v.fail("/exponents", ex.what());
        }
    } else {
        v.fail("/exponents", "must be a preset name or an object");
    }

    // conditions
    if (!j.contains("conditions") || !j.at("conditions").is_array() || j.at("conditions").empty()) {
        v.fail("/conditions", "required non-empty array");
    } else {
        const auto& known = known_conditions();
        std::size_t i = 0;
        for (const auto& n : j.at("conditions")) {
            const std::string path = "/conditions/" + std::to_string(i++);
            if (!n.is_string()) {
                v.fail(path, "must be a string");
                continue;
            }
            const auto name = n.get<std::string>();
            if (std::find(known.begin(), known.end(), name) == known.end()) {
                v.fail(path, "unknown condition '" + name + "'");
            } else if (std::find(c.conditions.begin(), c.conditions.end(), name) == c.conditions.end()) {
                c.conditions.push_back(name);
            }
        }
    }

    // seed
    if (!j.contains("seed")) {
        v.fail("/seed", "required non-negative integer");
    } else {
        v.read(j, "", "seed", c.seed);
    }

    if (j.contains("samples")) {
        const auto& s = j.at("samples");
        if (!s.is_object()) {
            v.fail("/samples", "must be an object");
        } else {
            v.only_keys(s, "/samples", {"centers", "sources", "trials", "balls", "hhk", "wbe_functions", "oscillation_trials"});
            v.read(s, "/samples", "centers", c.samples.centers);
            v.read(s, "/samples", "sources", c.samples.sources);
            v.read(s, "/samples", "trials", c.samples.trials);
            v.read(s, "/samples", "balls", c.samples.balls);
            v.read(s, "/samples", "hhk", c.samples.hhk);
            v.read(s, "/samples", "wbe_functions", c.samples.wbe_functions);
            v.read(s, "/samples", "oscillation_trials", c.samples.oscillation_trials);
            if (c.samples.sources == 0) v.fail("/samples/sources", "must be >= 1");
            if (c.samples.balls == 0) v.fail("/samples/balls", "must be >= 1");
        }
    }
    if (j.contains("tolerances")) {
        const auto& t = j.at("tolerances");
        if (!t.is_object()) {
            v.fail("/tolerances", "must be an object");
        } else {
            v.only_keys(t, "/tolerances", {"volume_slope", "heat_slope", "hr_slope", "resistance_slope", "factor_limit"});
            v.read(t, "/tolerances", "volume_slope", c.tolerances.volume_slope);
            v.read(t, "/tolerances", "heat_slope", c.tolerances.heat_slope);
            v.read(t, "/tolerances", "hr_slope", c.tolerances.hr_slope);
            v.read(t, "/tolerances", "resistance_slope", c.tolerances.resistance_slope);
            v.read(t, "/tolerances", "factor_limit", c.tolerances.factor_limit);
            v.positive(c.tolerances.volume_slope, "/tolerances/volume_slope");
            v.positive(c.tolerances.heat_slope, "/tolerances/heat_slope");
            v.positive(c.tolerances.hr_slope, "/tolerances/hr_slope");
            v.positive(c.tolerances.resistance_slope, "/tolerances/resistance_slope");
            if (!(c.tolerances.factor_limit > 1.0)) v.fail("/tolerances/factor_limit", "must be > 1");
        }
    }
    if (j.contains("heat")) {
        const auto& h = j.at("heat");
        if (!h.is_object()) {
            v.fail("/heat", "must be an object");
        } else {
            v.only_keys(h, "/heat", {"padding", "per_decade", "dense_cap", "local_error"});
            v.read(h, "/heat", "padding", c.heat.padding);
            v.read(h, "/heat", "per_decade", c.heat.per_decade);
            v.read(h, "/heat", "dense_cap", c.heat.dense_cap);
            v.read(h, "/heat", "local_error", c.heat.local_error);
            if (c.heat.padding < 0) v.fail("/heat/padding", "must be >= 0");
            v.positive(c.heat.per_decade, "/heat/per_decade");
            v.positive(c.heat.local_error, "/heat/local_error");
        }
    }
    if (!j.contains("output_dir")) v.fail("/output_dir", "required string");
    v.read(j, "", "output_dir", c.output_dir);
    if (j.contains("output_dir") && c.output_dir.empty()) v.fail("/output_dir", "must not be empty");
    v.read(j, "", "cache", c.cache);
    v.read(j, "", "write_graph", c.write_graph);

    if (!v.errors.empty()) throw config_error(v.errors);
    return c;
}

nlohmann::json config_errors_json(const ConfigError& e) {
    std::istringstream in(e.what());
    std::string line;
    nlohmann::json errors = nlohmann::json::array();
    bool first = true;
    while (std::getline(in, line)) {
        if (first && line == "invalid config") {
            first = false;
            continue;
        }
        first = false;
        errors.push_back(line);
    }
    return {{"errors", errors}};
}

WeightedGraph build_graph(const GraphSpec& spec) {
    WeightedGraph g = [&] {
        if (spec.blowup) return build_blowup(*spec.blowup);
        if (!spec.family) throw ConfigError("graph spec names no family");
        return spec.prefractal ? build_prefractal(*spec.family, spec.level) : build_compact(*spec.family, spec.level);
    }();
    return spec.cable_k > 1 ? build_cable(g, spec.cable_k) : g;
}

int exit_code_for(const std::vector<ConditionReport>& reports) {
    bool inconclusive = false;
    for (const auto& r : reports) {
        if (r.verdict == Verdict::Fail) return kExitFail;
        if (r.verdict == Verdict::Inconclusive) inconclusive = true;
    }
    return inconclusive ? kExitInconclusive : kExitPass;
}

RunResult run(const RunConfig& c, std::ostream* log) {
    auto say = [&](const std::string& s) {
        if (log) *log << s << '\n';
    };
    const fs::path out(c.output_dir);
    fs::create_directories(out);
    const WeightedGraph graph = build_graph(c.graph);
    say("graph " + graph.meta().family + " level " + std::to_string(graph.meta().level) + ": " +
        std::to_string(graph.size()) + " vertices, hash " + graph.content_hash());
    if (c.write_graph) write_text(out / "graph.json", to_json(graph).dump(1) + "\n");

    const std::string cache_dir = c.cache ? (out / "cache").string() : std::string();
    const auto& exps = c.exponents;
    const auto& label = c.exponents_label;
    std::map<std::string, ConditionReport> produced;
    nlohmann::json diagnostics = nlohmann::json::object();
    auto keep = [&](std::vector<ConditionReport> reps) {
        for (auto& r : reps) produced.emplace(r.condition, std::move(r));
    };
    auto guarded = [&](const std::vector<std::string>& names, auto&& body) {
        try {
            body();
        } catch (const SolverError& e) {
            say(std::string("solver: ") + e.what());
            for (const auto& n : names) {
                if (!produced.count(n)) produced.emplace(n, inconclusive_report(n, graph, c, std::string("solver: ") + e.what()));
            }
        }
    };

    if (wants(c, {"volume"})) {
        guarded({"volume"}, [&] {
            VolumeOptions o;
            o.centers = c.samples.centers;
            o.slope_tolerance = c.tolerances.volume_slope;
            o.factor_limit = c.tolerances.factor_limit;
            o.seed = c.seed;
            keep({check_volume(graph, exps, o, label)});
        });
    }
    if (wants(c, {"resistance"})) {
        guarded({"resistance"}, [&] {
            ResistanceFitOptions o;
            o.centers = c.samples.centers;
            o.slope_tolerance = c.tolerances.resistance_slope;
            o.seed = c.seed;
            keep({resistance_scaling_fit(graph, exps, o, label)});
        });
    }
    if (wants(c, {"ball_resistance"})) {
        guarded({"ball_resistance"}, [&] {
            BallResistanceOptions o;
            o.centers = c.samples.centers;
            o.factor_limit = c.tolerances.factor_limit;
            o.seed = c.seed;
            keep({ball_resistance_check(graph, exps, o, label)});
        });
    }
    if (wants(c, {"oscillation"})) {
        guarded({"oscillation"}, [&] {
            const auto w = mesoscopic_window(graph);
            OscillationOptions o;
            o.trials = c.samples.oscillation_trials;
            o.seed = c.seed;
            auto r = oscillation_check(graph, center_vertex(graph), w.valid() ? w.r_max : graph.min_edge_length() * 2.0, o);
            keep({std::move(r)});
        });
    }
    if (wants(c, kHeatGroup)) {
        guarded(kHeatGroup, [&] {
            HeatCheckOptions o;
            o.sources = c.samples.sources;
            o.padding = c.heat.padding;
            o.dense_cap = c.heat.dense_cap;
            o.per_decade = c.heat.per_decade;
            o.hhk_samples = c.samples.hhk;
            o.slope_tolerance = c.tolerances.heat_slope;
            o.factor_limit = c.tolerances.factor_limit;
            o.wbe_functions = c.samples.wbe_functions;
            o.time_stepping.local_error = c.heat.local_error;
            o.seed = c.seed;
            const HeatContext heat = prepare_heat(graph, exps, o, cache_dir);
            diagnostics["heat"] = {{"method", heat.table.method},
                                   {"host_vertices", heat.host->size()},
                                   {"host_hash", heat.host->content_hash()},
                                   {"padding", heat.padding},
                                   {"table_key", heat.table.key},
                                   {"times", heat.times.size()}};
            say("heat: " + heat.table.method + " on " + std::to_string(heat.host->size()) + " vertices, key " +
                heat.table.key);
            keep(check_heat_kernel_bounds(graph, exps, heat, o, label));
            if (wants(c, {"wBE"})) keep({check_wbe(graph, exps, heat, o, label)});
        });
    }
    if (wants(c, kHarmonicGroup)) {
        guarded(kHarmonicGroup, [&] {
            HarmonicOptions o;
            o.trials = c.samples.trials;
            o.balls = c.samples.balls;
            o.slope_tolerance = c.tolerances.hr_slope;
            o.factor_limit = c.tolerances.factor_limit;
            o.seed = c.seed;
            keep(check_harmonic_regularity(graph, exps, o, label));
        });
    }
    if (wants(c, kFunctionalGroup)) {
        guarded(kFunctionalGroup, [&] {
            FunctionalOptions o;
            o.factor_limit = c.tolerances.factor_limit;
            o.seed = c.seed;
            keep(check_functional_inequalities(graph, exps, o, nullptr, label));
        });
    }

    RunResult result;
    for (const auto& name : c.conditions) {
        auto it = produced.find(name);
        if (it == produced.end()) {
            // GRH exists only on cable graphs.
            result.reports.push_back(inconclusive_report(name, graph, c, "not applicable to this graph"));
        } else {
            result.reports.push_back(std::move(it->second));
        }
    }
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : result.reports) {
        const std::string stem = file_stem(r.condition);
        write_text(out / (stem + ".json"), to_json(r).dump(1) + "\n");
        std::ofstream csv(out / (stem + ".csv"), std::ios::binary);
        write_samples_csv(r, csv);
        rows.push_back(summary_row(r));
    }
    result.exit_code = exit_code_for(result.reports);
    result.summary = {{"schema", kReportSchema},
                      {"graph",
                       {{"hash", graph.content_hash()},
                        {"family", graph.meta().family},
                        {"level", graph.meta().level},
                        {"scale", graph.meta().scale},
                        {"cable_k", graph.meta().cable_k},
                        {"vertices", graph.size()}}},
                      {"exponents",
                       {{"label", label},
                        {"alpha1", exps.alpha1()},
                        {"alpha2", exps.alpha2()},
                        {"beta1", exps.beta1()},
                        {"beta2", exps.beta2()}}},
                      {"seed", c.seed},
                      {"conditions", rows},
                      {"equivalence", to_json(equivalence_matrix(result.reports))},
                      {"diagnostics", diagnostics},
                      {"exit_code", result.exit_code}};
    write_text(out / "summary.json", result.summary.dump(1) + "\n");
    return result;
}

ReportTable report_table(const std::string& run_dir) {
    if (!fs::is_directory(run_dir)) throw ConfigError("not a directory: " + run_dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(run_dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && e.path().extension() == ".json" && name != "summary.json" && name != "graph.json") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::map<std::string, std::vector<std::pair<std::string, ConditionReport>>> groups;
    for (const auto& p : files) {
        std::ifstream in(p);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ConfigError(p.string() + ": not valid JSON (" + e.what() + ")");
        }
        try {
            auto r = report_from_json(j);
            groups[r.graph_hash].emplace_back(p.filename().string(), std::move(r));
        } catch (const std::exception& e) {
            throw ConfigError(p.string() + ": " + e.what());
        }
    }
    ReportTable t;
    std::ostringstream text, csv;
    csv << "graph_hash,file,condition,verdict,fit,slope,target,constant,min,max,variation\n";
    char buf[256];
    for (const auto& [hash, reps] : groups) {
        const auto& head = reps.front().second;
        text << "graph " << hash << " (" << head.graph_family << " level " << head.graph_level << ", "
             << head.graph_scale << ", exponents " << head.exponents << ")\n";
        std::snprintf(buf, sizeof buf, "  %-16s %-13s %-24s %-28s\n", "condition", "verdict", "fit (slope/target)",
                      "constant [min, max] var");
        text << buf;
        for (const auto& [file, r] : reps) {
            std::string fit = "-", constant = "-";
            const ExponentFit* f = r.fits.empty() ? nullptr : &r.fits.front();
            const ConstantBracket* c = r.constants.empty() ? nullptr : &r.constants.front();
            if (f) {
                std::snprintf(buf, sizeof buf, "%.4f / %.4f", f->fit.slope, f->target);
                fit = buf;
            }
            if (c) {
                std::snprintf(buf, sizeof buf, "%s [%.3g, %.3g] %.3g", c->name.c_str(), c->min, c->max, c->variation());
                constant = buf;
            }
            std::snprintf(buf, sizeof buf, "  %-16s %-13s %-24s %s\n", r.condition.c_str(), to_string(r.verdict).c_str(),
                          fit.c_str(), constant.c_str());
            text << buf;
            csv << hash << ',' << file << ',' << r.condition << ',' << to_string(r.verdict) << ',' << (f ? f->name : "")
                << ',' << (f ? format_double(f->fit.slope) : "") << ',' << (f ? format_double(f->target) : "") << ','
                << (c ? c->name : "") << ',' << (c ? format_double(c->min) : "") << ','
                << (c ? format_double(c->max) : "") << ',' << (c ? format_double(c->variation()) : "") << '\n';
            ++t.rows;
        }
        text << '\n';
    }
    t.text = text.str();
    t.csv = csv.str();
    return t;
}

}  // namespace fraclab
