#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fraclab/error.hpp"
#include "fraclab/runner.hpp"

namespace fs = std::filesystem;
using namespace fraclab;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int jobs = 1;
    bool cache = false;
};

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

// Command line flags override the config file.
RunConfig load_config(const Globals& g, bool need_conditions) {
    if (g.config.empty()) throw ConfigError("--config is required");
    nlohmann::json j = load_json(g.config);
    if (j.is_object()) {
        if (g.seed) j["seed"] = *g.seed;
        if (!g.out.empty()) j["output_dir"] = g.out;
        if (g.cache) j["cache"] = true;
        if (!need_conditions && !j.contains("conditions")) j["conditions"] = {"on_diagonal"};
    }
    return parse_run_config(j);
}

int config_failure(const ConfigError& e) {
    std::cout << config_errors_json(e).dump(1) << '\n';
    return kExitConfig;
}

int do_build(const Globals& g, const std::string& family, int level, bool compact, int cable_k,
             const std::string& blowup_cell, const std::string& blowup_model) {
    GraphSpec spec;
    if (!g.config.empty()) {
        spec = load_config(g, false).graph;
    } else {
        if (family.empty() == blowup_cell.empty()) throw ConfigError("/graph: exactly one of --family or --blowup-cell");
        if (!family.empty()) spec.family = parse_family(family);
        if (!blowup_cell.empty()) {
            BlowupSpec b;
            b.cell = parse_family(blowup_cell);
            b.model = parse_family(blowup_model.empty() ? blowup_cell : blowup_model);
            b.level = level;
            spec.blowup = b;
        }
        spec.level = level;
        spec.prefractal = !compact;
        spec.cable_k = cable_k;
    }
    if (g.out.empty()) throw ConfigError("--out is required");
    const WeightedGraph graph = build_graph(spec);
    std::ofstream out(g.out, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + g.out);
    out << to_json(graph).dump(1) << '\n';
    std::cerr << graph.size() << " vertices, " << graph.edges().size() << " edges, hash " << graph.content_hash() << '\n';
    return kExitPass;
}

int do_heat(const Globals& g) {
    const RunConfig c = load_config(g, false);
    const fs::path dir(c.output_dir);
    fs::create_directories(dir);
    const WeightedGraph graph = build_graph(c.graph);
    HeatCheckOptions o;
    o.sources = c.samples.sources;
    o.padding = c.heat.padding;
    o.dense_cap = c.heat.dense_cap;
    o.per_decade = c.heat.per_decade;
    o.time_stepping.local_error = c.heat.local_error;
    o.seed = c.seed;
    const HeatContext heat = prepare_heat(graph, c.exponents, o, c.cache ? (dir / "cache").string() : "");
    std::ofstream csv(dir / "heat_table.csv", std::ios::binary);
    write_csv(heat.table, csv);
    const nlohmann::json info = {{"graph_hash", graph.content_hash()},
                                 {"host_hash", heat.host->content_hash()},
                                 {"host_vertices", heat.host->size()},
                                 {"padding", heat.padding},
                                 {"method", heat.table.method},
                                 {"key", heat.table.key},
                                 {"sources", heat.sources},
                                 {"times", heat.times}};
    std::ofstream(dir / "heat.json", std::ios::binary) << info.dump(1) << '\n';
    std::cerr << heat.table.method << " table, " << heat.times.size() << " times, key " << heat.table.key << '\n';
    return kExitPass;
}

int do_verify(const Globals& g) {
    const RunConfig c = load_config(g, true);
    const RunResult r = run(c, &std::cerr);
    for (const auto& rep : r.reports) std::cout << rep.condition << ' ' << to_string(rep.verdict) << '\n';
    return r.exit_code;
}

int do_report(const Globals& g, const std::string& run_dir) {
    const ReportTable t = report_table(run_dir);
    if (t.rows == 0) {
        std::cout << "no reports in " << run_dir << '\n';
        return kExitReportEmpty;
    }
    std::cout << t.text;
    if (!g.out.empty()) {
        std::ofstream out(g.out, std::ios::binary);
        if (!out) throw ConfigError("cannot write " + g.out);
        out << t.csv;
    }
    return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heat kernel and harmonic regularity experiments on fractal graphs"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "JSON run config")->option_text("FILE");
    app.add_option("--seed", g.seed, "Override the config seed");
    app.add_option("--out", g.out, "Output file (build, report) or directory (heat, verify)");
    app.add_option("--jobs", g.jobs, "Worker threads (checks currently run on one thread)")->check(CLI::PositiveNumber);
    app.add_flag("--cache", g.cache, "Reuse heat tables under <out>/cache");

    auto* build = app.add_subcommand("build", "Build a graph and write it as JSON");
    std::string family, blowup_cell, blowup_model;
    int level = 0, cable_k = 1;
    bool compact = false, prefractal = false;
    build->add_option("--family", family, "interval, gasket, vicsek or carpet");
    build->add_option("--level", level)->check(CLI::NonNegativeNumber);
    build->add_flag("--prefractal", prefractal, "Pre-fractal graph (default)");
    build->add_flag("--compact", compact, "Compact graph without the pre-fractal restriction");
    build->add_option("--cable-k", cable_k, "Subdivide each edge into k pieces")->check(CLI::PositiveNumber);
    build->add_option("--blowup-cell", blowup_cell, "Blowup cell family");
    build->add_option("--blowup-model", blowup_model, "Blowup model family");
    build->fallthrough();

    auto* heat = app.add_subcommand("heat", "Compute the heat kernel table for a config")->fallthrough();
    auto* verify = app.add_subcommand("verify", "Run the checks named in a config")->fallthrough();
    auto* report = app.add_subcommand("report", "Tabulate the reports in a run directory")->fallthrough();
    std::string run_dir;
    report->add_option("run_dir", run_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    if (compact && prefractal) {
        std::cerr << "--prefractal and --compact are exclusive\n";
        return kExitConfig;
    }
    try {
        if (*build) {
            return do_build(g, family, level, compact, cable_k, blowup_cell, blowup_model);
        }
        if (*heat) return do_heat(g);
        if (*verify) return do_verify(g);
        if (*report) return do_report(g, run_dir);
    } catch (const ConfigError& e) {
        return config_failure(e);
    } catch (const ConstructionError& e) {
        return config_failure(ConfigError(std::string("invalid config\n/graph: ") + e.what()));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitConfig;
}
