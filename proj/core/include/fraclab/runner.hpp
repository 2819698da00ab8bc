#pragma once

// Batch runs: a JSON RunConfig names a graph, exponents and conditions; run() writes one
// report per condition plus summary.json into the output directory.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fraclab/error.hpp"
#include "fraclab/fractal.hpp"
#include "fraclab/report.hpp"
#include "fraclab/scaling.hpp"
#include "fraclab/verify.hpp"

namespace fraclab {

/// Exit statuses shared by the CLI verbs.
inline constexpr int kExitPass = 0;
inline constexpr int kExitReportEmpty = 1;
inline constexpr int kExitFail = 2;
inline constexpr int kExitInconclusive = 3;
inline constexpr int kExitConfig = 64;

struct GraphSpec {
    std::optional<FamilyKind> family;     ///< pre-fractal or compact family
    std::optional<BlowupSpec> blowup;     ///< set instead of family
    int level = 0;
    bool prefractal = true;
    int cable_k = 1;
};

struct SampleCounts {
    std::size_t centers = 16;        ///< volume and resistance base points
    std::size_t sources = 16;        ///< heat kernel base points
    std::size_t trials = 200;        ///< harmonic samples
    std::size_t balls = 20;
    std::size_t hhk = 10000;
    std::size_t wbe_functions = 8;
    std::size_t oscillation_trials = 100;
};

struct ToleranceTable {
    double volume_slope = 0.1;
    double heat_slope = 0.05;
    double hr_slope = 0.05;
    double resistance_slope = 0.05;
    double factor_limit = 4.0;
};

struct HeatSettings {
    int padding = 1;
    double per_decade = 40.0;
    std::size_t dense_cap = kDenseSpectrumCap;
    double local_error = 1e-10;
};

struct RunConfig {
    GraphSpec graph;
    std::string exponents_label;   ///< preset name or "explicit"
    ScalingExponents exponents = ScalingExponents::uniform(1.0, 2.0);
    std::vector<std::string> conditions;
    SampleCounts samples;
    ToleranceTable tolerances;
    HeatSettings heat;
    std::uint64_t seed = 0;
    std::string output_dir;
    bool cache = false;
    bool write_graph = false;
};

/// Every condition name accepted in RunConfig.conditions.
const std::vector<std::string>& known_conditions();

/// Parsed config, or ConfigError carrying one line per problem (all problems at once).
RunConfig parse_run_config(const nlohmann::json& j);

/// Machine-readable list of the problems in a ConfigError message.
nlohmann::json config_errors_json(const ConfigError& e);

WeightedGraph build_graph(const GraphSpec& spec);

struct RunResult {
    std::vector<ConditionReport> reports;
    nlohmann::json summary;
    int exit_code = kExitPass;
};

/// Builds the graph, runs the requested checks and writes graph.json (if requested),
/// the heat cache, <condition>.json / <condition>.csv per report and summary.json.
/// Progress and solver diagnostics go to `log` (may be null).
RunResult run(const RunConfig& config, std::ostream* log = nullptr);

/// 0 when every verdict passes, 2 on any failure, 3 when the rest is inconclusive.
int exit_code_for(const std::vector<ConditionReport>& reports);

struct ReportTable {
    std::string text;
    std::string csv;
    std::size_t rows = 0;
};

/// Reads every schema-1 report (*.json except summary.json) in `run_dir`, grouped by
/// graph hash. ConfigError naming the file on a bad schema.
ReportTable report_table(const std::string& run_dir);

}  // namespace fraclab
