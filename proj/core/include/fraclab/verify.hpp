#pragma once

// Empirical estimators for the volume, heat kernel, harmonic regularity and functional
// inequality conditions. Each check returns ConditionReports with fitted exponents,
// per-scale constant brackets, raw samples and a verdict.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fraclab/dirichlet.hpp"
#include "fraclab/graph.hpp"
#include "fraclab/heat.hpp"
#include "fraclab/report.hpp"
#include "fraclab/sampling.hpp"
#include "fraclab/scaling.hpp"

namespace fraclab {

struct VolumeOptions {
    std::size_t centers = 16;
    int radii_per_octave = 4;
    double slope_tolerance = 0.1;
    double factor_limit = 4.0;
    std::uint64_t seed = 1;
    WindowOptions window;
};

/// log V(x,r) against log r per branch of Phi, with the C_VR bracket of V / Phi(r).
ConditionReport check_volume(const WeightedGraph& graph, const ScalingExponents& exps,
                             const VolumeOptions& options = {},
                             const std::string& exponents_label = "explicit");

struct HeatCheckOptions {
    std::size_t sources = 16;      ///< base points x (the centre vertex is always included)
    int padding = 1;               ///< extra host levels, used only while the host fits dense_cap
    std::size_t dense_cap = kDenseSpectrumCap;
    double per_decade = 40.0;      ///< time grid density
    std::vector<double> nle_eps = {0.125, 0.25, 0.5};
    double nle_verdict_eps = 0.25;
    std::vector<double> c2_grid;   ///< empty = 8 log-spaced values in [1/16, 1]
    std::size_t hhk_samples = 10000;
    double slope_tolerance = 0.05;
    double factor_limit = 4.0;
    double floor = 1e-10;          ///< p below floor * p_t(x,x) is treated as numerical zero
    std::size_t wbe_functions = 8; ///< random +-1 data for wBE, besides vertex indicators
    CrankNicolsonOptions time_stepping;
    std::uint64_t seed = 1;
    WindowOptions window;
};

/// Heat kernel data shared by the heat-based checks.
///
/// The window (radii, time grid) comes from the nominal graph. The kernel itself is
/// computed on a host graph: the same pre-fractal `padding` levels larger when that host
/// stays within the dense cap, so the window sits away from the reflecting boundary.
/// Base points are host vertices within diameter / 4 of the host centre.
struct HeatContext {
    std::string graph_hash;                 ///< nominal graph
    std::optional<WeightedGraph> host;
    int padding = 0;
    MesoscopicWindow window;
    std::vector<double> times;
    std::vector<VertexId> pool;             ///< all base-point candidates on the host
    VertexId centre = 0;                    ///< host centre vertex, always sources[0]
    std::vector<VertexId> sources;
    std::vector<VertexId> targets;          ///< host vertices within window.diameter / 2 of the centre
    std::vector<std::vector<double>> distance;  ///< distance[i][target index] from sources[i]
    std::vector<std::vector<double>> ball_volume;  ///< V(sources[i], Psi^{-1}(t_k))
    HeatKernelTable table;
    std::optional<Spectrum> spectrum;       ///< present when the host is below the dense cap
};

HeatContext prepare_heat(const WeightedGraph& graph, const ScalingExponents& exps,
                         const HeatCheckOptions& options = {}, const std::string& cache_dir = "");

/// Reports "on_diagonal", "UHK", "NLE", "HHK", "HHKexp" and "Davies".
std::vector<ConditionReport> check_heat_kernel_bounds(const WeightedGraph& graph,
                                                      const ScalingExponents& exps,
                                                      const HeatContext& heat,
                                                      const HeatCheckOptions& options = {},
                                                      const std::string& exponents_label = "explicit");

/// The wBE semigroup quotient over the heat context's time grid.
ConditionReport check_wbe(const WeightedGraph& graph, const ScalingExponents& exps, const HeatContext& heat,
                          const HeatCheckOptions& options = {},
                          const std::string& exponents_label = "explicit");

struct HarmonicOptions {
    std::size_t trials = 200;      ///< harmonic samples (balls x boundary data)
    std::size_t balls = 20;
    std::size_t anchors = 256;     ///< points of B whose distances to all of B are used
    int radii_per_octave = 2;
    double slope_tolerance = 0.05;
    double factor_limit = 4.0;
    int bins_per_octave = 4;       ///< envelope binning
    double poisson_p = 2.0;
    std::uint64_t seed = 1;
    WindowOptions window;
};

/// Reports "HR", "MV", "Poisson" and, on cable graphs, "GRH".
std::vector<ConditionReport> check_harmonic_regularity(const WeightedGraph& graph,
                                                       const ScalingExponents& exps,
                                                       const HarmonicOptions& options = {},
                                                       const std::string& exponents_label = "explicit");

struct FunctionalOptions {
    std::size_t balls = 8;
    std::size_t dense_cap = 1500;  ///< larger ball problems are skipped
    std::vector<double> density_ratios = {1.0, 0.5, 0.25, 0.125, 0.0625};
    std::size_t subsets_per_ratio = 3;
    int radii_per_octave = 1;
    double factor_limit = 4.0;
    std::uint64_t seed = 1;
    WindowOptions window;
};

/// sup over u of int_B |u - u_B|^2 dm / E_{2B}(u,u), with E_{2B} the energy of the edges
/// inside `two_b` (which must contain `b` and induce a connected subgraph).
double poincare_ratio(const WeightedGraph& graph, std::span<const VertexId> b,
                      std::span<const VertexId> two_b);

/// Smallest Dirichlet eigenvalue of L on D (functions vanishing off D).
double dirichlet_eigenvalue(const EnergyForm& form, std::span<const VertexId> d);

/// Reports "PI" and "FK"; with a heat context also "wBE".
std::vector<ConditionReport> check_functional_inequalities(const WeightedGraph& graph,
                                                           const ScalingExponents& exps,
                                                           const FunctionalOptions& options = {},
                                                           const HeatContext* heat = nullptr,
                                                           const std::string& exponents_label = "explicit");

/// The five conditions cross-checked by the equivalence matrix.
inline const std::vector<std::string>& equivalence_conditions() {
    static const std::vector<std::string> names = {"HR", "wBE", "HHK", "HHKexp", "NLE"};
    return names;
}

struct EquivalenceSummary {
    std::string graph_hash;
    std::vector<std::pair<std::string, Verdict>> verdicts;  ///< every input report
    bool all_pass = false;   ///< all five present and passing
    bool flagged = false;    ///< the present equivalence verdicts disagree
    std::vector<std::string> missing;
};

/// Cross-tabulates verdicts of reports from one graph; ConfigError on mixed graph hashes
/// or an empty input.
EquivalenceSummary equivalence_matrix(std::span<const ConditionReport> reports);

nlohmann::json to_json(const EquivalenceSummary& s);

}  // namespace fraclab
