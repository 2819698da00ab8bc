#pragma once

// Effective resistance R(A,B) = 1 / inf{E(u,u) : u = 0 on A, u = 1 on B} and the
// checks built on it: resistance scaling against (Psi/Phi)(d), the oscillation
// inequality for harmonic functions and the lower bound for R(x, X \ B(x,r)).

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fraclab/dirichlet.hpp"
#include "fraclab/fractal.hpp"
#include "fraclab/report.hpp"
#include "fraclab/sampling.hpp"
#include "fraclab/scaling.hpp"

namespace fraclab {

struct ResistanceQuery {
    std::vector<VertexId> source;  ///< A
    std::vector<VertexId> target;  ///< B
};

struct ResistanceResult {
    double value = 0.0;
    Potential potential;  ///< the minimizer: 0 on A, 1 on B, harmonic elsewhere
};

/// Throws DomainError for empty or overlapping sets.
ResistanceResult effective_resistance(const EnergyForm& form, std::span<const VertexId> a,
                                      std::span<const VertexId> b, const SolverOptions& options = {});
ResistanceResult effective_resistance(const EnergyForm& form, const ResistanceQuery& q,
                                      const SolverOptions& options = {});

double point_resistance(const EnergyForm& form, VertexId x, VertexId y,
                        const SolverOptions& options = {});

/// R(x, X \ B) for a vertex set B containing x; DomainError if B is everything.
double resistance_to_complement(const EnergyForm& form, VertexId x, std::span<const VertexId> ball,
                                const SolverOptions& options = {});

/// Pairwise R among `points` from one grounded factorization (rows/cols follow `points`).
Eigen::MatrixXd resistance_matrix(const EnergyForm& form, std::span<const VertexId> points);

struct ResistanceSequence {
    std::vector<int> levels;
    std::vector<double> resistance;  ///< end-to-end R_n between the compact terminal sets
    std::vector<double> ratios;      ///< R_{n+1} / R_n, one fewer entry than levels
    std::vector<SolverDiagnostics> diagnostics;
};

/// End-to-end resistances of the compact graphs for levels first..last.
ResistanceSequence compact_resistance_sequence(FamilyKind kind, int first, int last,
                                               const BuildOptions& build = {},
                                               const SolverOptions& solver = {});

struct ResistanceFitOptions {
    std::size_t centers = 12;
    int distances_per_octave = 4;
    double slope_tolerance = 0.05;
    std::uint64_t seed = 1;
    WindowOptions window;
};

/// Fit of log R(x,y) against log (Psi/Phi)(d(x,y)) over the mesoscopic window (target 1).
ConditionReport resistance_scaling_fit(const WeightedGraph& graph, const ScalingExponents& exps,
                                       const ResistanceFitOptions& options = {},
                                       const std::string& exponents_label = "explicit");

struct OscillationOptions {
    std::size_t trials = 100;
    std::size_t points = 8;  ///< sampled vertices of B per trial
    double slack = 1e-12;
    std::uint64_t seed = 1;
};

/// |u(x) - u(y)| <= R(x,y) / R(x, X \ B) * osc_{X \ B} u for u harmonic in B = B(center, r),
/// checked on random boundary data; the report counts violations and the worst slack.
ConditionReport oscillation_check(const WeightedGraph& graph, VertexId center, double radius,
                                  const OscillationOptions& options = {});

struct BallResistanceOptions {
    std::size_t centers = 16;
    std::vector<double> radii;  ///< empty = log-spaced over the mesoscopic window
    int radii_per_octave = 2;
    double factor_limit = 4.0;
    std::uint64_t seed = 1;
    WindowOptions window;
};

/// Lower constant of R(x0, X \ B(x0,r)) * Phi(r) / Psi(r) and its stability across r.
ConditionReport ball_resistance_check(const WeightedGraph& graph, const ScalingExponents& exps,
                                      const BallResistanceOptions& options = {},
                                      const std::string& exponents_label = "explicit");

}  // namespace fraclab
