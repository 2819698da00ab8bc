#pragma once

// Scale windows and seeded sampling shared by the resistance, heat and verify modules.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fraclab/graph.hpp"

namespace fraclab {

class ScalingExponents;

/// Distances where neither the lattice step nor the window edge dominates:
/// r in [lower_factor * h, upper_fraction * diameter], base points in the central region.
struct MesoscopicWindow {
    double h = 0.0;
    double diameter = 0.0;
    double r_min = 0.0;
    double r_max = 0.0;
    std::vector<VertexId> central;

    double dyadic_scales() const;
    bool valid() const { return r_max > r_min && !central.empty(); }
};

struct WindowOptions {
    double lower_factor = 4.0;
    double upper_fraction = 0.25;
    double central_fraction = 0.5;
};

MesoscopicWindow mesoscopic_window(const WeightedGraph& g, const WindowOptions& options = {});

/// Log-spaced points from a to b inclusive, `per_decade` points per factor of 10.
std::vector<double> log_grid(double a, double b, double per_decade);

/// r_min * 2^(k / per_octave) for k = 0, 1, ... up to r_max (inclusive up to round-off).
std::vector<double> octave_radii(double r_min, double r_max, int per_octave);

/// Log-spaced times Psi(r_min) .. Psi(r_max).
std::vector<double> heat_time_grid(const ScalingExponents& e, const MesoscopicWindow& w,
                                   double per_decade = 40.0);

using Rng = std::mt19937_64;

/// `k` distinct entries of `pool` (all of them if k >= size), in ascending order.
std::vector<VertexId> sample_vertices(std::span<const VertexId> pool, std::size_t k, Rng& rng);

/// Index of the bin of x in log2 bins relative to `origin` (floor(log2(x / origin) * per_octave)).
int log_bin(double x, double origin, int per_octave = 1);

}  // namespace fraclab
