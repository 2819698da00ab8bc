#include "fraclab/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "fraclab/error.hpp"
#include "fraclab/scaling.hpp"

namespace fraclab {

double MesoscopicWindow::dyadic_scales() const {
    if (!(r_max > r_min) || !(r_min > 0.0)) return 0.0;
    return std::log2(r_max / r_min);
}

MesoscopicWindow mesoscopic_window(const WeightedGraph& g, const WindowOptions& options) {
    MesoscopicWindow w;
    w.h = g.min_edge_length();
    w.diameter = diameter_estimate(g);
    w.r_min = options.lower_factor * w.h;
    w.r_max = options.upper_fraction * w.diameter;
    w.central = central_vertices(g, options.central_fraction);
    return w;
}

std::vector<double> log_grid(double a, double b, double per_decade) {
    if (!(a > 0.0) || !(b >= a) || !(per_decade > 0.0)) {
        throw DomainError("log grid needs 0 < a <= b and a positive density");
    }
    if (a == b) return {a};
    const double decades = std::log10(b / a);
    const auto n = static_cast<std::size_t>(std::ceil(decades * per_decade));
    std::vector<double> out;
    out.reserve(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        const double s = static_cast<double>(i) / static_cast<double>(n);
        out.push_back(a * std::pow(b / a, s));
    }
    out.back() = b;
    return out;
}

std::vector<double> octave_radii(double r_min, double r_max, int per_octave) {
    std::vector<double> out;
    if (!(r_min > 0.0) || !(r_max >= r_min) || per_octave < 1) return out;
    for (int k = 0;; ++k) {
        const double r = r_min * std::pow(2.0, static_cast<double>(k) / per_octave);
        if (r > r_max * (1.0 + 1e-12)) break;
        out.push_back(r);
    }
    return out;
}

std::vector<double> heat_time_grid(const ScalingExponents& e, const MesoscopicWindow& w,
                                   double per_decade) {
    if (!w.valid()) throw DomainError("mesoscopic window is empty");
    return log_grid(psi(e, w.r_min), psi(e, w.r_max), per_decade);
}

std::vector<VertexId> sample_vertices(std::span<const VertexId> pool, std::size_t k, Rng& rng) {
    std::vector<VertexId> out;
    if (k >= pool.size()) {
        out.assign(pool.begin(), pool.end());
    } else {
        out.reserve(k);
        std::sample(pool.begin(), pool.end(), std::back_inserter(out), k, rng);
    }
    std::sort(out.begin(), out.end());
    return out;
}

int log_bin(double x, double origin, int per_octave) {
    return static_cast<int>(std::floor(std::log2(x / origin) * per_octave + 1e-9));
}

}  // namespace fraclab
