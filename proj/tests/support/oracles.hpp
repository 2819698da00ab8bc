#pragma once

// Independent reference computations for the tests: dense matrices assembled from the
// edge list, Eigen's generalized eigensolver, brute-force suprema and fractal enumeration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fraclab/fractal.hpp"
#include "fraclab/graph.hpp"
#include "fraclab/scaling.hpp"

namespace oracle {

using fraclab::VertexId;
using fraclab::WeightedGraph;

inline Eigen::MatrixXd stiffness(const WeightedGraph& g) {
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : g.edges()) {
        k(e.u, e.u) += e.conductance;
        k(e.v, e.v) += e.conductance;
        k(e.u, e.v) -= e.conductance;
        k(e.v, e.u) -= e.conductance;
    }
    return k;
}

inline Eigen::VectorXd measure(const WeightedGraph& g) {
    Eigen::VectorXd m(static_cast<Eigen::Index>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) m(static_cast<Eigen::Index>(i)) = g.measure(static_cast<VertexId>(i));
    return m;
}

inline double energy(const Eigen::MatrixXd& k, const Eigen::VectorXd& u) { return u.dot(k * u); }

/// Moore-Penrose inverse of the stiffness matrix of a connected graph: (K + J/n)^{-1} - J/n.
inline Eigen::MatrixXd green(const Eigen::MatrixXd& k) {
    const auto n = k.rows();
    const Eigen::MatrixXd j = Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    return Eigen::MatrixXd((k + j).inverse()) - j;
}

inline double resistance(const Eigen::MatrixXd& g, Eigen::Index x, Eigen::Index y) {
    return g(x, x) + g(y, y) - 2.0 * g(x, y);
}

/// Effective resistance between vertex sets by Gaussian elimination on the free block.
inline double set_resistance(const Eigen::MatrixXd& k, const std::vector<VertexId>& a,
                             const std::vector<VertexId>& b) {
    const auto n = k.rows();
    std::vector<int> role(static_cast<std::size_t>(n), 0);
    for (auto v : a) role[v] = 1;
    for (auto v : b) role[v] = 2;
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) if (role[static_cast<std::size_t>(i)] == 0) free.push_back(i);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    for (auto v : b) u(v) = 1.0;
    if (!free.empty()) {
        const auto f = static_cast<Eigen::Index>(free.size());
        Eigen::MatrixXd kff(f, f);
        Eigen::VectorXd rhs(f);
        for (Eigen::Index i = 0; i < f; ++i) {
            double s = 0.0;
            for (auto v : b) s += k(free[i], v);
            rhs(i) = -s;
            for (Eigen::Index j = 0; j < f; ++j) kff(i, j) = k(free[i], free[j]);
        }
        const Eigen::VectorXd x = kff.fullPivLu().solve(rhs);
        for (Eigen::Index i = 0; i < f; ++i) u(free[i]) = x(i);
    }
    return 1.0 / energy(k, u);
}

struct Eigensystem {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;  ///< m-orthonormal columns
};

/// K phi = lambda M phi.
inline Eigensystem eigensystem(const Eigen::MatrixXd& k, const Eigen::VectorXd& m) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::MatrixXd(m.asDiagonal()));
    return {es.eigenvalues(), es.eigenvectors()};
}

/// Full matrix p_t(x, y) = sum_k exp(-lambda_k t) phi_k(x) phi_k(y).
inline Eigen::MatrixXd heat_matrix(const Eigensystem& es, double t) {
    const Eigen::VectorXd decay = (-t * es.values.array().max(0.0)).exp().matrix();
    return es.vectors * decay.asDiagonal() * es.vectors.transpose();
}

/// sup_s (R/s - t/Psi(s)) on a fine log grid refined by golden section.
inline double upsilon_grid(const fraclab::ScalingExponents& e, double r, double t) {
    auto f = [&](double log_s) {
        const double s = std::exp(log_s);
        return r / s - t / fraclab::psi(e, s);
    };
    const double lo = -40.0, hi = 40.0;
    const int n = 20000;
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
        const double v = f(lo + (hi - lo) * i / n);
        if (v > best_v) best_v = v, best = i;
    }
    const double step = (hi - lo) / n;
    double a = lo + (best - 1) * step, b = lo + (best + 1) * step;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
        const double c = b - g * (b - a), d = a + g * (b - a);
        if (f(c) > f(d)) b = d; else a = c;
    }
    return std::max({best_v, f(0.5 * (a + b)), 0.0});
}

/// Connected random graph with random weights. Vertices sit on the parabola (i, i^2) so
/// that straight edges never pass through other vertices, also after cable subdivision.
inline WeightedGraph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t extra_edges) {
    std::uniform_real_distribution<double> w(0.2, 3.0);
    std::vector<fraclab::Vertex> vertices(n);
    for (std::size_t i = 0; i < n; ++i) vertices[i] = {{static_cast<std::int64_t>(i), static_cast<std::int64_t>(i * i)}, w(rng)};
    std::set<std::pair<VertexId, VertexId>> seen;
    std::vector<fraclab::Edge> edges;
    auto add = [&](VertexId a, VertexId b) {
        if (a == b) return;
        if (a > b) std::swap(a, b);
        if (seen.insert({a, b}).second) edges.push_back({a, b, w(rng), 1.0});
    };
    for (std::size_t i = 1; i < n; ++i) {
        add(static_cast<VertexId>(i), static_cast<VertexId>(std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)));
    }
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t k = 0; k < extra_edges; ++k) add(static_cast<VertexId>(pick(rng)), static_cast<VertexId>(pick(rng)));
    return WeightedGraph(std::move(vertices), std::move(edges), 1, fraclab::Lattice::Square,
                         {"random", 0, "custom", 1});
}

/// Path 0 - 1 - ... - (n-1) with unit weights.
inline WeightedGraph path(std::size_t n, double conductance = 1.0) {
    std::vector<fraclab::Vertex> vertices(n);
    for (std::size_t i = 0; i < n; ++i) vertices[i] = {{static_cast<std::int64_t>(i), 0}, 1.0};
    std::vector<fraclab::Edge> edges;
    for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({static_cast<VertexId>(i), static_cast<VertexId>(i + 1), conductance, 1.0});
    return WeightedGraph(std::move(vertices), std::move(edges), 1, fraclab::Lattice::Square, {"path", 0, "custom", 1});
}

using PointSet = std::set<std::pair<long long, long long>>;

/// Vertices of a level-n compact graph (unit size, offset by `origin`) by placing the cell
/// template on every cell of the iterated function system in floating point; coincident
/// points merge through rounding to 1e-9.
inline PointSet enumerate_points(fraclab::FamilyKind kind, int level, std::pair<double, double> origin = {0, 0}) {
    using P = std::pair<double, double>;
    std::vector<P> maps;   // translation of each contraction, unit square / triangle
    std::vector<P> cell;   // template points of one cell
    double scale = 2.0;
    const double h = std::sqrt(3.0) / 2.0;
    switch (kind) {
        case fraclab::FamilyKind::Interval:
            maps = {{0, 0}, {0.5, 0}};
            cell = {{0, 0}, {1, 0}};
            break;
        case fraclab::FamilyKind::Gasket:
            maps = {{0, 0}, {0.5, 0}, {0.25, h / 2}};
            cell = {{0, 0}, {1, 0}, {0.5, h}};
            break;
        case fraclab::FamilyKind::Vicsek:
            scale = 3.0;
            maps = {{0, 0}, {2.0 / 3, 0}, {0, 2.0 / 3}, {2.0 / 3, 2.0 / 3}, {1.0 / 3, 1.0 / 3}};
            cell = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0.5, 0.5}};
            break;
        case fraclab::FamilyKind::Carpet:
            scale = 3.0;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    if (i != 1 || j != 1) maps.push_back({i / 3.0, j / 3.0});
            cell = {{0, 0}, {0.5, 0}, {1, 0}, {1, 0.5}, {1, 1}, {0.5, 1}, {0, 1}, {0, 0.5}};
            break;
    }
    std::vector<std::pair<P, double>> cells = {{{0.0, 0.0}, 1.0}};
    for (int n = 0; n < level; ++n) {
        std::vector<std::pair<P, double>> next;
        for (const auto& [o, s] : cells)
            for (const auto& m : maps) next.push_back({{o.first + s * m.first, o.second + s * m.second}, s / scale});
        cells = std::move(next);
    }
    PointSet points;
    for (const auto& [o, s] : cells)
        for (const auto& c : cell)
            points.insert({std::llround((origin.first + o.first + s * c.first) * 1e9),
                           std::llround((origin.second + o.second + s * c.second) * 1e9)});
    return points;
}

inline std::size_t enumerate_vertices(fraclab::FamilyKind kind, int level) { return enumerate_points(kind, level).size(); }

/// Least-squares slope of log y against log x.
inline double log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = std::log(x[i]), b = std::log(y[i]);
        sx += a, sy += b, sxx += a * a, sxy += a * b;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace oracle
