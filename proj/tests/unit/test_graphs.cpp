#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fraclab/dirichlet.hpp"
#include "fraclab/error.hpp"
#include "fraclab/fractal.hpp"
#include "fraclab/graph.hpp"
#include "fraclab/resistance.hpp"
#include "oracles.hpp"

using namespace fraclab;

namespace {

const FamilyKind kAll[] = {FamilyKind::Interval, FamilyKind::Gasket, FamilyKind::Vicsek, FamilyKind::Carpet};

}  // namespace

TEST_CASE("gasket vertex counts") {
    const auto g0 = build_compact(FamilyKind::Gasket, 0);
    CHECK(g0.size() == 3);
    CHECK(g0.edges().size() == 3);
    const std::size_t expected[] = {3, 6, 15, 42};
    for (int n = 0; n <= 3; ++n) {
        CHECK(build_compact(FamilyKind::Gasket, n).size() == expected[n]);
        CHECK(oracle::enumerate_vertices(FamilyKind::Gasket, n) == expected[n]);
    }
}

TEST_CASE("vertex counts agree with enumeration") {
    CHECK(build_compact(FamilyKind::Carpet, 1).size() == 40);
    CHECK(build_compact(FamilyKind::Vicsek, 1).size() == 21);
    for (auto kind : kAll) {
        for (int n = 0; n <= 3; ++n) {
            CAPTURE(family_name(kind));
            CAPTURE(n);
            CHECK(build_compact(kind, n).size() == oracle::enumerate_vertices(kind, n));
            CHECK(build_prefractal(kind, n).size() == oracle::enumerate_vertices(kind, n));
        }
    }
}

TEST_CASE("interval pre-fractal is a path on [0, 2^n]") {
    const auto g = build_prefractal(FamilyKind::Interval, 3);
    REQUIRE(g.size() == 9);
    CHECK(g.edges().size() == 8);
    double lo = 1e9, hi = -1e9;
    for (VertexId v = 0; v < g.size(); ++v) {
        lo = std::min(lo, g.position(v).x);
        hi = std::max(hi, g.position(v).x);
        CHECK(g.neighbors(v).size() <= 2);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 8.0);
    for (const auto& e : g.edges()) CHECK(e.length == doctest::Approx(1.0));
}

TEST_CASE("pre-fractal windows are nested") {
    for (auto kind : kAll) {
        for (int n = 0; n <= 4; ++n) {
            const auto a = build_prefractal(kind, n), b = build_prefractal(kind, n + 1);
            REQUIRE(b.denominator() % a.denominator() == 0);
            const std::int64_t k = b.denominator() / a.denominator();
            bool nested = true;
            for (const auto& v : a.vertices()) nested = nested && b.find(k * v.coord).has_value();
            CAPTURE(family_name(kind));
            CAPTURE(n);
            CHECK(nested);
        }
    }
}

TEST_CASE("measure normalization") {
    for (int n = 0; n <= 4; ++n) {
        CHECK(build_prefractal(FamilyKind::Carpet, n).total_measure() == doctest::Approx(std::pow(8.0, n)));
        for (auto kind : kAll) CHECK(build_compact(kind, n).total_measure() == doctest::Approx(1.0));
    }
}

TEST_CASE("vertex budget is enforced before construction") {
    CHECK_THROWS_AS(build_prefractal(FamilyKind::Gasket, 30), ConstructionError);
    BuildOptions small;
    small.vertex_budget = 100;
    CHECK_THROWS_AS(build_prefractal(FamilyKind::Carpet, 3, small), ConstructionError);
}

TEST_CASE("graph invariants are validated") {
    std::vector<Vertex> vs = {{{0, 0}, 1.0}, {{1, 0}, 1.0}, {{2, 0}, 1.0}};
    CHECK_THROWS_AS(WeightedGraph(vs, {{0, 1, 1.0, 1.0}}, 1, Lattice::Square, {}), ConstructionError);  // disconnected
    CHECK_THROWS_AS(WeightedGraph(vs, {{0, 1, 1.0, 1.0}, {1, 2, -1.0, 1.0}}, 1, Lattice::Square, {}), ConstructionError);
    CHECK_THROWS_AS(WeightedGraph(vs, {{0, 1, 1.0, 1.0}, {1, 2, 1.0, 1.0}, {1, 0, 1.0, 1.0}}, 1, Lattice::Square, {}),
                    ConstructionError);
}

TEST_CASE("cable subdivision") {
    const auto edge = oracle::path(2);
    const auto c2 = build_cable(edge, 2);
    REQUIRE(c2.size() == 3);
    REQUIRE(c2.edges().size() == 2);
    for (const auto& e : c2.edges()) CHECK(e.conductance == doctest::Approx(2.0));
    CHECK(point_resistance(EnergyForm(c2), 0, 1) == doctest::Approx(1.0).epsilon(1e-12));

    const auto g = build_prefractal(FamilyKind::Gasket, 2);
    const auto c1 = build_cable(g, 1);
    CHECK(c1.size() == g.size());
    CHECK(c1.edges().size() == g.edges().size());
    CHECK(c1.content_hash() == g.content_hash());

    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const auto r = oracle::random_graph(rng, 12, 10);
        const int k = 2 + trial % 3;
        const auto cable = build_cable(r, k);
        const auto ga = oracle::green(oracle::stiffness(r));
        const auto gb = oracle::green(oracle::stiffness(cable));
        double worst = 0.0;
        for (VertexId x = 0; x < r.size(); ++x) {
            const auto cx = *cable.find(static_cast<std::int64_t>(k) * r.vertex(x).coord);
            for (VertexId y = x + 1; y < r.size(); ++y) {
                const auto cy = *cable.find(static_cast<std::int64_t>(k) * r.vertex(y).coord);
                const double a = oracle::resistance(ga, x, y), b = oracle::resistance(gb, cx, cy);
                worst = std::max(worst, std::abs(a - b) / a);
            }
        }
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("blowups") {
    // Eight interval cells of graph level 0 form a path on 9 vertices, of level 1 one on 17.
    for (int k : {0, 1}) {
        const auto g = build_blowup({FamilyKind::Interval, FamilyKind::Interval, k, 3});
        const std::size_t n = 8u << k;
        CHECK(g.size() == n + 1);
        CHECK(g.edges().size() == n);
        CHECK(g.total_measure() == doctest::Approx(8.0));
    }

    BlowupSpec vc{FamilyKind::Vicsek, FamilyKind::Carpet, 1, 1};
    const auto b = build_blowup(vc);
    oracle::PointSet expected;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != 1 || j != 1) {
                const auto cell = oracle::enumerate_points(FamilyKind::Vicsek, 1, {i, j});
                expected.insert(cell.begin(), cell.end());
            }
    CHECK(b.size() == expected.size());
    CHECK(b.size() < 8 * 21);
    CHECK(b.total_measure() == doctest::Approx(8.0));
}

TEST_CASE("balls and volumes") {
    const auto p = oracle::path(7);
    CHECK(ball(p, 3, 1.5).size() == 3);
    CHECK(volume(p, 3, 1.5) == doctest::Approx(3.0));
    const auto g = build_prefractal(FamilyKind::Gasket, 5);
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<VertexId> pick(0, static_cast<VertexId>(g.size() - 1));
    std::uniform_real_distribution<double> rad(0.0, 20.0);
    for (int i = 0; i < 200; ++i) {
        const VertexId c = pick(rng);
        double r1 = rad(rng), r2 = rad(rng);
        if (r1 > r2) std::swap(r1, r2);
        CHECK(volume(g, c, r1) <= volume(g, c, r2));
    }
}

TEST_CASE("carpet volume growth by direct ball counts") {
    const auto g = build_prefractal(FamilyKind::Carpet, 4);
    const auto central = central_vertices(g, 0.5);
    std::mt19937_64 rng(9);
    std::vector<double> rs, vs;
    for (int i = 0; i < 50; ++i) {
        const VertexId c = central[std::uniform_int_distribution<std::size_t>(0, central.size() - 1)(rng)];
        // Radii from 4 lattice steps up, below which the half-unit lattice dominates.
        for (double r = 2.0; r <= 20.0 + 1e-9; r *= std::sqrt(2.0)) {
            rs.push_back(r);
            vs.push_back(volume(g, c, r));
        }
    }
    CHECK(oracle::log_slope(rs, vs) == doctest::Approx(std::log(8.0) / std::log(3.0)).epsilon(0.1 / 1.8928));
}

TEST_CASE("geodesic and euclidean metrics are comparable on the square families") {
    for (auto kind : {FamilyKind::Interval, FamilyKind::Carpet}) {
        const auto g = build_prefractal(kind, 3);
        std::mt19937_64 rng(4);
        std::uniform_int_distribution<VertexId> pick(0, static_cast<VertexId>(g.size() - 1));
        double lo = 1e9, hi = 0.0;
        for (int i = 0; i < 200; ++i) {
            const VertexId a = pick(rng), b = pick(rng);
            if (a == b) continue;
            const double q = distance(g, a, b, MetricMode::Geodesic) / distance(g, a, b, MetricMode::Euclidean);
            lo = std::min(lo, q);
            hi = std::max(hi, q);
        }
        CHECK(lo >= 1.0 - 1e-12);
        CHECK(hi < 4.0);
    }
}

TEST_CASE("json round trip preserves the graph") {
    for (auto kind : kAll) {
        const auto g = build_prefractal(kind, 2);
        const auto back = graph_from_json(to_json(g));
        CHECK(back.content_hash() == g.content_hash());
        CHECK(back.size() == g.size());
    }
    const auto j = to_json(build_compact(FamilyKind::Gasket, 1));
    CHECK(j.at("meta").at("family") == "gasket");
    CHECK(j.at("vertices").size() == 6);
    CHECK(j.at("edges").size() == 9);
}
