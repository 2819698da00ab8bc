#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "fraclab/error.hpp"
#include "fraclab/fractal.hpp"
#include "fraclab/heat.hpp"
#include "fraclab/scaling.hpp"
#include "oracles.hpp"

using namespace fraclab;

TEST_CASE("small spectra") {
    const auto s2 = spectrum(EnergyForm(oracle::path(2)));
    REQUIRE(s2.size() == 2);
    CHECK(s2.eigenvalues(0) == doctest::Approx(0.0));
    CHECK(s2.eigenvalues(1) == doctest::Approx(2.0).epsilon(1e-14));
    const auto s3 = spectrum(EnergyForm(oracle::path(3)));
    REQUIRE(s3.size() == 3);
    CHECK(std::abs(s3.eigenvalues(0)) < 1e-14);
    CHECK(s3.eigenvalues(1) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s3.eigenvalues(2) == doctest::Approx(3.0).epsilon(1e-14));
    const auto g = build_prefractal(FamilyKind::Gasket, 3);
    const auto sg = spectrum(EnergyForm(g));
    CHECK(sg.size() == g.size());
    CHECK(orthonormality_residual(sg) < 1e-10);
    CHECK_THROWS_AS(spectrum(EnergyForm(g), 10), SolverError);
}

TEST_CASE("two-vertex heat kernel") {
    const auto s = spectrum(EnergyForm(oracle::path(2)));
    for (double t : {0.01, 0.3, 1.0, 4.0}) {
        CHECK(std::abs(heat_kernel(s, t, 0, 0) - (1.0 + std::exp(-2.0 * t)) / 2.0) < 1e-12);
        CHECK(std::abs(heat_kernel(s, t, 0, 1) - (1.0 - std::exp(-2.0 * t)) / 2.0) < 1e-12);
        CHECK(std::abs(dt_heat_kernel(s, t, 0, 0) + std::exp(-2.0 * t)) < 1e-12);
    }
}

TEST_CASE("heat kernel agrees with an independent eigensolver") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        const auto g = oracle::random_graph(rng, 30, 25);
        const auto s = spectrum(EnergyForm(g));
        const auto es = oracle::eigensystem(oracle::stiffness(g), oracle::measure(g));
        for (double t : {0.05, 0.7, 5.0}) {
            const auto p = oracle::heat_matrix(es, t);
            double worst = 0.0;
            for (VertexId x = 0; x < 30; ++x)
                for (VertexId y = 0; y < 30; ++y) worst = std::max(worst, std::abs(heat_kernel(s, t, x, y) - p(x, y)));
            CHECK(worst < 1e-10);
        }
    }
}

TEST_CASE("long time limit, symmetry and chapman-kolmogorov") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        const auto g = oracle::random_graph(rng, 25, 20);
        const auto s = spectrum(EnergyForm(g));
        const auto m = oracle::measure(g);
        CHECK(heat_kernel(s, 1e6, 3, 17) == doctest::Approx(1.0 / g.total_measure()).epsilon(1e-10));
        std::vector<VertexId> all(25);
        for (VertexId i = 0; i < 25; ++i) all[i] = i;
        const auto a = heat_kernel_block(s, 0.3, all, all), b = heat_kernel_block(s, 0.7, all, all);
        const auto c = heat_kernel_block(s, 1.0, all, all);
        CHECK((a - a.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        // Direct double sum: p_{t+s}(x,z) = sum_y p_t(x,y) p_s(y,z) m(y).
        double worst = 0.0;
        for (VertexId x = 0; x < 25; ++x)
            for (VertexId z = 0; z < 25; ++z) {
                double sum = 0.0;
                for (VertexId y = 0; y < 25; ++y) sum += a(x, y) * b(y, z) * m(y);
                worst = std::max(worst, std::abs(sum - c(x, z)));
            }
        CHECK(worst < 1e-10);
        const auto rows = dt_heat_kernel_block(s, 0.4, all, all);
        CHECK((rows * m).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(((heat_kernel_block(s, 0.4, all, all) * m).array() - 1.0).abs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("semigroup is markov") {
    std::mt19937_64 rng(14);
    const auto g = oracle::random_graph(rng, 30, 30);
    const EnergyForm form(g);
    const auto s = spectrum(form);
    const auto c = semigroup_apply(s, 2.0, form.make(Eigen::VectorXd::Constant(30, 1.5)));
    CHECK((c.values.array() - 1.5).abs().maxCoeff() < 1e-12);
    std::uniform_real_distribution<double> u(-1.0, 1.0), tt(0.0, 5.0);
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd f(30);
        for (auto& v : f) v = u(rng);
        const auto pf = semigroup_apply(s, tt(rng), form.make(f));
        CHECK(pf.values.cwiseAbs().maxCoeff() <= f.cwiseAbs().maxCoeff() * (1.0 + 1e-12));
    }
}

TEST_CASE("spectral and crank-nicolson agree") {
    const auto g = build_prefractal(FamilyKind::Gasket, 3);
    const EnergyForm form(g);
    const auto s = spectrum(form);
    const std::vector<double> times = {0.1, 1.0, 10.0, 50.0};
    const std::vector<VertexId> src = {0, center_vertex(g)};
    std::vector<VertexId> all(g.size());
    for (VertexId i = 0; i < g.size(); ++i) all[i] = i;
    const auto a = heat_kernel_table(s, times, src, all);
    const auto b = heat_kernel_table(form, times, src, all, CrankNicolsonOptions{});
    CHECK(b.method != a.method);
    for (std::size_t k = 0; k < times.size(); ++k) {
        CHECK((a.values[k] - b.values[k]).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((a.rates[k] - b.rates[k]).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("time derivative against finite differences") {
    const auto g = build_prefractal(FamilyKind::Vicsek, 2);
    const auto s = spectrum(EnergyForm(g));
    const VertexId x = center_vertex(g);
    const double h = 1e-5;
    for (double t : {0.5, 2.0, 8.0}) {
        for (VertexId y : {x, VertexId{0}}) {
            const double fd = (heat_kernel(s, t + h, x, y) - heat_kernel(s, t - h, x, y)) / (2.0 * h);
            const double d = dt_heat_kernel(s, t, x, y);
            CHECK(std::abs(fd - d) <= 1e-6 * std::abs(d) + 1e-12);
        }
    }
}

TEST_CASE("table cache round trip") {
    const auto g = build_prefractal(FamilyKind::Gasket, 2);
    const auto s = spectrum(EnergyForm(g));
    const std::vector<double> times = {0.5, 1.0};
    const std::vector<VertexId> src = {1}, tgt = {0, 1, 2};
    auto t = heat_kernel_table(s, times, src, tgt);
    t.key = heat_table_key(g.content_hash(), preset("gasket"), times, src, tgt);
    const auto dir = std::filesystem::temp_directory_path() / "fraclab_table_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "t.bin").string();
    save_table(t, path);
    HeatKernelTable back;
    CHECK(load_table(path, t.key, back));
    CHECK(back.values[1].isApprox(t.values[1], 0.0));
    CHECK_FALSE(load_table(path, "other", back));
    CHECK(heat_table_key(g.content_hash(), preset("vicsek"), times, src, tgt) != t.key);
    std::ostringstream csv;
    write_csv(t, csv);
    CHECK(csv.str().rfind("t,x,y,p,dp_dt", 0) == 0);
    std::filesystem::remove_all(dir);
}
