#include <doctest.h>

#include <cmath>
#include <random>

#include "fraclab/error.hpp"
#include "fraclab/scaling.hpp"
#include "oracles.hpp"

using namespace fraclab;

TEST_CASE("phi and psi at simple points") {
    const auto e = ScalingExponents(2.0, std::log(8.0) / std::log(3.0), 2.5, 2.5, ExponentMode::Relaxed);
    CHECK(phi(e, 1.0) == doctest::Approx(1.0));
    CHECK(phi(e, 0.5) == doctest::Approx(0.25));
    CHECK(phi(e, 3.0) == doctest::Approx(8.0).epsilon(1e-12));
    const auto s = ScalingExponents::uniform(1.0, 2.0);
    CHECK(psi(s, 0.5) == doctest::Approx(0.25));
    CHECK(psi_inv(s, 4.0) == doctest::Approx(2.0));
}

TEST_CASE("psi_inv inverts psi across both branches") {
    const auto e = preset("carpet");
    for (int i = 0; i < 100; ++i) {
        const double r = std::pow(10.0, -3.0 + 6.0 * i / 99.0);
        CHECK(psi_inv(e, psi(e, r)) == doctest::Approx(r).epsilon(1e-12));
        CHECK(std::exp(log_psi_inv(e, log_psi(e, std::log(r)))) == doctest::Approx(r).epsilon(1e-12));
    }
}

TEST_CASE("psi over phi ratio") {
    const auto g = preset("gasket");
    CHECK(ratio_psi_phi(g, 1.0) == doctest::Approx(1.0));
    const double gamma = std::log(5.0 / 3.0) / std::log(2.0);
    CHECK(gamma == doctest::Approx(0.73697).epsilon(1e-5));
    CHECK(ratio_psi_phi(g, 0.5) == doctest::Approx(std::pow(2.0, -gamma)).epsilon(1e-12));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    for (int i = 0; i < 1000; ++i) {
        double a = std::exp(u(rng)), b = std::exp(u(rng));
        if (a > b) std::swap(a, b);
        CHECK(ratio_psi_phi(g, a) <= ratio_psi_phi(g, b));
    }
}

TEST_CASE("exponent validation") {
    CHECK_THROWS_AS(ScalingExponents(2.0, 2.0, 1.5, 1.5), DomainError);
    CHECK_THROWS_AS(ScalingExponents(1.0, 1.0, 3.0, 3.0), DomainError);  // beta > alpha + 1
    CHECK_NOTHROW(ScalingExponents(1.0, 1.0, 3.0, 3.0, ExponentMode::Relaxed));
    CHECK_THROWS_AS(preset("nonsense"), ConfigError);
    for (const auto& name : preset_names()) CHECK_NOTHROW(preset(name));
}

TEST_CASE("upsilon closed form") {
    const auto q = ScalingExponents::uniform(1.0, 2.0);
    CHECK(upsilon(q, 1.0, 1.0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(oracle::upsilon_grid(q, 1.0, 1.0) == doctest::Approx(0.25).epsilon(1e-10));
    for (double t : {1e-3, 1.0, 1e3}) CHECK(upsilon(q, 0.0, t) == 0.0);
}

TEST_CASE("upsilon matches the grid supremum on random inputs") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const double b1 = 2.0 + u(rng), b2 = 2.0 + u(rng);
        const auto e = ScalingExponents(b1 - 0.5, b2 - 0.5, b1, b2);
        const double r = std::exp(-3.0 + 6.0 * u(rng)), t = std::exp(-3.0 + 6.0 * u(rng));
        const double grid = oracle::upsilon_grid(e, r, t);
        CHECK(upsilon(e, r, t) == doctest::Approx(grid).epsilon(1e-8));
        CHECK(upsilon(e, r, t) >= r / psi_inv(e, t) - 1.0 - 1e-12);
    }
}

TEST_CASE("upsilon gap bound") {
    const auto q = ScalingExponents::uniform(1.0, 2.0);
    CHECK(upsilon_gap_bound(q, 1.0) == doctest::Approx(0.25).epsilon(1e-12));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const double b1 = 2.0 + u(rng), b2 = 2.0 + u(rng), a = std::exp(-2.0 + 4.0 * u(rng));
        const auto e = ScalingExponents(b1 - 0.5, b2 - 0.5, b1, b2);
        const double bound = upsilon_gap_bound(e, a);
        double sup = -1e300;
        for (int p = 0; p < 200; ++p) {
            const double t = std::exp(-8.0 + 16.0 * p / 199.0);
            for (int k = 0; k < 200; ++k) {
                const double s = std::exp(-8.0 + 16.0 * k / 199.0);
                sup = std::max(sup, a * psi_inv(e, t) / psi_inv(e, s) - t / s);
            }
        }
        CHECK(sup <= bound * (1.0 + 1e-12) + 1e-12);
    }
    for (int i = 0; i < 50; ++i) {
        double a = std::exp(-3.0 + 6.0 * u(rng)), b = std::exp(-3.0 + 6.0 * u(rng));
        if (a > b) std::swap(a, b);
        const auto e = preset("vicsek");
        CHECK(upsilon_gap_bound(e, a) <= upsilon_gap_bound(e, b));
    }
}
