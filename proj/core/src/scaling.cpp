#include "fraclab/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fraclab/error.hpp"

namespace fraclab {

namespace {

// Slack for the closed constraint beta <= alpha + 1: the Vicsek preset sits on it
// exactly (log15/log3 = 1 + log5/log3) and the two sides differ in the last ulp.
constexpr double kConstraintSlack = 1e-12;

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw DomainError(std::string(what) + " must be finite and > 0");
    }
}

double branch_power(double r, double low, double high) {
    const double exponent = r < 1.0 ? low : high;
    return std::exp(exponent * std::log(r));
}

// sup_{x > 0} (A x^a - x) for 0 < a < 1, attained at x* = (A a)^{1/(1-a)}.
double concave_power_gap(double A, double a) {
    const double x_star = std::exp(std::log(A * a) / (1.0 - a));
    return x_star * (1.0 / a - 1.0);
}

}  // namespace

ScalingExponents::ScalingExponents(double alpha1, double alpha2, double beta1, double beta2,
                                   ExponentMode mode)
    : alpha1_(alpha1), alpha2_(alpha2), beta1_(beta1), beta2_(beta2), mode_(mode) {
    require_positive(alpha1, "alpha1");
    require_positive(alpha2, "alpha2");
    require_positive(beta1, "beta1");
    require_positive(beta2, "beta2");
    if (!(alpha1 < beta1) || !(alpha2 < beta2)) {
        throw DomainError("exponents require alpha_i < beta_i");
    }
    if (!(beta1 > 1.0) || !(beta2 > 1.0)) {
        throw DomainError("exponents require beta_i > 1 for a finite Upsilon");
    }
    if (mode == ExponentMode::Strict && !satisfies_strict()) {
        throw DomainError("strict mode requires 2 <= beta_i <= alpha_i + 1");
    }
}

ScalingExponents ScalingExponents::uniform(double alpha, double beta, ExponentMode mode) {
    return ScalingExponents(alpha, alpha, beta, beta, mode);
}

bool ScalingExponents::satisfies_strict() const noexcept {
    auto ok = [](double a, double b) {
        return b >= 2.0 - kConstraintSlack && b <= a + 1.0 + kConstraintSlack && a < b;
    };
    return ok(alpha1_, beta1_) && ok(alpha2_, beta2_);
}

namespace {

struct Dimensions {
    double alpha;
    double beta;
};

Dimensions family_dimensions(std::string_view name, double rho) {
    const double log2 = std::log(2.0);
    const double log3 = std::log(3.0);
    if (name == "interval") return {1.0, 2.0};
    if (name == "gasket") return {std::log(3.0) / log2, std::log(5.0) / log2};
    if (name == "vicsek") return {std::log(5.0) / log3, std::log(15.0) / log3};
    if (name == "carpet") {
        require_positive(rho, "rho");
        return {std::log(8.0) / log3, std::log(8.0 * rho) / log3};
    }
    throw ConfigError("unknown exponent preset '" + std::string(name) + "'");
}

}  // namespace

ScalingExponents preset(std::string_view name, double rho) {
    constexpr std::string_view cable_prefix = "cable(";
    if (name.starts_with(cable_prefix) && name.ends_with(")")) {
        const auto inner = name.substr(cable_prefix.size(),
                                       name.size() - cable_prefix.size() - 1);
        const Dimensions d = family_dimensions(inner, rho);
        return ScalingExponents(1.0, d.alpha, 2.0, d.beta);
    }
    const Dimensions d = family_dimensions(name, rho);
    return ScalingExponents::uniform(d.alpha, d.beta);
}

std::vector<std::string> preset_names() { return {"interval", "gasket", "vicsek", "carpet"}; }

double phi(const ScalingExponents& e, double r) {
    require_positive(r, "r");
    return branch_power(r, e.alpha1(), e.alpha2());
}

double psi(const ScalingExponents& e, double r) {
    require_positive(r, "r");
    return branch_power(r, e.beta1(), e.beta2());
}

double psi_inv(const ScalingExponents& e, double t) {
    require_positive(t, "t");
    return branch_power(t, 1.0 / e.beta1(), 1.0 / e.beta2());
}

double ratio_psi_phi(const ScalingExponents& e, double r) {
    require_positive(r, "r");
    return branch_power(r, e.gamma1(), e.gamma2());
}

double log_phi(const ScalingExponents& e, double log_r) {
    return (log_r < 0.0 ? e.alpha1() : e.alpha2()) * log_r;
}

double log_psi(const ScalingExponents& e, double log_r) {
    return (log_r < 0.0 ? e.beta1() : e.beta2()) * log_r;
}

double log_psi_inv(const ScalingExponents& e, double log_t) {
    return log_t / (log_t < 0.0 ? e.beta1() : e.beta2());
}

double upsilon(const ScalingExponents& e, double R, double t) {
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("t must be finite and > 0");
    if (!(R >= 0.0) || !std::isfinite(R)) throw DomainError("R must be finite and >= 0");
    if (R == 0.0) return 0.0;

    // Each branch of s -> R/s - t s^{-beta} is concave in 1/s, so its maximum on the
    // branch is the stationary point when it lies inside, else an endpoint. The s -> inf
    // limit contributes 0 and the breakpoint s = 1 contributes R - t.
    double best = std::max(0.0, R - t);
    auto try_branch = [&](double beta, bool lower) {
        const double log_s = (std::log(beta * t) - std::log(R)) / (beta - 1.0);
        const bool inside = lower ? log_s < 0.0 : log_s >= 0.0;
        if (!inside) return;
        const double s = std::exp(log_s);
        const double value = R / s - t * std::exp(-beta * log_s);
        best = std::max(best, value);
    };
    try_branch(e.beta1(), true);
    try_branch(e.beta2(), false);
    return best;
}

double upsilon_gap_bound(const ScalingExponents& e, double A) {
    if (!(A > 0.0) || !std::isfinite(A)) throw DomainError("A must be finite and > 0");
    return std::max(concave_power_gap(A, 1.0 / e.beta1()),
                    concave_power_gap(A, 1.0 / e.beta2()));
}

}  // namespace fraclab
