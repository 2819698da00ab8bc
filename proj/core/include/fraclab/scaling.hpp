#pragma once

// Space/time scaling functions built from two-branch power laws.
//
//   Phi(r) = r^alpha1 (r < 1),  r^alpha2 (r >= 1)     volume scale
//   Psi(r) = r^beta1  (r < 1),  r^beta2  (r >= 1)     time scale
//   (Psi/Phi)(r) = r^gamma_i with gamma_i = beta_i - alpha_i
//   Upsilon(R, t) = sup_{s > 0} (R/s - t/Psi(s))      off-diagonal decay profile

#include <string>
#include <string_view>
#include <vector>

namespace fraclab {

enum class ExponentMode {
    Strict,   ///< 2 <= beta_i <= alpha_i + 1 and alpha_i < beta_i
    Relaxed,  ///< only 0 < alpha_i < beta_i (and beta_i > 1 so Upsilon is finite)
};

class ScalingExponents {
public:
    /// Validates the exponent quadruple; throws DomainError on violation.
    ScalingExponents(double alpha1, double alpha2, double beta1, double beta2,
                     ExponentMode mode = ExponentMode::Strict);

    /// Single-regime exponents (alpha1 = alpha2, beta1 = beta2).
    static ScalingExponents uniform(double alpha, double beta,
                                    ExponentMode mode = ExponentMode::Strict);

    double alpha1() const noexcept { return alpha1_; }
    double alpha2() const noexcept { return alpha2_; }
    double beta1() const noexcept { return beta1_; }
    double beta2() const noexcept { return beta2_; }
    double gamma1() const noexcept { return beta1_ - alpha1_; }
    double gamma2() const noexcept { return beta2_ - alpha2_; }
    ExponentMode mode() const noexcept { return mode_; }
    bool relaxed() const noexcept { return mode_ == ExponentMode::Relaxed; }

    /// True when the quadruple would also pass strict validation.
    bool satisfies_strict() const noexcept;

    friend bool operator==(const ScalingExponents&, const ScalingExponents&) = default;

private:
    double alpha1_;
    double alpha2_;
    double beta1_;
    double beta2_;
    ExponentMode mode_;
};

/// Default carpet resistance factor rho, beta = log(8 rho) / log 3.
inline constexpr double kCarpetRho = 1.25147;

/// Named presets: "interval", "gasket", "vicsek", "carpet", "cable(<name>)".
/// `rho` only affects the carpet entries. Unknown names throw ConfigError.
ScalingExponents preset(std::string_view name, double rho = kCarpetRho);

/// Names accepted by preset() (without the cable(...) wrappers).
std::vector<std::string> preset_names();

double phi(const ScalingExponents& e, double r);
double psi(const ScalingExponents& e, double r);
double psi_inv(const ScalingExponents& e, double t);
double ratio_psi_phi(const ScalingExponents& e, double r);

/// log Phi(r) and log Psi(r) from log r; valid for any finite log r.
double log_phi(const ScalingExponents& e, double log_r);
double log_psi(const ScalingExponents& e, double log_r);
/// log Psi^{-1}(t) from log t.
double log_psi_inv(const ScalingExponents& e, double log_t);

/// sup_{s>0} (R/s - t/Psi(s)); closed form over the branch stationary points.
double upsilon(const ScalingExponents& e, double R, double t);

/// Closed-form majorant of sup_{t,s>0} (A Psi^{-1}(t)/Psi^{-1}(s) - t/s):
/// sup_{x>0} (A max{x^{1/beta1}, x^{1/beta2}} - x).
double upsilon_gap_bound(const ScalingExponents& e, double A);

}  // namespace fraclab
