#pragma once

// Condition reports: fitted exponents, constant brackets, verdicts and raw samples.

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fraclab {

class ScalingExponents;
class WeightedGraph;

inline constexpr int kReportSchema = 1;
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class Verdict { Pass, Fail, Inconclusive };

std::string to_string(Verdict v);
Verdict parse_verdict(const std::string& s);

enum class FitMode {
    LeastSquares,  ///< ordinary least squares on (log x, log y)
    Envelope,      ///< least squares through the upper concave hull of per-bin maxima
};

struct LineFit {
    double slope = kNaN;
    double intercept = kNaN;  ///< log y at log x = 0
    double residual = kNaN;   ///< RMS of log y - fitted line over the points used
    std::size_t samples = 0;  ///< points that entered the final least-squares step
};

/// Fits log y = slope log x + intercept. x, y must be positive; at least two distinct x.
/// Envelope mode bins log x into `bins_per_octave` bins per factor of 2.
LineFit fit_exponent(std::span<const double> x, std::span<const double> y,
                     FitMode mode = FitMode::LeastSquares, int bins_per_octave = 4);

/// log2(max x / min x); 0 for fewer than two points.
double dyadic_span(std::span<const double> x);

struct ExponentFit {
    std::string name;
    std::string mode;  ///< "ls" or "envelope"
    LineFit fit;
    double target = kNaN;
    double tolerance = kNaN;

    bool within_tolerance() const;
};

/// Empirical range of a normalized ratio, aggregated per scale (length or time).
struct ConstantBracket {
    std::string name;
    double min = kNaN;
    double max = kNaN;
    std::vector<double> scales;     ///< scale of each aggregate
    std::vector<double> per_scale;  ///< aggregate (sup or inf) at that scale
    double factor_limit = 4.0;

    static ConstantBracket named(std::string name, double factor_limit = 4.0);
    /// Appends one per-scale aggregate and widens [min, max].
    void add(double scale, double value);

    /// max/min of the per-scale aggregates (inf if any aggregate is <= 0 or missing).
    double variation() const;
    bool stable() const;
};

struct ReportWindow {
    double r_min = kNaN;
    double r_max = kNaN;
    double t_min = kNaN;
    double t_max = kNaN;

    double dyadic_scales() const;
};

struct ConditionReport {
    std::string condition;
    std::string graph_hash;
    std::string graph_family;
    int graph_level = 0;
    std::string graph_scale;
    std::string exponents;  ///< human-readable label, e.g. "gasket" or "explicit"
    double alpha1 = kNaN, alpha2 = kNaN, beta1 = kNaN, beta2 = kNaN;
    bool relaxed = false;

    ReportWindow window;
    std::vector<ExponentFit> fits;
    std::vector<ConstantBracket> constants;
    Verdict verdict = Verdict::Inconclusive;
    std::size_t samples_used = 0;
    std::size_t skipped = 0;
    std::size_t violations = 0;
    std::vector<std::string> notes;
    nlohmann::json details = nlohmann::json::object();

    std::vector<std::string> sample_columns;
    std::vector<std::vector<double>> samples;

    const ExponentFit* find_fit(const std::string& name) const;
    const ConstantBracket* find_constant(const std::string& name) const;
};

/// Fills the graph and exponent identification fields.
ConditionReport make_report(const std::string& condition, const WeightedGraph& graph,
                            const ScalingExponents& exps, const std::string& exponents_label);

nlohmann::json to_json(const ConditionReport& r);

/// Parses a schema-1 report; ConfigError on a missing or different schema.
ConditionReport report_from_json(const nlohmann::json& j);

/// Raw samples as CSV with a header row; numbers in round-trip precision.
void write_samples_csv(const ConditionReport& r, std::ostream& out);

std::string format_double(double v);

}  // namespace fraclab
