#pragma once

// Heat kernel p_t(x,y) of exp(-tL), taken as a density against m:
//   P_t f(x) = sum_y p_t(x,y) f(y) m(y),   p_t(x,y) = sum_k exp(-lambda_k t) phi_k(x) phi_k(y)
// with phi_k the m-orthonormal eigenfunctions of L.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fraclab/dirichlet.hpp"

namespace fraclab {

class ScalingExponents;

inline constexpr std::size_t kDenseSpectrumCap = 6000;

struct Spectrum {
    std::string domain;
    Eigen::VectorXd eigenvalues;   ///< ascending, lambda_0 = 0 (round-off clamped)
    Eigen::MatrixXd eigenvectors;  ///< column k is phi_k, sum_x phi_j phi_k m = delta_jk
    Eigen::VectorXd measure;

    std::size_t size() const noexcept { return static_cast<std::size_t>(eigenvalues.size()); }
};

/// Full eigensystem of L; SolverError above `cap` vertices (use time stepping instead).
Spectrum spectrum(const EnergyForm& form, std::size_t cap = kDenseSpectrumCap);

/// max |Phi^T M Phi - I|.
double orthonormality_residual(const Spectrum& s);

double heat_kernel(const Spectrum& s, double t, VertexId x, VertexId y);
/// d/dt p_t(x,y) = -sum_k lambda_k exp(-lambda_k t) phi_k(x) phi_k(y).
double dt_heat_kernel(const Spectrum& s, double t, VertexId x, VertexId y);

/// p_t(rows, cols) and its time derivative as dense blocks.
Eigen::MatrixXd heat_kernel_block(const Spectrum& s, double t, std::span<const VertexId> rows,
                                  std::span<const VertexId> cols);
Eigen::MatrixXd dt_heat_kernel_block(const Spectrum& s, double t, std::span<const VertexId> rows,
                                     std::span<const VertexId> cols);

/// p_t(x,x) for x in `vertices` (rows) and t in `times` (columns).
Eigen::MatrixXd heat_kernel_diagonal(const Spectrum& s, std::span<const double> times,
                                     std::span<const VertexId> vertices);

enum class SemigroupMethod { Spectral, CrankNicolson };

struct CrankNicolsonOptions {
    double local_error = 1e-10;  ///< per-step sup-norm error target relative to |f|_inf
    double initial_step = 1e-3;
    std::size_t max_steps = 1'000'000;
};

struct SemigroupStats {
    std::size_t steps = 0;
    std::size_t rejected = 0;
    std::size_t factorizations = 0;
};

/// P_t f = exp(-tL) f.
Potential semigroup_apply(const Spectrum& s, double t, const Potential& f);
Potential semigroup_apply(const EnergyForm& form, double t, const Potential& f,
                          SemigroupMethod method = SemigroupMethod::Spectral,
                          const CrankNicolsonOptions& options = {});

/// Crank-Nicolson with step doubling applied to the columns of `f` (n x k) at each of
/// the ascending `times`; returns one n x k block per time.
std::vector<Eigen::MatrixXd> crank_nicolson_path(const EnergyForm& form, const Eigen::MatrixXd& f,
                                                 std::span<const double> times,
                                                 const CrankNicolsonOptions& options = {},
                                                 SemigroupStats* stats = nullptr);

/// p_t(x, y) and d/dt p_t(x, y) for x in `sources`, y in `targets`, t in `times`.
struct HeatKernelTable {
    std::string key;  ///< content key: graph hash + exponents + time grid
    std::string graph_hash;
    std::string method;
    std::vector<double> times;
    std::vector<VertexId> sources;
    std::vector<VertexId> targets;
    std::vector<Eigen::MatrixXd> values;  ///< per time, |sources| x |targets|
    std::vector<Eigen::MatrixXd> rates;   ///< per time, d/dt of values

    std::size_t source_index(VertexId x) const;  ///< SIZE_MAX if absent
    std::size_t target_index(VertexId y) const;
};

HeatKernelTable heat_kernel_table(const Spectrum& s, std::span<const double> times,
                                  std::span<const VertexId> sources, std::span<const VertexId> targets);

/// Same table by Crank-Nicolson from the point masses delta_x / m(x).
HeatKernelTable heat_kernel_table(const EnergyForm& form, std::span<const double> times,
                                  std::span<const VertexId> sources, std::span<const VertexId> targets,
                                  const CrankNicolsonOptions& options = {});

/// Spectral below the dense cap, Crank-Nicolson above it.
HeatKernelTable heat_kernel_table(const EnergyForm& form, std::span<const double> times,
                                  std::span<const VertexId> sources, std::span<const VertexId> targets,
                                  std::size_t dense_cap);

/// Cache key over the graph hash, the exponents, the time grid and the vertex subsets.
std::string heat_table_key(const std::string& graph_hash, const ScalingExponents& exps,
                           std::span<const double> times, std::span<const VertexId> sources,
                           std::span<const VertexId> targets);

/// CSV rows t,x,y,p,dp_dt.
void write_csv(const HeatKernelTable& table, std::ostream& out);

/// Binary cache; load returns false if the file is missing or its key differs.
void save_table(const HeatKernelTable& table, const std::string& path);
bool load_table(const std::string& path, const std::string& expected_key, HeatKernelTable& out);

}  // namespace fraclab
