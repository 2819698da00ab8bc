#pragma once

// Graph Dirichlet form E(u,v) = sum_edges c_xy (u(x)-u(y)) (v(x)-v(y)) and the
// m-weighted Laplacian L = M^{-1} K, with K = D - C the stiffness (Kirchhoff) matrix.
//
// Sign convention: L is positive semidefinite, E(u,v) = <Lu, v>_m, the heat semigroup is
// exp(-tL), harmonic means Lu = 0 and the Poisson problem is Lu = f. Generators written
// as "Delta" with Delta(P_t f) = d/dt P_t f correspond to Delta = -L.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <nlohmann/json.hpp>

#include "fraclab/graph.hpp"

namespace fraclab {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct SolverDiagnostics {
    std::string method;         ///< "none", "dense-llt", "cg", "sparse-ldlt"
    std::size_t unknowns = 0;
    int iterations = 0;
    double residual = 0.0;      ///< relative residual |b - Ax| / |b|
    bool converged = true;
    std::string note;
};

/// A real function on the vertices of one form (identified by its domain tag).
struct Potential {
    std::string domain;
    Eigen::VectorXd values;
    SolverDiagnostics diagnostics;

    std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
    double operator[](VertexId v) const { return values(static_cast<Eigen::Index>(v)); }
};

nlohmann::json to_json(const Potential& u);

/// Energy form on a finite vertex set: measure m > 0 and a symmetric stiffness matrix
/// with nonpositive off-diagonal entries and zero row sums.
class EnergyForm {
public:
    explicit EnergyForm(const WeightedGraph& graph);

    /// Validates symmetry, row sums and signs (ConstructionError otherwise).
    /// `support` lists the ids of these vertices in a parent form (empty = identity).
    EnergyForm(Eigen::VectorXd measure, SparseMatrix stiffness, std::string domain,
               std::vector<VertexId> support = {});

    std::size_t size() const noexcept { return static_cast<std::size_t>(measure_.size()); }
    const Eigen::VectorXd& measure() const noexcept { return measure_; }
    const SparseMatrix& stiffness() const noexcept { return stiffness_; }
    const std::string& domain() const noexcept { return domain_; }
    const std::vector<VertexId>& support() const noexcept { return support_; }

    /// Effective conductance between two distinct vertices (-K_xy).
    double conductance(VertexId x, VertexId y) const;
    bool is_connected() const;

    Potential zeros() const;
    Potential make(Eigen::VectorXd values) const;

private:
    Eigen::VectorXd measure_;
    SparseMatrix stiffness_;
    std::string domain_;
    std::vector<VertexId> support_;
};

double energy(const EnergyForm& form, const Potential& u, const Potential& v);
double energy(const EnergyForm& form, const Potential& u);

/// (Lu)(x) = (1/m(x)) sum_y c_xy (u(x) - u(y)).
Potential laplacian_apply(const EnergyForm& form, const Potential& u);

enum class SolverMethod {
    Auto,               ///< dense below the threshold, else CG with sparse Cholesky fallback
    Dense,
    ConjugateGradient,  ///< diagonal preconditioner; non-convergence is reported, not thrown
    SparseCholesky,
};

struct SolverOptions {
    SolverMethod method = SolverMethod::Auto;
    double tolerance = 1e-10;
    double iteration_factor = 20.0;  ///< CG iteration cap = factor * sqrt(unknowns)
    std::size_t dense_threshold = 500;
};

/// Direct factorization for repeated solves: dense below the threshold, else sparse Cholesky.
SolverOptions direct_solver(std::size_t unknowns);

/// The stiffness matrix restricted to a set of free vertices, factorized once for
/// repeated solves K_FF x = b. Throws SolverError when some component of the free set
/// does not touch the fixed vertices (singular system).
class ReducedSystem {
public:
    ReducedSystem(const EnergyForm& form, std::vector<VertexId> free_vertices,
                  SolverOptions options = {});
    ~ReducedSystem();
    ReducedSystem(ReducedSystem&&) noexcept;
    ReducedSystem& operator=(ReducedSystem&&) noexcept;

    const std::vector<VertexId>& free_vertices() const noexcept { return free_; }
    const std::vector<VertexId>& fixed_vertices() const noexcept { return fixed_; }
    const SparseMatrix& free_block() const noexcept;
    const SparseMatrix& coupling() const noexcept;  ///< K_{F, fixed}

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs, SolverDiagnostics* diagnostics = nullptr) const;
    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

    /// Harmonic extension of g (values on fixed_vertices(), in that order).
    Potential extend(const EnergyForm& form, const Eigen::VectorXd& g) const;

private:
    struct Impl;
    std::vector<VertexId> free_;
    std::vector<VertexId> fixed_;
    std::unique_ptr<Impl> impl_;
};

/// Vertices not in `set`, ascending. Validates ids and uniqueness.
std::vector<VertexId> complement(std::size_t n, std::span<const VertexId> set);

/// h_Y(g): equals g on Y, harmonic off Y, the unique energy minimizer.
Potential solve_harmonic(const EnergyForm& form, std::span<const VertexId> boundary,
                         const Eigen::VectorXd& g, const SolverOptions& options = {});

/// u = 0 off D and Lu = f on D (f given in the order of D). D must be a proper subset.
Potential solve_poisson(const EnergyForm& form, std::span<const VertexId> domain,
                        const Eigen::VectorXd& f, const SolverOptions& options = {});

inline constexpr std::size_t kDenseTraceLimit = 2000;

/// Schur complement onto Y as a dense conductance network (|Y| <= kDenseTraceLimit).
/// The trace keeps m restricted to Y; support() maps its vertices back to `form`.
EnergyForm trace_form(const EnergyForm& form, std::span<const VertexId> subset);

/// E|_Y(g, g) = E(h_Y g, h_Y g) by one harmonic solve; works for any |Y|.
double trace_energy(const EnergyForm& form, std::span<const VertexId> subset,
                    const Eigen::VectorXd& g, const SolverOptions& options = {});

}  // namespace fraclab
