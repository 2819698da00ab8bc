#include "fraclab/dirichlet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "fraclab/error.hpp"

namespace fraclab {

namespace {

constexpr std::size_t kTraceColumnBlock = 64;

void check_domain(const EnergyForm& form, const Potential& u) {
    if (u.domain != form.domain() || u.size() != form.size()) {
        throw DomainError("potential belongs to a different graph than the energy form");
    }
}

// Rows `rows` and columns `cols` of a symmetric sparse matrix.
SparseMatrix extract(const SparseMatrix& k, const std::vector<VertexId>& rows,
                     const std::vector<VertexId>& cols) {
    const auto n = static_cast<std::size_t>(k.rows());
    std::vector<Eigen::Index> col_pos(n, -1);
    for (std::size_t j = 0; j < cols.size(); ++j) col_pos[cols[j]] = static_cast<Eigen::Index>(j);
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        // Column-major storage of a symmetric matrix: column r holds row r.
        for (SparseMatrix::InnerIterator it(k, rows[i]); it; ++it) {
            const auto j = col_pos[static_cast<std::size_t>(it.row())];
            if (j >= 0) triplets.emplace_back(static_cast<Eigen::Index>(i), j, it.value());
        }
    }
    SparseMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    out.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

// Union-find over the free block: every component must couple to a fixed vertex.
void require_grounded(const SparseMatrix& k_ff, const SparseMatrix& k_fy) {
    const auto n = static_cast<std::size_t>(k_ff.rows());
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (Eigen::Index c = 0; c < k_ff.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(k_ff, c); it; ++it) {
            if (it.row() != c && it.value() != 0.0) {
                parent[find(static_cast<std::size_t>(it.row()))] = find(static_cast<std::size_t>(c));
            }
        }
    }
    std::vector<char> grounded(n, 0);
    for (Eigen::Index c = 0; c < k_fy.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(k_fy, c); it; ++it) {
            if (it.value() != 0.0) grounded[find(static_cast<std::size_t>(it.row()))] = 1;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!grounded[find(i)]) {
            throw SolverError("singular system: a set of free vertices is not connected to any "
                              "fixed vertex");
        }
    }
}

double relative_residual(const SparseMatrix& a, const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
    const double nb = b.norm();
    if (nb == 0.0) return x.norm() == 0.0 ? 0.0 : (a * x).norm();
    return (b - a * x).norm() / nb;
}

// Short FNV-1a tag so traces onto different subsets get different domains.
std::string subset_tag(const std::vector<VertexId>& ids) {
    std::uint64_t h = 14695981039346656037ULL;
    for (auto v : ids) {
        for (int b = 0; b < 4; ++b) {
            h ^= (v >> (8 * b)) & 0xFFu;
            h *= 1099511628211ULL;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

nlohmann::json to_json(const Potential& u) {
    nlohmann::json values = nlohmann::json::object();
    for (Eigen::Index i = 0; i < u.values.size(); ++i) values[std::to_string(i)] = u.values(i);
    return values;
}

// ---------------------------------------------------------------------------------------
// EnergyForm

EnergyForm::EnergyForm(const WeightedGraph& graph)
    : measure_(static_cast<Eigen::Index>(graph.size())), domain_(graph.content_hash()) {
    const auto n = static_cast<Eigen::Index>(graph.size());
    for (Eigen::Index v = 0; v < n; ++v) measure_(v) = graph.measure(static_cast<VertexId>(v));
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(graph.edges().size() * 4);
    for (const auto& e : graph.edges()) {
        triplets.emplace_back(e.u, e.u, e.conductance);
        triplets.emplace_back(e.v, e.v, e.conductance);
        triplets.emplace_back(e.u, e.v, -e.conductance);
        triplets.emplace_back(e.v, e.u, -e.conductance);
    }
    stiffness_.resize(n, n);
    stiffness_.setFromTriplets(triplets.begin(), triplets.end());
    stiffness_.makeCompressed();
}

EnergyForm::EnergyForm(Eigen::VectorXd measure, SparseMatrix stiffness, std::string domain,
                       std::vector<VertexId> support)
    : measure_(std::move(measure)),
      stiffness_(std::move(stiffness)),
      domain_(std::move(domain)),
      support_(std::move(support)) {
    const auto n = measure_.size();
    if (n == 0) throw ConstructionError("energy form needs at least one vertex");
    if (stiffness_.rows() != n || stiffness_.cols() != n) {
        throw ConstructionError("stiffness matrix size does not match the measure");
    }
    if (!support_.empty() && support_.size() != static_cast<std::size_t>(n)) {
        throw ConstructionError("support size does not match the measure");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(measure_(i) > 0.0) || !std::isfinite(measure_(i))) {
            throw ConstructionError("vertex measure must be finite and > 0");
        }
    }
    stiffness_.makeCompressed();
    double scale = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) scale = std::max(scale, std::abs(stiffness_.coeff(i, i)));
    const double tol = 1e-9 * std::max(scale, 1e-300);
    const SparseMatrix asym = SparseMatrix(stiffness_.transpose()) - stiffness_;
    for (Eigen::Index c = 0; c < asym.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(asym, c); it; ++it) {
            if (std::abs(it.value()) > tol) throw ConstructionError("stiffness matrix is not symmetric");
        }
    }
    Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(n);
    for (Eigen::Index c = 0; c < stiffness_.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(stiffness_, c); it; ++it) {
            if (!std::isfinite(it.value())) throw ConstructionError("stiffness entry is not finite");
            if (it.row() != c && it.value() > tol) {
                throw ConstructionError("stiffness matrix has a negative conductance");
            }
            row_sum(it.row()) += it.value();
        }
    }
    if (row_sum.cwiseAbs().maxCoeff() > tol * 10.0) {
        throw ConstructionError("stiffness rows must sum to zero");
    }
}

double EnergyForm::conductance(VertexId x, VertexId y) const {
    if (x >= size() || y >= size()) throw DomainError("unknown vertex");
    if (x == y) throw DomainError("conductance needs two distinct vertices");
    return -stiffness_.coeff(x, y);
}

bool EnergyForm::is_connected() const {
    const auto n = size();
    std::vector<char> seen(n, 0);
    std::vector<Eigen::Index> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        const auto c = stack.back();
        stack.pop_back();
        for (SparseMatrix::InnerIterator it(stiffness_, c); it; ++it) {
            const auto r = static_cast<std::size_t>(it.row());
            if (it.value() != 0.0 && !seen[r]) {
                seen[r] = 1;
                ++count;
                stack.push_back(it.row());
            }
        }
    }
    return count == n;
}

Potential EnergyForm::zeros() const {
    return {domain_, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size())), {}};
}

Potential EnergyForm::make(Eigen::VectorXd values) const {
    if (values.size() != static_cast<Eigen::Index>(size())) {
        throw DomainError("potential has the wrong number of entries");
    }
    if (!values.allFinite()) throw DomainError("potential entries must be finite");
    return {domain_, std::move(values), {}};
}

double energy(const EnergyForm& form, const Potential& u, const Potential& v) {
    check_domain(form, u);
    check_domain(form, v);
    return u.values.dot(form.stiffness() * v.values);
}

double energy(const EnergyForm& form, const Potential& u) { return energy(form, u, u); }

Potential laplacian_apply(const EnergyForm& form, const Potential& u) {
    check_domain(form, u);
    Eigen::VectorXd lu = (form.stiffness() * u.values).cwiseQuotient(form.measure());
    return {form.domain(), std::move(lu), {}};
}

// ---------------------------------------------------------------------------------------
// ReducedSystem

struct ReducedSystem::Impl {
    SparseMatrix k_ff;
    SparseMatrix k_fy;
    SolverOptions options;
    SolverMethod method = SolverMethod::Dense;
    std::optional<Eigen::LLT<Eigen::MatrixXd>> dense;
    std::optional<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                                           Eigen::DiagonalPreconditioner<double>>> cg;
    std::optional<Eigen::SimplicialLDLT<SparseMatrix>> ldlt;
    std::mutex fallback_mutex;

    void factor_dense() {
        dense.emplace(Eigen::MatrixXd(k_ff));
        if (dense->info() != Eigen::Success) throw SolverError("dense Cholesky failed: matrix not SPD");
    }
    void factor_ldlt() {
        ldlt.emplace();
        ldlt->compute(k_ff);
        if (ldlt->info() != Eigen::Success) throw SolverError("sparse Cholesky failed: matrix not SPD");
    }
};

ReducedSystem::ReducedSystem(const EnergyForm& form, std::vector<VertexId> free_vertices,
                             SolverOptions options)
    : free_(std::move(free_vertices)), impl_(std::make_unique<Impl>()) {
    if (free_.empty()) throw DomainError("reduced system needs at least one free vertex");
    fixed_ = complement(form.size(), free_);
    impl_->options = options;
    impl_->k_ff = extract(form.stiffness(), free_, free_);
    impl_->k_fy = extract(form.stiffness(), free_, fixed_);
    impl_->k_ff.makeCompressed();
    require_grounded(impl_->k_ff, impl_->k_fy);

    const std::size_t n = free_.size();
    SolverMethod method = options.method;
    if (method == SolverMethod::Auto) {
        method = n < options.dense_threshold ? SolverMethod::Dense : SolverMethod::ConjugateGradient;
    }
    impl_->method = method;
    switch (method) {
        case SolverMethod::Dense:
            impl_->factor_dense();
            break;
        case SolverMethod::SparseCholesky:
            impl_->factor_ldlt();
            break;
        case SolverMethod::ConjugateGradient:
        case SolverMethod::Auto:
            impl_->cg.emplace();
            impl_->cg->setTolerance(options.tolerance);
            impl_->cg->setMaxIterations(static_cast<Eigen::Index>(
                std::ceil(options.iteration_factor * std::sqrt(static_cast<double>(n)))));
            impl_->cg->compute(impl_->k_ff);
            break;
    }
}

ReducedSystem::~ReducedSystem() = default;
ReducedSystem::ReducedSystem(ReducedSystem&&) noexcept = default;
ReducedSystem& ReducedSystem::operator=(ReducedSystem&&) noexcept = default;

const SparseMatrix& ReducedSystem::free_block() const noexcept { return impl_->k_ff; }
const SparseMatrix& ReducedSystem::coupling() const noexcept { return impl_->k_fy; }

Eigen::VectorXd ReducedSystem::solve(const Eigen::VectorXd& rhs, SolverDiagnostics* diagnostics) const {
    if (rhs.size() != static_cast<Eigen::Index>(free_.size())) {
        throw DomainError("right-hand side has the wrong size");
    }
    SolverDiagnostics diag;
    diag.unknowns = free_.size();
    Eigen::VectorXd x;
    auto& impl = *impl_;
    if (impl.dense) {
        x = impl.dense->solve(rhs);
        diag.method = "dense-llt";
    } else if (impl.cg) {
        x = impl.cg->solve(rhs);
        diag.method = "cg";
        diag.iterations = static_cast<int>(impl.cg->iterations());
        diag.converged = impl.cg->info() == Eigen::Success;
        if (!diag.converged && impl.options.method == SolverMethod::Auto) {
            std::lock_guard lock(impl.fallback_mutex);
            if (!impl.ldlt) impl.factor_ldlt();
            x = impl.ldlt->solve(rhs);
            diag.method = "sparse-ldlt";
            diag.converged = true;
            diag.note = "cg hit the iteration cap after " + std::to_string(diag.iterations) +
                        " iterations; solved by sparse Cholesky";
        }
    } else {
        x = impl.ldlt->solve(rhs);
        diag.method = "sparse-ldlt";
    }
    diag.residual = relative_residual(impl.k_ff, x, rhs);
    if (diagnostics) *diagnostics = diag;
    return x;
}

Eigen::MatrixXd ReducedSystem::solve(const Eigen::MatrixXd& rhs) const {
    if (impl_->dense) return impl_->dense->solve(rhs);
    if (impl_->ldlt) return impl_->ldlt->solve(rhs);
    Eigen::MatrixXd out(rhs.rows(), rhs.cols());
    for (Eigen::Index j = 0; j < rhs.cols(); ++j) out.col(j) = solve(Eigen::VectorXd(rhs.col(j)));
    return out;
}

Potential ReducedSystem::extend(const EnergyForm& form, const Eigen::VectorXd& g) const {
    if (g.size() != static_cast<Eigen::Index>(fixed_.size())) {
        throw DomainError("boundary data has the wrong size");
    }
    Potential u = form.zeros();
    for (std::size_t i = 0; i < fixed_.size(); ++i) u.values(fixed_[i]) = g(static_cast<Eigen::Index>(i));
    const Eigen::VectorXd rhs = -(impl_->k_fy * g);
    const Eigen::VectorXd x = solve(rhs, &u.diagnostics);
    for (std::size_t i = 0; i < free_.size(); ++i) u.values(free_[i]) = x(static_cast<Eigen::Index>(i));
    return u;
}

SolverOptions direct_solver(std::size_t unknowns) {
    SolverOptions o;
    o.method = unknowns < o.dense_threshold ? SolverMethod::Dense : SolverMethod::SparseCholesky;
    return o;
}

std::vector<VertexId> complement(std::size_t n, std::span<const VertexId> set) {
    std::vector<char> in(n, 0);
    for (auto v : set) {
        if (v >= n) throw DomainError("unknown vertex " + std::to_string(v));
        if (in[v]) throw DomainError("vertex " + std::to_string(v) + " listed twice");
        in[v] = 1;
    }
    std::vector<VertexId> out;
    out.reserve(n - set.size());
    for (std::size_t v = 0; v < n; ++v) {
        if (!in[v]) out.push_back(static_cast<VertexId>(v));
    }
    return out;
}

Potential solve_harmonic(const EnergyForm& form, std::span<const VertexId> boundary,
                         const Eigen::VectorXd& g, const SolverOptions& options) {
    if (boundary.empty()) throw DomainError("harmonic extension needs a nonempty boundary");
    if (g.size() != static_cast<Eigen::Index>(boundary.size())) {
        throw DomainError("boundary data has the wrong size");
    }
    auto interior = complement(form.size(), boundary);
    Potential u = form.zeros();
    for (std::size_t i = 0; i < boundary.size(); ++i) u.values(boundary[i]) = g(static_cast<Eigen::Index>(i));
    if (interior.empty()) {
        u.diagnostics.method = "none";
        return u;
    }
    const ReducedSystem system(form, std::move(interior), options);
    // fixed_vertices() is sorted; reorder g accordingly.
    const auto& fixed = system.fixed_vertices();
    Eigen::VectorXd g_sorted(static_cast<Eigen::Index>(fixed.size()));
    for (std::size_t i = 0; i < fixed.size(); ++i) g_sorted(static_cast<Eigen::Index>(i)) = u.values(fixed[i]);
    return system.extend(form, g_sorted);
}

Potential solve_poisson(const EnergyForm& form, std::span<const VertexId> domain,
                        const Eigen::VectorXd& f, const SolverOptions& options) {
    if (domain.empty()) throw DomainError("Poisson domain must be nonempty");
    if (domain.size() >= form.size()) {
        throw SolverError("singular system: the Poisson domain must leave at least one vertex outside");
    }
    if (f.size() != static_cast<Eigen::Index>(domain.size())) {
        throw DomainError("right-hand side has the wrong size");
    }
    std::vector<VertexId> free(domain.begin(), domain.end());
    const ReducedSystem system(form, free, options);
    Eigen::VectorXd rhs(f.size());
    for (std::size_t i = 0; i < free.size(); ++i) {
        rhs(static_cast<Eigen::Index>(i)) = form.measure()(free[i]) * f(static_cast<Eigen::Index>(i));
    }
    Potential u = form.zeros();
    const Eigen::VectorXd x = system.solve(rhs, &u.diagnostics);
    for (std::size_t i = 0; i < free.size(); ++i) u.values(free[i]) = x(static_cast<Eigen::Index>(i));
    return u;
}

EnergyForm trace_form(const EnergyForm& form, std::span<const VertexId> subset) {
    if (subset.empty() || subset.size() >= form.size()) {
        throw DomainError("trace needs a nonempty proper subset");
    }
    if (subset.size() > kDenseTraceLimit) {
        throw SolverError("trace onto " + std::to_string(subset.size()) +
                          " vertices exceeds the dense limit; use trace_energy");
    }
    const std::vector<VertexId> y(subset.begin(), subset.end());
    auto interior = complement(form.size(), y);
    const ReducedSystem system(form, interior, direct_solver(interior.size()));

    const auto ny = static_cast<Eigen::Index>(y.size());
    Eigen::MatrixXd schur = Eigen::MatrixXd(extract(form.stiffness(), y, y));
    const SparseMatrix k_iy = extract(form.stiffness(), interior, y);
    const SparseMatrix k_yi = SparseMatrix(k_iy.transpose());
    for (Eigen::Index start = 0; start < ny; start += static_cast<Eigen::Index>(kTraceColumnBlock)) {
        const auto width = std::min<Eigen::Index>(static_cast<Eigen::Index>(kTraceColumnBlock), ny - start);
        const Eigen::MatrixXd block = Eigen::MatrixXd(k_iy.middleCols(start, width));
        const Eigen::MatrixXd x = system.solve(block);
        schur.middleCols(start, width) -= k_yi * x;
    }

    // Clean up round-off: symmetric, nonpositive off-diagonal, exact zero row sums.
    schur = 0.5 * (schur + schur.transpose()).eval();
    const double scale = schur.diagonal().cwiseAbs().maxCoeff();
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(ny);
    for (Eigen::Index j = 0; j < ny; ++j) {
        for (Eigen::Index i = 0; i < ny; ++i) {
            if (i == j) continue;
            const double c = -schur(i, j);
            if (c <= 1e-14 * scale) continue;
            triplets.emplace_back(i, j, -c);
            diag(i) += c;
        }
    }
    for (Eigen::Index i = 0; i < ny; ++i) triplets.emplace_back(i, i, diag(i));
    SparseMatrix k(ny, ny);
    k.setFromTriplets(triplets.begin(), triplets.end());

    Eigen::VectorXd m(ny);
    for (Eigen::Index i = 0; i < ny; ++i) m(i) = form.measure()(y[static_cast<std::size_t>(i)]);
    return EnergyForm(std::move(m), std::move(k), form.domain() + "|trace:" + subset_tag(y), y);
}

double trace_energy(const EnergyForm& form, std::span<const VertexId> subset,
                    const Eigen::VectorXd& g, const SolverOptions& options) {
    const Potential h = solve_harmonic(form, subset, g, options);
    return energy(form, h);
}

}  // namespace fraclab
