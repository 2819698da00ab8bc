#include "fraclab/heat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <list>
#include <memory>
#include <ostream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#ifdef FRACLAB_HAVE_LAPACKE
#include <lapacke.h>
#endif
#ifdef __SSE2__
#include <xmmintrin.h>
#endif

#include "fraclab/error.hpp"
#include "fraclab/report.hpp"
#include "fraclab/scaling.hpp"

namespace fraclab {

namespace {

constexpr char kCacheMagic[8] = {'F', 'L', 'H', 'K', 'T', 'B', 'L', '1'};
constexpr std::size_t kFactorCacheSize = 6;

void require_positive_time(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("t must be finite and > 0");
}

void check_vertex(const Spectrum& s, VertexId v) {
    if (v >= s.size()) throw DomainError("unknown vertex " + std::to_string(v));
}

// Flushes denormals to zero for the lifetime of the guard (restores the previous mode).
// Far-field values of diffusing point masses otherwise drift into the denormal range.
class FlushDenormals {
public:
#ifdef __SSE2__
    FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
    ~FlushDenormals() { _mm_setcsr(saved_); }

private:
    unsigned saved_;
#endif
};

// exp(-lambda t), with factors far below round-off set to exact zero: denormal
// operands slow dense products down by orders of magnitude.
Eigen::ArrayXd decay_factors(const Spectrum& s, double t) {
    constexpr double kNegligible = 1e-250;
    Eigen::ArrayXd e = (-t * s.eigenvalues.array()).exp();
    return (e < kNegligible).select(0.0, e);
}

// Number of leading modes with a nonzero decay factor (eigenvalues are ascending).
Eigen::Index active_modes(const Eigen::ArrayXd& decay) {
    Eigen::Index k = decay.size();
    while (k > 0 && decay(k - 1) == 0.0) --k;
    return k;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, std::span<const VertexId> rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= static_cast<std::size_t>(m.rows())) throw DomainError("unknown vertex");
        out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    }
    return out;
}

// Symmetric eigensolve in place: `a` is overwritten by eigenvectors, eigenvalues ascending.
void symmetric_eigensolve(Eigen::MatrixXd& a, Eigen::VectorXd& w) {
    const auto n = a.rows();
    w.resize(n);
#ifdef FRACLAB_HAVE_LAPACKE
    const int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(n), a.data(),
                                    static_cast<lapack_int>(n), w.data());
    if (info != 0) throw SolverError("dsyevd failed with info " + std::to_string(info));
#else
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success) throw SolverError("symmetric eigensolver did not converge");
    w = es.eigenvalues();
    a = es.eigenvectors();
#endif
}

std::uint64_t fnv(std::uint64_t h, const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

// (M + h/2 K) factorizations for Crank-Nicolson, most recently used first.
class StepFactors {
public:
    StepFactors(const EnergyForm& form, SemigroupStats& stats)
        : k_(form.stiffness()), m_(form.measure()), stats_(stats) {}

    Eigen::MatrixXd step(const Eigen::MatrixXd& u, double h) {
        const auto& solver = factor(h);
        const Eigen::MatrixXd rhs = m_.asDiagonal() * u - 0.5 * h * (k_ * u);
        return solver.solve(rhs);
    }

private:
    using Solver = Eigen::SimplicialLDLT<SparseMatrix>;

    SparseMatrix system(double h) const {
        SparseMatrix a = 0.5 * h * k_;
        for (Eigen::Index i = 0; i < m_.size(); ++i) a.coeffRef(i, i) += m_(i);
        return a;
    }

    const Solver& factor(double h) {
        for (auto it = cache_.begin(); it != cache_.end(); ++it) {
            if (it->first == h) {
                cache_.splice(cache_.begin(), cache_, it);
                return *cache_.front().second;
            }
        }
        auto s = std::make_unique<Solver>(system(h));
        if (s->info() != Eigen::Success) throw SolverError("Crank-Nicolson factorization failed");
        ++stats_.factorizations;
        cache_.emplace_front(h, std::move(s));
        if (cache_.size() > kFactorCacheSize) cache_.pop_back();
        return *cache_.front().second;
    }

    const SparseMatrix& k_;
    const Eigen::VectorXd& m_;
    SemigroupStats& stats_;
    std::list<std::pair<double, std::unique_ptr<Solver>>> cache_;
};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& in, T& v) {
    return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint64_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

bool read_string(std::istream& in, std::string& s) {
    std::uint64_t n = 0;
    if (!read_pod(in, n) || n > (1u << 20)) return false;
    s.resize(n);
    return static_cast<bool>(in.read(s.data(), static_cast<std::streamsize>(n)));
}

}  // namespace

Spectrum spectrum(const EnergyForm& form, std::size_t cap) {
    const std::size_t n = form.size();
    if (n > cap) {
        throw SolverError("dense spectrum refused: " + std::to_string(n) + " vertices exceed the cap of " +
                          std::to_string(cap) + "; use Crank-Nicolson time stepping instead");
    }
    const Eigen::VectorXd inv_sqrt_m = form.measure().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd a = inv_sqrt_m.asDiagonal() * Eigen::MatrixXd(form.stiffness()) * inv_sqrt_m.asDiagonal();
    Spectrum s;
    s.domain = form.domain();
    s.measure = form.measure();
    symmetric_eigensolve(a, s.eigenvalues);
    s.eigenvalues = s.eigenvalues.cwiseMax(0.0);
    s.eigenvalues(0) = 0.0;
    s.eigenvectors = inv_sqrt_m.asDiagonal() * a;
    if (s.eigenvectors.col(0).sum() < 0.0) s.eigenvectors.col(0) *= -1.0;
    return s;
}

double orthonormality_residual(const Spectrum& s) {
    const Eigen::MatrixXd g = s.eigenvectors.transpose() * s.measure.asDiagonal() * s.eigenvectors;
    return (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

double heat_kernel(const Spectrum& s, double t, VertexId x, VertexId y) {
    require_positive_time(t);
    check_vertex(s, x);
    check_vertex(s, y);
    const Eigen::ArrayXd decay = decay_factors(s, t);
    return (decay * s.eigenvectors.row(x).transpose().array() * s.eigenvectors.row(y).transpose().array()).sum();
}

double dt_heat_kernel(const Spectrum& s, double t, VertexId x, VertexId y) {
    require_positive_time(t);
    check_vertex(s, x);
    check_vertex(s, y);
    const Eigen::ArrayXd rate = -s.eigenvalues.array() * decay_factors(s, t);
    return (rate * s.eigenvectors.row(x).transpose().array() * s.eigenvectors.row(y).transpose().array()).sum();
}

Eigen::MatrixXd heat_kernel_block(const Spectrum& s, double t, std::span<const VertexId> rows,
                                  std::span<const VertexId> cols) {
    require_positive_time(t);
    const Eigen::VectorXd decay = decay_factors(s, t).matrix();
    return rows_of(s.eigenvectors, rows) * decay.asDiagonal() * rows_of(s.eigenvectors, cols).transpose();
}

Eigen::MatrixXd dt_heat_kernel_block(const Spectrum& s, double t, std::span<const VertexId> rows,
                                     std::span<const VertexId> cols) {
    require_positive_time(t);
    const Eigen::VectorXd rate = (-s.eigenvalues.array() * decay_factors(s, t)).matrix();
    return rows_of(s.eigenvectors, rows) * rate.asDiagonal() * rows_of(s.eigenvectors, cols).transpose();
}

Eigen::MatrixXd heat_kernel_diagonal(const Spectrum& s, std::span<const double> times,
                                     std::span<const VertexId> vertices) {
    Eigen::MatrixXd decay(s.eigenvalues.size(), static_cast<Eigen::Index>(times.size()));
    for (std::size_t k = 0; k < times.size(); ++k) {
        require_positive_time(times[k]);
        decay.col(static_cast<Eigen::Index>(k)) = decay_factors(s, times[k]).matrix();
    }
    return rows_of(s.eigenvectors, vertices).array().square().matrix() * decay;
}

Potential semigroup_apply(const Spectrum& s, double t, const Potential& f) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("t must be finite and >= 0");
    if (f.domain != s.domain || f.size() != s.size()) {
        throw DomainError("potential belongs to a different graph than the spectrum");
    }
    if (t == 0.0) return f;
    const Eigen::VectorXd coeff = s.eigenvectors.transpose() * s.measure.cwiseProduct(f.values);
    const Eigen::VectorXd decay = decay_factors(s, t).matrix();
    return {f.domain, s.eigenvectors * decay.cwiseProduct(coeff), {}};
}

Potential semigroup_apply(const EnergyForm& form, double t, const Potential& f, SemigroupMethod method,
                          const CrankNicolsonOptions& options) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("t must be finite and >= 0");
    if (f.domain != form.domain() || f.size() != form.size()) {
        throw DomainError("potential belongs to a different graph than the energy form");
    }
    if (t == 0.0) return f;
    if (method == SemigroupMethod::Spectral) return semigroup_apply(spectrum(form), t, f);
    const double times[] = {t};
    SemigroupStats stats;
    const auto path = crank_nicolson_path(form, f.values, times, options, &stats);
    Potential out{f.domain, path.front().col(0), {}};
    out.diagnostics.method = "crank-nicolson";
    out.diagnostics.iterations = static_cast<int>(stats.steps);
    out.diagnostics.unknowns = form.size();
    return out;
}

std::vector<Eigen::MatrixXd> crank_nicolson_path(const EnergyForm& form, const Eigen::MatrixXd& f,
                                                 std::span<const double> times,
                                                 const CrankNicolsonOptions& options, SemigroupStats* stats) {
    if (f.rows() != static_cast<Eigen::Index>(form.size())) throw DomainError("initial data has the wrong size");
    if (!std::is_sorted(times.begin(), times.end())) throw DomainError("times must be ascending");
    if (!times.empty() && times.front() < 0.0) throw DomainError("times must be >= 0");
    const FlushDenormals ftz;
    if (!(options.initial_step > 0.0) || !(options.local_error > 0.0)) {
        throw DomainError("Crank-Nicolson needs a positive step and error target");
    }
    SemigroupStats local;
    SemigroupStats& st = stats ? *stats : local;
    StepFactors factors(form, st);

    const double scale = std::max(f.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const double tol = options.local_error;
    // Steps are initial_step * 2^k so factorizations are reused; only landing steps differ.
    int k = 0;
    auto step_of = [&](int level) { return std::ldexp(options.initial_step, level); };

    std::vector<Eigen::MatrixXd> out;
    out.reserve(times.size());
    Eigen::MatrixXd u = f;
    double t = 0.0;
    for (const double target : times) {
        while (t < target) {
            if (st.steps + st.rejected >= options.max_steps) {
                throw SolverError("Crank-Nicolson exceeded the step limit");
            }
            const double full = step_of(k);
            const bool landing = target - t <= full;
            const double h = landing ? target - t : full;
            const Eigen::MatrixXd coarse = factors.step(u, h);
            const Eigen::MatrixXd fine = factors.step(factors.step(u, 0.5 * h), 0.5 * h);
            const double err = (coarse - fine).cwiseAbs().maxCoeff() / scale;
            if (err > tol) {
                ++st.rejected;
                --k;
                continue;
            }
            u = fine;
            ++st.steps;
            t = landing ? target : t + h;
            // Local error scales like h^3: doubling costs a factor 8.
            if (!landing && err * 8.0 < tol) ++k;
        }
        out.push_back(u);
    }
    return out;
}

std::size_t HeatKernelTable::source_index(VertexId x) const {
    const auto it = std::find(sources.begin(), sources.end(), x);
    return it == sources.end() ? SIZE_MAX : static_cast<std::size_t>(it - sources.begin());
}

std::size_t HeatKernelTable::target_index(VertexId y) const {
    const auto it = std::lower_bound(targets.begin(), targets.end(), y);
    if (it != targets.end() && *it == y) return static_cast<std::size_t>(it - targets.begin());
    const auto lin = std::find(targets.begin(), targets.end(), y);
    return lin == targets.end() ? SIZE_MAX : static_cast<std::size_t>(lin - targets.begin());
}

HeatKernelTable heat_kernel_table(const Spectrum& s, std::span<const double> times,
                                  std::span<const VertexId> sources, std::span<const VertexId> targets) {
    HeatKernelTable table;
    table.graph_hash = s.domain;
    table.method = "spectral";
    table.times.assign(times.begin(), times.end());
    table.sources.assign(sources.begin(), sources.end());
    table.targets.assign(targets.begin(), targets.end());
    const Eigen::MatrixXd phi_s = rows_of(s.eigenvectors, sources);
    const Eigen::MatrixXd phi_t = rows_of(s.eigenvectors, targets).transpose();
    for (const double t : times) {
        require_positive_time(t);
        const Eigen::ArrayXd decay = decay_factors(s, t);
        const Eigen::Index k = active_modes(decay);
        const Eigen::MatrixXd left = phi_s.leftCols(k) * decay.head(k).matrix().asDiagonal();
        const auto right = phi_t.topRows(k);
        table.values.push_back(left * right);
        table.rates.push_back((left * (-s.eigenvalues.head(k)).asDiagonal()) * right);
    }
    return table;
}

HeatKernelTable heat_kernel_table(const EnergyForm& form, std::span<const double> times,
                                  std::span<const VertexId> sources, std::span<const VertexId> targets,
                                  const CrankNicolsonOptions& options) {
    HeatKernelTable table;
    table.graph_hash = form.domain();
    table.method = "crank-nicolson";
    table.times.assign(times.begin(), times.end());
    table.sources.assign(sources.begin(), sources.end());
    table.targets.assign(targets.begin(), targets.end());
    const auto n = static_cast<Eigen::Index>(form.size());
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(sources.size()));
    for (std::size_t j = 0; j < sources.size(); ++j) {
        if (sources[j] >= form.size()) throw DomainError("unknown vertex");
        f(sources[j], static_cast<Eigen::Index>(j)) = 1.0 / form.measure()(sources[j]);
    }
    for (const double t : times) require_positive_time(t);
    const auto path = crank_nicolson_path(form, f, times, options);
    const Eigen::VectorXd inv_m = form.measure().cwiseInverse();
    for (const auto& u : path) {
        // Column j of u is p_t(., x_j); d/dt p_t = -L p_t.
        const Eigen::MatrixXd rate = -(inv_m.asDiagonal() * (form.stiffness() * u));
        Eigen::MatrixXd v(static_cast<Eigen::Index>(sources.size()), static_cast<Eigen::Index>(targets.size()));
        Eigen::MatrixXd r(v.rows(), v.cols());
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (targets[i] >= form.size()) throw DomainError("unknown vertex");
            v.col(static_cast<Eigen::Index>(i)) = u.row(targets[i]).transpose();
            r.col(static_cast<Eigen::Index>(i)) = rate.row(targets[i]).transpose();
        }
        table.values.push_back(std::move(v));
        table.rates.push_back(std::move(r));
    }
    return table;
}

HeatKernelTable heat_kernel_table(const EnergyForm& form, std::span<const double> times,
                                  std::span<const VertexId> sources, std::span<const VertexId> targets,
                                  std::size_t dense_cap) {
    if (form.size() <= dense_cap) return heat_kernel_table(spectrum(form, dense_cap), times, sources, targets);
    return heat_kernel_table(form, times, sources, targets, CrankNicolsonOptions{});
}

std::string heat_table_key(const std::string& graph_hash, const ScalingExponents& exps,
                           std::span<const double> times, std::span<const VertexId> sources,
                           std::span<const VertexId> targets) {
    std::uint64_t h = 14695981039346656037ULL;
    h = fnv(h, graph_hash.data(), graph_hash.size());
    const double e[] = {exps.alpha1(), exps.alpha2(), exps.beta1(), exps.beta2()};
    h = fnv(h, e, sizeof e);
    h = fnv(h, times.data(), times.size_bytes());
    h = fnv(h, sources.data(), sources.size_bytes());
    h = fnv(h, targets.data(), targets.size_bytes());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_csv(const HeatKernelTable& table, std::ostream& out) {
    out << "t,x,y,p,dp_dt\n";
    for (std::size_t k = 0; k < table.times.size(); ++k) {
        for (std::size_t i = 0; i < table.sources.size(); ++i) {
            for (std::size_t j = 0; j < table.targets.size(); ++j) {
                const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
                out << format_double(table.times[k]) << ',' << table.sources[i] << ',' << table.targets[j]
                    << ',' << format_double(table.values[k](ii, jj)) << ','
                    << format_double(table.rates[k](ii, jj)) << '\n';
            }
        }
    }
}

void save_table(const HeatKernelTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write heat cache " + path);
    out.write(kCacheMagic, sizeof kCacheMagic);
    write_string(out, table.key);
    write_string(out, table.graph_hash);
    write_string(out, table.method);
    write_pod(out, static_cast<std::uint64_t>(table.times.size()));
    write_pod(out, static_cast<std::uint64_t>(table.sources.size()));
    write_pod(out, static_cast<std::uint64_t>(table.targets.size()));
    out.write(reinterpret_cast<const char*>(table.times.data()),
              static_cast<std::streamsize>(table.times.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(table.sources.data()),
              static_cast<std::streamsize>(table.sources.size() * sizeof(VertexId)));
    out.write(reinterpret_cast<const char*>(table.targets.data()),
              static_cast<std::streamsize>(table.targets.size() * sizeof(VertexId)));
    for (const auto* block : {&table.values, &table.rates}) {
        for (const auto& m : *block) {
            out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        }
    }
    if (!out) throw ConfigError("failed writing heat cache " + path);
}

bool load_table(const std::string& path, const std::string& expected_key, HeatKernelTable& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char magic[sizeof kCacheMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) return false;
    HeatKernelTable t;
    if (!read_string(in, t.key) || t.key != expected_key) return false;
    if (!read_string(in, t.graph_hash) || !read_string(in, t.method)) return false;
    std::uint64_t nt = 0, ns = 0, ng = 0;
    if (!read_pod(in, nt) || !read_pod(in, ns) || !read_pod(in, ng)) return false;
    if (nt > (1u << 24) || ns > (1u << 24) || ng > (1u << 24)) return false;
    t.times.resize(nt);
    t.sources.resize(ns);
    t.targets.resize(ng);
    in.read(reinterpret_cast<char*>(t.times.data()), static_cast<std::streamsize>(nt * sizeof(double)));
    in.read(reinterpret_cast<char*>(t.sources.data()), static_cast<std::streamsize>(ns * sizeof(VertexId)));
    in.read(reinterpret_cast<char*>(t.targets.data()), static_cast<std::streamsize>(ng * sizeof(VertexId)));
    for (auto* block : {&t.values, &t.rates}) {
        for (std::uint64_t k = 0; k < nt; ++k) {
            Eigen::MatrixXd m(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(ng));
            in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
            block->push_back(std::move(m));
        }
    }
    if (!in) return false;
    out = std::move(t);
    return true;
}

}  // namespace fraclab
