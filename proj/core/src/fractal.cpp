#include "fraclab/fractal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "fraclab/error.hpp"

namespace fraclab {

namespace {

std::vector<FractalFamily> make_families() {
    std::vector<FractalFamily> out;
    out.push_back({FamilyKind::Interval, "interval", 2, 2, Lattice::Square,
                   {{0, 0}, {2, 0}},
                   {{0, 0}, {2, 0}},
                   {{0, 1}}});
    out.push_back({FamilyKind::Gasket, "gasket", 3, 2, Lattice::Triangular,
                   {{0, 0}, {2, 0}, {0, 2}},
                   {{0, 0}, {2, 0}, {0, 2}},
                   {{0, 1}, {1, 2}, {0, 2}}});
    // p1..p8: corners and side midpoints, counter-clockwise from the origin.
    out.push_back({FamilyKind::Carpet, "carpet", 8, 3, Lattice::Square,
                   {{0, 0}, {1, 0}, {2, 0}, {2, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}},
                   {{0, 0}, {1, 0}, {2, 0}, {2, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}},
                   {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 0}}});
    // Corners and centre; each cell is the cross joining the centre to its corners.
    out.push_back({FamilyKind::Vicsek, "vicsek", 5, 3, Lattice::Square,
                   {{0, 0}, {2, 0}, {2, 2}, {0, 2}, {1, 1}},
                   {{0, 0}, {2, 0}, {2, 2}, {0, 2}, {1, 1}},
                   {{4, 0}, {4, 1}, {4, 2}, {4, 3}}});
    return out;
}

std::int64_t ipow(std::int64_t base, int exp) {
    std::int64_t r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

double lattice_length(Lattice lattice, std::int64_t dx, std::int64_t dy) {
    const auto x = static_cast<double>(dx);
    const auto y = static_cast<double>(dy);
    if (lattice == Lattice::Square) return std::hypot(x, y);
    return std::sqrt(x * x + x * y + y * y);
}

void check_level(int level) {
    if (level < 0) throw ConstructionError("level must be >= 0");
}

void check_budget(double estimate, std::size_t budget, int level) {
    if (estimate > static_cast<double>(budget)) {
        throw ConstructionError("level " + std::to_string(level) + " needs ~" +
                                std::to_string(static_cast<long long>(std::min(estimate, 9e18))) +
                                " vertices, above the vertex budget of " + std::to_string(budget));
    }
}

struct Assembly {
    std::int64_t denominator;
    double half_unit_length;
    double atom_measure;
    double conductance;
};

// Places one copy of the family's cell template at every atom origin (half-cell units),
// merges coincident vertices and edges, and returns the graph in canonical order.
WeightedGraph assemble(const FractalFamily& f, const std::vector<LatticePoint>& atoms,
                       const Assembly& a, GraphMeta meta) {
    std::unordered_map<LatticePoint, VertexId, LatticePointHash> index;
    index.reserve(atoms.size() * f.cell_points.size());
    std::vector<Vertex> vertices;
    std::vector<std::uint32_t> local(f.cell_points.size());
    std::set<std::pair<VertexId, VertexId>> edge_keys;
    const double share = a.atom_measure / static_cast<double>(f.cell_points.size());

    for (const auto& origin : atoms) {
        for (std::size_t i = 0; i < f.cell_points.size(); ++i) {
            const LatticePoint p = origin + f.cell_points[i];
            auto [it, inserted] = index.emplace(p, static_cast<VertexId>(vertices.size()));
            if (inserted) vertices.push_back({p, 0.0});
            vertices[it->second].measure += share;
            local[i] = it->second;
        }
        for (const auto& [i, j] : f.cell_edges) {
            const VertexId u = local[static_cast<std::size_t>(i)];
            const VertexId v = local[static_cast<std::size_t>(j)];
            edge_keys.emplace(std::min(u, v), std::max(u, v));
        }
    }

    // Canonical order: vertices by (y, x), edges by endpoint ids.
    std::vector<VertexId> order(vertices.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](VertexId l, VertexId r) {
        const auto& p = vertices[l].coord;
        const auto& q = vertices[r].coord;
        return std::tie(p.y, p.x) < std::tie(q.y, q.x);
    });
    std::vector<VertexId> rank(vertices.size());
    std::vector<Vertex> sorted(vertices.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        rank[order[k]] = static_cast<VertexId>(k);
        sorted[k] = vertices[order[k]];
    }
    std::vector<Edge> edges;
    edges.reserve(edge_keys.size());
    for (const auto& [u, v] : edge_keys) {
        const VertexId ru = std::min(rank[u], rank[v]);
        const VertexId rv = std::max(rank[u], rank[v]);
        const auto& p = sorted[ru].coord;
        const auto& q = sorted[rv].coord;
        const double len = lattice_length(f.lattice, q.x - p.x, q.y - p.y) * a.half_unit_length;
        edges.push_back({ru, rv, a.conductance, len});
    }
    std::sort(edges.begin(), edges.end(),
              [](const Edge& l, const Edge& r) { return std::tie(l.u, l.v) < std::tie(r.u, r.v); });
    return WeightedGraph(std::move(sorted), std::move(edges), a.denominator, f.lattice,
                         std::move(meta));
}

std::vector<LatticePoint> half_unit_atoms(FamilyKind kind, int level) {
    auto atoms = cell_origins(kind, level);
    for (auto& p : atoms) p = 2 * p;
    return atoms;
}

}  // namespace

const FractalFamily& family(FamilyKind kind) {
    static const std::vector<FractalFamily> families = make_families();
    return families.at(static_cast<std::size_t>(kind));
}

FamilyKind parse_family(std::string_view name) {
    for (auto k : {FamilyKind::Interval, FamilyKind::Gasket, FamilyKind::Carpet, FamilyKind::Vicsek}) {
        if (family(k).name == name) return k;
    }
    throw ConstructionError("unknown fractal family '" + std::string(name) + "'");
}

std::string family_name(FamilyKind kind) { return family(kind).name; }

std::vector<LatticePoint> cell_origins(FamilyKind kind, int level) {
    check_level(level);
    const auto& f = family(kind);
    std::vector<LatticePoint> cells{{0, 0}};
    std::int64_t span = 1;  // L^n
    for (int n = 0; n < level; ++n) {
        std::vector<LatticePoint> next;
        next.reserve(cells.size() * f.fixed_points.size());
        for (const auto& p : f.fixed_points) {
            // (L-1) L^n p_i with p_i given in half units.
            const LatticePoint shift{(f.scale - 1) * span * p.x / 2, (f.scale - 1) * span * p.y / 2};
            for (const auto& c : cells) next.push_back(c + shift);
        }
        cells = std::move(next);
        span *= f.scale;
    }
    return cells;
}

WeightedGraph build_compact(FamilyKind kind, int level, const BuildOptions& options) {
    check_level(level);
    const auto& f = family(kind);
    check_budget(std::pow(f.contractions, level) * static_cast<double>(f.cell_points.size()),
                 options.vertex_budget, level);
    const std::int64_t span = ipow(f.scale, level);
    const Assembly a{2 * span, 0.5 / static_cast<double>(span),
                     std::pow(static_cast<double>(f.contractions), -level),
                     std::pow(options.conductance_per_level, level)};
    return assemble(f, half_unit_atoms(kind, level), a, {f.name, level, "compact", 1});
}

WeightedGraph build_prefractal(FamilyKind kind, int level, const BuildOptions& options) {
    check_level(level);
    const auto& f = family(kind);
    check_budget(std::pow(f.contractions, level) * static_cast<double>(f.cell_points.size()),
                 options.vertex_budget, level);
    const Assembly a{2, 0.5, 1.0, std::pow(options.conductance_per_level, level)};
    return assemble(f, half_unit_atoms(kind, level), a, {f.name, level, "prefractal", 1});
}

WeightedGraph build_cable(const WeightedGraph& graph, int subdivisions) {
    if (subdivisions < 1) throw ConstructionError("cable subdivisions must be >= 1");
    if (subdivisions == 1) return graph;
    const std::int64_t k = subdivisions;

    std::vector<double> incident_length(graph.size(), 0.0);
    for (const auto& e : graph.edges()) {
        incident_length[e.u] += e.length;
        incident_length[e.v] += e.length;
    }

    std::unordered_map<LatticePoint, VertexId, LatticePointHash> index;
    std::vector<Vertex> vertices;
    vertices.reserve(graph.size() + graph.edges().size() * static_cast<std::size_t>(k - 1));
    for (const auto& v : graph.vertices()) {
        const LatticePoint p = k * v.coord;
        index.emplace(p, static_cast<VertexId>(vertices.size()));
        vertices.push_back({p, v.measure});
    }
    std::vector<Edge> edges;
    edges.reserve(graph.edges().size() * static_cast<std::size_t>(k));
    for (const auto& e : graph.edges()) {
        const LatticePoint a = graph.vertex(e.u).coord;
        const LatticePoint b = graph.vertex(e.v).coord;
        const double density = 0.5 * (graph.measure(e.u) / incident_length[e.u] +
                                      graph.measure(e.v) / incident_length[e.v]);
        const double sub_length = e.length / static_cast<double>(k);
        VertexId prev = e.u;
        for (std::int64_t j = 1; j <= k; ++j) {
            VertexId next = e.v;
            if (j < k) {
                const LatticePoint p{k * a.x + j * (b.x - a.x), k * a.y + j * (b.y - a.y)};
                next = static_cast<VertexId>(vertices.size());
                if (!index.emplace(p, next).second) {
                    throw ConstructionError("cable subdivision point collides with an existing vertex");
                }
                vertices.push_back({p, 2.0 * sub_length * density});
            }
            edges.push_back({std::min(prev, next), std::max(prev, next),
                             e.conductance * static_cast<double>(k), sub_length});
            prev = next;
        }
    }
    GraphMeta meta = graph.meta();
    meta.cable_k *= subdivisions;
    return WeightedGraph(std::move(vertices), std::move(edges), graph.denominator() * k,
                         graph.lattice(), std::move(meta));
}

WeightedGraph build_blowup(const BlowupSpec& spec, const BuildOptions& options) {
    check_level(spec.level);
    check_level(spec.cell_level);
    const auto& cell = family(spec.cell);
    const auto& model = family(spec.model);
    if (cell.lattice != model.lattice) {
        throw ConstructionError("blowup of " + cell.name + " by " + model.name +
                                " mixes square and triangular lattices");
    }
    check_budget(std::pow(model.contractions, spec.level) *
                     std::pow(cell.contractions, spec.cell_level) *
                     static_cast<double>(cell.cell_points.size()),
                 options.vertex_budget, spec.level);

    const std::int64_t cell_span = ipow(cell.scale, spec.cell_level);
    const auto cell_atoms = half_unit_atoms(spec.cell, spec.cell_level);

    // Gluing: model cells whose closed unit squares meet must share a vertex of K.
    std::set<LatticePoint> cell_vertices;
    for (const auto& a : cell_atoms) {
        for (const auto& p : cell.cell_points) cell_vertices.insert(a + p);
    }
    const auto first = cell_origins(spec.model, 1);
    for (std::size_t i = 0; i < first.size(); ++i) {
        for (std::size_t j = i + 1; j < first.size(); ++j) {
            const auto dx = first[j].x - first[i].x;
            const auto dy = first[j].y - first[i].y;
            if (std::abs(dx) > 1 || std::abs(dy) > 1) continue;
            const LatticePoint shift{2 * cell_span * dx, 2 * cell_span * dy};
            const bool shared = std::any_of(cell_vertices.begin(), cell_vertices.end(),
                                            [&](const LatticePoint& p) {
                                                return cell_vertices.count(p + LatticePoint{-shift.x, -shift.y}) > 0;
                                            });
            if (!shared) {
                throw ConstructionError("blowup of " + cell.name + " by " + model.name +
                                        ": model cells " + std::to_string(i + 1) + " and " +
                                        std::to_string(j + 1) + " touch but their " + cell.name +
                                        " copies share no vertex");
            }
        }
    }

    std::vector<LatticePoint> atoms;
    const auto model_cells = cell_origins(spec.model, spec.level);
    atoms.reserve(model_cells.size() * cell_atoms.size());
    for (const auto& m : model_cells) {
        const LatticePoint base = (2 * cell_span) * m;
        for (const auto& a : cell_atoms) atoms.push_back(base + a);
    }
    const Assembly a{2 * cell_span, 0.5 / static_cast<double>(cell_span),
                     std::pow(static_cast<double>(cell.contractions), -spec.cell_level),
                     std::pow(options.conductance_per_level, spec.cell_level)};
    return assemble(cell, atoms, a,
                    {"blowup(" + cell.name + "," + model.name + ")", spec.level, "blowup", 1});
}

TerminalSets compact_terminals(const WeightedGraph& compact, FamilyKind kind) {
    const std::int64_t den = compact.denominator();
    TerminalSets t;
    auto add = [&](std::vector<VertexId>& out, LatticePoint p) {
        const auto v = compact.find(p);
        if (!v) throw ConstructionError("terminal vertex missing from compact graph");
        out.push_back(*v);
    };
    switch (kind) {
        case FamilyKind::Interval:
        case FamilyKind::Gasket:
            add(t.source, {0, 0});
            add(t.sink, {den, 0});
            break;
        case FamilyKind::Vicsek:
            add(t.source, {0, 0});
            add(t.sink, {den, den});
            break;
        case FamilyKind::Carpet:
            for (VertexId v = 0; v < compact.size(); ++v) {
                const auto& c = compact.vertex(v).coord;
                if (c.x == 0) t.source.push_back(v);
                if (c.x == den) t.sink.push_back(v);
            }
            break;
    }
    return t;
}

}  // namespace fraclab
