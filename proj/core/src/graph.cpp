#include "fraclab/graph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <queue>
#include <unordered_map>
#include <utility>

#include "fraclab/error.hpp"

namespace fraclab {

namespace {

constexpr double kSqrt3Over2 = 0.86602540378443864676;

class Fnv1a {
public:
    void add_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001B3ULL;
        }
    }
    template <class T>
    void add(const T& value) {
        add_bytes(&value, sizeof(T));
    }
    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
        return buf;
    }

private:
    std::uint64_t state_ = 0xCBF29CE484222325ULL;
};

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

std::string lattice_name(Lattice l) { return l == Lattice::Square ? "square" : "triangular"; }

Lattice parse_lattice(const std::string& s) {
    if (s == "square") return Lattice::Square;
    if (s == "triangular") return Lattice::Triangular;
    throw ConfigError("unknown lattice '" + s + "'");
}

}  // namespace

WeightedGraph::WeightedGraph(std::vector<Vertex> vertices, std::vector<Edge> edges,
                             std::int64_t denominator, Lattice lattice, GraphMeta meta)
    : vertices_(std::move(vertices)),
      edges_(std::move(edges)),
      denominator_(denominator),
      lattice_(lattice),
      meta_(std::move(meta)) {
    if (vertices_.empty()) throw ConstructionError("graph has no vertices");
    if (vertices_.size() > std::numeric_limits<VertexId>::max()) {
        throw ConstructionError("graph exceeds the vertex id range");
    }
    if (denominator_ <= 0) throw ConstructionError("coordinate denominator must be positive");

    auto& seen = index_;
    seen.reserve(vertices_.size());
    for (std::size_t i = 0; i < vertices_.size(); ++i) {
        const auto& v = vertices_[i];
        if (!finite_positive(v.measure)) {
            throw ConstructionError("vertex " + std::to_string(i) + " has non-positive measure");
        }
        if (!seen.emplace(v.coord, static_cast<VertexId>(i)).second) {
            throw ConstructionError("duplicate vertex coordinate at id " + std::to_string(i));
        }
        total_measure_ += v.measure;
    }

    std::vector<std::pair<VertexId, VertexId>> keys;
    keys.reserve(edges_.size());
    std::vector<std::uint32_t> degree(vertices_.size(), 0);
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        const auto& e = edges_[i];
        if (e.u >= vertices_.size() || e.v >= vertices_.size()) {
            throw ConstructionError("edge " + std::to_string(i) + " references unknown vertex");
        }
        if (e.u == e.v) throw ConstructionError("self-loop at vertex " + std::to_string(e.u));
        if (!finite_positive(e.conductance) || !finite_positive(e.length)) {
            throw ConstructionError("edge " + std::to_string(i) + " has non-positive weight");
        }
        keys.emplace_back(std::min(e.u, e.v), std::max(e.u, e.v));
        ++degree[e.u];
        ++degree[e.v];
        min_edge_length_ = std::min(min_edge_length_, e.length);
    }
    std::sort(keys.begin(), keys.end());
    if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
        throw ConstructionError("duplicate edge");
    }

    offsets_.assign(vertices_.size() + 1, 0);
    for (std::size_t v = 0; v < vertices_.size(); ++v) offsets_[v + 1] = offsets_[v] + degree[v];
    adjacency_.resize(offsets_.back());
    std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        const auto& e = edges_[i];
        adjacency_[fill[e.u]++] = {e.v, static_cast<std::uint32_t>(i)};
        adjacency_[fill[e.v]++] = {e.u, static_cast<std::uint32_t>(i)};
    }

    if (!is_connected(*this)) throw ConstructionError("graph is not connected");

    Fnv1a h;
    h.add(denominator_);
    h.add(static_cast<int>(lattice_));
    for (const auto& v : vertices_) {
        h.add(v.coord.x);
        h.add(v.coord.y);
        h.add(std::bit_cast<std::uint64_t>(v.measure));
    }
    for (const auto& e : edges_) {
        h.add(e.u);
        h.add(e.v);
        h.add(std::bit_cast<std::uint64_t>(e.conductance));
        h.add(std::bit_cast<std::uint64_t>(e.length));
    }
    hash_ = h.hex();
}

std::span<const Incidence> WeightedGraph::neighbors(VertexId v) const {
    if (v >= vertices_.size()) throw DomainError("unknown vertex " + std::to_string(v));
    return {adjacency_.data() + offsets_[v], adjacency_.data() + offsets_[v + 1]};
}

Position WeightedGraph::position(VertexId v) const {
    const auto& c = vertices_.at(v).coord;
    const double d = static_cast<double>(denominator_);
    if (lattice_ == Lattice::Square) return {c.x / d, c.y / d};
    return {(static_cast<double>(c.x) + 0.5 * static_cast<double>(c.y)) / d,
            kSqrt3Over2 * static_cast<double>(c.y) / d};
}

std::optional<VertexId> WeightedGraph::find(LatticePoint p) const {
    const auto it = index_.find(p);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

bool is_connected(const WeightedGraph& g) {
    std::vector<char> seen(g.size(), 0);
    std::vector<VertexId> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        const VertexId v = stack.back();
        stack.pop_back();
        for (const auto& inc : g.neighbors(v)) {
            if (!seen[inc.to]) {
                seen[inc.to] = 1;
                ++count;
                stack.push_back(inc.to);
            }
        }
    }
    return count == g.size();
}

std::vector<double> distances_from(const WeightedGraph& g, VertexId source, MetricMode mode,
                                   double cutoff) {
    if (source >= g.size()) throw DomainError("unknown vertex " + std::to_string(source));
    std::vector<double> dist(g.size(), kUnbounded);
    if (mode == MetricMode::Euclidean) {
        const Position p = g.position(source);
        for (VertexId v = 0; v < g.size(); ++v) {
            const Position q = g.position(v);
            const double d = std::hypot(q.x - p.x, q.y - p.y);
            if (d <= cutoff) dist[v] = d;
        }
        return dist;
    }
    using Item = std::pair<double, VertexId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[source] = 0.0;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
        const auto [d, v] = heap.top();
        heap.pop();
        if (d > dist[v]) continue;
        for (const auto& inc : g.neighbors(v)) {
            const double nd = d + g.edges()[inc.edge].length;
            if (nd < dist[inc.to] && nd <= cutoff) {
                dist[inc.to] = nd;
                heap.emplace(nd, inc.to);
            }
        }
    }
    return dist;
}

double distance(const WeightedGraph& g, VertexId a, VertexId b, MetricMode mode) {
    if (b >= g.size()) throw DomainError("unknown vertex " + std::to_string(b));
    if (mode == MetricMode::Euclidean) {
        const Position p = g.position(a);
        const Position q = g.position(b);
        return std::hypot(q.x - p.x, q.y - p.y);
    }
    return distances_from(g, a, mode)[b];
}

std::vector<VertexId> ball(const WeightedGraph& g, VertexId center, double r, MetricMode mode) {
    if (!(r > 0.0)) throw DomainError("ball radius must be > 0");
    const auto dist = distances_from(g, center, mode, r);
    std::vector<VertexId> out;
    for (VertexId v = 0; v < g.size(); ++v) {
        if (dist[v] < r) out.push_back(v);
    }
    return out;
}

double volume(const WeightedGraph& g, VertexId center, double r, MetricMode mode) {
    double total = 0.0;
    for (VertexId v : ball(g, center, r, mode)) total += g.measure(v);
    return total;
}

double diameter_estimate(const WeightedGraph& g) {
    auto farthest = [&](VertexId from) {
        const auto d = distances_from(g, from);
        const auto it = std::max_element(d.begin(), d.end());
        return std::make_pair(static_cast<VertexId>(it - d.begin()), *it);
    };
    const auto [a, da] = farthest(0);
    (void)da;
    return farthest(a).second;
}

namespace {

struct Box {
    double x0, x1, y0, y1;
};

Box bounding_box(const WeightedGraph& g) {
    Box b{kUnbounded, -kUnbounded, kUnbounded, -kUnbounded};
    for (VertexId v = 0; v < g.size(); ++v) {
        const Position p = g.position(v);
        b.x0 = std::min(b.x0, p.x);
        b.x1 = std::max(b.x1, p.x);
        b.y0 = std::min(b.y0, p.y);
        b.y1 = std::max(b.y1, p.y);
    }
    return b;
}

}  // namespace

std::vector<VertexId> central_vertices(const WeightedGraph& g, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw DomainError("fraction must lie in (0, 1]");
    const Box b = bounding_box(g);
    const double mx = 0.5 * (1.0 - fraction) * (b.x1 - b.x0);
    const double my = 0.5 * (1.0 - fraction) * (b.y1 - b.y0);
    const double eps = 1e-12 * std::max(1.0, std::max(b.x1 - b.x0, b.y1 - b.y0));
    std::vector<VertexId> out;
    for (VertexId v = 0; v < g.size(); ++v) {
        const Position p = g.position(v);
        if (p.x >= b.x0 + mx - eps && p.x <= b.x1 - mx + eps && p.y >= b.y0 + my - eps &&
            p.y <= b.y1 - my + eps) {
            out.push_back(v);
        }
    }
    return out;
}

std::vector<VertexId> window_boundary(const WeightedGraph& g) {
    std::int64_t xmin = std::numeric_limits<std::int64_t>::max(), xmax = -xmin;
    std::int64_t ymin = xmin, ymax = -xmin, smax = -xmin;
    for (const auto& v : g.vertices()) {
        xmin = std::min(xmin, v.coord.x);
        xmax = std::max(xmax, v.coord.x);
        ymin = std::min(ymin, v.coord.y);
        ymax = std::max(ymax, v.coord.y);
        smax = std::max(smax, v.coord.x + v.coord.y);
    }
    std::vector<VertexId> out;
    for (VertexId i = 0; i < g.size(); ++i) {
        const auto& c = g.vertex(i).coord;
        // A degenerate axis (the interval) contributes no sides.
        const bool on_x = xmin < xmax && (c.x == xmin || c.x == xmax);
        const bool on_y = ymin < ymax && (c.y == ymin || c.y == ymax);
        const bool on = g.lattice() == Lattice::Square
                            ? (on_x || on_y)
                            : (c.x == xmin || c.y == ymin || c.x + c.y == smax);
        if (on) out.push_back(i);
    }
    return out;
}

VertexId center_vertex(const WeightedGraph& g) {
    const Box b = bounding_box(g);
    const double cx = 0.5 * (b.x0 + b.x1);
    const double cy = 0.5 * (b.y0 + b.y1);
    VertexId best = 0;
    double best_d = kUnbounded;
    for (VertexId v = 0; v < g.size(); ++v) {
        const Position p = g.position(v);
        const double d = std::hypot(p.x - cx, p.y - cy);
        if (d < best_d - 1e-12) {
            best_d = d;
            best = v;
        }
    }
    return best;
}

nlohmann::json to_json(const WeightedGraph& g) {
    nlohmann::json vertices = nlohmann::json::array();
    for (VertexId i = 0; i < g.size(); ++i) {
        const auto& v = g.vertex(i);
        vertices.push_back({{"id", i}, {"x", v.coord.x}, {"y", v.coord.y}, {"m", v.measure}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges()) {
        edges.push_back({{"u", e.u}, {"v", e.v}, {"c", e.conductance}, {"len", e.length}});
    }
    const auto& m = g.meta();
    return {{"vertices", std::move(vertices)},
            {"edges", std::move(edges)},
            {"meta",
             {{"family", m.family},
              {"level", m.level},
              {"scale", m.scale},
              {"cable_k", m.cable_k},
              {"denominator", g.denominator()},
              {"lattice", lattice_name(g.lattice())},
              {"hash", g.content_hash()}}}};
}

WeightedGraph graph_from_json(const nlohmann::json& j) {
    try {
        const auto& meta = j.at("meta");
        std::vector<Vertex> vertices;
        for (const auto& v : j.at("vertices")) {
            const auto id = v.at("id").get<std::size_t>();
            if (id != vertices.size()) throw ConfigError("vertex ids must be 0..n-1 in order");
            vertices.push_back({{v.at("x").get<std::int64_t>(), v.at("y").get<std::int64_t>()},
                                v.at("m").get<double>()});
        }
        std::vector<Edge> edges;
        for (const auto& e : j.at("edges")) {
            edges.push_back({e.at("u").get<VertexId>(), e.at("v").get<VertexId>(),
                             e.at("c").get<double>(), e.at("len").get<double>()});
        }
        GraphMeta gm{meta.at("family").get<std::string>(), meta.at("level").get<int>(),
                     meta.at("scale").get<std::string>(), meta.value("cable_k", 1)};
        return WeightedGraph(std::move(vertices), std::move(edges),
                             meta.at("denominator").get<std::int64_t>(),
                             parse_lattice(meta.value("lattice", std::string("square"))),
                             std::move(gm));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed graph document: ") + e.what());
    }
}

}  // namespace fraclab
