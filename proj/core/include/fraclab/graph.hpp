#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace fraclab {

using VertexId = std::uint32_t;

/// Exact vertex coordinate in lattice units; the real position is coordinate / denominator.
struct LatticePoint {
    std::int64_t x = 0;
    std::int64_t y = 0;

    friend auto operator<=>(const LatticePoint&, const LatticePoint&) = default;
    friend LatticePoint operator+(LatticePoint a, LatticePoint b) { return {a.x + b.x, a.y + b.y}; }
    friend LatticePoint operator*(std::int64_t k, LatticePoint a) { return {k * a.x, k * a.y}; }
};

struct LatticePointHash {
    std::size_t operator()(const LatticePoint& p) const noexcept {
        const auto h = static_cast<std::uint64_t>(p.x) * 0x9E3779B97F4A7C15ULL;
        return static_cast<std::size_t>(h ^ (static_cast<std::uint64_t>(p.y) + 0x7F4A7C159E3779B9ULL +
                                             (h << 6) + (h >> 2)));
    }
};

/// Square: (x, y) are Cartesian. Triangular: (x, y) are coefficients of the unit
/// vectors (1, 0) and (1/2, sqrt(3)/2), so equilateral cells have integer corners.
enum class Lattice { Square, Triangular };

enum class MetricMode { Geodesic, Euclidean };

struct Position {
    double x = 0.0;
    double y = 0.0;
};

struct Vertex {
    LatticePoint coord;
    double measure = 0.0;
};

struct Edge {
    VertexId u = 0;
    VertexId v = 0;
    double conductance = 1.0;
    double length = 1.0;
};

struct Incidence {
    VertexId to = 0;
    std::uint32_t edge = 0;
};

struct GraphMeta {
    std::string family;       ///< "carpet", "blowup(vicsek,carpet)", ...
    int level = 0;
    std::string scale;        ///< "compact", "prefractal", "blowup", "custom"
    int cable_k = 1;          ///< product of cable subdivisions applied
};

/// Finite weighted graph: vertex measure m, edge conductance c and edge length.
///
/// Invariants (checked on construction, ConstructionError otherwise): connected,
/// no self-loops or duplicate edges, distinct coordinates, all weights > 0 and finite.
class WeightedGraph {
public:
    WeightedGraph(std::vector<Vertex> vertices, std::vector<Edge> edges, std::int64_t denominator,
                  Lattice lattice, GraphMeta meta);

    std::size_t size() const noexcept { return vertices_.size(); }
    std::span<const Vertex> vertices() const noexcept { return vertices_; }
    std::span<const Edge> edges() const noexcept { return edges_; }
    const Vertex& vertex(VertexId v) const { return vertices_.at(v); }
    std::span<const Incidence> neighbors(VertexId v) const;

    std::int64_t denominator() const noexcept { return denominator_; }
    Lattice lattice() const noexcept { return lattice_; }
    const GraphMeta& meta() const noexcept { return meta_; }

    double measure(VertexId v) const { return vertices_.at(v).measure; }
    double total_measure() const noexcept { return total_measure_; }
    double min_edge_length() const noexcept { return min_edge_length_; }

    Position position(VertexId v) const;
    std::optional<VertexId> find(LatticePoint p) const;

    /// FNV-1a over the canonical vertex/edge lists; 16 hex digits.
    const std::string& content_hash() const noexcept { return hash_; }

private:
    std::vector<Vertex> vertices_;
    std::vector<Edge> edges_;
    std::int64_t denominator_;
    Lattice lattice_;
    GraphMeta meta_;
    std::unordered_map<LatticePoint, VertexId, LatticePointHash> index_;
    std::vector<std::uint32_t> offsets_;
    std::vector<Incidence> adjacency_;
    double total_measure_ = 0.0;
    double min_edge_length_ = std::numeric_limits<double>::infinity();
    std::string hash_;
};

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// Distances from `source` to every vertex; entries beyond `cutoff` are +inf.
std::vector<double> distances_from(const WeightedGraph& g, VertexId source,
                                   MetricMode mode = MetricMode::Geodesic,
                                   double cutoff = kUnbounded);

double distance(const WeightedGraph& g, VertexId a, VertexId b,
                MetricMode mode = MetricMode::Geodesic);

/// Open ball {y : d(center, y) < r}, ids ascending.
std::vector<VertexId> ball(const WeightedGraph& g, VertexId center, double r,
                           MetricMode mode = MetricMode::Geodesic);

double volume(const WeightedGraph& g, VertexId center, double r,
              MetricMode mode = MetricMode::Geodesic);

/// Double-sweep geodesic diameter (exact on trees, a lower bound in general).
double diameter_estimate(const WeightedGraph& g);

/// Vertices inside the middle `fraction` of the bounding box along each axis.
std::vector<VertexId> central_vertices(const WeightedGraph& g, double fraction = 0.5);

/// Vertices on the outer boundary of the window (bounding sides of the lattice shape).
std::vector<VertexId> window_boundary(const WeightedGraph& g);

/// Vertex closest (Euclidean) to the bounding-box centre; ties to the lower id.
VertexId center_vertex(const WeightedGraph& g);

bool is_connected(const WeightedGraph& g);

nlohmann::json to_json(const WeightedGraph& g);
WeightedGraph graph_from_json(const nlohmann::json& j);

}  // namespace fraclab
