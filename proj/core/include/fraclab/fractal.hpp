#pragma once

// Finite graph approximations of self-similar sets and their blowups.
//
// Every family is described by its contractions g_i(x) = x/L + (L-1)/L p_i and a
// cell template: the vertices and edges that one smallest cell contributes. Cells
// are laid out by iterating the contractions from the origin, so the level-n window
// is always a sub-window of level n+1.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "fraclab/graph.hpp"

namespace fraclab {

enum class FamilyKind { Interval, Gasket, Carpet, Vicsek };

struct FractalFamily {
    FamilyKind kind;
    std::string name;
    int contractions;                      ///< N
    int scale;                             ///< L
    Lattice lattice;
    std::vector<LatticePoint> fixed_points;  ///< p_i in half-cell units (unit square = 2)
    std::vector<LatticePoint> cell_points;   ///< template vertices in half-cell units
    std::vector<std::pair<int, int>> cell_edges;
};

const FractalFamily& family(FamilyKind kind);
FamilyKind parse_family(std::string_view name);
std::string family_name(FamilyKind kind);

struct BuildOptions {
    /// Conductance of every level-n edge is conductance_per_level^n.
    double conductance_per_level = 1.0;
    std::size_t vertex_budget = 2'000'000;
};

/// Origins (in cell-side units) of the N^n smallest cells of the level-n window.
std::vector<LatticePoint> cell_origins(FamilyKind kind, int level);

/// Level-n graph of the compact set in the unit square; total measure 1.
WeightedGraph build_compact(FamilyKind kind, int level, const BuildOptions& options = {});

/// Level-n graph rescaled by L^n: unit cells of measure 1 anchored at the origin.
WeightedGraph build_prefractal(FamilyKind kind, int level, const BuildOptions& options = {});

/// Replaces each edge by a path of k sub-edges (length l/k, conductance k c).
/// Original vertices keep their measure; an interior cable vertex receives
/// (incident sub-edge length) x (edge density), where the edge density is the mean of
/// m(w) / (total incident edge length at w) over the two endpoints w.
WeightedGraph build_cable(const WeightedGraph& graph, int subdivisions);

struct BlowupSpec {
    FamilyKind cell;    ///< K, the fractal filling each unit cell
    FamilyKind model;   ///< M, the pattern the cells are arranged in
    int cell_level = 1; ///< graph level of each K copy
    int level = 1;      ///< blowup level n (M^n cells)
};

/// Copies of the level-k graph of K placed on the level-n cells of M, each copy of
/// unit size and measure 1. Throws ConstructionError when two touching model cells
/// would not share a vertex of K.
WeightedGraph build_blowup(const BlowupSpec& spec, const BuildOptions& options = {});

/// Corner/side sets used for end-to-end resistance of compact graphs:
/// interval and gasket use the two bottom corners, Vicsek opposite corners,
/// carpet the left and right sides.
struct TerminalSets {
    std::vector<VertexId> source;
    std::vector<VertexId> sink;
};
TerminalSets compact_terminals(const WeightedGraph& compact, FamilyKind kind);

}  // namespace fraclab
