/**
 * @file meshgraph.hpp
 * @brief Hierarchical cluster-mesh construction over the ocean grid:
 *        weighted K-means levels, Delaunay same-level edges with
 *        land-crossing filtering, inter-level couplings, grid-mesh edges,
 *        static features, and NJG serialization.
 */
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "njord/domain.hpp"
#include "njord/hull.hpp"
#include "njord/kdtree.hpp"

namespace njord::meshgraph {

struct HierarchyConfig {
    double r0 = 20.0;  // grid to first mesh level refinement factor (>= 1)
    double r = 4.0;    // refinement factor between mesh levels (> 1)
    int n_levels = 3;
    uint64_t seed = 0;
    int kmeans_iters_max = 100;
    double kmeans_tol = 1e-10;
};

struct CouplingConfig {
    double g2m_radius_factor = 0.67;  // radius in units of d_m
    int m2g_k = 3;
    double max_edge_chord = 0.1;    // global mode, unit-sphere chord
    double max_edge_m = 20000.0;    // regional mode, meters
};

struct GraphEdge {
    int src = 0;
    int dst = 0;
};

/// One mesh level. Nodes are unit vectors in global mode and projected
/// (x, y, 0) meters in regional mode. Feature widths: global 5 node / 4 edge
/// (sin lon, cos lon, sin lat, cos lat, cell area; chord + 3-d displacement),
/// regional 3 / 3 (x, y, cell area; length + 2-d displacement).
struct MeshLevel {
    std::vector<Point3> nodes;
    std::vector<GraphEdge> edges;       // both directions stored
    std::vector<double> node_features;  // [V x node_feat_width] row-major
    std::vector<double> edge_features;  // [E x edge_feat_width]
};

struct HierarchicalGraph {
    bool regional = false;
    HierarchyConfig hcfg;
    CouplingConfig ccfg;
    std::vector<MeshLevel> levels;  // level 0 finest
    // Inter-level pairs: up[l] connects level l -> l+1 (each lower node to
    // its nearest upper node); down[l] stores the reversed pairs.
    std::vector<std::vector<GraphEdge>> up_edges;
    std::vector<std::vector<GraphEdge>> down_edges;
    std::vector<std::vector<double>> up_edge_features;
    std::vector<std::vector<double>> down_edge_features;
    // Grid couplings (src is the grid index for g2m, the mesh index for m2g).
    std::vector<GraphEdge> g2m_edges;
    std::vector<GraphEdge> m2g_edges;
    std::vector<double> g2m_features;
    std::vector<double> m2g_features;

    double d_m = 0.0;                // mean bottom-level edge length (raw units)
    double norm_longest_edge = 0.0;  // normalization constant for edge features
    bool g2m_fallback_used = false;  // some grid point had no in-radius mesh node
    int n_grid = 0;                  // grid size the couplings were built for

    int n_levels() const { return static_cast<int>(levels.size()); }
    int node_feat_width() const { return regional ? 3 : 5; }
    int edge_feat_width() const { return regional ? 3 : 4; }
};

struct KmeansResult {
    std::vector<Point3> centers;
    std::vector<int> assignment;              // point -> center index
    std::vector<double> objective_per_iter;   // weighted dissimilarity
    bool degenerate_collapse = false;
    int iterations = 0;
};

/// Weighted spherical K-means on unit vectors: cosine-similarity assignment,
/// normalized weighted-mean updates, deterministic weighted farthest-point
/// seeding. Empty clusters are dropped from the result.
KmeansResult weighted_spherical_kmeans(std::span<const Point3> points,
                                       std::span<const double> weights, int k,
                                       uint64_t seed, int max_iters = 100,
                                       double tol = 1e-10);

/// Euclidean variant used for regional (projected) domains.
KmeansResult weighted_planar_kmeans(std::span<const Point3> points,
                                    std::span<const double> weights, int k,
                                    uint64_t seed, int max_iters = 100,
                                    double tol = 1e-10);

/// Same-level edge list: spherical Delaunay (hull) in global mode, planar
/// Delaunay in regional mode. Both directions stored; rejects duplicates and
/// degenerate point sets, and verifies every node appears in the
/// triangulation.
std::vector<GraphEdge> triangulate_level(std::span<const Point3> nodes, bool regional);

/// Keeps an edge iff its midpoint is strictly closer to a sea point than to
/// every land point and its length does not exceed the mode threshold.
/// Order is preserved.
std::vector<GraphEdge> filter_land_edges(const std::vector<GraphEdge>& edges,
                                         std::span<const Point3> nodes,
                                         const domain::OceanGrid& grid,
                                         const CouplingConfig& ccfg, bool regional);

/// True iff the edge passes both land-filter predicates (re-verification).
bool edge_passes_land_filter(const Point3& a, const Point3& b,
                             const domain::OceanGrid& grid,
                             const CouplingConfig& ccfg, bool regional);

/// Voronoi cell areas of the level triangulation: steradians on the sphere,
/// m^2 in regional mode. The grid overload zeroes cells extending over land
/// (a cell vertex closer to a land point than to every sea point).
std::vector<double> voronoi_cell_areas(std::span<const Point3> nodes, bool regional);
std::vector<double> voronoi_cell_areas(std::span<const Point3> nodes, bool regional,
                                       const domain::OceanGrid& grid);

/// Full hierarchy plus grid couplings and normalized static features.
HierarchicalGraph build_hierarchy(const domain::OceanGrid& grid,
                                  const HierarchyConfig& hcfg,
                                  const CouplingConfig& ccfg);

/// (Re)builds g2m/m2g couplings against a possibly different grid of the
/// same domain, leaving the mesh levels untouched.
void connect_grid(HierarchicalGraph& graph, const domain::OceanGrid& grid,
                  const CouplingConfig& ccfg);

void save_graph(const HierarchicalGraph& graph, const std::string& path);
HierarchicalGraph load_graph(const std::string& path);

/// Throws a mismatch error naming the offending field when the stored
/// configuration differs from the expected one.
void check_graph_config(const HierarchicalGraph& graph, const HierarchyConfig& hcfg,
                        const CouplingConfig& ccfg);

/// Per-level node/edge count table (the graph-stats CLI output).
std::string graph_stats_table(const HierarchicalGraph& graph);

/// Grid points in the representation the graph uses (unit vectors or
/// projected meters).
std::vector<Point3> grid_points_for_graph(const domain::OceanGrid& grid, bool regional);

}  // namespace njord::meshgraph
