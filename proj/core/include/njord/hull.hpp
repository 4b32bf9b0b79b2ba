/**
 * @file hull.hpp
 * @brief 3-d convex hull, planar Delaunay via paraboloid lifting, and the
 *        dual Voronoi cell areas (spherical and planar).
 */
#pragma once

#include <span>
#include <utility>
#include <vector>

#include "njord/kdtree.hpp"

namespace njord::meshgraph {

/// Hull facet, outward-oriented: normal (b-a)x(c-a) points away from the
/// interior.
struct Triangle {
    int a = 0, b = 0, c = 0;
};

/// Incremental convex hull. Requires >= 4 points spanning 3 dimensions;
/// throws std::invalid_argument on fewer points or a degenerate
/// (collinear/coplanar) set. Exact duplicates must be removed beforehand.
std::vector<Triangle> convex_hull_3d(std::span<const Point3> pts);

/// Delaunay triangulation of (x, y) via the lower convex hull of points
/// lifted onto the paraboloid. Throws on < 3 points or an all-collinear set.
std::vector<Triangle> delaunay_2d(std::span<const Point3> pts);

/// Unique undirected edges of a triangulation, as (min, max) pairs sorted
/// lexicographically.
std::vector<std::pair<int, int>> triangulation_edges(const std::vector<Triangle>& tris);

/// Spherical Voronoi cell areas (steradians) dual to the hull triangulation
/// of unit-sphere nodes. Without land-zeroing the areas sum to 4*pi.
std::vector<double> spherical_voronoi_areas(std::span<const Point3> nodes,
                                            const std::vector<Triangle>& tris);

/// Planar Voronoi cell areas dual to a Delaunay triangulation. Cells of
/// hull-boundary nodes are closed through the adjacent hull-edge midpoints
/// and the node itself, a bounded approximation of the open cell.
std::vector<double> planar_voronoi_areas(std::span<const Point3> nodes,
                                         const std::vector<Triangle>& tris);

}  // namespace njord::meshgraph
