#include "njord/meshgraph.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "njord/rng.hpp"

namespace njord::meshgraph {

namespace {

double dist2(const Point3& a, const Point3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

Point3 normalize(const Point3& p) {
    const double n = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    if (!(n > 0.0)) throw std::invalid_argument("cannot normalize zero vector");
    return {p.x / n, p.y / n, p.z / n};
}

KmeansResult weighted_kmeans_impl(std::span<const Point3> points,
                                  std::span<const double> weights, int k, uint64_t seed,
                                  int max_iters, double tol, bool spherical) {
    const int n = static_cast<int>(points.size());
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (k > n) {
        throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds " +
                                    std::to_string(n) + " points");
    }
    if (static_cast<int>(weights.size()) != n) {
        throw std::invalid_argument("kmeans: weight count mismatch");
    }
    for (double w : weights) {
        if (!(w > 0.0)) throw std::invalid_argument("kmeans: weights must be positive");
    }

    KmeansResult res;

    // All-identical point sets collapse to a single center.
    bool all_same = true;
    for (int i = 1; i < n && all_same; ++i) all_same = dist2(points[0], points[i]) < 1e-24;
    if (all_same) {
        res.centers = {spherical ? normalize(points[0]) : points[0]};
        res.assignment.assign(n, 0);
        res.degenerate_collapse = (k > 1);
        res.objective_per_iter = {0.0};
        return res;
    }

    // Weighted farthest-point seeding: the first center is weight-sampled,
    // the rest maximize (weight x distance-to-chosen), ties to lowest index.
    std::vector<Point3> centers;
    centers.reserve(k);
    {
        diffcore::CounterRng rng(diffcore::CounterRng::make_key(seed, 0x6b6d65616e73ULL));
        double total = 0.0;
        for (double w : weights) total += w;
        const double x = rng.uniform() * total;
        double acc = 0.0;
        int first = n - 1;
        for (int i = 0; i < n; ++i) {
            acc += weights[i];
            if (x < acc) {
                first = i;
                break;
            }
        }
        centers.push_back(points[first]);
        std::vector<double> d2(n);
        for (int i = 0; i < n; ++i) d2[i] = dist2(points[i], centers[0]);
        while (static_cast<int>(centers.size()) < k) {
            int best = -1;
            double best_score = -1.0;
            for (int i = 0; i < n; ++i) {
                const double score = weights[i] * d2[i];
                if (score > best_score) {
                    best_score = score;
                    best = i;
                }
            }
            centers.push_back(points[best]);
            for (int i = 0; i < n; ++i) {
                d2[i] = std::min(d2[i], dist2(points[i], centers.back()));
            }
        }
    }

    std::vector<int> assign(n, 0);
    auto assign_all = [&]() {
        for (int i = 0; i < n; ++i) {
            int bj = 0;
            double bd = dist2(points[i], centers[0]);
            for (size_t j = 1; j < centers.size(); ++j) {
                const double d = dist2(points[i], centers[j]);
                if (d < bd) {
                    bd = d;
                    bj = static_cast<int>(j);
                }
            }
            assign[i] = bj;
        }
    };
    auto objective = [&]() {
        double J = 0.0;
        for (int i = 0; i < n; ++i) {
            const Point3& c = centers[assign[i]];
            if (spherical) {
                J += weights[i] *
                     (1.0 - (points[i].x * c.x + points[i].y * c.y + points[i].z * c.z));
            } else {
                J += weights[i] * dist2(points[i], c);
            }
        }
        return J;
    };

    assign_all();
    res.objective_per_iter.push_back(objective());
    for (int it = 0; it < max_iters; ++it) {
        // Update step: weighted means (normalized on the sphere). Empty
        // clusters keep their center and are dropped at the end.
        std::vector<Point3> sums(centers.size(), Point3{0, 0, 0});
        std::vector<double> wsum(centers.size(), 0.0);
        for (int i = 0; i < n; ++i) {
            sums[assign[i]].x += weights[i] * points[i].x;
            sums[assign[i]].y += weights[i] * points[i].y;
            sums[assign[i]].z += weights[i] * points[i].z;
            wsum[assign[i]] += weights[i];
        }
        for (size_t j = 0; j < centers.size(); ++j) {
            if (wsum[j] <= 0.0) continue;
            if (spherical) {
                const double len = std::sqrt(sums[j].x * sums[j].x + sums[j].y * sums[j].y +
                                             sums[j].z * sums[j].z);
                if (len > 1e-14) {
                    centers[j] = {sums[j].x / len, sums[j].y / len, sums[j].z / len};
                }
            } else {
                centers[j] = {sums[j].x / wsum[j], sums[j].y / wsum[j],
                              sums[j].z / wsum[j]};
            }
        }
        assign_all();
        const double J = objective();
        const double prev = res.objective_per_iter.back();
        res.objective_per_iter.push_back(J);
        res.iterations = it + 1;
        if (prev - J <= tol * std::max(1.0, std::abs(prev))) break;
    }

    // Drop empty clusters and exact duplicates, then remap assignments.
    std::vector<int> counts(centers.size(), 0);
    for (int a : assign) counts[a]++;
    std::vector<Point3> kept;
    for (size_t j = 0; j < centers.size(); ++j) {
        if (counts[j] == 0) continue;
        bool dup = false;
        for (const Point3& c : kept) dup = dup || dist2(c, centers[j]) < 1e-24;
        if (dup) {
            res.degenerate_collapse = true;
            continue;
        }
        kept.push_back(centers[j]);
    }
    centers = std::move(kept);
    res.centers = centers;
    res.assignment.resize(n);
    for (int i = 0; i < n; ++i) {
        int bj = 0;
        double bd = dist2(points[i], centers[0]);
        for (size_t j = 1; j < centers.size(); ++j) {
            const double d = dist2(points[i], centers[j]);
            if (d < bd) {
                bd = d;
                bj = static_cast<int>(j);
            }
        }
        res.assignment[i] = bj;
    }
    return res;
}

}  // namespace

KmeansResult weighted_spherical_kmeans(std::span<const Point3> points,
                                       std::span<const double> weights, int k,
                                       uint64_t seed, int max_iters, double tol) {
    return weighted_kmeans_impl(points, weights, k, seed, max_iters, tol, true);
}

KmeansResult weighted_planar_kmeans(std::span<const Point3> points,
                                    std::span<const double> weights, int k,
                                    uint64_t seed, int max_iters, double tol) {
    return weighted_kmeans_impl(points, weights, k, seed, max_iters, tol, false);
}

std::vector<GraphEdge> triangulate_level(std::span<const Point3> nodes, bool regional) {
    for (size_t i = 0; i < nodes.size(); ++i) {
        for (size_t j = i + 1; j < nodes.size(); ++j) {
            if (dist2(nodes[i], nodes[j]) < 1e-24) {
                throw std::invalid_argument("triangulate_level: duplicate nodes " +
                                            std::to_string(i) + " and " +
                                            std::to_string(j));
            }
        }
    }
    const std::vector<Triangle> tris =
        regional ? delaunay_2d(nodes) : convex_hull_3d(nodes);
    std::vector<char> used(nodes.size(), 0);
    for (const Triangle& t : tris) used[t.a] = used[t.b] = used[t.c] = 1;
    for (size_t i = 0; i < nodes.size(); ++i) {
        if (!used[i] && !regional) {
            throw std::runtime_error(
                "triangulate_level: node " + std::to_string(i) +
                " missing from the hull triangulation (degenerate input?)");
        }
    }
    std::vector<GraphEdge> out;
    for (const auto& [a, b] : triangulation_edges(tris)) {
        out.push_back({a, b});
        out.push_back({b, a});
    }
    return out;
}

namespace {

std::vector<Point3> sea_points_for(const domain::OceanGrid& grid, bool regional) {
    std::vector<Point3> pts(grid.n());
    if (regional) {
        for (int i = 0; i < grid.n(); ++i) pts[i] = {grid.x_m[i], grid.y_m[i], 0.0};
    } else {
        for (int i = 0; i < grid.n(); ++i) {
            pts[i] = {grid.cart[i].x, grid.cart[i].y, grid.cart[i].z};
        }
    }
    return pts;
}

std::vector<Point3> land_points_for(const domain::OceanGrid& grid, bool regional) {
    std::vector<Point3> pts(grid.land_points.size());
    if (regional) {
        for (size_t i = 0; i < pts.size(); ++i) {
            pts[i] = {grid.land_x_m[i], grid.land_y_m[i], 0.0};
        }
    } else {
        for (size_t i = 0; i < pts.size(); ++i) {
            pts[i] = {grid.land_cart[i].x, grid.land_cart[i].y, grid.land_cart[i].z};
        }
    }
    return pts;
}

Point3 edge_midpoint(const Point3& a, const Point3& b, bool regional) {
    Point3 mid{0.5 * (a.x + b.x), 0.5 * (a.y + b.y), 0.5 * (a.z + b.z)};
    return regional ? mid : normalize(mid);
}

double min_dist2_to(const std::vector<Point3>& pts, const Point3& q) {
    double best = std::numeric_limits<double>::infinity();
    for (const Point3& p : pts) best = std::min(best, dist2(p, q));
    return best;
}

}  // namespace

bool edge_passes_land_filter(const Point3& a, const Point3& b,
                             const domain::OceanGrid& grid, const CouplingConfig& ccfg,
                             bool regional) {
    const double threshold = regional ? ccfg.max_edge_m : ccfg.max_edge_chord;
    if (std::sqrt(dist2(a, b)) > threshold) return false;
    if (grid.land_points.empty()) return true;
    const Point3 mid = edge_midpoint(a, b, regional);
    const double d_sea = min_dist2_to(sea_points_for(grid, regional), mid);
    const double d_land = min_dist2_to(land_points_for(grid, regional), mid);
    return d_sea < d_land;
}

std::vector<GraphEdge> filter_land_edges(const std::vector<GraphEdge>& edges,
                                         std::span<const Point3> nodes,
                                         const domain::OceanGrid& grid,
                                         const CouplingConfig& ccfg, bool regional) {
    const double threshold = regional ? ccfg.max_edge_m : ccfg.max_edge_chord;
    std::optional<KdTree3> sea_tree, land_tree;
    if (!grid.land_points.empty()) {
        sea_tree.emplace(sea_points_for(grid, regional));
        land_tree.emplace(land_points_for(grid, regional));
    }
    std::vector<GraphEdge> out;
    out.reserve(edges.size());
    for (const GraphEdge& e : edges) {
        const Point3& a = nodes[e.src];
        const Point3& b = nodes[e.dst];
        if (std::sqrt(dist2(a, b)) > threshold) continue;
        if (sea_tree) {
            const Point3 mid = edge_midpoint(a, b, regional);
            const double d_sea = dist2(sea_tree->point(sea_tree->nearest(mid)), mid);
            const double d_land = dist2(land_tree->point(land_tree->nearest(mid)), mid);
            if (!(d_sea < d_land)) continue;
        }
        out.push_back(e);
    }
    return out;
}

std::vector<double> voronoi_cell_areas(std::span<const Point3> nodes, bool regional) {
    for (size_t i = 0; i < nodes.size(); ++i) {
        for (size_t j = i + 1; j < nodes.size(); ++j) {
            if (dist2(nodes[i], nodes[j]) < 1e-24) {
                throw std::invalid_argument("voronoi_cell_areas: duplicate nodes");
            }
        }
    }
    if (regional) {
        return planar_voronoi_areas(nodes, delaunay_2d(nodes));
    }
    return spherical_voronoi_areas(nodes, convex_hull_3d(nodes));
}

std::vector<double> voronoi_cell_areas(std::span<const Point3> nodes, bool regional,
                                       const domain::OceanGrid& grid) {
    std::vector<double> areas = voronoi_cell_areas(nodes, regional);
    if (grid.land_points.empty()) return areas;
    // A cell extends over land when one of its Voronoi vertices is nearer to
    // a land point than to every sea point.
    const std::vector<Triangle> tris =
        regional ? delaunay_2d(nodes) : convex_hull_3d(nodes);
    KdTree3 sea_tree(sea_points_for(grid, regional));
    KdTree3 land_tree(land_points_for(grid, regional));
    std::vector<char> over_land(nodes.size(), 0);
    for (const Triangle& t : tris) {
        Point3 cc;
        if (regional) {
            const Point3 &a = nodes[t.a], &b = nodes[t.b], &c = nodes[t.c];
            const double d =
                2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
            if (d == 0.0) continue;
            const double a2 = a.x * a.x + a.y * a.y;
            const double b2 = b.x * b.x + b.y * b.y;
            const double c2 = c.x * c.x + c.y * c.y;
            cc = {(a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d,
                  (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d, 0.0};
        } else {
            const Point3 &a = nodes[t.a], &b = nodes[t.b], &c = nodes[t.c];
            const Point3 u{b.x - a.x, b.y - a.y, b.z - a.z};
            const Point3 v{c.x - a.x, c.y - a.y, c.z - a.z};
            cc = normalize({u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z,
                            u.x * v.y - u.y * v.x});
        }
        const double d_sea = dist2(sea_tree.point(sea_tree.nearest(cc)), cc);
        const double d_land = dist2(land_tree.point(land_tree.nearest(cc)), cc);
        if (d_land < d_sea) {
            over_land[t.a] = over_land[t.b] = over_land[t.c] = 1;
        }
    }
    for (size_t i = 0; i < nodes.size(); ++i) {
        if (over_land[i]) areas[i] = 0.0;
    }
    return areas;
}

std::vector<Point3> grid_points_for_graph(const domain::OceanGrid& grid, bool regional) {
    if (regional && grid.x_m.empty()) {
        throw std::invalid_argument("regional graph requires projected grid coordinates");
    }
    return sea_points_for(grid, regional);
}

namespace {

/// Appends [length, displacement...] rows (receiver minus sender).
void append_edge_features(std::vector<double>& out, const Point3& sender,
                          const Point3& receiver, bool regional) {
    const double dx = receiver.x - sender.x;
    const double dy = receiver.y - sender.y;
    const double dz = receiver.z - sender.z;
    out.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
    out.push_back(dx);
    out.push_back(dy);
    if (!regional) out.push_back(dz);
}

void scale_features(std::vector<double>& f, double denom) {
    if (denom <= 0.0) return;
    for (double& v : f) v /= denom;
}

std::vector<double> edge_feature_rows(const std::vector<GraphEdge>& edges,
                                      std::span<const Point3> senders,
                                      std::span<const Point3> receivers, bool regional) {
    std::vector<double> f;
    f.reserve(edges.size() * (regional ? 3 : 4));
    for (const GraphEdge& e : edges) {
        append_edge_features(f, senders[e.src], receivers[e.dst], regional);
    }
    return f;
}

}  // namespace

HierarchicalGraph build_hierarchy(const domain::OceanGrid& grid,
                                  const HierarchyConfig& hcfg,
                                  const CouplingConfig& ccfg) {
    if (!(hcfg.r0 >= 1.0) || !(hcfg.r > 1.0) || hcfg.n_levels < 1) {
        throw std::invalid_argument("build_hierarchy: invalid hierarchy config");
    }
    HierarchicalGraph g;
    g.regional = grid.regional;
    g.hcfg = hcfg;
    g.ccfg = ccfg;

    const std::vector<Point3> grid_pts = grid_points_for_graph(grid, g.regional);
    const int min_nodes = g.regional ? 3 : 4;

    // Clustering sweep: grid -> level 0 -> ... -> top.
    for (int l = 0; l < hcfg.n_levels; ++l) {
        std::span<const Point3> src_pts;
        std::vector<double> weights;
        if (l == 0) {
            src_pts = grid_pts;
            weights = grid.area_weight;
        } else {
            src_pts = g.levels[l - 1].nodes;
            weights.resize(src_pts.size(), 1.0);
            if (!g.regional) {
                // Latitude-based area weights: cos(lat) of each node.
                for (size_t i = 0; i < src_pts.size(); ++i) {
                    weights[i] = std::max(1e-9, std::hypot(src_pts[i].x, src_pts[i].y));
                }
            }
        }
        const double factor = (l == 0) ? hcfg.r0 : hcfg.r;
        const int k = static_cast<int>(
            std::ceil(static_cast<double>(src_pts.size()) / factor));
        if (k < min_nodes) {
            throw std::runtime_error("build_hierarchy: level " + std::to_string(l) +
                                     " would have " + std::to_string(k) +
                                     " nodes, fewer than the " +
                                     std::to_string(min_nodes) +
                                     " required for triangulation; reduce n_levels");
        }
        KmeansResult km;
        try {
            km = weighted_kmeans_impl(src_pts, weights, k,
                                      diffcore::mix_keys(hcfg.seed, 1000 + l),
                                      hcfg.kmeans_iters_max, hcfg.kmeans_tol,
                                      !g.regional);
        } catch (const std::exception& e) {
            throw std::runtime_error("build_hierarchy: clustering level " +
                                     std::to_string(l) + ": " + e.what());
        }
        MeshLevel level;
        level.nodes = std::move(km.centers);
        if (static_cast<int>(level.nodes.size()) < min_nodes) {
            throw std::runtime_error("build_hierarchy: level " + std::to_string(l) +
                                     " collapsed below " + std::to_string(min_nodes) +
                                     " nodes");
        }
        try {
            level.edges = filter_land_edges(triangulate_level(level.nodes, g.regional),
                                            level.nodes, grid, ccfg, g.regional);
        } catch (const std::exception& e) {
            throw std::runtime_error("build_hierarchy: triangulating level " +
                                     std::to_string(l) + ": " + e.what());
        }
        g.levels.push_back(std::move(level));
    }

    // Inter-level pairs: each lower node to its nearest upper node, stored in
    // both directions. Upper nodes the pairing misses (exact-tie pathologies)
    // steal the nearest lower node whose target can spare an edge.
    for (int l = 0; l + 1 < hcfg.n_levels; ++l) {
        const auto& lower = g.levels[l].nodes;
        const auto& upper = g.levels[l + 1].nodes;
        KdTree3 upper_tree(upper);
        std::vector<int> target(lower.size());
        std::vector<int> indeg(upper.size(), 0);
        for (size_t i = 0; i < lower.size(); ++i) {
            target[i] = upper_tree.nearest(lower[i]);
            indeg[target[i]]++;
        }
        KdTree3 lower_tree(lower);
        for (size_t u = 0; u < upper.size(); ++u) {
            if (indeg[u] > 0) continue;
            const auto order = lower_tree.k_nearest(upper[u], static_cast<int>(lower.size()));
            for (int w : order) {
                if (indeg[target[w]] >= 2) {
                    indeg[target[w]]--;
                    target[w] = static_cast<int>(u);
                    indeg[u]++;
                    break;
                }
            }
            if (indeg[u] == 0) {
                throw std::runtime_error("build_hierarchy: level " + std::to_string(l + 1) +
                                         " node " + std::to_string(u) +
                                         " cannot be attached to the level below");
            }
        }
        std::vector<GraphEdge> up, down;
        up.reserve(lower.size());
        down.reserve(lower.size());
        for (size_t i = 0; i < lower.size(); ++i) {
            up.push_back({static_cast<int>(i), target[i]});
            down.push_back({target[i], static_cast<int>(i)});
        }
        g.up_edges.push_back(std::move(up));
        g.down_edges.push_back(std::move(down));
    }

    // Normalization constant: longest same-level mesh edge across all levels.
    double longest = 0.0;
    for (const MeshLevel& level : g.levels) {
        for (const GraphEdge& e : level.edges) {
            longest = std::max(longest,
                               std::sqrt(dist2(level.nodes[e.src], level.nodes[e.dst])));
        }
    }
    if (longest <= 0.0) {
        throw std::runtime_error("build_hierarchy: no mesh edges survived filtering");
    }
    g.norm_longest_edge = longest;

    // Node features. Voronoi areas are land-zeroed; the area column (and the
    // projected coordinates in regional mode) is min-max normalized jointly
    // across levels; sin/cos columns stay raw.
    {
        std::vector<std::vector<double>> areas(g.levels.size());
        for (size_t l = 0; l < g.levels.size(); ++l) {
            try {
                areas[l] = voronoi_cell_areas(g.levels[l].nodes, g.regional, grid);
            } catch (const std::exception& e) {
                throw std::runtime_error("build_hierarchy: voronoi areas level " +
                                         std::to_string(l) + ": " + e.what());
            }
        }
        double amin = std::numeric_limits<double>::infinity(), amax = -amin;
        double xmin = amin, xmax = amax, ymin = amin, ymax = amax;
        for (size_t l = 0; l < g.levels.size(); ++l) {
            for (double a : areas[l]) {
                amin = std::min(amin, a);
                amax = std::max(amax, a);
            }
            for (const Point3& p : g.levels[l].nodes) {
                xmin = std::min(xmin, p.x);
                xmax = std::max(xmax, p.x);
                ymin = std::min(ymin, p.y);
                ymax = std::max(ymax, p.y);
            }
        }
        auto minmax = [](double v, double lo, double hi) {
            return hi > lo ? (v - lo) / (hi - lo) : 0.0;
        };
        for (size_t l = 0; l < g.levels.size(); ++l) {
            MeshLevel& level = g.levels[l];
            level.node_features.clear();
            for (size_t i = 0; i < level.nodes.size(); ++i) {
                const Point3& p = level.nodes[i];
                if (g.regional) {
                    level.node_features.push_back(minmax(p.x, xmin, xmax));
                    level.node_features.push_back(minmax(p.y, ymin, ymax));
                } else {
                    const double cos_lat = std::hypot(p.x, p.y);
                    const double sin_lat = p.z;
                    const double sin_lon = cos_lat > 0.0 ? p.y / cos_lat : 0.0;
                    const double cos_lon = cos_lat > 0.0 ? p.x / cos_lat : 1.0;
                    level.node_features.push_back(sin_lon);
                    level.node_features.push_back(cos_lon);
                    level.node_features.push_back(sin_lat);
                    level.node_features.push_back(cos_lat);
                }
                level.node_features.push_back(minmax(areas[l][i], amin, amax));
            }
        }
    }

    // Edge features, all normalized by the longest mesh edge.
    for (MeshLevel& level : g.levels) {
        level.edge_features =
            edge_feature_rows(level.edges, level.nodes, level.nodes, g.regional);
        scale_features(level.edge_features, g.norm_longest_edge);
    }
    for (size_t l = 0; l + 1 < g.levels.size(); ++l) {
        auto up_f = edge_feature_rows(g.up_edges[l], g.levels[l].nodes,
                                      g.levels[l + 1].nodes, g.regional);
        auto down_f = edge_feature_rows(g.down_edges[l], g.levels[l + 1].nodes,
                                        g.levels[l].nodes, g.regional);
        scale_features(up_f, g.norm_longest_edge);
        scale_features(down_f, g.norm_longest_edge);
        g.up_edge_features.push_back(std::move(up_f));
        g.down_edge_features.push_back(std::move(down_f));
    }

    connect_grid(g, grid, ccfg);
    return g;
}

void connect_grid(HierarchicalGraph& g, const domain::OceanGrid& grid,
                  const CouplingConfig& ccfg) {
    if (g.levels.empty()) throw std::invalid_argument("connect_grid: empty hierarchy");
    if (grid.regional != g.regional) {
        throw std::invalid_argument("connect_grid: grid/graph mode mismatch");
    }
    const MeshLevel& level0 = g.levels[0];
    const std::vector<Point3> grid_pts = grid_points_for_graph(grid, g.regional);

    // d_m: mean bottom-level edge length (raw units).
    if (level0.edges.empty()) {
        throw std::runtime_error("connect_grid: bottom level has no edges");
    }
    double sum = 0.0;
    for (const GraphEdge& e : level0.edges) {
        sum += std::sqrt(dist2(level0.nodes[e.src], level0.nodes[e.dst]));
    }
    g.d_m = sum / static_cast<double>(level0.edges.size());
    const double radius = ccfg.g2m_radius_factor * g.d_m;

    KdTree3 mesh_tree(level0.nodes);
    std::optional<KdTree3> sea_tree, land_tree;
    if (!grid.land_points.empty()) {
        sea_tree.emplace(sea_points_for(grid, g.regional));
        land_tree.emplace(land_points_for(grid, g.regional));
    }
    const double threshold = g.regional ? ccfg.max_edge_m : ccfg.max_edge_chord;

    g.g2m_edges.clear();
    g.m2g_edges.clear();
    g.g2m_fallback_used = false;
    for (int i = 0; i < static_cast<int>(grid_pts.size()); ++i) {
        // g2m: every mesh node within the radius, land-filtered.
        int added = 0;
        for (int m : mesh_tree.within_radius(grid_pts[i], radius)) {
            const Point3& a = grid_pts[i];
            const Point3& b = level0.nodes[m];
            if (std::sqrt(dist2(a, b)) > threshold) continue;
            if (sea_tree) {
                const Point3 mid = edge_midpoint(a, b, g.regional);
                const double d_sea = dist2(sea_tree->point(sea_tree->nearest(mid)), mid);
                const double d_land =
                    dist2(land_tree->point(land_tree->nearest(mid)), mid);
                if (!(d_sea < d_land)) continue;
            }
            g.g2m_edges.push_back({i, m});
            ++added;
        }
        if (added == 0) {
            g.g2m_edges.push_back({i, mesh_tree.nearest(grid_pts[i])});
            g.g2m_fallback_used = true;
        }
        // m2g: exactly k nearest mesh nodes.
        for (int m : mesh_tree.k_nearest(grid_pts[i], ccfg.m2g_k)) {
            g.m2g_edges.push_back({m, i});
        }
    }
    g.g2m_features = edge_feature_rows(g.g2m_edges, grid_pts, level0.nodes, g.regional);
    g.m2g_features = edge_feature_rows(g.m2g_edges, level0.nodes, grid_pts, g.regional);
    scale_features(g.g2m_features, g.norm_longest_edge);
    scale_features(g.m2g_features, g.norm_longest_edge);
    g.n_grid = static_cast<int>(grid_pts.size());
}

void check_graph_config(const HierarchicalGraph& graph, const HierarchyConfig& hcfg,
                        const CouplingConfig& ccfg) {
    auto fail = [](const std::string& field, double got, double want) {
        std::ostringstream ss;
        ss << "graph config mismatch: " << field << " is " << got << ", expected "
           << want;
        throw std::runtime_error(ss.str());
    };
    if (graph.hcfg.n_levels != hcfg.n_levels) {
        fail("n_levels", graph.hcfg.n_levels, hcfg.n_levels);
    }
    if (graph.hcfg.r0 != hcfg.r0) fail("r0", graph.hcfg.r0, hcfg.r0);
    if (graph.hcfg.r != hcfg.r) fail("r", graph.hcfg.r, hcfg.r);
    if (graph.hcfg.seed != hcfg.seed) {
        fail("seed", static_cast<double>(graph.hcfg.seed),
             static_cast<double>(hcfg.seed));
    }
    if (graph.ccfg.g2m_radius_factor != ccfg.g2m_radius_factor) {
        fail("g2m_radius_factor", graph.ccfg.g2m_radius_factor, ccfg.g2m_radius_factor);
    }
    if (graph.ccfg.m2g_k != ccfg.m2g_k) fail("m2g_k", graph.ccfg.m2g_k, ccfg.m2g_k);
    if (graph.ccfg.max_edge_chord != ccfg.max_edge_chord) {
        fail("max_edge_chord", graph.ccfg.max_edge_chord, ccfg.max_edge_chord);
    }
    if (graph.ccfg.max_edge_m != ccfg.max_edge_m) {
        fail("max_edge_m", graph.ccfg.max_edge_m, ccfg.max_edge_m);
    }
}

std::string graph_stats_table(const HierarchicalGraph& g) {
    std::ostringstream ss;
    ss << std::left << std::setw(18) << "Graph" << std::right << std::setw(10) << "Nodes"
       << std::setw(12) << "Edges" << "\n";
    size_t total_nodes = 0, total_edges = 0;
    for (int l = 0; l < g.n_levels(); ++l) {
        ss << std::left << std::setw(18) << ("G_" + std::to_string(l)) << std::right
           << std::setw(10) << g.levels[l].nodes.size() << std::setw(12)
           << g.levels[l].edges.size() << "\n";
        total_nodes += g.levels[l].nodes.size();
        total_edges += g.levels[l].edges.size();
        if (l + 1 < g.n_levels()) {
            const std::string name = "G_" + std::to_string(l) + "," +
                                     std::to_string(l + 1) + "/G_" +
                                     std::to_string(l + 1) + "," + std::to_string(l);
            ss << std::left << std::setw(18) << name << std::right << std::setw(10) << "-"
               << std::setw(12) << (g.up_edges[l].size() + g.down_edges[l].size()) << "\n";
            total_edges += g.up_edges[l].size() + g.down_edges[l].size();
        }
    }
    ss << std::left << std::setw(18) << "Total" << std::right << std::setw(10)
       << total_nodes << std::setw(12) << total_edges << "\n";
    ss << std::left << std::setw(18) << "G_G2M" << std::right << std::setw(10) << "-"
       << std::setw(12) << g.g2m_edges.size() << "\n";
    ss << std::left << std::setw(18) << "G_M2G" << std::right << std::setw(10) << "-"
       << std::setw(12) << g.m2g_edges.size() << "\n";
    ss << std::left << std::setw(18) << "Grid" << std::right << std::setw(10) << g.n_grid
       << std::setw(12) << "-" << "\n";
    return ss.str();
}

}  // namespace njord::meshgraph
