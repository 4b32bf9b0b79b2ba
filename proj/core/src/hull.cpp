#include "njord/hull.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

namespace njord::meshgraph {

namespace {

struct Vec3 {
    double x, y, z;
};

Vec3 operator-(const Point3& a, const Point3& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
}
Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

struct Face {
    Triangle tri;
    Vec3 unit_normal;
    Point3 ref;  // one vertex, for signed distances
    bool alive = true;
};

double signed_dist(const Face& f, const Point3& p) {
    return dot(f.unit_normal, p - f.ref);
}

Face make_face(std::span<const Point3> pts, int a, int b, int c) {
    Face f;
    f.tri = {a, b, c};
    const Vec3 n = cross(pts[b] - pts[a], pts[c] - pts[a]);
    const double len = norm(n);
    if (len <= 0.0) {
        throw std::runtime_error("convex_hull_3d: degenerate zero-area face");
    }
    f.unit_normal = {n.x / len, n.y / len, n.z / len};
    f.ref = pts[a];
    return f;
}

}  // namespace

std::vector<Triangle> convex_hull_3d(std::span<const Point3> pts) {
    const int n = static_cast<int>(pts.size());
    if (n < 4) {
        throw std::invalid_argument("convex_hull_3d: need >= 4 points, got " +
                                    std::to_string(n));
    }
    double scale = 0.0;
    for (const Point3& p : pts) {
        scale = std::max({scale, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
    }
    const double eps = 1e-10 * std::max(scale, 1e-30);

    // Initial simplex: maximally separated quadruple.
    const int i0 = 0;
    int i1 = -1;
    double best = -1.0;
    for (int i = 1; i < n; ++i) {
        const Vec3 d = pts[i] - pts[i0];
        const double m = dot(d, d);
        if (m > best) {
            best = m;
            i1 = i;
        }
    }
    if (best <= eps * eps) {
        throw std::invalid_argument("convex_hull_3d: all points coincide");
    }
    int i2 = -1;
    best = -1.0;
    const Vec3 axis = pts[i1] - pts[i0];
    for (int i = 0; i < n; ++i) {
        if (i == i0 || i == i1) continue;
        const Vec3 c = cross(axis, pts[i] - pts[i0]);
        const double m = dot(c, c);
        if (m > best) {
            best = m;
            i2 = i;
        }
    }
    if (i2 < 0 || std::sqrt(best) <= eps * norm(axis)) {
        throw std::invalid_argument("convex_hull_3d: points are collinear");
    }
    const Vec3 plane_n = cross(axis, pts[i2] - pts[i0]);
    const double plane_len = norm(plane_n);
    int i3 = -1;
    best = -1.0;
    for (int i = 0; i < n; ++i) {
        if (i == i0 || i == i1 || i == i2) continue;
        const double m = std::abs(dot(plane_n, pts[i] - pts[i0])) / plane_len;
        if (m > best) {
            best = m;
            i3 = i;
        }
    }
    if (i3 < 0 || best <= eps) {
        throw std::invalid_argument("convex_hull_3d: points are coplanar");
    }

    std::vector<Face> faces;
    {
        const Point3 centroid{(pts[i0].x + pts[i1].x + pts[i2].x + pts[i3].x) / 4.0,
                              (pts[i0].y + pts[i1].y + pts[i2].y + pts[i3].y) / 4.0,
                              (pts[i0].z + pts[i1].z + pts[i2].z + pts[i3].z) / 4.0};
        const int tet[4][3] = {{i0, i1, i2}, {i0, i1, i3}, {i0, i2, i3}, {i1, i2, i3}};
        for (auto& t : tet) {
            Face f = make_face(pts, t[0], t[1], t[2]);
            if (signed_dist(f, centroid) > 0.0) {
                f = make_face(pts, t[0], t[2], t[1]);
            }
            faces.push_back(f);
        }
    }

    for (int p = 0; p < n; ++p) {
        if (p == i0 || p == i1 || p == i2 || p == i3) continue;
        // Strictly visible faces.
        std::vector<int> visible;
        for (size_t fi = 0; fi < faces.size(); ++fi) {
            if (faces[fi].alive && signed_dist(faces[fi], pts[p]) > eps) {
                visible.push_back(static_cast<int>(fi));
            }
        }
        if (visible.empty()) continue;  // inside (or on) the current hull

        std::set<std::pair<int, int>> visible_edges;
        for (int fi : visible) {
            const Triangle& t = faces[fi].tri;
            visible_edges.insert({t.a, t.b});
            visible_edges.insert({t.b, t.c});
            visible_edges.insert({t.c, t.a});
        }
        // Horizon: directed edges of the visible region whose reverse is kept.
        std::vector<std::pair<int, int>> horizon;
        for (const auto& e : visible_edges) {
            if (!visible_edges.count({e.second, e.first})) horizon.push_back(e);
        }
        for (int fi : visible) faces[fi].alive = false;
        for (const auto& [u, v] : horizon) {
            faces.push_back(make_face(pts, u, v, p));
        }
    }

    std::vector<Triangle> out;
    for (const Face& f : faces) {
        if (f.alive) out.push_back(f.tri);
    }
    return out;
}

std::vector<Triangle> delaunay_2d(std::span<const Point3> pts) {
    const int n = static_cast<int>(pts.size());
    if (n < 3) {
        throw std::invalid_argument("delaunay_2d: need >= 3 points, got " +
                                    std::to_string(n));
    }
    // Center and scale to a unit box so the lifted squares stay well
    // conditioned (affine maps preserve the Delaunay property).
    double cx = 0.0, cy = 0.0;
    for (const Point3& p : pts) {
        cx += p.x;
        cy += p.y;
    }
    cx /= n;
    cy /= n;
    double ext = 0.0;
    for (const Point3& p : pts) {
        ext = std::max({ext, std::abs(p.x - cx), std::abs(p.y - cy)});
    }
    if (ext <= 0.0) throw std::invalid_argument("delaunay_2d: all points coincide");

    std::vector<Point3> lifted(n);
    for (int i = 0; i < n; ++i) {
        const double x = (pts[i].x - cx) / ext;
        const double y = (pts[i].y - cy) / ext;
        lifted[i] = {x, y, x * x + y * y};
    }
    std::vector<Triangle> hull;
    try {
        hull = convex_hull_3d(lifted);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("delaunay_2d: degenerate input (") +
                                    e.what() + ")");
    }
    // Lower hull faces (normal pointing down) are the Delaunay triangles.
    std::vector<Triangle> out;
    for (const Triangle& t : hull) {
        const Vec3 nrm = cross(lifted[t.b] - lifted[t.a], lifted[t.c] - lifted[t.a]);
        if (nrm.z < 0.0) {
            // Reorient counter-clockwise in the plane.
            out.push_back({t.a, t.c, t.b});
        }
    }
    if (out.empty()) {
        throw std::invalid_argument("delaunay_2d: no lower hull (collinear input?)");
    }
    return out;
}

std::vector<std::pair<int, int>> triangulation_edges(const std::vector<Triangle>& tris) {
    std::set<std::pair<int, int>> edges;
    for (const Triangle& t : tris) {
        edges.insert({std::min(t.a, t.b), std::max(t.a, t.b)});
        edges.insert({std::min(t.b, t.c), std::max(t.b, t.c)});
        edges.insert({std::min(t.c, t.a), std::max(t.c, t.a)});
    }
    return {edges.begin(), edges.end()};
}

namespace {

/// Signed solid angle of the spherical triangle (a, b, c).
double triangle_solid_angle(const Point3& a, const Point3& b, const Point3& c) {
    const double det = a.x * (b.y * c.z - b.z * c.y) - a.y * (b.x * c.z - b.z * c.x) +
                       a.z * (b.x * c.y - b.y * c.x);
    const double ab = a.x * b.x + a.y * b.y + a.z * b.z;
    const double bc = b.x * c.x + b.y * c.y + b.z * c.z;
    const double ca = c.x * a.x + c.y * a.y + c.z * a.z;
    return 2.0 * std::atan2(det, 1.0 + ab + bc + ca);
}

std::vector<std::vector<int>> incident_faces(int n_nodes,
                                             const std::vector<Triangle>& tris) {
    std::vector<std::vector<int>> inc(n_nodes);
    for (size_t f = 0; f < tris.size(); ++f) {
        inc[tris[f].a].push_back(static_cast<int>(f));
        inc[tris[f].b].push_back(static_cast<int>(f));
        inc[tris[f].c].push_back(static_cast<int>(f));
    }
    return inc;
}

}  // namespace

std::vector<double> spherical_voronoi_areas(std::span<const Point3> nodes,
                                            const std::vector<Triangle>& tris) {
    const int n = static_cast<int>(nodes.size());
    // Voronoi vertices: outward-oriented face circumcenters on the sphere.
    std::vector<Point3> cc(tris.size());
    for (size_t f = 0; f < tris.size(); ++f) {
        const Vec3 nrm =
            cross(nodes[tris[f].b] - nodes[tris[f].a], nodes[tris[f].c] - nodes[tris[f].a]);
        const double len = norm(nrm);
        if (len <= 0.0) {
            throw std::runtime_error("spherical_voronoi_areas: degenerate triangle");
        }
        cc[f] = {nrm.x / len, nrm.y / len, nrm.z / len};
    }
    const auto inc = incident_faces(n, tris);
    std::vector<double> areas(n, 0.0);
    for (int v = 0; v < n; ++v) {
        const auto& fs = inc[v];
        if (fs.size() < 3) {
            throw std::runtime_error("spherical_voronoi_areas: node " +
                                     std::to_string(v) + " has fewer than 3 faces");
        }
        // Order the cell vertices by angle in the tangent plane at the node.
        const Point3& p = nodes[v];
        const Vec3 ref = std::abs(p.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
        Vec3 e1 = cross(ref, Vec3{p.x, p.y, p.z});
        const double e1len = norm(e1);
        e1 = {e1.x / e1len, e1.y / e1len, e1.z / e1len};
        const Vec3 e2 = cross(Vec3{p.x, p.y, p.z}, e1);
        std::vector<std::pair<double, int>> ang;
        ang.reserve(fs.size());
        for (int f : fs) {
            const Vec3 d{cc[f].x, cc[f].y, cc[f].z};
            ang.emplace_back(std::atan2(dot(d, e2), dot(d, e1)), f);
        }
        std::sort(ang.begin(), ang.end());
        double area = 0.0;
        const Point3& first = cc[ang[0].second];
        for (size_t i = 1; i + 1 < ang.size(); ++i) {
            area += triangle_solid_angle(first, cc[ang[i].second], cc[ang[i + 1].second]);
        }
        areas[v] = std::abs(area);
    }
    return areas;
}

std::vector<double> planar_voronoi_areas(std::span<const Point3> nodes,
                                         const std::vector<Triangle>& tris) {
    const int n = static_cast<int>(nodes.size());
    // Planar circumcenters.
    std::vector<Point3> cc(tris.size());
    for (size_t f = 0; f < tris.size(); ++f) {
        const Point3& a = nodes[tris[f].a];
        const Point3& b = nodes[tris[f].b];
        const Point3& c = nodes[tris[f].c];
        const double d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
        if (d == 0.0) {
            throw std::runtime_error("planar_voronoi_areas: degenerate triangle");
        }
        const double a2 = a.x * a.x + a.y * a.y;
        const double b2 = b.x * b.x + b.y * b.y;
        const double c2 = c.x * c.x + c.y * c.y;
        cc[f] = {(a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d,
                 (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d, 0.0};
    }
    // Directed edge -> face map to find hull-boundary nodes.
    std::map<std::pair<int, int>, int> edge_face;
    for (size_t f = 0; f < tris.size(); ++f) {
        const Triangle& t = tris[f];
        edge_face[{t.a, t.b}] = static_cast<int>(f);
        edge_face[{t.b, t.c}] = static_cast<int>(f);
        edge_face[{t.c, t.a}] = static_cast<int>(f);
    }
    const auto inc = incident_faces(n, tris);
    std::vector<double> areas(n, 0.0);
    for (int v = 0; v < n; ++v) {
        std::vector<Point3> verts;
        bool boundary = false;
        for (int f : inc[v]) {
            verts.push_back(cc[f]);
            const Triangle& t = tris[f];
            const int vs[3] = {t.a, t.b, t.c};
            for (int e = 0; e < 3; ++e) {
                const int u = vs[e], w = vs[(e + 1) % 3];
                if (u != v && w != v) continue;
                if (!edge_face.count({w, u})) {
                    boundary = true;
                    verts.push_back({0.5 * (nodes[u].x + nodes[w].x),
                                     0.5 * (nodes[u].y + nodes[w].y), 0.0});
                }
            }
        }
        if (boundary) verts.push_back(nodes[v]);
        if (verts.size() < 3) continue;
        // Shoelace over vertices sorted by angle around the node.
        std::vector<std::pair<double, size_t>> ang(verts.size());
        for (size_t i = 0; i < verts.size(); ++i) {
            ang[i] = {std::atan2(verts[i].y - nodes[v].y, verts[i].x - nodes[v].x), i};
        }
        std::sort(ang.begin(), ang.end());
        double area = 0.0;
        for (size_t i = 0; i < ang.size(); ++i) {
            const Point3& p1 = verts[ang[i].second];
            const Point3& p2 = verts[ang[(i + 1) % ang.size()].second];
            area += p1.x * p2.y - p2.x * p1.y;
        }
        areas[v] = 0.5 * std::abs(area);
    }
    return areas;
}

}  // namespace njord::meshgraph
