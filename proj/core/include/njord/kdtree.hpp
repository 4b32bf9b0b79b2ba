/**
 * @file kdtree.hpp
 * @brief 3-d kd-tree for nearest-neighbor, k-NN and radius queries.
 *
 * Works on raw xyz triples, so it serves both unit-sphere points (chord
 * metric) and planar projected points with z = 0. All ties are broken by
 * lowest point index, and tie candidates are never pruned, so query results
 * are exact and deterministic.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace njord::meshgraph {

struct Point3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

class KdTree3 {
public:
    explicit KdTree3(std::vector<Point3> pts) : pts_(std::move(pts)) {
        if (pts_.empty()) throw std::invalid_argument("KdTree3 on empty point set");
        idx_.resize(pts_.size());
        for (size_t i = 0; i < pts_.size(); ++i) idx_[i] = static_cast<int>(i);
        nodes_.reserve(2 * pts_.size());
        root_ = build(0, static_cast<int>(pts_.size()));
    }

    int size() const { return static_cast<int>(pts_.size()); }
    const Point3& point(int i) const { return pts_[i]; }

    /// Index of the closest point; ties resolved to the lowest index.
    int nearest(const Point3& q) const {
        int best = -1;
        double best_d2 = std::numeric_limits<double>::infinity();
        nearest_rec(root_, q, best, best_d2);
        return best;
    }

    /// k closest point indices ordered by (distance, index).
    std::vector<int> k_nearest(const Point3& q, int k) const {
        if (k < 1) throw std::invalid_argument("k_nearest: k must be >= 1");
        k = std::min<int>(k, size());
        std::vector<std::pair<double, int>> heap;  // max-heap on (d2, index)
        heap.reserve(k + 1);
        knn_rec(root_, q, k, heap);
        std::sort(heap.begin(), heap.end());
        std::vector<int> out(heap.size());
        for (size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].second;
        return out;
    }

    /// All indices with distance <= radius, sorted ascending by index.
    std::vector<int> within_radius(const Point3& q, double radius) const {
        std::vector<int> out;
        radius_rec(root_, q, radius * radius, out);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    struct Node {
        int point = -1;  // index into pts_
        int axis = 0;
        int left = -1, right = -1;
    };

    static double d2(const Point3& a, const Point3& b) {
        const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
        return dx * dx + dy * dy + dz * dz;
    }
    static double coord(const Point3& p, int axis) {
        return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
    }

    int build(int lo, int hi) {
        if (lo >= hi) return -1;
        // Split on the widest axis for balanced boxes.
        double mn[3] = {1e300, 1e300, 1e300}, mx[3] = {-1e300, -1e300, -1e300};
        for (int i = lo; i < hi; ++i) {
            const Point3& p = pts_[idx_[i]];
            const double c[3] = {p.x, p.y, p.z};
            for (int a = 0; a < 3; ++a) {
                mn[a] = std::min(mn[a], c[a]);
                mx[a] = std::max(mx[a], c[a]);
            }
        }
        int axis = 0;
        for (int a = 1; a < 3; ++a) {
            if (mx[a] - mn[a] > mx[axis] - mn[axis]) axis = a;
        }
        const int mid = (lo + hi) / 2;
        std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                         [&](int a, int b) {
                             const double ca = coord(pts_[a], axis);
                             const double cb = coord(pts_[b], axis);
                             if (ca != cb) return ca < cb;
                             return a < b;
                         });
        Node n;
        n.point = idx_[mid];
        n.axis = axis;
        nodes_.push_back(n);
        const int self = static_cast<int>(nodes_.size()) - 1;
        nodes_[self].left = build(lo, mid);
        nodes_[self].right = build(mid + 1, hi);
        return self;
    }

    void consider(int pi, const Point3& q, int& best, double& best_d2) const {
        const double d = d2(pts_[pi], q);
        if (d < best_d2 || (d == best_d2 && pi < best)) {
            best = pi;
            best_d2 = d;
        }
    }

    void nearest_rec(int node, const Point3& q, int& best, double& best_d2) const {
        if (node < 0) return;
        const Node& n = nodes_[node];
        consider(n.point, q, best, best_d2);
        const double delta = coord(q, n.axis) - coord(pts_[n.point], n.axis);
        const int near = delta <= 0.0 ? n.left : n.right;
        const int far = delta <= 0.0 ? n.right : n.left;
        nearest_rec(near, q, best, best_d2);
        if (delta * delta <= best_d2) nearest_rec(far, q, best, best_d2);
    }

    void knn_rec(int node, const Point3& q, int k,
                 std::vector<std::pair<double, int>>& heap) const {
        if (node < 0) return;
        const Node& n = nodes_[node];
        const std::pair<double, int> cand{d2(pts_[n.point], q), n.point};
        if (static_cast<int>(heap.size()) < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end());
        }
        const double delta = coord(q, n.axis) - coord(pts_[n.point], n.axis);
        const int near = delta <= 0.0 ? n.left : n.right;
        const int far = delta <= 0.0 ? n.right : n.left;
        knn_rec(near, q, k, heap);
        if (static_cast<int>(heap.size()) < k || delta * delta <= heap.front().first) {
            knn_rec(far, q, k, heap);
        }
    }

    void radius_rec(int node, const Point3& q, double r2, std::vector<int>& out) const {
        if (node < 0) return;
        const Node& n = nodes_[node];
        if (d2(pts_[n.point], q) <= r2) out.push_back(n.point);
        const double delta = coord(q, n.axis) - coord(pts_[n.point], n.axis);
        const int near = delta <= 0.0 ? n.left : n.right;
        const int far = delta <= 0.0 ? n.right : n.left;
        radius_rec(near, q, r2, out);
        if (delta * delta <= r2) radius_rec(far, q, r2, out);
    }

    std::vector<Point3> pts_;
    std::vector<int> idx_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace njord::meshgraph
