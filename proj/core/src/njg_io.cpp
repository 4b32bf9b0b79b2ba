// NJG graph serialization: text header with CRC-32 of the payload, then
// f64 coordinates, i32 edge indices and f32 features. Layout documented in
// docs/njg_format.md.
#include <zlib.h>

#include <sstream>
#include <stdexcept>

#include "block_io.hpp"
#include "njord/meshgraph.hpp"

namespace njord::meshgraph {

namespace {

using detail::BlockFileReader;
using detail::BlockFileWriter;
using detail::fmt_double;

std::vector<double> flatten_points(const std::vector<Point3>& pts) {
    std::vector<double> out;
    out.reserve(pts.size() * 3);
    for (const Point3& p : pts) {
        out.push_back(p.x);
        out.push_back(p.y);
        out.push_back(p.z);
    }
    return out;
}

std::vector<Point3> unflatten_points(const std::vector<double>& v) {
    if (v.size() % 3 != 0) throw std::runtime_error("coordinate block not divisible by 3");
    std::vector<Point3> out(v.size() / 3);
    for (size_t i = 0; i < out.size(); ++i) out[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
    return out;
}

std::vector<int> flatten_edges(const std::vector<GraphEdge>& edges) {
    std::vector<int> out;
    out.reserve(edges.size() * 2);
    for (const GraphEdge& e : edges) {
        out.push_back(e.src);
        out.push_back(e.dst);
    }
    return out;
}

std::vector<GraphEdge> unflatten_edges(const std::vector<int>& v) {
    if (v.size() % 2 != 0) throw std::runtime_error("edge block not divisible by 2");
    std::vector<GraphEdge> out(v.size() / 2);
    for (size_t i = 0; i < out.size(); ++i) out[i] = {v[2 * i], v[2 * i + 1]};
    return out;
}

uint32_t crc_of(const std::vector<char>& bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    return static_cast<uint32_t>(
        crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size())));
}

}  // namespace

void save_graph(const HierarchicalGraph& g, const std::string& path) {
    BlockFileWriter w;
    w.line("magic NJG1");
    w.line("version 1");
    w.line("regional " + std::to_string(g.regional ? 1 : 0));
    w.line("r0 " + fmt_double(g.hcfg.r0));
    w.line("r " + fmt_double(g.hcfg.r));
    w.line("n_levels " + std::to_string(g.hcfg.n_levels));
    w.line("seed " + std::to_string(g.hcfg.seed));
    w.line("kmeans_iters_max " + std::to_string(g.hcfg.kmeans_iters_max));
    w.line("kmeans_tol " + fmt_double(g.hcfg.kmeans_tol));
    w.line("g2m_radius_factor " + fmt_double(g.ccfg.g2m_radius_factor));
    w.line("m2g_k " + std::to_string(g.ccfg.m2g_k));
    w.line("max_edge_chord " + fmt_double(g.ccfg.max_edge_chord));
    w.line("max_edge_m " + fmt_double(g.ccfg.max_edge_m));
    w.line("d_m " + fmt_double(g.d_m));
    w.line("norm_longest_edge " + fmt_double(g.norm_longest_edge));
    w.line("g2m_fallback_used " + std::to_string(g.g2m_fallback_used ? 1 : 0));
    w.line("n_grid " + std::to_string(g.n_grid));
    {
        std::ostringstream sizes;
        sizes << "level_sizes";
        for (const MeshLevel& level : g.levels) sizes << " " << level.nodes.size();
        w.line(sizes.str());
    }
    for (int l = 0; l < g.n_levels(); ++l) {
        const std::string ls = std::to_string(l);
        w.add_f64("level" + ls + ".nodes", flatten_points(g.levels[l].nodes));
        w.add_i32("level" + ls + ".edges", flatten_edges(g.levels[l].edges));
        w.add_f32("level" + ls + ".node_features", g.levels[l].node_features);
        w.add_f32("level" + ls + ".edge_features", g.levels[l].edge_features);
    }
    for (size_t l = 0; l + 1 < g.levels.size(); ++l) {
        const std::string ls = std::to_string(l);
        w.add_i32("up" + ls + ".edges", flatten_edges(g.up_edges[l]));
        w.add_f32("up" + ls + ".edge_features", g.up_edge_features[l]);
        w.add_i32("down" + ls + ".edges", flatten_edges(g.down_edges[l]));
        w.add_f32("down" + ls + ".edge_features", g.down_edge_features[l]);
    }
    w.add_i32("g2m.edges", flatten_edges(g.g2m_edges));
    w.add_f32("g2m.edge_features", g.g2m_features);
    w.add_i32("m2g.edges", flatten_edges(g.m2g_edges));
    w.add_f32("m2g.edge_features", g.m2g_features);
    w.line("checksum " + std::to_string(crc_of(w.payload())));
    w.write(path);
}

HierarchicalGraph load_graph(const std::string& path) {
    BlockFileReader r(path);
    r.require_magic("NJG1");
    if (r.get("version") != "1") {
        throw std::runtime_error(path + ": unsupported NJG version " + r.get("version"));
    }
    const uint32_t expect = static_cast<uint32_t>(std::stoul(r.get("checksum")));
    const uint32_t actual = crc_of(r.payload());
    if (expect != actual) {
        throw std::runtime_error(path + ": checksum failure (header " +
                                 std::to_string(expect) + ", payload " +
                                 std::to_string(actual) + ")");
    }
    HierarchicalGraph g;
    g.regional = r.get("regional") == "1";
    g.hcfg.r0 = std::stod(r.get("r0"));
    g.hcfg.r = std::stod(r.get("r"));
    g.hcfg.n_levels = std::stoi(r.get("n_levels"));
    g.hcfg.seed = std::stoull(r.get("seed"));
    g.hcfg.kmeans_iters_max = std::stoi(r.get("kmeans_iters_max"));
    g.hcfg.kmeans_tol = std::stod(r.get("kmeans_tol"));
    g.ccfg.g2m_radius_factor = std::stod(r.get("g2m_radius_factor"));
    g.ccfg.m2g_k = std::stoi(r.get("m2g_k"));
    g.ccfg.max_edge_chord = std::stod(r.get("max_edge_chord"));
    g.ccfg.max_edge_m = std::stod(r.get("max_edge_m"));
    g.d_m = std::stod(r.get("d_m"));
    g.norm_longest_edge = std::stod(r.get("norm_longest_edge"));
    g.g2m_fallback_used = r.get("g2m_fallback_used") == "1";
    g.n_grid = std::stoi(r.get("n_grid"));

    std::vector<int> level_sizes;
    {
        std::istringstream ss(r.get("level_sizes"));
        int v;
        while (ss >> v) level_sizes.push_back(v);
    }
    if (static_cast<int>(level_sizes.size()) != g.hcfg.n_levels) {
        throw std::runtime_error(path + ": level_sizes does not match n_levels");
    }
    for (int l = 0; l < g.hcfg.n_levels; ++l) {
        const std::string ls = std::to_string(l);
        MeshLevel level;
        level.nodes = unflatten_points(r.f64_block("level" + ls + ".nodes"));
        if (static_cast<int>(level.nodes.size()) != level_sizes[l]) {
            throw std::runtime_error(path + ": level " + ls + " node count mismatch");
        }
        level.edges = unflatten_edges(r.i32_block("level" + ls + ".edges"));
        level.node_features = r.f32_block("level" + ls + ".node_features");
        level.edge_features = r.f32_block("level" + ls + ".edge_features");
        g.levels.push_back(std::move(level));
    }
    for (int l = 0; l + 1 < g.hcfg.n_levels; ++l) {
        const std::string ls = std::to_string(l);
        g.up_edges.push_back(unflatten_edges(r.i32_block("up" + ls + ".edges")));
        g.up_edge_features.push_back(r.f32_block("up" + ls + ".edge_features"));
        g.down_edges.push_back(unflatten_edges(r.i32_block("down" + ls + ".edges")));
        g.down_edge_features.push_back(r.f32_block("down" + ls + ".edge_features"));
    }
    g.g2m_edges = unflatten_edges(r.i32_block("g2m.edges"));
    g.g2m_features = r.f32_block("g2m.edge_features");
    g.m2g_edges = unflatten_edges(r.i32_block("m2g.edges"));
    g.m2g_features = r.f32_block("m2g.edge_features");
    return g;
}

}  // namespace njord::meshgraph
