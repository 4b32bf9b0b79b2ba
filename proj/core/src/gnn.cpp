#include "njord/gnn.hpp"

#include <stdexcept>
#include <string>

namespace njord::gnn {

namespace {

using diffcore::MlpSpec;

void split_edges(const std::vector<GraphEdge>& edges, std::vector<int>& src,
                 std::vector<int>& dst) {
    src.resize(edges.size());
    dst.resize(edges.size());
    for (size_t i = 0; i < edges.size(); ++i) {
        src[i] = edges[i].src;
        dst[i] = edges[i].dst;
    }
}

void check_widths(const Mlp& edge_mlp, const Mlp& agg_mlp, int d_s, int d_r, int d_e,
                  int msg_out, int agg_out, const char* kind) {
    if (edge_mlp.spec().in != d_e + d_s + d_r) {
        throw std::invalid_argument(std::string(kind) + ": edge MLP expects input " +
                                    std::to_string(edge_mlp.spec().in) + ", given " +
                                    std::to_string(d_e + d_s + d_r));
    }
    if (edge_mlp.spec().out != msg_out) {
        throw std::invalid_argument(std::string(kind) + ": edge MLP output must be " +
                                    std::to_string(msg_out));
    }
    if (agg_mlp.spec().in != msg_out + d_r || agg_mlp.spec().out != agg_out) {
        throw std::invalid_argument(std::string(kind) + ": aggregation MLP has shape " +
                                    std::to_string(agg_mlp.spec().in) + "->" +
                                    std::to_string(agg_mlp.spec().out) + ", expected " +
                                    std::to_string(msg_out + d_r) + "->" +
                                    std::to_string(agg_out));
    }
}

Var edge_messages(Binder& bind, Var h_s_g, Var h_r_g, Var e, const Mlp& edge_mlp) {
    return edge_mlp.apply(bind, diffcore::concat_cols(std::vector<Var>{e, h_s_g, h_r_g}));
}

}  // namespace

std::pair<Var, Var> interaction_update(Binder& bind, const std::vector<GraphEdge>& edges,
                                       Var h_s, Var h_r, Var e, const Mlp& edge_mlp,
                                       const Mlp& agg_mlp) {
    const int d = h_r.cols();
    check_widths(edge_mlp, agg_mlp, h_s.cols(), d, e.cols(), d, d, "interaction_update");
    std::vector<int> src, dst;
    split_edges(edges, src, dst);
    Var hs_g = diffcore::gather_rows(h_s, src);
    Var hr_g = diffcore::gather_rows(h_r, dst);
    Var etil = edge_messages(bind, hs_g, hr_g, e, edge_mlp);
    Var e_out = diffcore::add(e, etil);
    Var agg = diffcore::scatter_sum(etil, dst, src, h_r.rows());
    Var h_out = diffcore::add(
        h_r, agg_mlp.apply(bind, diffcore::concat_cols(std::vector<Var>{h_r, agg})));
    return {h_out, e_out};
}

Var propagation_update(Binder& bind, const std::vector<GraphEdge>& edges, Var h_s,
                       Var h_r, Var e, const Mlp& edge_mlp, const Mlp& agg_mlp) {
    const int d = h_r.cols();
    check_widths(edge_mlp, agg_mlp, h_s.cols(), d, e.cols(), d, d, "propagation_update");
    std::vector<int> src, dst;
    split_edges(edges, src, dst);
    Var hs_g = diffcore::gather_rows(h_s, src);
    Var hr_g = diffcore::gather_rows(h_r, dst);
    Var etil = diffcore::add(hs_g, edge_messages(bind, hs_g, hr_g, e, edge_mlp));
    Var htil = diffcore::scatter_mean(etil, dst, src, h_r.rows());
    Var h_out = diffcore::add(
        htil, agg_mlp.apply(bind, diffcore::concat_cols(std::vector<Var>{h_r, htil})));
    return h_out;
}

Var flexible_interaction_update(Binder& bind, const std::vector<GraphEdge>& edges,
                                Var h_s, Var h_r, Var e, const Mlp& edge_mlp,
                                const Mlp& agg_mlp) {
    const int d_r = h_r.cols();
    check_widths(edge_mlp, agg_mlp, h_s.cols(), d_r, e.cols(), d_r, d_r,
                 "flexible_interaction_update");
    std::vector<int> src, dst;
    split_edges(edges, src, dst);
    Var hs_g = diffcore::gather_rows(h_s, src);
    Var hr_g = diffcore::gather_rows(h_r, dst);
    Var etil = edge_messages(bind, hs_g, hr_g, e, edge_mlp);
    Var agg = diffcore::scatter_sum(etil, dst, src, h_r.rows());
    return diffcore::add(
        h_r, agg_mlp.apply(bind, diffcore::concat_cols(std::vector<Var>{h_r, agg})));
}

Var flexible_propagation_update(Binder& bind, const std::vector<GraphEdge>& edges,
                                Var h_s, Var h_r, Var e, const Mlp& edge_mlp,
                                const Mlp& agg_mlp) {
    const int d_s = h_s.cols();
    check_widths(edge_mlp, agg_mlp, d_s, h_r.cols(), e.cols(), d_s, d_s,
                 "flexible_propagation_update");
    std::vector<int> src, dst;
    split_edges(edges, src, dst);
    Var hs_g = diffcore::gather_rows(h_s, src);
    Var hr_g = diffcore::gather_rows(h_r, dst);
    Var etil = diffcore::add(hs_g, edge_messages(bind, hs_g, hr_g, e, edge_mlp));
    Var htil = diffcore::scatter_mean(etil, dst, src, h_r.rows());
    return diffcore::add(
        htil, agg_mlp.apply(bind, diffcore::concat_cols(std::vector<Var>{h_r, htil})));
}

LayerParams LayerParams::interaction(const std::string& prefix, int d, int n_hidden,
                                     bool zero_init) {
    return {Mlp(prefix + ".edge", MlpSpec{3 * d, d, d, n_hidden, true, zero_init}),
            Mlp(prefix + ".agg", MlpSpec{2 * d, d, d, n_hidden, true, zero_init})};
}

LayerParams LayerParams::propagation(const std::string& prefix, int d, int n_hidden,
                                     bool zero_init) {
    return interaction(prefix, d, n_hidden, zero_init);
}

LayerParams LayerParams::flexible_interaction(const std::string& prefix,
                                              const LayerDims& dims, int n_hidden,
                                              bool zero_init) {
    return {Mlp(prefix + ".edge", MlpSpec{dims.d_e + dims.d_s + dims.d_r, dims.d_r,
                                          dims.d_r, n_hidden, true, zero_init}),
            Mlp(prefix + ".agg", MlpSpec{2 * dims.d_r, dims.d_r, dims.d_r, n_hidden,
                                         true, zero_init})};
}

LayerParams LayerParams::flexible_propagation(const std::string& prefix,
                                              const LayerDims& dims, int n_hidden,
                                              bool zero_init) {
    return {Mlp(prefix + ".edge", MlpSpec{dims.d_e + dims.d_s + dims.d_r, dims.d_s,
                                          dims.d_s, n_hidden, true, zero_init}),
            Mlp(prefix + ".agg", MlpSpec{dims.d_s + dims.d_r, dims.d_s, dims.d_s,
                                         n_hidden, true, zero_init})};
}

void LayerParams::init(diffcore::ParamSet& params, diffcore::CounterRng& rng) const {
    edge_mlp.init(params, rng);
    agg_mlp.init(params, rng);
}

}  // namespace njord::gnn
