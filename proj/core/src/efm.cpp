#include "njord/efm.hpp"

#include <atomic>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <stdexcept>
#include <thread>

#include "njord/rng.hpp"

namespace njord::efm {

using diffcore::CounterRng;
using diffcore::Mlp;
using diffcore::MlpSpec;
using gnn::LayerDims;
using gnn::LayerParams;
using meshgraph::GraphEdge;

std::string to_string(ConstraintMode mode) {
    switch (mode) {
        case ConstraintMode::kUnconstrained: return "unconstrained";
        case ConstraintMode::kClamp: return "clamp";
        case ConstraintMode::kClampDensity: return "clamp_density";
    }
    return "?";
}

ConstraintMode constraint_mode_from_string(const std::string& s) {
    if (s == "unconstrained") return ConstraintMode::kUnconstrained;
    if (s == "clamp") return ConstraintMode::kClamp;
    if (s == "clamp_density") return ConstraintMode::kClampDensity;
    throw std::invalid_argument("unknown constraint mode: " + s);
}

Tensor sample_latent(const GaussianParams& params, uint64_t seed, uint64_t member,
                     uint64_t step) {
    CounterRng rng(CounterRng::make_key(seed, member, step));
    Tensor z(params.mean.rows, params.mean.cols);
    for (size_t i = 0; i < z.data.size(); ++i) {
        const double sigma =
            params.unit_variance() ? 1.0 : std::exp(params.log_std.data[i]);
        z.data[i] = params.mean.data[i] + sigma * rng.normal();
    }
    return z;
}

namespace {

Tensor tensor_from(const std::vector<double>& v, int rows, int cols) {
    Tensor t(rows, cols);
    if (v.size() != t.data.size()) {
        throw std::invalid_argument("feature vector size mismatch");
    }
    t.data = v;
    return t;
}

std::vector<int> srcs(const std::vector<GraphEdge>& edges) {
    std::vector<int> out(edges.size());
    for (size_t i = 0; i < edges.size(); ++i) out[i] = edges[i].src;
    return out;
}

/// Flexible propagation restricted to receivers that actually have incoming
/// edges; uncovered receivers keep their representation.
Var flex_prop_subset(Binder& bind, const std::vector<GraphEdge>& edges, Var h_s,
                     Var h_r, Var e, const LayerParams& lp) {
    std::set<int> recv_set;
    for (const GraphEdge& ed : edges) recv_set.insert(ed.dst);
    if (static_cast<int>(recv_set.size()) == h_r.rows()) {
        return gnn::flexible_propagation_update(bind, edges, h_s, h_r, e, lp.edge_mlp,
                                                lp.agg_mlp);
    }
    std::vector<int> receivers(recv_set.begin(), recv_set.end());
    std::vector<int> remap(h_r.rows(), -1);
    for (size_t i = 0; i < receivers.size(); ++i) remap[receivers[i]] = static_cast<int>(i);
    std::vector<GraphEdge> sub(edges.size());
    for (size_t i = 0; i < edges.size(); ++i) sub[i] = {edges[i].src, remap[edges[i].dst]};
    Var h_sub = diffcore::gather_rows(h_r, receivers);
    Var out_sub = gnn::flexible_propagation_update(bind, sub, h_s, h_sub, e, lp.edge_mlp,
                                                   lp.agg_mlp);
    // Overwrite the covered rows: h_r + scatter(out_sub - h_sub).
    Var delta = diffcore::sub(out_sub, h_sub);
    std::vector<int> iota(receivers.size());
    for (size_t i = 0; i < iota.size(); ++i) iota[i] = static_cast<int>(i);
    if (h_s.cols() != h_r.cols()) {
        throw std::invalid_argument(
            "flex_prop_subset: partial coverage requires d_s == d_r");
    }
    return diffcore::add(h_r, diffcore::scatter_sum(delta, receivers, iota, h_r.rows()));
}

}  // namespace

Var constrained_update(Var x_prev, Var residual, const domain::ChannelRegistry& reg,
                       ConstraintMode mode, double eps_bound) {
    if (x_prev.cols() != reg.size() || residual.cols() != reg.size()) {
        throw std::invalid_argument("constrained_update: channel width mismatch");
    }
    std::vector<Var> cols;
    cols.reserve(reg.size());
    for (int c = 0; c < reg.size(); ++c) {
        const domain::ChannelSpec& ch = reg[c];
        Var xc = diffcore::slice_cols(x_prev, c, c + 1);
        Var rc = diffcore::slice_cols(residual, c, c + 1);
        const bool clamped = mode != ConstraintMode::kUnconstrained &&
                             (ch.lower.has_value() || ch.upper.has_value()) &&
                             !ch.is_density;
        if (clamped && ch.lower && ch.upper) {
            const double lo = *ch.lower, hi = *ch.upper;
            const double eps = std::min(eps_bound, 0.25 * (hi - lo));
            Var inside = diffcore::clamp_op(xc, lo + eps, hi - eps);
            Var latent = diffcore::bounded_to_latent(inside, lo, hi);
            cols.push_back(
                diffcore::latent_to_bounded(diffcore::add(latent, rc), lo, hi));
        } else if (clamped && ch.lower) {
            const double lo = *ch.lower;
            Var inside =
                diffcore::clamp_op(xc, lo + eps_bound, std::numeric_limits<double>::max());
            Var latent = diffcore::lower_to_latent(inside, lo);
            cols.push_back(diffcore::latent_to_lower(diffcore::add(latent, rc), lo));
        } else if (clamped && ch.upper) {
            // Upper bound only: mirror the lower-bound map through negation.
            const double hi = *ch.upper;
            Var inside = diffcore::clamp_op(
                xc, std::numeric_limits<double>::lowest(), hi - eps_bound);
            Var latent = diffcore::lower_to_latent(diffcore::neg(inside), -hi);
            cols.push_back(diffcore::neg(
                diffcore::latent_to_lower(diffcore::add(latent, rc), -hi)));
        } else {
            cols.push_back(diffcore::add(xc, diffcore::scale(rc, ch.stdev)));
        }
    }
    return diffcore::concat_cols(cols);
}

Var density_feedback(Var x_pred, const domain::ChannelRegistry& reg,
                     ConstraintMode mode, double threshold) {
    const int d_idx = reg.density_index();
    if (mode != ConstraintMode::kClampDensity || d_idx < 0) return x_pred;
    const domain::ChannelSpec& dch = reg[d_idx];
    const Tensor& v = x_pred.value();
    const int n = v.rows;
    Tensor keep(n, 1);
    for (int i = 0; i < n; ++i) {
        const double logit = (v.at(i, d_idx) - dch.mean) / dch.stdev;
        const double s = 1.0 / (1.0 + std::exp(-logit));
        keep.at(i, 0) = (s < threshold) ? 0.0 : 1.0;
    }
    std::vector<Var> cols;
    cols.reserve(reg.size());
    for (int c = 0; c < reg.size(); ++c) {
        const domain::ChannelSpec& ch = reg[c];
        Var xc = diffcore::slice_cols(x_pred, c, c + 1);
        if (ch.is_density) {
            cols.push_back(x_pred.graph->constant(keep));
        } else if (ch.lower.has_value() || ch.upper.has_value()) {
            cols.push_back(diffcore::mul_const(xc, keep));
        } else {
            cols.push_back(xc);
        }
    }
    return diffcore::concat_cols(cols);
}

Forecaster::Forecaster(ModelConfig cfg, const meshgraph::HierarchicalGraph& graph,
                       const domain::OceanGrid& grid,
                       domain::ChannelRegistry state_registry,
                       domain::ChannelRegistry forcing_registry,
                       std::optional<domain::BoundarySequence> boundary_template)
    : cfg_(cfg),
      graph_(&graph),
      state_reg_(std::move(state_registry)),
      forcing_reg_(std::move(forcing_registry)) {
    if (graph.n_levels() < 1) throw std::invalid_argument("forecaster: empty graph");
    if (graph.n_grid != grid.n()) {
        throw std::invalid_argument("forecaster: graph couplings built for n_grid=" +
                                    std::to_string(graph.n_grid) + ", grid has " +
                                    std::to_string(grid.n()));
    }

    // Static features, standardized except the already-bounded sin/cos pairs.
    const int n = grid.n();
    const int s = grid.n_static();
    static_feat_ = Tensor(n, s);
    int col = 0;
    for (const auto& [name, vals] : grid.static_fields) {
        const bool periodic = name.rfind("sin_", 0) == 0 || name.rfind("cos_", 0) == 0;
        double mean = 0.0, sd = 1.0;
        if (!periodic) {
            double sum = 0.0, sq = 0.0;
            for (double v : vals) {
                sum += v;
                sq += v * v;
            }
            mean = sum / n;
            sd = std::sqrt(std::max(0.0, sq / n - mean * mean));
            if (!(sd > 0.0)) sd = 1.0;
        }
        for (int i = 0; i < n; ++i) static_feat_.at(i, col) = (vals[i] - mean) / sd;
        ++col;
    }

    const int nf = graph.node_feat_width();
    const int ef = graph.edge_feat_width();
    for (int l = 0; l < graph.n_levels(); ++l) {
        const auto& level = graph.levels[l];
        mesh_node_feat_.push_back(
            tensor_from(level.node_features, static_cast<int>(level.nodes.size()), nf));
        same_edge_feat_.push_back(
            tensor_from(level.edge_features, static_cast<int>(level.edges.size()), ef));
    }
    for (int l = 0; l + 1 < graph.n_levels(); ++l) {
        up_edge_feat_.push_back(tensor_from(graph.up_edge_features[l],
                                            static_cast<int>(graph.up_edges[l].size()),
                                            ef));
        down_edge_feat_.push_back(
            tensor_from(graph.down_edge_features[l],
                        static_cast<int>(graph.down_edges[l].size()), ef));
    }
    g2m_feat_ = tensor_from(graph.g2m_features, static_cast<int>(graph.g2m_edges.size()),
                            ef);
    m2g_feat_ = tensor_from(graph.m2g_features, static_cast<int>(graph.m2g_edges.size()),
                            ef);

    if (cfg_.use_boundary_encoder) {
        if (!boundary_template.has_value()) {
            throw std::invalid_argument(
                "forecaster: boundary encoder enabled but no boundary data");
        }
        has_boundary_ = true;
        boundary_reg_ = boundary_template->data.registry;
        // Boundary-to-mesh edges with the g2m radius rule against level 0.
        const auto& level0 = graph.levels[0];
        meshgraph::KdTree3 mesh_tree(level0.nodes);
        const double radius = graph.ccfg.g2m_radius_factor * graph.d_m;
        std::vector<meshgraph::Point3> bpts(boundary_template->points.size());
        if (graph.regional) {
            for (size_t i = 0; i < bpts.size(); ++i) {
                bpts[i] = {boundary_template->x_m[i], boundary_template->y_m[i], 0.0};
            }
        } else {
            for (size_t i = 0; i < bpts.size(); ++i) {
                bpts[i] = {boundary_template->cart[i].x, boundary_template->cart[i].y,
                           boundary_template->cart[i].z};
            }
        }
        std::vector<double> feat;
        for (int i = 0; i < static_cast<int>(bpts.size()); ++i) {
            auto in_radius = mesh_tree.within_radius(bpts[i], radius);
            if (in_radius.empty()) in_radius.push_back(mesh_tree.nearest(bpts[i]));
            for (int m : in_radius) {
                b2m_edges_.push_back({i, m});
                const auto& mn = level0.nodes[m];
                const double dx = mn.x - bpts[i].x;
                const double dy = mn.y - bpts[i].y;
                const double dz = mn.z - bpts[i].z;
                feat.push_back(std::sqrt(dx * dx + dy * dy + dz * dz) /
                               graph.norm_longest_edge);
                feat.push_back(dx / graph.norm_longest_edge);
                feat.push_back(dy / graph.norm_longest_edge);
                if (!graph.regional) feat.push_back(dz / graph.norm_longest_edge);
            }
        }
        b2m_feat_ = tensor_from(feat, static_cast<int>(b2m_edges_.size()), ef);
        std::set<int> recv;
        for (const GraphEdge& e : b2m_edges_) recv.insert(e.dst);
        b2m_receivers_.assign(recv.begin(), recv.end());
        std::vector<int> remap(level0.nodes.size(), -1);
        for (size_t i = 0; i < b2m_receivers_.size(); ++i) {
            remap[b2m_receivers_[i]] = static_cast<int>(i);
        }
        b2m_sub_edges_.resize(b2m_edges_.size());
        for (size_t i = 0; i < b2m_edges_.size(); ++i) {
            b2m_sub_edges_[i] = {b2m_edges_[i].src, remap[b2m_edges_[i].dst]};
        }
    }
}

int Forecaster::grid_input_width(NetKind kind) const {
    const int c = state_reg_.size();
    const int f = forcing_reg_.size();
    const int s = static_feat_.cols;
    return (kind == NetKind::kPosterior ? 3 * c : 2 * c) + 3 * f + s;
}

std::string Forecaster::level_tag(const char* base, int l) const {
    return cfg_.share_level_params ? std::string(base) + ".shared"
                                   : std::string(base) + ".l" + std::to_string(l);
}

namespace {

struct NetPieces {
    Mlp grid_emb;
    std::vector<Mlp> mesh_emb, same_edge_emb, up_edge_emb;
    Mlp g2m_edge_emb;
    LayerParams g2m;
    Mlp proj_in;
    std::vector<LayerParams> up_pn, same_in_up;
    // boundary
    std::optional<Mlp> bnd_emb;
    std::optional<Mlp> b2m_edge_emb;
    std::optional<LayerParams> b2m;
};

}  // namespace

/// Builds the MLP/layer descriptors for one network ("f", "prior", "post").
/// Parameter names are derived from the prefix, so descriptors are cheap to
/// rebuild and always consistent with init_params.
static NetPieces make_net(const std::string& net, const ModelConfig& cfg, int L,
                          int node_feat, int edge_feat, int grid_in, int boundary_in,
                          bool has_boundary,
                          const std::function<std::string(const char*, int)>& tag) {
    const bool z = cfg.zero_init_all;
    NetPieces p;
    p.grid_emb = Mlp(net + ".grid_emb",
                     MlpSpec{grid_in, cfg.d_g, cfg.d_g, cfg.n_mlp_hidden, true, z});
    for (int l = 0; l < L; ++l) {
        const int out = (l == 0) ? cfg.d_g : cfg.d_z;
        p.mesh_emb.emplace_back(net + ".mesh_emb.l" + std::to_string(l),
                                MlpSpec{node_feat, out, out, cfg.n_mlp_hidden, true, z});
        p.same_edge_emb.emplace_back(
            net + ".same_edge_emb.l" + std::to_string(l),
            MlpSpec{edge_feat, cfg.d_z, cfg.d_z, cfg.n_mlp_hidden, true, z});
    }
    for (int l = 0; l + 1 < L; ++l) {
        p.up_edge_emb.emplace_back(
            net + ".up_edge_emb.l" + std::to_string(l),
            MlpSpec{edge_feat, cfg.d_z, cfg.d_z, cfg.n_mlp_hidden, true, z});
        p.up_pn.push_back(LayerParams::propagation(net + "." + tag("up_pn", l), cfg.d_z,
                                                   cfg.n_mlp_hidden, z));
    }
    for (int l = 0; l < L; ++l) {
        p.same_in_up.push_back(LayerParams::interaction(net + "." + tag("same_in_up", l),
                                                        cfg.d_z, cfg.n_mlp_hidden, z));
    }
    p.g2m_edge_emb = Mlp(net + ".g2m_edge_emb",
                         MlpSpec{edge_feat, cfg.d_e, cfg.d_e, cfg.n_mlp_hidden, true, z});
    p.g2m = LayerParams::flexible_propagation(net + ".g2m",
                                              LayerDims{cfg.d_g, cfg.d_g, cfg.d_e},
                                              cfg.n_mlp_hidden, z);
    p.proj_in = Mlp(net + ".proj_in", MlpSpec{cfg.d_g, cfg.d_z, 0, 0, false, z});
    if (has_boundary) {
        p.bnd_emb = Mlp(net + ".bnd_emb",
                        MlpSpec{boundary_in, cfg.d_g, cfg.d_g, cfg.n_mlp_hidden, true, z});
        p.b2m_edge_emb = Mlp(net + ".b2m_edge_emb",
                             MlpSpec{edge_feat, cfg.d_e, cfg.d_e, cfg.n_mlp_hidden, true, z});
        p.b2m = LayerParams::flexible_propagation(
            net + ".b2m", LayerDims{cfg.d_g, cfg.d_g, cfg.d_e}, cfg.n_mlp_hidden, z);
    }
    return p;
}

void Forecaster::init_params(ParamSet& params) const {
    CounterRng rng(CounterRng::make_key(cfg_.init_seed, 0x6d6f64656cULL));
    const int L = graph_->n_levels();
    auto tag = [this](const char* base, int l) { return level_tag(base, l); };
    const int boundary_in = has_boundary_ ? 3 * boundary_reg_.size() : 0;

    auto init_net = [&](const std::string& net, NetKind kind) {
        NetPieces p = make_net(net, cfg_, L, graph_->node_feat_width(),
                               graph_->edge_feat_width(), grid_input_width(kind),
                               boundary_in, has_boundary_, tag);
        p.grid_emb.init(params, rng);
        for (int l = 0; l < L; ++l) {
            p.mesh_emb[l].init(params, rng);
            p.same_edge_emb[l].init(params, rng);
        }
        for (int l = 0; l + 1 < L; ++l) {
            p.up_edge_emb[l].init(params, rng);
            if (!cfg_.share_level_params || l == 0) p.up_pn[l].init(params, rng);
        }
        for (int l = 0; l < L; ++l) {
            if (!cfg_.share_level_params || l == 0) p.same_in_up[l].init(params, rng);
        }
        p.g2m_edge_emb.init(params, rng);
        p.g2m.init(params, rng);
        p.proj_in.init(params, rng);
        if (has_boundary_) {
            p.bnd_emb->init(params, rng);
            p.b2m_edge_emb->init(params, rng);
            p.b2m->init(params, rng);
        }
    };
    init_net("f", NetKind::kForecaster);
    init_net("prior", NetKind::kPrior);
    init_net("post", NetKind::kPosterior);

    // Decoder-side pieces (forecaster only).
    const bool z = cfg_.zero_init_all;
    for (int l = 0; l + 1 < L; ++l) {
        Mlp("f.down_edge_emb.l" + std::to_string(l),
            MlpSpec{graph_->edge_feat_width(), cfg_.d_z, cfg_.d_z, cfg_.n_mlp_hidden,
                    true, z})
            .init(params, rng);
        if (!cfg_.share_level_params || l == 0) {
            LayerParams::propagation("f." + level_tag("down_pn", l), cfg_.d_z,
                                     cfg_.n_mlp_hidden, z)
                .init(params, rng);
        }
    }
    for (int l = 0; l + 1 < L; ++l) {
        if (!cfg_.share_level_params || l == 0) {
            LayerParams::interaction("f." + level_tag("same_in_down", l), cfg_.d_z,
                                     cfg_.n_mlp_hidden, z)
                .init(params, rng);
        }
    }
    for (int k = 0; k < cfg_.n_processor_layers; ++k) {
        LayerParams::interaction("f.proc.k" + std::to_string(k), cfg_.d_z,
                                 cfg_.n_mlp_hidden, z)
            .init(params, rng);
    }
    Mlp("f.m2g_edge_emb", MlpSpec{graph_->edge_feat_width(), cfg_.d_e, cfg_.d_e,
                                  cfg_.n_mlp_hidden, true, z})
        .init(params, rng);
    LayerParams::flexible_interaction("f.m2g", LayerDims{cfg_.d_g, cfg_.d_g, cfg_.d_e},
                                      cfg_.n_mlp_hidden, z)
        .init(params, rng);
    Mlp("f.proj_out", MlpSpec{cfg_.d_z, cfg_.d_g, 0, 0, false, z}).init(params, rng);
    // Zero-initialized heads: persistence at-init and a standard-normal prior.
    Mlp("f.decoder_head", MlpSpec{cfg_.d_g, state_reg_.size(), cfg_.d_g,
                                  cfg_.n_mlp_hidden, false, true})
        .init(params, rng);
    Mlp("prior.readout", MlpSpec{cfg_.d_z, cfg_.d_z, cfg_.d_z, cfg_.n_mlp_hidden, false,
                                 true})
        .init(params, rng);
    Mlp("post.readout", MlpSpec{cfg_.d_z, 2 * cfg_.d_z, cfg_.d_z, cfg_.n_mlp_hidden,
                                false, true})
        .init(params, rng);
}

Var Forecaster::standardized(Binder& bind, Var physical,
                             const domain::ChannelRegistry& reg) const {
    Tensor neg_mean(1, reg.size());
    std::vector<double> inv_std(reg.size());
    for (int c = 0; c < reg.size(); ++c) {
        if (!(reg[c].stdev > 0.0)) {
            throw std::invalid_argument("channel " + reg[c].name +
                                        " has non-positive std");
        }
        neg_mean.at(0, c) = -reg[c].mean;
        inv_std[c] = 1.0 / reg[c].stdev;
    }
    Var centered = diffcore::add_rowvec(physical, bind.graph().constant(neg_mean));
    return diffcore::scale_cols(centered, inv_std);
}

Var Forecaster::embed_grid_inputs(Binder& bind, const StepInputs& in, NetKind kind,
                                  std::optional<Var> x_target) const {
    const std::string net = kind == NetKind::kForecaster
                                ? "f"
                                : (kind == NetKind::kPrior ? "prior" : "post");
    if (kind == NetKind::kPosterior && !x_target.has_value()) {
        throw std::invalid_argument("posterior requires the target state");
    }
    std::vector<Var> parts{standardized(bind, in.x_prev2, state_reg_),
                           standardized(bind, in.x_prev1, state_reg_)};
    if (kind == NetKind::kPosterior) {
        parts.push_back(standardized(bind, *x_target, state_reg_));
    }
    parts.push_back(standardized(bind, in.f_prev2, forcing_reg_));
    parts.push_back(standardized(bind, in.f_prev1, forcing_reg_));
    parts.push_back(standardized(bind, in.f_cur, forcing_reg_));
    parts.push_back(bind.graph().constant(static_feat_));
    Var stacked = diffcore::concat_cols(parts);
    Mlp emb(net + ".grid_emb", MlpSpec{grid_input_width(kind), cfg_.d_g, cfg_.d_g,
                                       cfg_.n_mlp_hidden, true, cfg_.zero_init_all});
    return emb.apply(bind, stacked);
}

Var Forecaster::encode_to_top(Binder& bind, const std::string& net, const StepInputs& in,
                              NetKind kind, std::optional<Var> x_target,
                              std::vector<Var>* same_edge_state,
                              std::vector<Var>* level_state, Var* grid_emb_out) const {
    const int L = graph_->n_levels();
    auto tag = [this](const char* base, int l) { return level_tag(base, l); };
    NetPieces p = make_net(net, cfg_, L, graph_->node_feat_width(),
                           graph_->edge_feat_width(), grid_input_width(kind),
                           has_boundary_ ? 3 * boundary_reg_.size() : 0, has_boundary_,
                           tag);

    Var grid_emb = embed_grid_inputs(bind, in, kind, x_target);
    if (grid_emb_out) *grid_emb_out = grid_emb;
    if (level_state) level_state->clear();
    if (same_edge_state) same_edge_state->clear();

    Var mesh0 = p.mesh_emb[0].apply(bind, bind.graph().constant(mesh_node_feat_[0]));
    Var e_g2m = p.g2m_edge_emb.apply(bind, bind.graph().constant(g2m_feat_));
    mesh0 = flex_prop_subset(bind, graph_->g2m_edges, grid_emb, mesh0, e_g2m, p.g2m);

    if (has_boundary_) {
        if (!in.b_prev2 || !in.b_prev1 || !in.b_cur) {
            throw std::invalid_argument("boundary encoder enabled but a boundary frame "
                                        "is missing");
        }
        std::vector<Var> bparts{standardized(bind, *in.b_prev2, boundary_reg_),
                                standardized(bind, *in.b_prev1, boundary_reg_),
                                standardized(bind, *in.b_cur, boundary_reg_)};
        Var bnd = p.bnd_emb->apply(bind, diffcore::concat_cols(bparts));
        Var e_b2m = p.b2m_edge_emb->apply(bind, bind.graph().constant(b2m_feat_));
        mesh0 = flex_prop_subset(bind, b2m_edges_, bnd, mesh0, e_b2m, *p.b2m);
    }

    std::vector<Var> h(L, Var{});
    std::vector<Var> e_same(L, Var{});
    h[0] = p.proj_in.apply(bind, mesh0);
    for (int l = 0; l < L; ++l) {
        e_same[l] =
            p.same_edge_emb[l].apply(bind, bind.graph().constant(same_edge_feat_[l]));
    }
    auto same_layer = [&](int l, const LayerParams& lp) {
        if (graph_->levels[l].edges.empty()) return;
        auto [hn, en] = gnn::interaction_update(bind, graph_->levels[l].edges, h[l], h[l],
                                                e_same[l], lp.edge_mlp, lp.agg_mlp);
        h[l] = hn;
        e_same[l] = en;
    };
    same_layer(0, p.same_in_up[0]);
    for (int l = 0; l + 1 < L; ++l) {
        Var e_up = p.up_edge_emb[l].apply(bind, bind.graph().constant(up_edge_feat_[l]));
        Var target = p.mesh_emb[l + 1].apply(
            bind, bind.graph().constant(mesh_node_feat_[l + 1]));
        h[l + 1] = gnn::propagation_update(bind, graph_->up_edges[l], h[l], target, e_up,
                                           p.up_pn[l].edge_mlp, p.up_pn[l].agg_mlp);
        same_layer(l + 1, p.same_in_up[l + 1]);
    }
    if (level_state) *level_state = h;
    if (same_edge_state) *same_edge_state = e_same;
    return h[L - 1];
}

GaussianVars Forecaster::latent_gaussian(Binder& bind, NetKind kind,
                                         const StepInputs& in,
                                         std::optional<Var> x_target) const {
    if (kind == NetKind::kForecaster) {
        throw std::invalid_argument("latent_gaussian expects prior or posterior");
    }
    const std::string net = kind == NetKind::kPrior ? "prior" : "post";
    Var top = encode_to_top(bind, net, in, kind, x_target, nullptr, nullptr, nullptr);
    if (kind == NetKind::kPrior) {
        Mlp readout("prior.readout", MlpSpec{cfg_.d_z, cfg_.d_z, cfg_.d_z,
                                             cfg_.n_mlp_hidden, false, true});
        return GaussianVars{readout.apply(bind, top), {}};
    }
    Mlp readout("post.readout", MlpSpec{cfg_.d_z, 2 * cfg_.d_z, cfg_.d_z,
                                        cfg_.n_mlp_hidden, false, true});
    Var both = readout.apply(bind, top);
    Var mean = diffcore::slice_cols(both, 0, cfg_.d_z);
    Var log_std = diffcore::clamp_op(diffcore::slice_cols(both, cfg_.d_z, 2 * cfg_.d_z),
                                     cfg_.logstd_min, cfg_.logstd_max);
    return GaussianVars{mean, log_std};
}

Var Forecaster::forecast_step(Binder& bind, const StepInputs& in, Var z_top) const {
    const int L = graph_->n_levels();
    if (z_top.rows() != top_nodes() || z_top.cols() != cfg_.d_z) {
        throw std::invalid_argument("forecast_step: latent sample must be " +
                                    std::to_string(top_nodes()) + "x" +
                                    std::to_string(cfg_.d_z));
    }
    std::vector<Var> h, e_same;
    Var grid_emb;
    encode_to_top(bind, "f", in, NetKind::kForecaster, {}, &e_same, &h, &grid_emb);

    // Latent injection at the coarsest level, then the processor stack.
    h[L - 1] = diffcore::add(h[L - 1], z_top);
    for (int k = 0; k < cfg_.n_processor_layers; ++k) {
        if (graph_->levels[L - 1].edges.empty()) break;
        LayerParams lp = LayerParams::interaction("f.proc.k" + std::to_string(k),
                                                  cfg_.d_z, cfg_.n_mlp_hidden,
                                                  cfg_.zero_init_all);
        auto [hn, en] = gnn::interaction_update(bind, graph_->levels[L - 1].edges,
                                                h[L - 1], h[L - 1], e_same[L - 1],
                                                lp.edge_mlp, lp.agg_mlp);
        h[L - 1] = hn;
        e_same[L - 1] = en;
    }

    for (int l = L - 2; l >= 0; --l) {
        Mlp down_emb("f.down_edge_emb.l" + std::to_string(l),
                     MlpSpec{graph_->edge_feat_width(), cfg_.d_z, cfg_.d_z,
                             cfg_.n_mlp_hidden, true, cfg_.zero_init_all});
        Var e_down = down_emb.apply(bind, bind.graph().constant(down_edge_feat_[l]));
        LayerParams pn = LayerParams::propagation("f." + level_tag("down_pn", l),
                                                  cfg_.d_z, cfg_.n_mlp_hidden,
                                                  cfg_.zero_init_all);
        h[l] = gnn::propagation_update(bind, graph_->down_edges[l], h[l + 1], h[l],
                                       e_down, pn.edge_mlp, pn.agg_mlp);
        LayerParams in_down = LayerParams::interaction("f." + level_tag("same_in_down", l),
                                                       cfg_.d_z, cfg_.n_mlp_hidden,
                                                       cfg_.zero_init_all);
        if (!graph_->levels[l].edges.empty()) {
            auto [hn, en] = gnn::interaction_update(bind, graph_->levels[l].edges, h[l],
                                                    h[l], e_same[l], in_down.edge_mlp,
                                                    in_down.agg_mlp);
            h[l] = hn;
            e_same[l] = en;
        }
    }

    Mlp proj_out("f.proj_out",
                 MlpSpec{cfg_.d_z, cfg_.d_g, 0, 0, false, cfg_.zero_init_all});
    Var mesh_out = proj_out.apply(bind, h[0]);
    Mlp m2g_emb("f.m2g_edge_emb", MlpSpec{graph_->edge_feat_width(), cfg_.d_e, cfg_.d_e,
                                          cfg_.n_mlp_hidden, true, cfg_.zero_init_all});
    Var e_m2g = m2g_emb.apply(bind, bind.graph().constant(m2g_feat_));
    LayerParams m2g = LayerParams::flexible_interaction(
        "f.m2g", LayerDims{cfg_.d_g, cfg_.d_g, cfg_.d_e}, cfg_.n_mlp_hidden,
        cfg_.zero_init_all);
    Var grid_out = gnn::flexible_interaction_update(bind, graph_->m2g_edges, mesh_out,
                                                    grid_emb, e_m2g, m2g.edge_mlp,
                                                    m2g.agg_mlp);
    Mlp head("f.decoder_head", MlpSpec{cfg_.d_g, state_reg_.size(), cfg_.d_g,
                                       cfg_.n_mlp_hidden, false, true});
    Var residual = head.apply(bind, grid_out);
    return constrained_update(in.x_prev1, residual, state_reg_, cfg_.constraint,
                              cfg_.eps_bound);
}

Var Forecaster::feedback_state(Var x_pred) const {
    return density_feedback(x_pred, state_reg_, cfg_.constraint,
                            cfg_.density_threshold);
}

Tensor Forecaster::state_slice(const domain::StateSequence& seq, int t) const {
    if (t < 0 || t >= seq.n_time) {
        throw std::out_of_range("state_slice: time " + std::to_string(t) +
                                " outside [0, " + std::to_string(seq.n_time) + ")");
    }
    Tensor out(seq.n_grid, seq.n_chan());
    for (int n = 0; n < seq.n_grid; ++n) {
        for (int c = 0; c < seq.n_chan(); ++c) out.at(n, c) = seq.at(t, n, c);
    }
    return out;
}

domain::ForecastFile Forecaster::rollout_ensemble(
    ParamSet& params, const domain::StateSequence& state,
    const domain::ForcingSequence& forcing, const domain::BoundarySequence* boundary,
    int init_t, int n_lead, int members, uint64_t seed, int n_threads) const {
    if (init_t < 1) throw std::invalid_argument("rollout needs two initial states");
    if (init_t + n_lead >= forcing.n_time) {
        throw std::invalid_argument("forcing horizon too short: need slices up to " +
                                    std::to_string(init_t + n_lead) + ", have " +
                                    std::to_string(forcing.n_time));
    }
    if (has_boundary_ && (boundary == nullptr ||
                          boundary->data.n_time < forcing.n_time)) {
        throw std::invalid_argument("boundary forcing horizon too short");
    }

    domain::ForecastFile fc;
    fc.registry = state_reg_;
    fc.n_members = members;
    fc.n_lead = n_lead;
    fc.n_grid = state.n_grid;
    fc.init_time = init_t;
    fc.seed = seed;
    fc.values.assign(static_cast<size_t>(members) * n_lead * state.n_grid *
                         state_reg_.size(),
                     0.0);

    auto run_member = [&](int m) {
        Tensor x2 = state_slice(state, init_t - 1);
        Tensor x1 = state_slice(state, init_t);
        for (int lead = 1; lead <= n_lead; ++lead) {
            const int t = init_t + lead;
            diffcore::Graph g;
            Binder bind(g, params);
            StepInputs in;
            in.x_prev2 = g.constant(x2);
            in.x_prev1 = g.constant(x1);
            in.f_prev2 = g.constant(state_slice(forcing, t - 2));
            in.f_prev1 = g.constant(state_slice(forcing, t - 1));
            in.f_cur = g.constant(state_slice(forcing, t));
            if (has_boundary_) {
                in.b_prev2 = g.constant(state_slice(boundary->data, t - 2));
                in.b_prev1 = g.constant(state_slice(boundary->data, t - 1));
                in.b_cur = g.constant(state_slice(boundary->data, t));
            }
            GaussianVars prior = latent_gaussian(bind, NetKind::kPrior, in);
            GaussianParams gp{prior.mean.value(), Tensor{}};
            Tensor z = sample_latent(gp, seed, static_cast<uint64_t>(m),
                                     static_cast<uint64_t>(lead));
            Var pred = forecast_step(bind, in, g.constant(z));
            Var emitted = feedback_state(pred);
            const Tensor& ev = emitted.value();
            for (int n = 0; n < state.n_grid; ++n) {
                for (int c = 0; c < state_reg_.size(); ++c) {
                    fc.at(m, lead - 1, n, c) = ev.at(n, c);
                }
            }
            x2 = x1;
            x1 = ev;
        }
    };

    const int threads = std::max(1, std::min(n_threads, members));
    if (threads == 1) {
        for (int m = 0; m < members; ++m) run_member(m);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&]() {
                int m;
                while ((m = next.fetch_add(1)) < members) run_member(m);
            });
        }
        for (auto& th : pool) th.join();
    }
    return fc;
}

}  // namespace njord::efm
