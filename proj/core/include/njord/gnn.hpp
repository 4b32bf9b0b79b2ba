/**
 * @file gnn.hpp
 * @brief Message-passing layers over graph edge lists: interaction and
 *        propagation updates, plus flexible-width variants that allow
 *        separate sender/receiver/edge dimensionalities.
 */
#pragma once

#include <utility>
#include <vector>

#include "njord/autodiff.hpp"
#include "njord/meshgraph.hpp"
#include "njord/mlp.hpp"

namespace njord::gnn {

using diffcore::Binder;
using diffcore::Mlp;
using diffcore::Var;
using meshgraph::GraphEdge;

/// Sender/receiver/edge widths for a flexible layer.
struct LayerDims {
    int d_s = 0;
    int d_r = 0;
    int d_e = 0;
};

/// Interaction update (homogeneous width d):
///   e~   = MLP_e(e, h_s, h_r)
///   e'   = e + e~
///   h_r' = h_r + MLP_a(h_r, sum_in e~)
/// Returns (H_R', E'). Receivers with no incoming edge aggregate zero.
std::pair<Var, Var> interaction_update(Binder& bind, const std::vector<GraphEdge>& edges,
                                       Var h_s, Var h_r, Var e, const Mlp& edge_mlp,
                                       const Mlp& agg_mlp);

/// Propagation update (homogeneous width d):
///   e~   = h_s + MLP_e(e, h_s, h_r)
///   h~_r = mean_in e~
///   h_r' = h~_r + MLP_a(h_r, h~_r)
/// Throws when any receiver has no incoming edge (mean undefined).
Var propagation_update(Binder& bind, const std::vector<GraphEdge>& edges, Var h_s,
                       Var h_r, Var e, const Mlp& edge_mlp, const Mlp& agg_mlp);

/// Flexible interaction: MLP_e maps (d_e + d_s + d_r) -> d_r, MLP_a maps
/// (d_r + d_r) -> d_r; the edge residual is omitted and only H_R' returned.
Var flexible_interaction_update(Binder& bind, const std::vector<GraphEdge>& edges,
                                Var h_s, Var h_r, Var e, const Mlp& edge_mlp,
                                const Mlp& agg_mlp);

/// Flexible propagation: MLP_e maps (d_e + d_s + d_r) -> d_s, MLP_a maps
/// (d_s + d_r) -> d_s; output width d_s.
Var flexible_propagation_update(Binder& bind, const std::vector<GraphEdge>& edges,
                                Var h_s, Var h_r, Var e, const Mlp& edge_mlp,
                                const Mlp& agg_mlp);

/// Parameter bundle for one layer (edge + aggregation MLP).
struct LayerParams {
    Mlp edge_mlp;
    Mlp agg_mlp;

    static LayerParams interaction(const std::string& prefix, int d, int n_hidden,
                                   bool zero_init);
    static LayerParams propagation(const std::string& prefix, int d, int n_hidden,
                                   bool zero_init);
    static LayerParams flexible_interaction(const std::string& prefix,
                                            const LayerDims& dims, int n_hidden,
                                            bool zero_init);
    static LayerParams flexible_propagation(const std::string& prefix,
                                            const LayerDims& dims, int n_hidden,
                                            bool zero_init);
    void init(diffcore::ParamSet& params, diffcore::CounterRng& rng) const;
};

}  // namespace njord::gnn
