/**
 * @file efm.hpp
 * @brief Latent-variable ensemble forecaster: grid/mesh embedding, hierarchy
 *        sweeps with latent injection at the top level, prior/posterior
 *        networks, physically constrained state updates and autoregressive
 *        ensemble rollout.
 *
 * One-step wiring (decoder path):
 *   grid inputs -> grid embedder -> g2m flexible propagation -> level 0
 *   -> (boundary encoder, regional) -> linear d_g->d_z
 *   -> up sweep: propagation to level l+1, one interaction layer per level
 *   -> latent sample added at the top level
 *   -> processor stack (interaction layers) at the top level
 *   -> down sweep: propagation to level l, one interaction layer per level
 *   -> linear d_z->d_g -> m2g flexible interaction -> decoder head
 *   -> residual added to the previous state, constraints applied.
 * The prior and posterior networks reuse the encoder structure up to the top
 * level and read out Gaussian parameters there.
 */
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "njord/autodiff.hpp"
#include "njord/domain.hpp"
#include "njord/gnn.hpp"
#include "njord/meshgraph.hpp"
#include "njord/mlp.hpp"
#include "njord/optimizer.hpp"

namespace njord::efm {

using diffcore::Binder;
using diffcore::ParamSet;
using diffcore::Tensor;
using diffcore::Var;

enum class ConstraintMode { kUnconstrained, kClamp, kClampDensity };

std::string to_string(ConstraintMode mode);
ConstraintMode constraint_mode_from_string(const std::string& s);

struct ModelConfig {
    int d_g = 16;   // grid / bottom-level width
    int d_z = 32;   // processor width
    int d_e = 8;    // g2m/m2g coupling edge width
    int n_processor_layers = 2;
    int n_mlp_hidden = 1;
    ConstraintMode constraint = ConstraintMode::kClampDensity;
    bool use_boundary_encoder = false;
    bool share_level_params = false;  // share sweep layers across levels
    double eps_bound = 1e-4;          // inward nudge at exact bounds
    double logstd_min = -6.0;
    double logstd_max = 2.0;
    double density_threshold = 0.5;
    uint64_t init_seed = 0;
    bool zero_init_all = false;  // every MLP zero-initialized (diagnostics)
};

/// Gaussian over the top-level latent field. The prior has unit variance.
struct GaussianParams {
    Tensor mean;     // [V_top x d_z]
    Tensor log_std;  // empty => unit variance
    bool unit_variance() const { return log_std.size() == 0; }
};

struct GaussianVars {
    Var mean;
    std::optional<Var> log_std;
};

/// Z = mean + exp(log_std) * eps, with eps drawn from the counter stream
/// keyed by (seed, member, step). Bitwise reproducible.
Tensor sample_latent(const GaussianParams& params, uint64_t seed, uint64_t member,
                     uint64_t step);

enum class NetKind { kForecaster, kPrior, kPosterior };

/// Inputs for one prediction step, all in physical units. For single-step
/// training these are constants; in rollout training the state pair carries
/// gradients from earlier steps.
struct StepInputs {
    Var x_prev2, x_prev1;
    Var f_prev2, f_prev1, f_cur;
    std::optional<Var> b_prev2, b_prev1, b_cur;
};

/// Standalone constrained update (the per-channel bound handling):
/// bounded channels move through the smooth invertible maps, everything else
/// is a plain residual scaled by the channel std.
Var constrained_update(Var x_prev, Var residual, const domain::ChannelRegistry& reg,
                       ConstraintMode mode, double eps_bound);

/// Rollout feedback: below the density threshold (sigmoid of the
/// standardized density prediction), the density channel and every bounded
/// channel are set to exact zeros; above it the density channel is set to
/// exact one. No-op unless mode is kClampDensity or the registry lacks a
/// density channel.
Var density_feedback(Var x_pred, const domain::ChannelRegistry& reg,
                     ConstraintMode mode, double threshold);

class Forecaster {
public:
    Forecaster(ModelConfig cfg, const meshgraph::HierarchicalGraph& graph,
               const domain::OceanGrid& grid, domain::ChannelRegistry state_registry,
               domain::ChannelRegistry forcing_registry,
               std::optional<domain::BoundarySequence> boundary_template = {});

    /// Allocates and initializes every parameter group.
    void init_params(ParamSet& params) const;

    const ModelConfig& config() const { return cfg_; }
    const domain::ChannelRegistry& state_registry() const { return state_reg_; }
    int n_state_channels() const { return state_reg_.size(); }
    int n_forcing_channels() const { return forcing_reg_.size(); }
    int n_static_fields() const { return static_feat_.cols; }
    int grid_input_width(NetKind kind) const;
    int top_level() const { return graph_->n_levels() - 1; }
    int top_nodes() const {
        return static_cast<int>(graph_->levels[top_level()].nodes.size());
    }

    /// Concatenated standardized inputs -> grid embedding [N x d_g].
    Var embed_grid_inputs(Binder& bind, const StepInputs& in, NetKind kind,
                          std::optional<Var> x_target = {}) const;

    /// Gaussian latent parameters at the top mesh level. The posterior
    /// requires the target state; the prior ignores it.
    GaussianVars latent_gaussian(Binder& bind, NetKind kind, const StepInputs& in,
                                 std::optional<Var> x_target = {}) const;

    /// One decoded prediction (physical units, constraints applied; density
    /// channel raw). z_top is the latent sample at the top level.
    Var forecast_step(Binder& bind, const StepInputs& in, Var z_top) const;

    /// Feedback-constrained copy of a prediction (exact zeros where the
    /// density threshold clears ice).
    Var feedback_state(Var x_pred) const;

    /// Autoregressive M-member ensemble from prior samples. `state` must
    /// hold the two initialization slices at init_t-1 and init_t; forcing
    /// (and boundary, when present) must cover init_t-1 .. init_t+n_lead.
    /// Members are independent and may evaluate on n_threads threads.
    domain::ForecastFile rollout_ensemble(ParamSet& params,
                                          const domain::StateSequence& state,
                                          const domain::ForcingSequence& forcing,
                                          const domain::BoundarySequence* boundary,
                                          int init_t, int n_lead, int members,
                                          uint64_t seed, int n_threads = 1) const;

    /// Constant tensors for one step of a sequence (physical units).
    Tensor state_slice(const domain::StateSequence& seq, int t) const;

private:
    friend class StepBuilder;

    ModelConfig cfg_;
    const meshgraph::HierarchicalGraph* graph_;
    domain::ChannelRegistry state_reg_;
    domain::ChannelRegistry forcing_reg_;

    // Precomputed constants.
    Tensor static_feat_;                    // [N x S] standardized
    std::vector<Tensor> mesh_node_feat_;    // per level
    std::vector<Tensor> same_edge_feat_;    // per level
    std::vector<Tensor> up_edge_feat_, down_edge_feat_;
    Tensor g2m_feat_, m2g_feat_;
    // Boundary coupling (regional).
    bool has_boundary_ = false;
    domain::ChannelRegistry boundary_reg_;
    std::vector<meshgraph::GraphEdge> b2m_edges_;
    Tensor b2m_feat_;
    std::vector<int> b2m_receivers_;  // unique mesh receivers of b2m edges
    std::vector<meshgraph::GraphEdge> b2m_sub_edges_;  // dst remapped

    std::string level_tag(const char* base, int l) const;
    Var standardized(Binder& bind, Var physical, const domain::ChannelRegistry& reg) const;
    Var encode_to_top(Binder& bind, const std::string& net, const StepInputs& in,
                      NetKind kind, std::optional<Var> x_target,
                      std::vector<Var>* same_edge_state, std::vector<Var>* level_state,
                      Var* grid_emb_out) const;
};

}  // namespace njord::efm
