/**
 * @file objective.hpp
 * @brief Composite training objective: masked/weighted reconstruction,
 *        diagonal-Gaussian KL, the almost-fair CRPS estimator, the phase
 *        curriculum and the training loop.
 */
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "njord/domain.hpp"
#include "njord/efm.hpp"
#include "njord/optimizer.hpp"

namespace njord::objective {

using diffcore::Tensor;
using diffcore::Var;

/// Per-entry weights for an [N x C] prediction:
///   entry_weight(n,c) = lambda_var(c) * (w_l(c) / N_l(c)) * a_v(n)
/// with lambda the inverse pooled variance of one-step differences of the
/// channel's variable, w_l = 1/L_i for depth-resolved variables and 0.5 for
/// surface variables, and a_v the unit-mean cell area weight. crps_weight
/// replaces lambda with the inverse channel std (per-variable normalization).
struct LossWeights {
    Tensor entry_weight;  // [N x C]
    Tensor crps_weight;   // [N x C]
    std::vector<double> lambda_var;    // per channel
    std::vector<double> level_weight;  // per channel
    std::vector<int> n_valid;          // per channel

    /// valid_masks, when given, holds one 0/1 mask of length N per channel.
    static LossWeights build(const domain::ChannelRegistry& reg,
                             const domain::OceanGrid& grid,
                             const std::vector<std::vector<uint8_t>>* valid_masks = nullptr,
                             double variance_floor = 1e-8);
};

/// One-step weighted reconstruction: sum over entries of
/// entry_weight * l(pred - target), with l squared or absolute error.
Var weighted_reconstruction(Var pred, const Tensor& target, const LossWeights& weights,
                            bool squared = true);

/// KL(q || p) for diagonal Gaussians summed over all latent entries; p must
/// have unit variance (the prior).
Var kl_diagonal_gaussians(const efm::GaussianVars& q, const efm::GaussianVars& p);

/// Per-entry almost-fair CRPS over M ensemble members:
///   (1/M) sum |x_m - x| - (1-eps)/(2M(M-1)) sum |x_m - x_m'|, eps = (1-alpha)/M.
/// Requires M >= 2 and alpha in (0, 1].
Var afcrps(const std::vector<Var>& members, const Tensor& target, double alpha);

/// afCRPS reduced with the mask/area weighting and per-variable std
/// normalization (crps_weight).
Var afcrps_reduced(const std::vector<Var>& members, const Tensor& target, double alpha,
                   const LossWeights& weights);

struct Phase {
    int epochs = 0;
    double lambda_kl = 0.0;
    double lambda_crps = 0.0;
    int rollout_steps = 1;
};

struct LrSegment {
    enum class Kind { kCosine, kWarmupCosine, kConstant };
    Kind kind = Kind::kCosine;
    int start_epoch = 0;
    int n_epochs = 0;
    double lr_max = 1e-3;
    double lr_min = 1e-5;
    int warmup_epochs = 0;
    double lr_start = 1e-5;
};

struct TrainingConfig {
    double alpha = 0.95;
    int m_train = 2;  // prior-sampled forecasts for the CRPS term
    diffcore::AdamWConfig optimizer;
    std::vector<Phase> phases;
    std::vector<LrSegment> lr_segments;
    int steps_per_epoch = 50;
    uint64_t seed = 0;

    int total_epochs() const;
    void validate() const;
};

struct PhaseSettings {
    int phase_index = 0;
    double lambda_kl = 0.0;
    double lambda_crps = 0.0;
    int rollout_steps = 1;
    double lr = 0.0;
};

/// Piecewise-constant phase values and the scheduled learning rate for an
/// epoch. Throws when the epoch lies beyond the phase table.
PhaseSettings curriculum_phase(int epoch, const TrainingConfig& cfg);

/// Curricula mirroring the published schedules, expressed in epochs.
TrainingConfig regional_reference_curriculum();
TrainingConfig global_reference_curriculum();
/// Compact four-phase schedule for the desk-scale smoke runs
/// (steps_per_epoch * total epochs <= 2000 optimizer steps).
TrainingConfig desk_curriculum();

struct LossComponents {
    double recon = 0.0;
    double kl = 0.0;
    double crps = 0.0;
    double total = 0.0;
};

/// Window descriptor: predictions are made for t0+1 .. t0+rollout_steps.
struct Batch {
    const domain::StateSequence* state = nullptr;
    const domain::ForcingSequence* forcing = nullptr;
    const domain::BoundarySequence* boundary = nullptr;
    int t0 = 1;
};

/// Evaluates the composite loss (averaged over rollout steps): the
/// reconstruction uses one posterior sample per step, the KL compares
/// posterior and prior, and the CRPS term uses m_train independently rolled
/// prior forecasts. When grads_out is non-null, runs backward and fills
/// parameter gradients.
LossComponents total_loss(const efm::Forecaster& model, diffcore::ParamSet& params,
                          const Batch& batch, const LossWeights& weights,
                          double lambda_kl, double lambda_crps, int rollout_steps,
                          double alpha, int m_train, uint64_t step_seed,
                          std::map<std::string, Tensor>* grads_out);

struct TrainResult {
    int steps = 0;
    int rejected_steps = 0;
    LossComponents last;
};

/// Runs the full curriculum, writing one CSV row per optimizer step
/// (epoch, phase, recon, kl, crps, total, lr, wall-time seconds).
TrainResult train_model(const efm::Forecaster& model, diffcore::ParamSet& params,
                        const domain::Dataset& data, const TrainingConfig& cfg,
                        const LossWeights& weights, const std::string& log_csv_path);

}  // namespace njord::objective
