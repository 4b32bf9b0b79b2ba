#include "njord/objective.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "njord/rng.hpp"

namespace njord::objective {

using diffcore::Binder;
using diffcore::CounterRng;
using diffcore::Graph;
using efm::GaussianVars;
using efm::StepInputs;

LossWeights LossWeights::build(const domain::ChannelRegistry& reg,
                               const domain::OceanGrid& grid,
                               const std::vector<std::vector<uint8_t>>* valid_masks,
                               double variance_floor) {
    const int n = grid.n();
    const int c = reg.size();
    if (valid_masks && static_cast<int>(valid_masks->size()) != c) {
        throw std::invalid_argument("valid_masks must have one mask per channel");
    }
    LossWeights w;
    w.lambda_var.resize(c);
    w.level_weight.resize(c);
    w.n_valid.resize(c);

    // lambda: inverse pooled variance of one-step differences per variable.
    for (const std::string& var : reg.variables()) {
        const auto chans = reg.channels_of(var);
        double pooled = 0.0;
        for (int ci : chans) pooled += reg[ci].diff_std * reg[ci].diff_std;
        pooled /= static_cast<double>(chans.size());
        const double lambda = 1.0 / std::max(pooled, variance_floor);
        int depth_levels = 0;
        for (int ci : chans) {
            if (!reg[ci].surface) ++depth_levels;
        }
        for (int ci : chans) {
            w.lambda_var[ci] = lambda;
            w.level_weight[ci] =
                reg[ci].surface ? 0.5 : 1.0 / static_cast<double>(depth_levels);
        }
    }
    for (int ci = 0; ci < c; ++ci) {
        int n_valid = n;
        if (valid_masks) {
            n_valid = 0;
            for (uint8_t m : (*valid_masks)[ci]) n_valid += (m != 0);
        }
        if (n_valid == 0) {
            throw std::invalid_argument("channel " + reg[ci].name +
                                        " has no valid grid points");
        }
        w.n_valid[ci] = n_valid;
    }

    w.entry_weight = Tensor(n, c);
    w.crps_weight = Tensor(n, c);
    for (int i = 0; i < n; ++i) {
        for (int ci = 0; ci < c; ++ci) {
            const double valid =
                valid_masks ? static_cast<double>((*valid_masks)[ci][i]) : 1.0;
            const double base =
                (w.level_weight[ci] / w.n_valid[ci]) * grid.area_weight[i] * valid;
            w.entry_weight.at(i, ci) = w.lambda_var[ci] * base;
            const double sd = std::max(reg[ci].stdev, 1e-12);
            w.crps_weight.at(i, ci) = base / sd;
        }
    }
    return w;
}

Var weighted_reconstruction(Var pred, const Tensor& target, const LossWeights& weights,
                            bool squared) {
    if (pred.rows() != target.rows || pred.cols() != target.cols) {
        throw std::invalid_argument("weighted_reconstruction: shape mismatch");
    }
    Var err = diffcore::sub(pred, pred.graph->constant(target));
    Var per_entry = squared ? diffcore::square(err) : diffcore::abs_op(err);
    return diffcore::weighted_sum_all(per_entry, weights.entry_weight);
}

Var kl_diagonal_gaussians(const efm::GaussianVars& q, const efm::GaussianVars& p) {
    if (p.log_std.has_value()) {
        throw std::invalid_argument("kl_diagonal_gaussians: prior must be unit variance");
    }
    Var diff = diffcore::sub(q.mean, p.mean);
    Var sq_mean = diffcore::square(diff);
    if (!q.log_std.has_value()) {
        return diffcore::scale(diffcore::sum_all(sq_mean), 0.5);
    }
    Var two_log = diffcore::scale(*q.log_std, 2.0);
    Var var_q = diffcore::exp_op(two_log);
    // 0.5 * (sigma^2 + (mu_q - mu_p)^2 - 1 - log sigma^2)
    Var inner = diffcore::sub(diffcore::add(var_q, sq_mean), two_log);
    Var summed = diffcore::sum_all(inner);
    const double n = static_cast<double>(q.mean.value().size());
    return diffcore::scale(
        diffcore::add(summed, summed.graph->constant(Tensor::scalar(-n))), 0.5);
}

Var afcrps(const std::vector<Var>& members, const Tensor& target, double alpha) {
    const int m = static_cast<int>(members.size());
    if (m < 2) throw std::invalid_argument("afcrps requires at least 2 members");
    if (!(alpha > 0.0) || alpha > 1.0) {
        throw std::invalid_argument("afcrps: alpha must be in (0, 1]");
    }
    Graph* g = members[0].graph;
    Var tgt = g->constant(target);
    Var skill{};
    for (int i = 0; i < m; ++i) {
        Var term = diffcore::abs_op(diffcore::sub(members[i], tgt));
        skill = (i == 0) ? term : diffcore::add(skill, term);
    }
    skill = diffcore::scale(skill, 1.0 / m);

    Var spread{};
    bool first = true;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (i == j) continue;
            Var term = diffcore::abs_op(diffcore::sub(members[i], members[j]));
            spread = first ? term : diffcore::add(spread, term);
            first = false;
        }
    }
    const double eps = (1.0 - alpha) / m;
    const double coeff = (1.0 - eps) / (2.0 * m * (m - 1));
    return diffcore::sub(skill, diffcore::scale(spread, coeff));
}

Var afcrps_reduced(const std::vector<Var>& members, const Tensor& target, double alpha,
                   const LossWeights& weights) {
    return diffcore::weighted_sum_all(afcrps(members, target, alpha),
                                      weights.crps_weight);
}

int TrainingConfig::total_epochs() const {
    int total = 0;
    for (const Phase& p : phases) total += p.epochs;
    return total;
}

void TrainingConfig::validate() const {
    if (phases.empty()) throw std::invalid_argument("training config has no phases");
    if (!(alpha > 0.0) || alpha > 1.0) {
        throw std::invalid_argument("alpha must be in (0, 1]");
    }
    for (const Phase& p : phases) {
        if (p.epochs <= 0) throw std::invalid_argument("phase epochs must be positive");
        if (p.rollout_steps < 1) {
            throw std::invalid_argument("rollout_steps must be >= 1");
        }
        if (p.lambda_crps > 0.0 && m_train < 2) {
            throw std::invalid_argument("CRPS phases require m_train >= 2");
        }
    }
    int covered = 0;
    for (const LrSegment& s : lr_segments) {
        if (s.start_epoch != covered) {
            throw std::invalid_argument("lr segments must tile the epochs contiguously");
        }
        covered += s.n_epochs;
    }
    if (covered < total_epochs()) {
        throw std::invalid_argument("lr segments cover " + std::to_string(covered) +
                                    " epochs, need " + std::to_string(total_epochs()));
    }
    if (steps_per_epoch < 1) throw std::invalid_argument("steps_per_epoch must be >= 1");
}

PhaseSettings curriculum_phase(int epoch, const TrainingConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.total_epochs()) {
        throw std::out_of_range("epoch " + std::to_string(epoch) +
                                " beyond the phase table (" +
                                std::to_string(cfg.total_epochs()) + " epochs)");
    }
    PhaseSettings out;
    int acc = 0;
    for (size_t i = 0; i < cfg.phases.size(); ++i) {
        acc += cfg.phases[i].epochs;
        if (epoch < acc) {
            out.phase_index = static_cast<int>(i);
            out.lambda_kl = cfg.phases[i].lambda_kl;
            out.lambda_crps = cfg.phases[i].lambda_crps;
            out.rollout_steps = cfg.phases[i].rollout_steps;
            break;
        }
    }
    for (const LrSegment& s : cfg.lr_segments) {
        if (epoch >= s.start_epoch && epoch < s.start_epoch + s.n_epochs) {
            const double local = static_cast<double>(epoch - s.start_epoch);
            switch (s.kind) {
                case LrSegment::Kind::kCosine:
                    out.lr = diffcore::lr_cosine(local, s.n_epochs, s.lr_max, s.lr_min);
                    break;
                case LrSegment::Kind::kWarmupCosine:
                    out.lr = diffcore::lr_warmup_cosine(local, s.warmup_epochs,
                                                        s.n_epochs, s.lr_start, s.lr_max,
                                                        s.lr_min);
                    break;
                case LrSegment::Kind::kConstant:
                    out.lr = s.lr_max;
                    break;
            }
            return out;
        }
    }
    throw std::out_of_range("no lr segment covers epoch " + std::to_string(epoch));
}

TrainingConfig regional_reference_curriculum() {
    TrainingConfig cfg;
    cfg.alpha = 0.95;
    cfg.m_train = 2;
    cfg.phases = {{100, 0.0, 0.0, 1},
                  {200, 0.1, 0.0, 1},
                  {25, 0.1, 0.0, 2},
                  {25, 0.1, 1e4, 2},
                  {50, 0.1, 1e4, 2}};  // analysis finetune
    cfg.lr_segments = {{LrSegment::Kind::kCosine, 0, 350, 1e-3, 1e-5, 0, 0.0},
                       {LrSegment::Kind::kConstant, 350, 50, 1e-5, 1e-5, 0, 0.0}};
    return cfg;
}

TrainingConfig global_reference_curriculum() {
    TrainingConfig cfg;
    cfg.alpha = 0.95;
    cfg.m_train = 2;
    cfg.phases = {{100, 0.0, 0.0, 1}, {200, 0.1, 0.0, 1}, {25, 0.1, 0.0, 2},
                  {5, 0.0, 0.0, 1},   {150, 0.1, 0.0, 1}, {5, 0.1, 0.0, 2},
                  {5, 0.1, 1e6, 2},   {100, 0.1, 1e6, 2}, {100, 0.1, 1e7, 7}};
    cfg.lr_segments = {
        {LrSegment::Kind::kCosine, 0, 325, 1e-3, 1e-5, 0, 0.0},
        {LrSegment::Kind::kWarmupCosine, 325, 165, 1e-4, 1e-5, 5, 1e-5},
        {LrSegment::Kind::kConstant, 490, 200, 1e-5, 1e-5, 0, 0.0}};
    return cfg;
}

TrainingConfig desk_curriculum() {
    TrainingConfig cfg;
    cfg.alpha = 0.95;
    cfg.m_train = 2;
    cfg.steps_per_epoch = 50;
    cfg.phases = {{14, 0.0, 0.0, 1},
                  {14, 0.1, 0.0, 1},
                  {6, 0.1, 0.0, 2},
                  {6, 0.1, 20.0, 2}};
    cfg.lr_segments = {{LrSegment::Kind::kCosine, 0, 40, 1e-3, 1e-5, 0, 0.0}};
    return cfg;
}

LossComponents total_loss(const efm::Forecaster& model, diffcore::ParamSet& params,
                          const Batch& batch, const LossWeights& weights,
                          double lambda_kl, double lambda_crps, int rollout_steps,
                          double alpha, int m_train, uint64_t step_seed,
                          std::map<std::string, Tensor>* grads_out) {
    const domain::StateSequence& state = *batch.state;
    const domain::ForcingSequence& forcing = *batch.forcing;
    const int t0 = batch.t0;
    const int T = rollout_steps;
    if (t0 < 1 || t0 + T >= state.n_time) {
        throw std::invalid_argument("batch window [t0-1, t0+T] out of range");
    }
    if (lambda_crps > 0.0 && m_train < 2) {
        throw std::invalid_argument("CRPS term requires m_train >= 2");
    }

    Graph g;
    Binder bind(g, params);
    auto inputs_at = [&](int t, Var x2, Var x1) {
        StepInputs in;
        in.x_prev2 = x2;
        in.x_prev1 = x1;
        in.f_prev2 = g.constant(model.state_slice(forcing, t - 2));
        in.f_prev1 = g.constant(model.state_slice(forcing, t - 1));
        in.f_cur = g.constant(model.state_slice(forcing, t));
        if (batch.boundary != nullptr) {
            in.b_prev2 = g.constant(model.state_slice(batch.boundary->data, t - 2));
            in.b_prev1 = g.constant(model.state_slice(batch.boundary->data, t - 1));
            in.b_cur = g.constant(model.state_slice(batch.boundary->data, t));
        }
        return in;
    };

    // Posterior-sample rollout: reconstruction and KL per step.
    Var recon_sum{}, kl_sum{};
    {
        Var x2 = g.constant(model.state_slice(state, t0 - 1));
        Var x1 = g.constant(model.state_slice(state, t0));
        for (int k = 1; k <= T; ++k) {
            const int t = t0 + k;
            StepInputs in = inputs_at(t, x2, x1);
            const Tensor target = model.state_slice(state, t);
            Var target_v = g.constant(target);
            GaussianVars post =
                model.latent_gaussian(bind, efm::NetKind::kPosterior, in, target_v);
            GaussianVars prior = model.latent_gaussian(bind, efm::NetKind::kPrior, in);
            // Reparameterized sample: z = mu + exp(log_std) * eps.
            CounterRng rng(CounterRng::make_key(step_seed, 0, k));
            Tensor eps(post.mean.rows(), post.mean.cols());
            for (double& v : eps.data) v = rng.normal();
            Var z = diffcore::add(
                post.mean,
                diffcore::mul(diffcore::exp_op(*post.log_std), g.constant(eps)));
            Var pred = model.forecast_step(bind, in, z);
            Var recon_t =
                diffcore::scale(weighted_reconstruction(pred, target, weights, true), 0.5);
            recon_sum = (k == 1) ? recon_t : diffcore::add(recon_sum, recon_t);
            Var kl_t = kl_diagonal_gaussians(post, prior);
            kl_sum = (k == 1) ? kl_t : diffcore::add(kl_sum, kl_t);
            x2 = x1;
            x1 = model.feedback_state(pred);
        }
    }
    Var recon = diffcore::scale(recon_sum, 1.0 / T);
    Var kl = diffcore::scale(kl_sum, 1.0 / T);

    // CRPS term: m_train independent prior-sample rollouts.
    Var crps{};
    bool have_crps = false;
    if (lambda_crps > 0.0) {
        std::vector<Var> x2(m_train, g.constant(model.state_slice(state, t0 - 1)));
        std::vector<Var> x1(m_train, g.constant(model.state_slice(state, t0)));
        Var crps_sum{};
        for (int k = 1; k <= T; ++k) {
            const int t = t0 + k;
            const Tensor target = model.state_slice(state, t);
            std::vector<Var> preds;
            preds.reserve(m_train);
            for (int m = 0; m < m_train; ++m) {
                StepInputs in = inputs_at(t, x2[m], x1[m]);
                GaussianVars prior = model.latent_gaussian(bind, efm::NetKind::kPrior, in);
                CounterRng rng(
                    CounterRng::make_key(step_seed, 1 + static_cast<uint64_t>(m), k));
                Tensor eps(prior.mean.rows(), prior.mean.cols());
                for (double& v : eps.data) v = rng.normal();
                Var z = diffcore::add(prior.mean, g.constant(eps));
                Var pred = model.forecast_step(bind, in, z);
                preds.push_back(pred);
                x2[m] = x1[m];
                x1[m] = model.feedback_state(pred);
            }
            Var crps_t = afcrps_reduced(preds, target, alpha, weights);
            crps_sum = (k == 1) ? crps_t : diffcore::add(crps_sum, crps_t);
        }
        crps = diffcore::scale(crps_sum, 1.0 / T);
        have_crps = true;
    }

    Var total = recon;
    if (lambda_kl != 0.0) total = diffcore::add(total, diffcore::scale(kl, lambda_kl));
    if (have_crps) total = diffcore::add(total, diffcore::scale(crps, lambda_crps));

    LossComponents out;
    out.recon = recon.value().data[0];
    out.kl = kl.value().data[0];
    out.crps = have_crps ? crps.value().data[0] : 0.0;
    out.total = total.value().data[0];
    if (grads_out != nullptr) {
        g.backward(total);
        *grads_out = bind.collect_grads();
    }
    return out;
}

TrainResult train_model(const efm::Forecaster& model, diffcore::ParamSet& params,
                        const domain::Dataset& data, const TrainingConfig& cfg,
                        const LossWeights& weights, const std::string& log_csv_path) {
    cfg.validate();
    diffcore::AdamW opt(params, cfg.optimizer);
    std::ofstream log(log_csv_path);
    if (!log) throw std::runtime_error("cannot open training log " + log_csv_path);
    log << "step,epoch,phase,recon,kl,crps,total,lr,wall_time_s\n";

    const auto start = std::chrono::steady_clock::now();
    TrainResult result;
    int step_counter = 0;
    for (int epoch = 0; epoch < cfg.total_epochs(); ++epoch) {
        const PhaseSettings ps = curriculum_phase(epoch, cfg);
        const int max_t0 = data.train_len - ps.rollout_steps - 1;
        if (max_t0 < 1) {
            throw std::invalid_argument("training split too short for rollout of " +
                                        std::to_string(ps.rollout_steps));
        }
        for (int s = 0; s < cfg.steps_per_epoch; ++s) {
            CounterRng rng(CounterRng::make_key(cfg.seed, epoch, s));
            Batch batch;
            batch.state = &data.state;
            batch.forcing = &data.forcing;
            batch.boundary = data.boundary ? &*data.boundary : nullptr;
            batch.t0 = 1 + rng.uniform_int(max_t0);
            std::map<std::string, Tensor> grads;
            const uint64_t step_seed = CounterRng::make_key(cfg.seed, 0x53544550, step_counter);
            const LossComponents lc =
                total_loss(model, params, batch, weights, ps.lambda_kl, ps.lambda_crps,
                           ps.rollout_steps, cfg.alpha, cfg.m_train, step_seed, &grads);
            if (!opt.step(grads, ps.lr)) ++result.rejected_steps;
            ++step_counter;
            result.last = lc;
            const double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                    .count();
            log << step_counter << "," << epoch << "," << ps.phase_index << ","
                << lc.recon << "," << lc.kl << "," << lc.crps << "," << lc.total << ","
                << ps.lr << "," << wall << "\n";
        }
    }
    result.steps = step_counter;
    return result;
}

}  // namespace njord::objective
