/**
 * @file optimizer.hpp
 * @brief AdamW with decoupled weight decay, plus learning-rate schedules.
 */
#pragma once

#include <map>
#include <string>

#include "njord/mlp.hpp"
#include "njord/tensor.hpp"

namespace njord::diffcore {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.1;
};

class AdamW {
public:
    AdamW(ParamSet& params, AdamWConfig cfg);

    /// One update. Parameters without an entry in `grads` see a zero
    /// gradient (weight decay still applies). Returns false and leaves all
    /// state untouched if any gradient is non-finite.
    bool step(const std::map<std::string, Tensor>& grads, double lr);
    bool step(const std::map<std::string, Tensor>& grads) { return step(grads, cfg_.lr); }

    long step_count() const { return step_count_; }
    long rejected_count() const { return rejected_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    ParamSet* params_;
    AdamWConfig cfg_;
    std::map<std::string, Tensor> m_;
    std::map<std::string, Tensor> v_;
    long step_count_ = 0;
    long rejected_ = 0;
};

/// Cosine annealing from lr_max at epoch 0 to lr_min at epoch span.
double lr_cosine(double epoch, double span, double lr_max, double lr_min);

/// Linear warmup from lr_start over `warmup` epochs, then cosine decay from
/// lr_peak to lr_min over the remaining span.
double lr_warmup_cosine(double epoch, double warmup, double span, double lr_start,
                        double lr_peak, double lr_min);

}  // namespace njord::diffcore
