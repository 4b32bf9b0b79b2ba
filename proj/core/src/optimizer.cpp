#include "njord/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace njord::diffcore {

AdamW::AdamW(ParamSet& params, AdamWConfig cfg) : params_(&params), cfg_(cfg) {
    for (const auto& [name, t] : params.all()) {
        m_.emplace(name, Tensor::zeros(t.rows, t.cols));
        v_.emplace(name, Tensor::zeros(t.rows, t.cols));
    }
}

bool AdamW::step(const std::map<std::string, Tensor>& grads, double lr) {
    for (const auto& [name, g] : grads) {
        if (!params_->contains(name)) {
            throw std::invalid_argument("gradient for unknown parameter " + name);
        }
        if (!g.all_finite()) {
            ++rejected_;
            return false;
        }
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (auto& [name, theta] : params_->all_mut()) {
        Tensor& m = m_.at(name);
        Tensor& v = v_.at(name);
        auto git = grads.find(name);
        const Tensor* g = (git != grads.end()) ? &git->second : nullptr;
        for (size_t i = 0; i < theta.data.size(); ++i) {
            const double gi = g ? g->data[i] : 0.0;
            m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi;
            v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            theta.data[i] -= lr * cfg_.weight_decay * theta.data[i];
            theta.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
    return true;
}

double lr_cosine(double epoch, double span, double lr_max, double lr_min) {
    if (span <= 0.0) return lr_min;
    const double t = std::min(std::max(epoch / span, 0.0), 1.0);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * t));
}

double lr_warmup_cosine(double epoch, double warmup, double span, double lr_start,
                        double lr_peak, double lr_min) {
    if (epoch < warmup) {
        const double t = (warmup > 0.0) ? epoch / warmup : 1.0;
        return lr_start + (lr_peak - lr_start) * t;
    }
    return lr_cosine(epoch - warmup, span - warmup, lr_peak, lr_min);
}

}  // namespace njord::diffcore
