/**
 * @file mlp.hpp
 * @brief Named parameter store, per-pass parameter binding, and the MLP
 *        building block used throughout the model.
 */
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "njord/autodiff.hpp"
#include "njord/rng.hpp"
#include "njord/tensor.hpp"

namespace njord::diffcore {

/// Ordered map of named parameter tensors. Iteration order (lexicographic)
/// is the canonical order for checkpoints and optimizer state.
class ParamSet {
public:
    Tensor& create(const std::string& name, int rows, int cols);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::map<std::string, Tensor>& all() const { return params_; }
    std::map<std::string, Tensor>& all_mut() { return params_; }

    size_t count_scalars() const;

    /// Checkpoint: text header listing named f64 arrays, then the raw
    /// little-endian payload. `meta` lines are preserved verbatim.
    void save(const std::string& path,
              const std::map<std::string, std::string>& meta = {}) const;
    static ParamSet load(const std::string& path,
                         std::map<std::string, std::string>* meta_out = nullptr);

private:
    std::map<std::string, Tensor> params_;
};

/// Binds parameters of a ParamSet into a Graph as leaf nodes, once per pass.
/// After backward, gradients are read back per bound name.
class Binder {
public:
    Binder(Graph& g, ParamSet& params) : graph_(&g), params_(&params) {}

    /// Leaf Var for the named parameter (bound lazily, cached).
    Var operator()(const std::string& name);

    /// Gradient of a bound parameter; zeros if the parameter was bound but
    /// unreached, missing entry if never bound.
    std::map<std::string, Tensor> collect_grads() const;

    Graph& graph() { return *graph_; }
    ParamSet& params() { return *params_; }

private:
    Graph* graph_;
    ParamSet* params_;
    std::map<std::string, int> bound_;
};

/// Multi-layer perceptron: [linear -> SiLU] x n_hidden -> linear
/// (-> LayerNorm when layer_norm). With zero_init the final linear layer
/// (and LayerNorm offset) start at zero, so the initial output is exactly 0.
struct MlpSpec {
    int in = 0;
    int out = 0;
    int hidden = 0;      // hidden width; defaults to `out` when n_hidden > 0
    int n_hidden = 1;    // 0 -> single linear layer
    bool layer_norm = false;
    bool zero_init = false;
};

class Mlp {
public:
    Mlp() = default;
    Mlp(std::string prefix, MlpSpec spec) : prefix_(std::move(prefix)), spec_(spec) {
        if (spec_.hidden == 0) spec_.hidden = spec_.out;
    }

    /// Allocates parameters in `params` (prefix.w0, prefix.b0, ...).
    void init(ParamSet& params, CounterRng& rng) const;

    /// Forward pass; input last dim must equal spec().in.
    Var apply(Binder& bind, Var x) const;

    const MlpSpec& spec() const { return spec_; }
    const std::string& prefix() const { return prefix_; }

private:
    std::string prefix_;
    MlpSpec spec_;
};

}  // namespace njord::diffcore
