/**
 * @file autodiff.hpp
 * @brief Define-by-run reverse-mode automatic differentiation over Tensor.
 *
 * A Graph is a tape of nodes created by the op functions below. Calling
 * backward(loss) seeds d(loss)/d(loss) = 1 and walks the tape in reverse
 * creation order, which is a valid topological order by construction.
 * All reductions run in a fixed serial order, so results are bit-reproducible.
 */
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "njord/tensor.hpp"

namespace njord::diffcore {

class Graph;

/// Lightweight handle to a node in a Graph.
struct Var {
    Graph* graph = nullptr;
    int id = -1;

    const Tensor& value() const;
    int rows() const { return value().rows; }
    int cols() const { return value().cols; }
};

class Graph {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        std::function<void(Graph&, int)> backward;
        bool needs_grad = false;
    };

    Var constant(Tensor v);
    /// A leaf that participates in differentiation (parameter or input).
    Var leaf(Tensor v);

    const Tensor& value(int id) const { return nodes_[id].value; }
    const Tensor& grad(int id) const { return nodes_[id].grad; }
    Tensor& grad_mut(int id) { return nodes_[id].grad; }
    bool needs_grad(int id) const { return nodes_[id].needs_grad; }
    size_t num_nodes() const { return nodes_.size(); }

    /// Reverse pass from a scalar [1x1] node. Throws on non-scalar or
    /// non-finite loss.
    void backward(Var loss);

    /// Internal: append an op node. Public for the op free functions.
    Var make_node(Tensor value, std::vector<int> parents,
                  std::function<void(Graph&, int)> backward_fn);

    /// Accumulates `delta` into the gradient of node `id` (allocating zeros
    /// on first touch). No-op when the node does not need gradients.
    void accumulate_grad(int id, const Tensor& delta);
    void accumulate_grad_at(int id, int r, int c, double delta);
    void ensure_grad(int id);

private:
    std::vector<Node> nodes_;
};

// ---- elementwise / arithmetic ------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var neg(Var a);
/// x [RxC] + b [1xC], broadcast over rows.
Var add_rowvec(Var x, Var b);
/// Elementwise multiply by a constant mask/weight tensor (same shape).
Var mul_const(Var x, const Tensor& m);
/// Multiply column c by s[c] (constant per-column scale).
Var scale_cols(Var x, const std::vector<double>& s);

Var silu(Var x);
/// Hard clamp to [lo, hi]; gradient 1 inside, 0 when saturated.
Var clamp_op(Var x, double lo, double hi);
Var sigmoid(Var x);
Var softplus(Var x);
Var exp_op(Var x);
Var log_op(Var x);
Var abs_op(Var x);
Var square(Var x);

// ---- bounded <-> latent maps (smooth invertible activations) ------------

/// lo + (hi - lo) * sigmoid(x)
Var latent_to_bounded(Var x, double lo, double hi);
/// log((y - lo) / (hi - y)); y must be strictly inside (lo, hi).
Var bounded_to_latent(Var y, double lo, double hi);
/// lo + softplus(x)
Var latent_to_lower(Var x, double lo);
/// softplus^{-1}(y - lo); y must be strictly above lo.
Var lower_to_latent(Var y, double lo);

// ---- linear algebra / shaping -------------------------------------------

Var matmul(Var a, Var b);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var x, int c0, int c1);
/// y = (x - mean_row) / sqrt(var_row + eps) * gain + bias, per row.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-8);

// ---- graph gather/scatter -------------------------------------------------

/// out[e, :] = x[idx[e], :]
Var gather_rows(Var x, const std::vector<int>& idx);
/// out[v, :] = sum over edges e with dst[e] == v of vals[e, :].
/// Accumulation order is normalized by sorting on (dst, src), so the result
/// is invariant to permutations of the edge list.
Var scatter_sum(Var vals, const std::vector<int>& dst, const std::vector<int>& src,
                int n_out);
/// Mean-aggregation variant; throws if any receiver in [0, n_out) has no
/// incoming edge.
Var scatter_mean(Var vals, const std::vector<int>& dst, const std::vector<int>& src,
                 int n_out);

// ---- reductions -----------------------------------------------------------

Var sum_all(Var x);
Var mean_all(Var x);
/// sum_ij w_ij * x_ij with a constant weight tensor.
Var weighted_sum_all(Var x, const Tensor& w);

}  // namespace njord::diffcore
