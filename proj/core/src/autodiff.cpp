#include "njord/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace njord::diffcore {

namespace {

void check_same_graph(Var a, Var b) {
    if (a.graph == nullptr || a.graph != b.graph) {
        throw std::invalid_argument("operands belong to different graphs");
    }
}

void check_same_shape(Var a, Var b, const char* op) {
    if (!a.value().same_shape(b.value())) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
    }
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_scalar(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

}  // namespace

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::constant(Tensor v) {
    nodes_.push_back(Node{std::move(v), Tensor{}, {}, nullptr, false});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::leaf(Tensor v) {
    nodes_.push_back(Node{std::move(v), Tensor{}, {}, nullptr, true});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::make_node(Tensor value, std::vector<int> parents,
                     std::function<void(Graph&, int)> backward_fn) {
    bool needs = false;
    for (int p : parents) needs = needs || nodes_[p].needs_grad;
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(parents),
                          needs ? std::move(backward_fn) : nullptr, needs});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::ensure_grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.rows != n.value.rows || n.grad.cols != n.value.cols) {
        n.grad = Tensor::zeros(n.value.rows, n.value.cols);
    }
}

void Graph::accumulate_grad(int id, const Tensor& delta) {
    if (!nodes_[id].needs_grad) return;
    ensure_grad(id);
    Tensor& g = nodes_[id].grad;
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += delta.data[i];
}

void Graph::accumulate_grad_at(int id, int r, int c, double delta) {
    if (!nodes_[id].needs_grad) return;
    ensure_grad(id);
    nodes_[id].grad.at(r, c) += delta;
}

void Graph::backward(Var loss) {
    if (loss.graph != this) throw std::invalid_argument("loss from another graph");
    const Tensor& lv = value(loss.id);
    if (lv.rows != 1 || lv.cols != 1) {
        throw std::invalid_argument("backward requires a scalar loss, got " +
                                    std::to_string(lv.rows) + "x" +
                                    std::to_string(lv.cols));
    }
    if (!std::isfinite(lv.data[0])) {
        throw std::runtime_error("backward on non-finite loss");
    }
    ensure_grad(loss.id);
    nodes_[loss.id].grad.data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || !n.backward) continue;
        if (n.grad.rows != n.value.rows) continue;  // never reached from loss
        n.backward(*this, id);
    }
}

// ---- elementwise ----------------------------------------------------------

namespace {

/// Helper for unary elementwise ops: dy/dx supplied per element.
Var unary_op(Var x, std::function<double(double)> f,
             std::function<double(double, double)> dfdx_of_xy) {
    const Tensor& xv = x.value();
    Tensor out(xv.rows, xv.cols);
    for (size_t i = 0; i < xv.data.size(); ++i) out.data[i] = f(xv.data[i]);
    const int xid = x.id;
    return x.graph->make_node(
        std::move(out), {xid},
        [xid, dfdx_of_xy](Graph& g, int self) {
            const Tensor& go = g.grad(self);
            const Tensor& xval = g.value(xid);
            const Tensor& yval = g.value(self);
            if (!g.needs_grad(xid)) return;
            g.ensure_grad(xid);
            Tensor& gx = g.grad_mut(xid);
            for (size_t i = 0; i < gx.data.size(); ++i) {
                gx.data[i] += go.data[i] * dfdx_of_xy(xval.data[i], yval.data[i]);
            }
        });
}

}  // namespace

Var add(Var a, Var b) {
    check_same_graph(a, b);
    check_same_shape(a, b, "add");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(av.rows, av.cols);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] + bv.data[i];
    const int aid = a.id, bid = b.id;
    return a.graph->make_node(std::move(out), {aid, bid}, [aid, bid](Graph& g, int self) {
        g.accumulate_grad(aid, g.grad(self));
        g.accumulate_grad(bid, g.grad(self));
    });
}

Var sub(Var a, Var b) {
    check_same_graph(a, b);
    check_same_shape(a, b, "sub");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(av.rows, av.cols);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] - bv.data[i];
    const int aid = a.id, bid = b.id;
    return a.graph->make_node(std::move(out), {aid, bid}, [aid, bid](Graph& g, int self) {
        g.accumulate_grad(aid, g.grad(self));
        if (!g.needs_grad(bid)) return;
        g.ensure_grad(bid);
        Tensor& gb = g.grad_mut(bid);
        const Tensor& go = g.grad(self);
        for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= go.data[i];
    });
}

Var mul(Var a, Var b) {
    check_same_graph(a, b);
    check_same_shape(a, b, "mul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(av.rows, av.cols);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
    const int aid = a.id, bid = b.id;
    return a.graph->make_node(std::move(out), {aid, bid}, [aid, bid](Graph& g, int self) {
        const Tensor& go = g.grad(self);
        const Tensor& av2 = g.value(aid);
        const Tensor& bv2 = g.value(bid);
        if (g.needs_grad(aid)) {
            g.ensure_grad(aid);
            Tensor& ga = g.grad_mut(aid);
            for (size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += go.data[i] * bv2.data[i];
        }
        if (g.needs_grad(bid)) {
            g.ensure_grad(bid);
            Tensor& gb = g.grad_mut(bid);
            for (size_t i = 0; i < gb.data.size(); ++i)
                gb.data[i] += go.data[i] * av2.data[i];
        }
    });
}

Var scale(Var a, double s) {
    const Tensor& av = a.value();
    Tensor out(av.rows, av.cols);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] * s;
    const int aid = a.id;
    return a.graph->make_node(std::move(out), {aid}, [aid, s](Graph& g, int self) {
        if (!g.needs_grad(aid)) return;
        g.ensure_grad(aid);
        Tensor& ga = g.grad_mut(aid);
        const Tensor& go = g.grad(self);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += go.data[i] * s;
    });
}

Var neg(Var a) { return scale(a, -1.0); }

Var add_rowvec(Var x, Var b) {
    check_same_graph(x, b);
    const Tensor& xv = x.value();
    const Tensor& bv = b.value();
    if (bv.rows != 1 || bv.cols != xv.cols) {
        throw std::invalid_argument("add_rowvec: bias must be 1x" +
                                    std::to_string(xv.cols));
    }
    Tensor out(xv.rows, xv.cols);
    for (int r = 0; r < xv.rows; ++r) {
        for (int c = 0; c < xv.cols; ++c) out.at(r, c) = xv.at(r, c) + bv.at(0, c);
    }
    const int xid = x.id, bid = b.id;
    return x.graph->make_node(std::move(out), {xid, bid}, [xid, bid](Graph& g, int self) {
        const Tensor& go = g.grad(self);
        g.accumulate_grad(xid, go);
        if (!g.needs_grad(bid)) return;
        g.ensure_grad(bid);
        Tensor& gb = g.grad_mut(bid);
        for (int r = 0; r < go.rows; ++r) {
            for (int c = 0; c < go.cols; ++c) gb.at(0, c) += go.at(r, c);
        }
    });
}

Var mul_const(Var x, const Tensor& m) {
    const Tensor& xv = x.value();
    if (!xv.same_shape(m)) throw std::invalid_argument("mul_const: shape mismatch");
    Tensor out(xv.rows, xv.cols);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv.data[i] * m.data[i];
    const int xid = x.id;
    Tensor mask = m;
    return x.graph->make_node(
        std::move(out), {xid}, [xid, mask = std::move(mask)](Graph& g, int self) {
            if (!g.needs_grad(xid)) return;
            g.ensure_grad(xid);
            Tensor& gx = g.grad_mut(xid);
            const Tensor& go = g.grad(self);
            for (size_t i = 0; i < gx.data.size(); ++i)
                gx.data[i] += go.data[i] * mask.data[i];
        });
}

Var scale_cols(Var x, const std::vector<double>& s) {
    const Tensor& xv = x.value();
    if (static_cast<int>(s.size()) != xv.cols) {
        throw std::invalid_argument("scale_cols: expected " + std::to_string(xv.cols) +
                                    " scales");
    }
    Tensor out(xv.rows, xv.cols);
    for (int r = 0; r < xv.rows; ++r) {
        for (int c = 0; c < xv.cols; ++c) out.at(r, c) = xv.at(r, c) * s[c];
    }
    const int xid = x.id;
    std::vector<double> sc = s;
    return x.graph->make_node(
        std::move(out), {xid}, [xid, sc = std::move(sc)](Graph& g, int self) {
            if (!g.needs_grad(xid)) return;
            g.ensure_grad(xid);
            Tensor& gx = g.grad_mut(xid);
            const Tensor& go = g.grad(self);
            for (int r = 0; r < go.rows; ++r) {
                for (int c = 0; c < go.cols; ++c) gx.at(r, c) += go.at(r, c) * sc[c];
            }
        });
}

Var silu(Var x) {
    return unary_op(
        x, [](double v) { return v * sigmoid_scalar(v); },
        [](double v, double) {
            const double s = sigmoid_scalar(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Var clamp_op(Var x, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("clamp_op: lo >= hi");
    return unary_op(
        x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
        [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
    return unary_op(x, [](double v) { return sigmoid_scalar(v); },
                    [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var x) {
    return unary_op(x, [](double v) { return softplus_scalar(v); },
                    [](double v, double) { return sigmoid_scalar(v); });
}

Var exp_op(Var x) {
    return unary_op(x, [](double v) { return std::exp(v); },
                    [](double, double y) { return y; });
}

Var log_op(Var x) {
    return unary_op(x, [](double v) { return std::log(v); },
                    [](double v, double) { return 1.0 / v; });
}

Var abs_op(Var x) {
    return unary_op(x, [](double v) { return std::abs(v); },
                    [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var square(Var x) {
    return unary_op(x, [](double v) { return v * v; },
                    [](double v, double) { return 2.0 * v; });
}

Var latent_to_bounded(Var x, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("latent_to_bounded: lo >= hi");
    const double span = hi - lo;
    return unary_op(
        x, [lo, span](double v) { return lo + span * sigmoid_scalar(v); },
        [span](double v, double) {
            const double s = sigmoid_scalar(v);
            return span * s * (1.0 - s);
        });
}

Var bounded_to_latent(Var y, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("bounded_to_latent: lo >= hi");
    return unary_op(
        y,
        [lo, hi](double v) {
            if (!(v > lo && v < hi)) {
                throw std::domain_error("bounded_to_latent: value " +
                                        std::to_string(v) + " not strictly inside (" +
                                        std::to_string(lo) + ", " + std::to_string(hi) +
                                        ")");
            }
            return std::log(v - lo) - std::log(hi - v);
        },
        [lo, hi](double v, double) { return 1.0 / (v - lo) + 1.0 / (hi - v); });
}

Var latent_to_lower(Var x, double lo) {
    return unary_op(x, [lo](double v) { return lo + softplus_scalar(v); },
                    [](double v, double) { return sigmoid_scalar(v); });
}

Var lower_to_latent(Var y, double lo) {
    return unary_op(
        y,
        [lo](double v) {
            const double t = v - lo;
            if (!(t > 0.0)) {
                throw std::domain_error("lower_to_latent: value " + std::to_string(v) +
                                        " not strictly above " + std::to_string(lo));
            }
            if (t > 30.0) return t;
            return std::log(std::expm1(t));
        },
        [lo](double v, double) {
            const double t = v - lo;
            if (t > 30.0) return 1.0;
            return 1.0 / (1.0 - std::exp(-t));
        });
}

// ---- linear algebra -------------------------------------------------------

Var matmul(Var a, Var b) {
    check_same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols != bv.rows) {
        throw std::invalid_argument("matmul: inner dims " + std::to_string(av.cols) +
                                    " vs " + std::to_string(bv.rows));
    }
    Tensor out = Tensor::zeros(av.rows, bv.cols);
    for (int r = 0; r < av.rows; ++r) {
        for (int k = 0; k < av.cols; ++k) {
            const double x = av.at(r, k);
            if (x == 0.0) continue;
            const double* brow = &bv.data[static_cast<size_t>(k) * bv.cols];
            double* orow = &out.data[static_cast<size_t>(r) * out.cols];
            for (int c = 0; c < bv.cols; ++c) orow[c] += x * brow[c];
        }
    }
    const int aid = a.id, bid = b.id;
    return a.graph->make_node(std::move(out), {aid, bid}, [aid, bid](Graph& g, int self) {
        const Tensor& go = g.grad(self);
        const Tensor& av2 = g.value(aid);
        const Tensor& bv2 = g.value(bid);
        if (g.needs_grad(aid)) {
            g.ensure_grad(aid);
            Tensor& ga = g.grad_mut(aid);  // dA = dC * B^T
            for (int r = 0; r < ga.rows; ++r) {
                for (int k = 0; k < ga.cols; ++k) {
                    double acc = 0.0;
                    const double* gorow = &go.data[static_cast<size_t>(r) * go.cols];
                    const double* brow = &bv2.data[static_cast<size_t>(k) * bv2.cols];
                    for (int c = 0; c < go.cols; ++c) acc += gorow[c] * brow[c];
                    ga.at(r, k) += acc;
                }
            }
        }
        if (g.needs_grad(bid)) {
            g.ensure_grad(bid);
            Tensor& gb = g.grad_mut(bid);  // dB = A^T * dC
            for (int r = 0; r < av2.rows; ++r) {
                const double* gorow = &go.data[static_cast<size_t>(r) * go.cols];
                for (int k = 0; k < av2.cols; ++k) {
                    const double x = av2.at(r, k);
                    if (x == 0.0) continue;
                    double* gbrow = &gb.data[static_cast<size_t>(k) * gb.cols];
                    for (int c = 0; c < go.cols; ++c) gbrow[c] += x * gorow[c];
                }
            }
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    Graph* g = parts[0].graph;
    const int rows = parts[0].rows();
    int total = 0;
    std::vector<int> ids;
    std::vector<int> widths;
    for (const Var& p : parts) {
        if (p.graph != g) throw std::invalid_argument("concat_cols: graph mismatch");
        if (p.rows() != rows) {
            throw std::invalid_argument("concat_cols: row mismatch " +
                                        std::to_string(p.rows()) + " vs " +
                                        std::to_string(rows));
        }
        ids.push_back(p.id);
        widths.push_back(p.cols());
        total += p.cols();
    }
    Tensor out(rows, total);
    int off = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
        const Tensor& pv = g->value(ids[i]);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < widths[i]; ++c) out.at(r, off + c) = pv.at(r, c);
        }
        off += widths[i];
    }
    return g->make_node(std::move(out), ids,
                        [ids, widths](Graph& gg, int self) {
                            const Tensor& go = gg.grad(self);
                            int o = 0;
                            for (size_t i = 0; i < ids.size(); ++i) {
                                if (gg.needs_grad(ids[i])) {
                                    gg.ensure_grad(ids[i]);
                                    Tensor& gp = gg.grad_mut(ids[i]);
                                    for (int r = 0; r < go.rows; ++r) {
                                        for (int c = 0; c < widths[i]; ++c) {
                                            gp.at(r, c) += go.at(r, o + c);
                                        }
                                    }
                                }
                                o += widths[i];
                            }
                        });
}

Var slice_cols(Var x, int c0, int c1) {
    const Tensor& xv = x.value();
    if (c0 < 0 || c1 > xv.cols || c0 >= c1) {
        throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) +
                                    ", " + std::to_string(c1) + ") of " +
                                    std::to_string(xv.cols));
    }
    Tensor out(xv.rows, c1 - c0);
    for (int r = 0; r < xv.rows; ++r) {
        for (int c = c0; c < c1; ++c) out.at(r, c - c0) = xv.at(r, c);
    }
    const int xid = x.id;
    return x.graph->make_node(std::move(out), {xid}, [xid, c0](Graph& g, int self) {
        if (!g.needs_grad(xid)) return;
        g.ensure_grad(xid);
        Tensor& gx = g.grad_mut(xid);
        const Tensor& go = g.grad(self);
        for (int r = 0; r < go.rows; ++r) {
            for (int c = 0; c < go.cols; ++c) gx.at(r, c0 + c) += go.at(r, c);
        }
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    check_same_graph(x, gain);
    check_same_graph(x, bias);
    const Tensor& xv = x.value();
    const int C = xv.cols;
    if (gain.rows() != 1 || gain.cols() != C || bias.rows() != 1 || bias.cols() != C) {
        throw std::invalid_argument("layer_norm: gain/bias must be 1x" +
                                    std::to_string(C));
    }
    const Tensor& gv = gain.value();
    const Tensor& bv = bias.value();
    Tensor out(xv.rows, C);
    Tensor xhat(xv.rows, C);
    std::vector<double> inv_std(xv.rows);
    for (int r = 0; r < xv.rows; ++r) {
        double mean = 0.0;
        for (int c = 0; c < C; ++c) mean += xv.at(r, c);
        mean /= C;
        double var = 0.0;
        for (int c = 0; c < C; ++c) {
            const double d = xv.at(r, c) - mean;
            var += d * d;
        }
        var /= C;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (int c = 0; c < C; ++c) {
            const double xh = (xv.at(r, c) - mean) * is;
            xhat.at(r, c) = xh;
            out.at(r, c) = xh * gv.at(0, c) + bv.at(0, c);
        }
    }
    const int xid = x.id, gid = gain.id, bid = bias.id;
    return x.graph->make_node(
        std::move(out), {xid, gid, bid},
        [xid, gid, bid, xhat = std::move(xhat), inv_std = std::move(inv_std)](
            Graph& g, int self) {
            const Tensor& go = g.grad(self);
            const Tensor& gv2 = g.value(gid);
            const int C2 = go.cols;
            if (g.needs_grad(gid)) {
                g.ensure_grad(gid);
                Tensor& gg = g.grad_mut(gid);
                for (int r = 0; r < go.rows; ++r) {
                    for (int c = 0; c < C2; ++c) gg.at(0, c) += go.at(r, c) * xhat.at(r, c);
                }
            }
            if (g.needs_grad(bid)) {
                g.ensure_grad(bid);
                Tensor& gb = g.grad_mut(bid);
                for (int r = 0; r < go.rows; ++r) {
                    for (int c = 0; c < C2; ++c) gb.at(0, c) += go.at(r, c);
                }
            }
            if (g.needs_grad(xid)) {
                g.ensure_grad(xid);
                Tensor& gx = g.grad_mut(xid);
                for (int r = 0; r < go.rows; ++r) {
                    double mean_dxh = 0.0;
                    double mean_dxh_xh = 0.0;
                    for (int c = 0; c < C2; ++c) {
                        const double dxh = go.at(r, c) * gv2.at(0, c);
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xhat.at(r, c);
                    }
                    mean_dxh /= C2;
                    mean_dxh_xh /= C2;
                    for (int c = 0; c < C2; ++c) {
                        const double dxh = go.at(r, c) * gv2.at(0, c);
                        gx.at(r, c) += inv_std[r] *
                                       (dxh - mean_dxh - xhat.at(r, c) * mean_dxh_xh);
                    }
                }
            }
        });
}

// ---- gather / scatter -----------------------------------------------------

Var gather_rows(Var x, const std::vector<int>& idx) {
    const Tensor& xv = x.value();
    Tensor out(static_cast<int>(idx.size()), xv.cols);
    for (size_t e = 0; e < idx.size(); ++e) {
        const int i = idx[e];
        if (i < 0 || i >= xv.rows) {
            throw std::out_of_range("gather_rows: index " + std::to_string(i) +
                                    " out of range [0, " + std::to_string(xv.rows) + ")");
        }
        for (int c = 0; c < xv.cols; ++c) out.at(static_cast<int>(e), c) = xv.at(i, c);
    }
    const int xid = x.id;
    std::vector<int> idx_copy = idx;
    return x.graph->make_node(
        std::move(out), {xid}, [xid, idx_copy = std::move(idx_copy)](Graph& g, int self) {
            if (!g.needs_grad(xid)) return;
            g.ensure_grad(xid);
            Tensor& gx = g.grad_mut(xid);
            const Tensor& go = g.grad(self);
            for (size_t e = 0; e < idx_copy.size(); ++e) {
                const int i = idx_copy[e];
                for (int c = 0; c < go.cols; ++c)
                    gx.at(i, c) += go.at(static_cast<int>(e), c);
            }
        });
}

namespace {

std::vector<int> sorted_edge_order(const std::vector<int>& dst,
                                   const std::vector<int>& src) {
    std::vector<int> order(dst.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dst[a] != dst[b]) return dst[a] < dst[b];
        if (src[a] != src[b]) return src[a] < src[b];
        return a < b;
    });
    return order;
}

}  // namespace

Var scatter_sum(Var vals, const std::vector<int>& dst, const std::vector<int>& src,
                int n_out) {
    const Tensor& vv = vals.value();
    if (dst.size() != static_cast<size_t>(vv.rows) || src.size() != dst.size()) {
        throw std::invalid_argument("scatter_sum: edge index count mismatch");
    }
    for (int d : dst) {
        if (d < 0 || d >= n_out) {
            throw std::out_of_range("scatter_sum: receiver " + std::to_string(d) +
                                    " out of range [0, " + std::to_string(n_out) + ")");
        }
    }
    const std::vector<int> order = sorted_edge_order(dst, src);
    Tensor out = Tensor::zeros(n_out, vv.cols);
    for (int e : order) {
        const int d = dst[e];
        for (int c = 0; c < vv.cols; ++c) out.at(d, c) += vv.at(e, c);
    }
    const int vid = vals.id;
    std::vector<int> dst_copy = dst;
    return vals.graph->make_node(
        std::move(out), {vid}, [vid, dst_copy = std::move(dst_copy)](Graph& g, int self) {
            if (!g.needs_grad(vid)) return;
            g.ensure_grad(vid);
            Tensor& gv = g.grad_mut(vid);
            const Tensor& go = g.grad(self);
            for (size_t e = 0; e < dst_copy.size(); ++e) {
                for (int c = 0; c < go.cols; ++c)
                    gv.at(static_cast<int>(e), c) += go.at(dst_copy[e], c);
            }
        });
}

Var scatter_mean(Var vals, const std::vector<int>& dst, const std::vector<int>& src,
                 int n_out) {
    std::vector<int> indeg(n_out, 0);
    for (int d : dst) {
        if (d < 0 || d >= n_out) {
            throw std::out_of_range("scatter_mean: receiver " + std::to_string(d) +
                                    " out of range [0, " + std::to_string(n_out) + ")");
        }
        indeg[d]++;
    }
    for (int v = 0; v < n_out; ++v) {
        if (indeg[v] == 0) {
            throw std::invalid_argument("scatter_mean: receiver " + std::to_string(v) +
                                        " has no incoming edges (mean undefined)");
        }
    }
    Var summed = scatter_sum(vals, dst, src, n_out);
    std::vector<double> inv(n_out);
    Tensor w(n_out, summed.cols());
    for (int v = 0; v < n_out; ++v) inv[v] = 1.0 / indeg[v];
    for (int v = 0; v < n_out; ++v) {
        for (int c = 0; c < w.cols; ++c) w.at(v, c) = inv[v];
    }
    return mul_const(summed, w);
}

// ---- reductions -----------------------------------------------------------

Var sum_all(Var x) {
    const Tensor& xv = x.value();
    double s = 0.0;
    for (double v : xv.data) s += v;
    const int xid = x.id;
    return x.graph->make_node(Tensor::scalar(s), {xid}, [xid](Graph& g, int self) {
        if (!g.needs_grad(xid)) return;
        g.ensure_grad(xid);
        Tensor& gx = g.grad_mut(xid);
        const double go = g.grad(self).data[0];
        for (double& v : gx.data) v += go;
    });
}

Var mean_all(Var x) {
    const size_t n = x.value().size();
    if (n == 0) throw std::invalid_argument("mean_all of empty tensor");
    return scale(sum_all(x), 1.0 / static_cast<double>(n));
}

Var weighted_sum_all(Var x, const Tensor& w) {
    const Tensor& xv = x.value();
    if (!xv.same_shape(w)) throw std::invalid_argument("weighted_sum_all: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < xv.data.size(); ++i) s += xv.data[i] * w.data[i];
    const int xid = x.id;
    Tensor wc = w;
    return x.graph->make_node(Tensor::scalar(s), {xid},
                              [xid, wc = std::move(wc)](Graph& g, int self) {
                                  if (!g.needs_grad(xid)) return;
                                  g.ensure_grad(xid);
                                  Tensor& gx = g.grad_mut(xid);
                                  const double go = g.grad(self).data[0];
                                  for (size_t i = 0; i < gx.data.size(); ++i)
                                      gx.data[i] += go * wc.data[i];
                              });
}

}  // namespace njord::diffcore
