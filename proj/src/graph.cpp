#include "fusenas/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fusenas/errors.hpp"

namespace fusenas {

namespace {

bool scalar_broadcast(const Tensor& a, const Tensor& b) {
    return !a.same_shape(b) && b.is_scalar();
}

}  // namespace

Graph::NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    has_grads_ = false;
    return static_cast<NodeId>(nodes_.size()) - 1;
}

void Graph::check_id(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
        throw std::invalid_argument("graph node id out of range: " + std::to_string(id));
}

Graph::NodeId Graph::leaf(Tensor value, bool trainable) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.trainable = trainable;
    return push(std::move(n));
}

Graph::NodeId Graph::binary_elementwise(Op op, NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    const bool bcast = scalar_broadcast(va, vb);
    if (!va.same_shape(vb) && !bcast)
        throw ShapeError("elementwise shapes differ: " + Tensor::shape_str(va.shape) + " vs " +
                         Tensor::shape_str(vb.shape));

    Node n;
    n.op = op;
    n.parents = {a, b, -1};
    n.n_parents = 2;
    n.value = Tensor(va.shape);
    const int m = va.numel();
    for (int i = 0; i < m; ++i) {
        const double x = va[i];
        const double y = bcast ? vb[0] : vb[i];
        switch (op) {
            case Op::Add: n.value[i] = x + y; break;
            case Op::Sub: n.value[i] = x - y; break;
            case Op::Mul: n.value[i] = x * y; break;
            default: break;
        }
    }
    return push(std::move(n));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) { return binary_elementwise(Op::Add, a, b); }
Graph::NodeId Graph::sub(NodeId a, NodeId b) { return binary_elementwise(Op::Sub, a, b); }
Graph::NodeId Graph::mul(NodeId a, NodeId b) { return binary_elementwise(Op::Mul, a, b); }

Graph::NodeId Graph::affine(NodeId x, double a, double b) {
    check_id(x);
    Node n;
    n.op = Op::AffineConst;
    n.parents = {x, -1, -1};
    n.n_parents = 1;
    n.aux_a = a;
    n.aux_b = b;
    const Tensor& vx = value(x);
    n.value = Tensor(vx.shape);
    for (int i = 0; i < vx.numel(); ++i) n.value[i] = a * vx[i] + b;
    return push(std::move(n));
}

Graph::NodeId Graph::linear_map(NodeId x, NodeId weight, NodeId bias) {
    check_id(x);
    check_id(weight);
    check_id(bias);
    const Tensor& vx = value(x);
    const Tensor& vw = value(weight);
    const Tensor& vb = value(bias);
    if (vx.rank() != 3 || vw.rank() != 2 || vb.rank() != 1)
        throw ShapeError("linear_map expects x rank 3, weight rank 2, bias rank 1; got " +
                         Tensor::shape_str(vx.shape) + ", " + Tensor::shape_str(vw.shape) + ", " +
                         Tensor::shape_str(vb.shape));
    const int c_in = vx.dim(0), h = vx.dim(1), w = vx.dim(2);
    const int c_out = vw.dim(0);
    if (vw.dim(1) != c_in || vb.dim(0) != c_out)
        throw ShapeError("linear_map channel mismatch: x " + Tensor::shape_str(vx.shape) +
                         ", weight " + Tensor::shape_str(vw.shape) + ", bias " +
                         Tensor::shape_str(vb.shape));

    Node n;
    n.op = Op::LinearMap;
    n.parents = {x, weight, bias};
    n.n_parents = 3;
    n.value = Tensor({c_out, h, w});
    const int hw = h * w;
    for (int co = 0; co < c_out; ++co) {
        double* out = &n.value.data[static_cast<size_t>(co) * hw];
        const double bv = vb[co];
        for (int p = 0; p < hw; ++p) out[p] = bv;
        for (int ci = 0; ci < c_in; ++ci) {
            const double wv = vw[co * c_in + ci];
            const double* src = &vx.data[static_cast<size_t>(ci) * hw];
            for (int p = 0; p < hw; ++p) out[p] += wv * src[p];
        }
    }
    return push(std::move(n));
}

Graph::NodeId Graph::transpose2(NodeId m) {
    check_id(m);
    const Tensor& vm = value(m);
    if (vm.rank() != 2)
        throw ShapeError("transpose2 expects rank 2, got " + Tensor::shape_str(vm.shape));
    const int r = vm.dim(0), c = vm.dim(1);
    Node n;
    n.op = Op::Transpose2;
    n.parents = {m, -1, -1};
    n.n_parents = 1;
    n.value = Tensor({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) n.value[j * r + i] = vm[i * c + j];
    return push(std::move(n));
}

Graph::NodeId Graph::resize_nearest(NodeId x, int out_h, int out_w) {
    check_id(x);
    if (out_h <= 0 || out_w <= 0)
        throw std::invalid_argument("resize_nearest target extent must be positive, got " +
                                    std::to_string(out_h) + "x" + std::to_string(out_w));
    const Tensor& vx = value(x);
    if (vx.rank() != 3)
        throw ShapeError("resize_nearest expects rank 3, got " + Tensor::shape_str(vx.shape));
    const int c = vx.dim(0), h = vx.dim(1), w = vx.dim(2);
    Node n;
    n.op = Op::ResizeNearest;
    n.parents = {x, -1, -1};
    n.n_parents = 1;
    n.value = Tensor({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < out_h; ++i) {
            const int si = i * h / out_h;
            for (int j = 0; j < out_w; ++j) {
                const int sj = j * w / out_w;
                n.value.at3(ch, i, j) = vx.at3(ch, si, sj);
            }
        }
    return push(std::move(n));
}

Graph::NodeId Graph::softmax(NodeId v) {
    check_id(v);
    const Tensor& vv = value(v);
    if (vv.rank() != 1 || vv.numel() == 0)
        throw std::invalid_argument("softmax expects a non-empty vector, got " +
                                    Tensor::shape_str(vv.shape));
    Node n;
    n.op = Op::Softmax;
    n.parents = {v, -1, -1};
    n.n_parents = 1;
    n.value = Tensor(vv.shape);
    const int m = vv.numel();
    double mx = vv[0];
    for (int i = 1; i < m; ++i) mx = std::max(mx, vv[i]);
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        n.value[i] = std::exp(vv[i] - mx);
        total += n.value[i];
    }
    for (int i = 0; i < m; ++i) n.value[i] /= total;
    return push(std::move(n));
}

Graph::NodeId Graph::sigmoid(NodeId x) {
    check_id(x);
    const Tensor& vx = value(x);
    Node n;
    n.op = Op::Sigmoid;
    n.parents = {x, -1, -1};
    n.n_parents = 1;
    n.value = Tensor(vx.shape);
    for (int i = 0; i < vx.numel(); ++i) n.value[i] = 1.0 / (1.0 + std::exp(-vx[i]));
    return push(std::move(n));
}

Graph::NodeId Graph::tanh_(NodeId x) {
    check_id(x);
    const Tensor& vx = value(x);
    Node n;
    n.op = Op::Tanh;
    n.parents = {x, -1, -1};
    n.n_parents = 1;
    n.value = Tensor(vx.shape);
    for (int i = 0; i < vx.numel(); ++i) n.value[i] = std::tanh(vx[i]);
    return push(std::move(n));
}

Graph::NodeId Graph::concat_channels(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 3 || vb.rank() != 3 || va.dim(1) != vb.dim(1) || va.dim(2) != vb.dim(2))
        throw ShapeError("concat_channels spatial mismatch: " + Tensor::shape_str(va.shape) +
                         " vs " + Tensor::shape_str(vb.shape));
    Node n;
    n.op = Op::ConcatChannels;
    n.parents = {a, b, -1};
    n.n_parents = 2;
    n.value = Tensor({va.dim(0) + vb.dim(0), va.dim(1), va.dim(2)});
    std::copy(va.data.begin(), va.data.end(), n.value.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), n.value.data.begin() + va.numel());
    return push(std::move(n));
}

Graph::NodeId Graph::avg_pool2(NodeId x) {
    check_id(x);
    const Tensor& vx = value(x);
    if (vx.rank() != 3 || vx.dim(1) % 2 != 0 || vx.dim(2) % 2 != 0)
        throw ShapeError("avg_pool2 needs rank 3 with even spatial dims, got " +
                         Tensor::shape_str(vx.shape));
    const int c = vx.dim(0), h = vx.dim(1) / 2, w = vx.dim(2) / 2;
    Node n;
    n.op = Op::AvgPool2;
    n.parents = {x, -1, -1};
    n.n_parents = 1;
    n.value = Tensor({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                n.value.at3(ch, i, j) = 0.25 * (vx.at3(ch, 2 * i, 2 * j) + vx.at3(ch, 2 * i, 2 * j + 1) +
                                                vx.at3(ch, 2 * i + 1, 2 * j) + vx.at3(ch, 2 * i + 1, 2 * j + 1));
    return push(std::move(n));
}

Graph::NodeId Graph::pick(NodeId v, int index) {
    check_id(v);
    const Tensor& vv = value(v);
    if (vv.rank() != 1)
        throw ShapeError("pick expects a vector, got " + Tensor::shape_str(vv.shape));
    if (index < 0 || index >= vv.numel())
        throw std::invalid_argument("pick index " + std::to_string(index) + " out of range for " +
                                    Tensor::shape_str(vv.shape));
    Node n;
    n.op = Op::Pick;
    n.parents = {v, -1, -1};
    n.n_parents = 1;
    n.aux_a = index;
    n.value = Tensor::scalar(vv[index]);
    return push(std::move(n));
}

Graph::NodeId Graph::sum(NodeId x) {
    check_id(x);
    const Tensor& vx = value(x);
    double s = 0.0;
    for (double v : vx.data) s += v;
    Node n;
    n.op = Op::Sum;
    n.parents = {x, -1, -1};
    n.n_parents = 1;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

Graph::NodeId Graph::mean(NodeId x) {
    check_id(x);
    const Tensor& vx = value(x);
    double s = 0.0;
    for (double v : vx.data) s += v;
    Node n;
    n.op = Op::Mean;
    n.parents = {x, -1, -1};
    n.n_parents = 1;
    n.value = Tensor::scalar(s / vx.numel());
    return push(std::move(n));
}

Graph::NodeId Graph::bce_mean(NodeId pred, NodeId target) {
    check_id(pred);
    check_id(target);
    const Tensor& vp = value(pred);
    const Tensor& vt = value(target);
    if (!vp.same_shape(vt))
        throw ShapeError("bce_mean shapes differ: " + Tensor::shape_str(vp.shape) + " vs " +
                         Tensor::shape_str(vt.shape));
    double total = 0.0;
    for (int i = 0; i < vp.numel(); ++i) {
        const double p = std::clamp(vp[i], kBceClampLo, kBceClampHi);
        total += -(vt[i] * std::log(p) + (1.0 - vt[i]) * std::log(1.0 - p));
    }
    Node n;
    n.op = Op::BceMean;
    n.parents = {pred, target, -1};
    n.n_parents = 2;
    n.value = Tensor::scalar(total / vp.numel());
    return push(std::move(n));
}

Tensor& Graph::grad_buf(NodeId id, std::vector<Tensor>& grads) const {
    Tensor& g = grads[static_cast<size_t>(id)];
    if (g.data.empty()) g = Tensor(nodes_[static_cast<size_t>(id)].value.shape);
    return g;
}

void Graph::backward(NodeId loss) {
    check_id(loss);
    if (!value(loss).is_scalar())
        throw std::invalid_argument("backward requires a scalar loss, got " +
                                    Tensor::shape_str(value(loss).shape));

    // mark nodes reachable from the loss
    std::vector<char> needed(nodes_.size(), 0);
    std::vector<NodeId> stack{loss};
    needed[static_cast<size_t>(loss)] = 1;
    while (!stack.empty()) {
        const NodeId id = stack.back();
        stack.pop_back();
        const Node& n = nodes_[static_cast<size_t>(id)];
        for (int k = 0; k < n.n_parents; ++k) {
            const NodeId p = n.parents[static_cast<size_t>(k)];
            if (!needed[static_cast<size_t>(p)]) {
                needed[static_cast<size_t>(p)] = 1;
                stack.push_back(p);
            }
        }
    }

    grads_.assign(nodes_.size(), Tensor{});
    grad_buf(loss, grads_)[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        if (!needed[static_cast<size_t>(id)]) continue;
        if (grads_[static_cast<size_t>(id)].data.empty()) continue;  // reachable but no grad flow
        backprop_node(id, grads_);
    }
    has_grads_ = true;
}

void Graph::backprop_node(NodeId id, std::vector<Tensor>& grads) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    const Tensor& g = grads[static_cast<size_t>(id)];
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add:
        case Op::Sub: {
            const double sign = n.op == Op::Sub ? -1.0 : 1.0;
            Tensor& ga = grad_buf(n.parents[0], grads);
            Tensor& gb = grad_buf(n.parents[1], grads);
            const bool bcast = gb.is_scalar() && !ga.is_scalar();
            for (int i = 0; i < g.numel(); ++i) {
                ga[i] += g[i];
                gb[bcast ? 0 : i] += sign * g[i];
            }
            break;
        }
        case Op::Mul: {
            const Tensor& va = value(n.parents[0]);
            const Tensor& vb = value(n.parents[1]);
            const bool bcast = scalar_broadcast(va, vb);
            {
                Tensor& ga = grad_buf(n.parents[0], grads);
                for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] * (bcast ? vb[0] : vb[i]);
            }
            {
                Tensor& gb = grad_buf(n.parents[1], grads);
                for (int i = 0; i < g.numel(); ++i) gb[bcast ? 0 : i] += g[i] * va[i];
            }
            break;
        }
        case Op::AffineConst: {
            Tensor& gx = grad_buf(n.parents[0], grads);
            for (int i = 0; i < g.numel(); ++i) gx[i] += n.aux_a * g[i];
            break;
        }
        case Op::LinearMap: {
            const Tensor& vx = value(n.parents[0]);
            const Tensor& vw = value(n.parents[1]);
            const int c_in = vx.dim(0), hw = vx.dim(1) * vx.dim(2);
            const int c_out = vw.dim(0);
            Tensor& gx = grad_buf(n.parents[0], grads);
            Tensor& gw = grad_buf(n.parents[1], grads);
            Tensor& gb = grad_buf(n.parents[2], grads);
            for (int co = 0; co < c_out; ++co) {
                const double* gout = &g.data[static_cast<size_t>(co) * hw];
                double gbias = 0.0;
                for (int p = 0; p < hw; ++p) gbias += gout[p];
                gb[co] += gbias;
                for (int ci = 0; ci < c_in; ++ci) {
                    const double wv = vw[co * c_in + ci];
                    const double* src = &vx.data[static_cast<size_t>(ci) * hw];
                    double* gsrc = &gx.data[static_cast<size_t>(ci) * hw];
                    double acc = 0.0;
                    for (int p = 0; p < hw; ++p) {
                        gsrc[p] += wv * gout[p];
                        acc += gout[p] * src[p];
                    }
                    gw[co * c_in + ci] += acc;
                }
            }
            break;
        }
        case Op::Transpose2: {
            const Tensor& vm = value(n.parents[0]);
            const int r = vm.dim(0), c = vm.dim(1);
            Tensor& gm = grad_buf(n.parents[0], grads);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) gm[i * c + j] += g[j * r + i];
            break;
        }
        case Op::ResizeNearest: {
            const Tensor& vx = value(n.parents[0]);
            const int c = vx.dim(0), h = vx.dim(1), w = vx.dim(2);
            const int oh = n.value.dim(1), ow = n.value.dim(2);
            Tensor& gx = grad_buf(n.parents[0], grads);
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < oh; ++i) {
                    const int si = i * h / oh;
                    for (int j = 0; j < ow; ++j) {
                        const int sj = j * w / ow;
                        gx.at3(ch, si, sj) += g.at3(ch, i, j);
                    }
                }
            break;
        }
        case Op::Softmax: {
            const Tensor& y = n.value;
            Tensor& gv = grad_buf(n.parents[0], grads);
            double dot = 0.0;
            for (int i = 0; i < y.numel(); ++i) dot += g[i] * y[i];
            for (int i = 0; i < y.numel(); ++i) gv[i] += y[i] * (g[i] - dot);
            break;
        }
        case Op::Sigmoid: {
            const Tensor& y = n.value;
            Tensor& gx = grad_buf(n.parents[0], grads);
            for (int i = 0; i < y.numel(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
            break;
        }
        case Op::Tanh: {
            const Tensor& y = n.value;
            Tensor& gx = grad_buf(n.parents[0], grads);
            for (int i = 0; i < y.numel(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
            break;
        }
        case Op::ConcatChannels: {
            const int na = value(n.parents[0]).numel();
            Tensor& ga = grad_buf(n.parents[0], grads);
            Tensor& gb = grad_buf(n.parents[1], grads);
            for (int i = 0; i < na; ++i) ga[i] += g[i];
            for (int i = 0; i < gb.numel(); ++i) gb[i] += g[na + i];
            break;
        }
        case Op::AvgPool2: {
            const Tensor& vx = value(n.parents[0]);
            const int c = vx.dim(0), h = n.value.dim(1), w = n.value.dim(2);
            Tensor& gx = grad_buf(n.parents[0], grads);
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) {
                        const double q = 0.25 * g.at3(ch, i, j);
                        gx.at3(ch, 2 * i, 2 * j) += q;
                        gx.at3(ch, 2 * i, 2 * j + 1) += q;
                        gx.at3(ch, 2 * i + 1, 2 * j) += q;
                        gx.at3(ch, 2 * i + 1, 2 * j + 1) += q;
                    }
            break;
        }
        case Op::Pick: {
            Tensor& gv = grad_buf(n.parents[0], grads);
            gv[static_cast<int>(n.aux_a)] += g[0];
            break;
        }
        case Op::Sum: {
            Tensor& gx = grad_buf(n.parents[0], grads);
            for (int i = 0; i < gx.numel(); ++i) gx[i] += g[0];
            break;
        }
        case Op::Mean: {
            Tensor& gx = grad_buf(n.parents[0], grads);
            const double q = g[0] / gx.numel();
            for (int i = 0; i < gx.numel(); ++i) gx[i] += q;
            break;
        }
        case Op::BceMean: {
            const Tensor& vp = value(n.parents[0]);
            const Tensor& vt = value(n.parents[1]);
            const double q = g[0] / vp.numel();
            Tensor& gp = grad_buf(n.parents[0], grads);
            Tensor& gt = grad_buf(n.parents[1], grads);
            for (int i = 0; i < vp.numel(); ++i) {
                const double p = std::clamp(vp[i], kBceClampLo, kBceClampHi);
                if (vp[i] > kBceClampLo && vp[i] < kBceClampHi)
                    gp[i] += q * (p - vt[i]) / (p * (1.0 - p));
                gt[i] += q * (std::log(1.0 - p) - std::log(p));
            }
            break;
        }
    }
}

Tensor Graph::grad(NodeId id) const {
    check_id(id);
    if (has_grads_) {
        const Tensor& g = grads_[static_cast<size_t>(id)];
        if (!g.data.empty()) return g;
    }
    return Tensor(nodes_[static_cast<size_t>(id)].value.shape);
}

}  // namespace fusenas
