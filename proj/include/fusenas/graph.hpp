#pragma once

#include <array>
#include <vector>

#include "fusenas/tensor.hpp"

namespace fusenas {

// Reverse-mode tape. Nodes are appended as operations execute (parents always
// precede children), values are computed eagerly, and backward() runs the
// recorded tape in reverse over the nodes reachable from the loss.
class Graph {
public:
    using NodeId = int;

    enum class Op {
        Leaf,
        Add,
        Sub,
        Mul,
        AffineConst,     // a*x + b with constant a,b
        LinearMap,       // per-pixel channel projection
        Transpose2,
        ResizeNearest,
        Softmax,
        Sigmoid,
        Tanh,
        ConcatChannels,
        AvgPool2,
        Pick,            // single element of a vector, as a scalar node
        Sum,
        Mean,
        BceMean,         // clamped binary cross-entropy, mean over elements
    };

    NodeId leaf(Tensor value, bool trainable = false);

    // Elementwise; shapes must match, or b may be a scalar (broadcast).
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);

    // a*x + b with compile-time constants (no nodes created for a, b).
    NodeId affine(NodeId x, double a, double b);

    // x: (C_in,H,W), weight: (C_out,C_in), bias: (C_out) -> (C_out,H,W)
    NodeId linear_map(NodeId x, NodeId weight, NodeId bias);

    NodeId transpose2(NodeId m);

    NodeId resize_nearest(NodeId x, int out_h, int out_w);

    NodeId softmax(NodeId v);

    NodeId sigmoid(NodeId x);
    NodeId tanh_(NodeId x);

    NodeId concat_channels(NodeId a, NodeId b);

    // 2x2 average pooling, stride 2; spatial dims must be even.
    NodeId avg_pool2(NodeId x);

    NodeId pick(NodeId v, int index);

    NodeId sum(NodeId x);
    NodeId mean(NodeId x);

    // mean over elements of -(t*log(p) + (1-t)*log(1-p)), p clamped to
    // [1e-7, 1-1e-7] before the logs so the loss is always finite.
    NodeId bce_mean(NodeId pred, NodeId target);

    // Populates gradients for every node reachable from `loss` (visited
    // exactly once); unreachable nodes keep a zero gradient.
    void backward(NodeId loss);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }

    // Zero tensor of the node's shape when the node was not reached.
    Tensor grad(NodeId id) const;

    bool trainable(NodeId id) const { return nodes_[static_cast<size_t>(id)].trainable; }
    int size() const { return static_cast<int>(nodes_.size()); }

    static constexpr double kBceClampLo = 1e-7;
    static constexpr double kBceClampHi = 1.0 - 1e-7;

private:
    struct Node {
        Op op = Op::Leaf;
        std::array<NodeId, 3> parents{-1, -1, -1};
        int n_parents = 0;
        Tensor value;
        double aux_a = 0.0;  // AffineConst scale / Pick index
        double aux_b = 0.0;  // AffineConst shift
        bool trainable = false;
    };

    NodeId push(Node n);
    NodeId binary_elementwise(Op op, NodeId a, NodeId b);
    void check_id(NodeId id) const;
    void backprop_node(NodeId id, std::vector<Tensor>& grads) const;
    Tensor& grad_buf(NodeId id, std::vector<Tensor>& grads) const;

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool has_grads_ = false;
};

}  // namespace fusenas
