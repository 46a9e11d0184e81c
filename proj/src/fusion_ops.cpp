#include "fusenas/fusion_ops.hpp"

#include <cmath>
#include <stdexcept>

#include "fusenas/errors.hpp"

namespace fusenas {

std::string to_string(FusionOpKind kind) {
    switch (kind) {
        case FusionOpKind::WeightedSum: return "weighted_sum";
        case FusionOpKind::ConcatProject: return "concat_project";
        case FusionOpKind::Glu: return "glu";
        case FusionOpKind::GuidedAttention: return "guided_attention";
    }
    throw std::invalid_argument("unknown fusion op kind");
}

std::optional<FusionOpKind> fusion_op_from_string(const std::string& s) {
    if (s == "weighted_sum") return FusionOpKind::WeightedSum;
    if (s == "concat_project") return FusionOpKind::ConcatProject;
    if (s == "glu") return FusionOpKind::Glu;
    if (s == "guided_attention") return FusionOpKind::GuidedAttention;
    return std::nullopt;
}

namespace {

Tensor uniform_matrix(int rows, int cols, double s, Rng& rng) {
    Tensor t({rows, cols});
    for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-s, s);
    return t;
}

}  // namespace

OpParams init_op_params(FusionOpKind kind, int channels, Rng& rng) {
    if (channels < 1)
        throw std::invalid_argument("op params need at least 1 channel, got " +
                                    std::to_string(channels));
    OpParams p;
    p.kind = kind;
    p.channels = channels;
    const int c2 = 2 * channels;
    const double s = 1.0 / std::sqrt(static_cast<double>(c2));
    switch (kind) {
        case FusionOpKind::WeightedSum:
            p.tensors.emplace_back("lambda1", Tensor::scalar(0.5));
            p.tensors.emplace_back("lambda2", Tensor::scalar(0.5));
            break;
        case FusionOpKind::ConcatProject:
            p.tensors.emplace_back("w", uniform_matrix(c2, channels, s, rng));
            p.tensors.emplace_back("b", Tensor({channels}));
            break;
        case FusionOpKind::Glu:
            p.tensors.emplace_back("wv", uniform_matrix(c2, channels, s, rng));
            p.tensors.emplace_back("bv", Tensor({channels}));
            p.tensors.emplace_back("wg", uniform_matrix(c2, channels, s, rng));
            p.tensors.emplace_back("bg", Tensor({channels}));
            break;
        case FusionOpKind::GuidedAttention:
            p.tensors.emplace_back("wg", uniform_matrix(c2, channels, s, rng));
            p.tensors.emplace_back("bg", Tensor({channels}));
            break;
    }
    return p;
}

Graph::NodeId apply_fusion_op(Graph& g, FusionOpKind kind,
                              const std::vector<Graph::NodeId>& param_nodes, Graph::NodeId x1,
                              Graph::NodeId x2) {
    const Tensor& v1 = g.value(x1);
    const Tensor& v2 = g.value(x2);
    if (!v1.same_shape(v2))
        throw ShapeError("fusion op input shapes differ: " + Tensor::shape_str(v1.shape) + " vs " +
                         Tensor::shape_str(v2.shape));

    // in-major (2C,C) weights are transposed into linear_map's (C_out,C_in)
    auto project = [&](Graph::NodeId z, Graph::NodeId w, Graph::NodeId b) {
        return g.linear_map(z, g.transpose2(w), b);
    };

    switch (kind) {
        case FusionOpKind::WeightedSum:
            return g.add(g.mul(x1, param_nodes.at(0)), g.mul(x2, param_nodes.at(1)));
        case FusionOpKind::ConcatProject:
            return project(g.concat_channels(x1, x2), param_nodes.at(0), param_nodes.at(1));
        case FusionOpKind::Glu: {
            const Graph::NodeId z = g.concat_channels(x1, x2);
            const Graph::NodeId val = project(z, param_nodes.at(0), param_nodes.at(1));
            const Graph::NodeId gate = g.sigmoid(project(z, param_nodes.at(2), param_nodes.at(3)));
            return g.mul(val, gate);
        }
        case FusionOpKind::GuidedAttention: {
            const Graph::NodeId z = g.concat_channels(x1, x2);
            const Graph::NodeId att = g.sigmoid(project(z, param_nodes.at(0), param_nodes.at(1)));
            return g.add(g.mul(x1, att), g.mul(x2, g.affine(att, -1.0, 1.0)));
        }
    }
    throw std::invalid_argument("unknown fusion op kind");
}

}  // namespace fusenas
