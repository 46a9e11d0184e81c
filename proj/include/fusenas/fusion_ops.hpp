#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fusenas/graph.hpp"
#include "fusenas/rng.hpp"
#include "fusenas/tensor.hpp"

namespace fusenas {

// The candidate operation pool applied at each cell's intermediate nodes.
// The set is closed and ordered; the index doubles as the position in the
// per-node operation-mixing weight vector.
enum class FusionOpKind : int {
    WeightedSum = 0,
    ConcatProject = 1,
    Glu = 2,
    GuidedAttention = 3,
};

constexpr int kFusionOpCount = 4;

// Serialized form used in genotype files (exact lowercase match on parse).
std::string to_string(FusionOpKind kind);
std::optional<FusionOpKind> fusion_op_from_string(const std::string& s);

// Learnable parameters of one operation instance. Projection weights are
// stored input-major, (2C, C); `tensors` order is fixed per kind:
//   WeightedSum:     lambda1 (1), lambda2 (1)
//   ConcatProject:   w (2C,C), b (C)
//   Glu:             wv (2C,C), bv (C), wg (2C,C), bg (C)
//   GuidedAttention: wg (2C,C), bg (C)
struct OpParams {
    FusionOpKind kind;
    int channels = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

// WeightedSum scalars start at 0.5 (plain addition); projection weights are
// uniform(-s, s) with s = 1/sqrt(2C); biases zero.
OpParams init_op_params(FusionOpKind kind, int channels, Rng& rng);

// Applies the operation inside a graph. `param_nodes` must hold the bound
// leaves in the same order as OpParams::tensors. x1, x2: (C,H,W), same shape.
Graph::NodeId apply_fusion_op(Graph& g, FusionOpKind kind,
                              const std::vector<Graph::NodeId>& param_nodes, Graph::NodeId x1,
                              Graph::NodeId x2);

}  // namespace fusenas
