#include "fusenas/fusion_ops.hpp"

#include <cmath>

#include "doctest.h"
#include "fusenas/errors.hpp"
#include "fusenas/rng.hpp"
#include "grad_check.hpp"

using namespace fusenas;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// apply with params as plain tensors (bound as trainable leaves)
Tensor run_op(FusionOpKind kind, const OpParams& p, const Tensor& x1, const Tensor& x2) {
    Graph g;
    std::vector<Graph::NodeId> nodes;
    for (const auto& [name, t] : p.tensors) nodes.push_back(g.leaf(t, true));
    auto out = apply_fusion_op(g, kind, nodes, g.leaf(x1), g.leaf(x2));
    return g.value(out);
}

}  // namespace

TEST_CASE("op kind strings are exact lowercase") {
    CHECK(to_string(FusionOpKind::WeightedSum) == "weighted_sum");
    CHECK(to_string(FusionOpKind::ConcatProject) == "concat_project");
    CHECK(to_string(FusionOpKind::Glu) == "glu");
    CHECK(to_string(FusionOpKind::GuidedAttention) == "guided_attention");
    CHECK(fusion_op_from_string("glu") == FusionOpKind::Glu);
    CHECK(!fusion_op_from_string("GLU ").has_value());
    CHECK(!fusion_op_from_string("weightedsum").has_value());
}

TEST_CASE("init: weighted sum starts at plain addition") {
    Rng rng(1);
    OpParams p = init_op_params(FusionOpKind::WeightedSum, 4, rng);
    CHECK(p.tensors[0].second[0] == 0.5);
    CHECK(p.tensors[1].second[0] == 0.5);
}

TEST_CASE("init: deterministic per seed and shape rules") {
    Rng r1(42), r2(42);
    OpParams a = init_op_params(FusionOpKind::Glu, 4, r1);
    OpParams b = init_op_params(FusionOpKind::Glu, 4, r2);
    for (size_t i = 0; i < a.tensors.size(); ++i)
        CHECK(a.tensors[i].second.max_abs_diff(b.tensors[i].second) == 0.0);

    // gate weight is (2C, C) = 8x4 for C=4
    CHECK(a.tensors[2].first == "wg");
    CHECK(a.tensors[2].second.shape == std::vector<int>{8, 4});

    const double s = 1.0 / std::sqrt(8.0);
    for (int i = 0; i < a.tensors[0].second.numel(); ++i) {
        CHECK(std::abs(a.tensors[0].second[i]) <= s);
    }
    CHECK(a.tensors[1].second.max_abs_diff(Tensor({4})) == 0.0);  // bias zero

    CHECK_THROWS_AS(init_op_params(FusionOpKind::Glu, 0, r1), std::invalid_argument);
}

TEST_CASE("weighted sum: convexity identity and one-hot weights") {
    Rng rng(2);
    Tensor x = random_tensor({3, 4, 4}, rng);
    Tensor y = random_tensor({3, 4, 4}, rng);

    OpParams p = init_op_params(FusionOpKind::WeightedSum, 3, rng);
    CHECK(run_op(FusionOpKind::WeightedSum, p, x, x).max_abs_diff(x) < 1e-15);

    p.tensors[0].second[0] = 1.0;
    p.tensors[1].second[0] = 0.0;
    CHECK(run_op(FusionOpKind::WeightedSum, p, x, y).max_abs_diff(x) == 0.0);
}

TEST_CASE("weighted sum is symmetric under swapping inputs with weights") {
    Rng rng(3);
    Tensor x = random_tensor({2, 3, 3}, rng);
    Tensor y = random_tensor({2, 3, 3}, rng);
    OpParams p = init_op_params(FusionOpKind::WeightedSum, 2, rng);
    p.tensors[0].second[0] = 0.3;
    p.tensors[1].second[0] = 0.9;
    const Tensor lhs = run_op(FusionOpKind::WeightedSum, p, x, y);
    OpParams q = p;
    std::swap(q.tensors[0].second, q.tensors[1].second);
    const Tensor rhs = run_op(FusionOpKind::WeightedSum, q, y, x);
    CHECK(lhs.max_abs_diff(rhs) == 0.0);
}

TEST_CASE("guided attention with zero gate averages the inputs") {
    Rng rng(4);
    Tensor x = random_tensor({2, 2, 2}, rng);
    Tensor y = random_tensor({2, 2, 2}, rng);
    OpParams p = init_op_params(FusionOpKind::GuidedAttention, 2, rng);
    for (auto& [name, t] : p.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
    const Tensor out = run_op(FusionOpKind::GuidedAttention, p, x, y);
    for (int i = 0; i < out.numel(); ++i)
        CHECK(out[i] == doctest::Approx(0.5 * (x[i] + y[i])).epsilon(1e-14));
}

TEST_CASE("guided attention output is an elementwise convex blend") {
    Rng rng(5);
    Tensor x = random_tensor({3, 4, 4}, rng);
    Tensor y = random_tensor({3, 4, 4}, rng);
    OpParams p = init_op_params(FusionOpKind::GuidedAttention, 3, rng);
    for (auto& [name, t] : p.tensors)
        for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-2.0, 2.0);
    const Tensor out = run_op(FusionOpKind::GuidedAttention, p, x, y);
    for (int i = 0; i < out.numel(); ++i) {
        CHECK(out[i] >= std::min(x[i], y[i]) - 1e-12);
        CHECK(out[i] <= std::max(x[i], y[i]) + 1e-12);
    }
}

TEST_CASE("glu on zero inputs with zero biases is zero") {
    Rng rng(6);
    OpParams p = init_op_params(FusionOpKind::Glu, 3, rng);
    Tensor z = Tensor::zeros({3, 2, 2});
    CHECK(run_op(FusionOpKind::Glu, p, z, z).max_abs_diff(z) == 0.0);
}

TEST_CASE("every kind preserves the input shape") {
    Rng rng(7);
    for (int k = 0; k < kFusionOpCount; ++k) {
        const auto kind = static_cast<FusionOpKind>(k);
        OpParams p = init_op_params(kind, 3, rng);
        Tensor x = random_tensor({3, 4, 2}, rng);
        Tensor y = random_tensor({3, 4, 2}, rng);
        CHECK(run_op(kind, p, x, y).shape == x.shape);
    }
}

TEST_CASE("shape mismatch between inputs is rejected") {
    Rng rng(8);
    OpParams p = init_op_params(FusionOpKind::WeightedSum, 2, rng);
    Graph g;
    std::vector<Graph::NodeId> nodes;
    for (const auto& [name, t] : p.tensors) nodes.push_back(g.leaf(t));
    auto x1 = g.leaf(Tensor({2, 3, 3}));
    auto x2 = g.leaf(Tensor({2, 4, 4}));
    CHECK_THROWS_AS(apply_fusion_op(g, FusionOpKind::WeightedSum, nodes, x1, x2), ShapeError);
}

TEST_CASE("every kind passes a finite-difference gradient check") {
    Rng rng(9);
    for (int k = 0; k < kFusionOpCount; ++k) {
        const auto kind = static_cast<FusionOpKind>(k);
        OpParams p = init_op_params(kind, 2, rng);
        std::vector<Tensor> leaves;
        leaves.push_back(random_tensor({2, 2, 2}, rng));
        leaves.push_back(random_tensor({2, 2, 2}, rng));
        for (const auto& [name, t] : p.tensors) leaves.push_back(t);

        testutil::check_gradients(
            [kind](Graph& g, std::vector<Graph::NodeId>& ids) {
                std::vector<Graph::NodeId> params(ids.begin() + 2, ids.end());
                auto out = apply_fusion_op(g, kind, params, ids[0], ids[1]);
                return g.mean(g.mul(out, out));
            },
            leaves);
    }
}
