#include "fusenas/graph.hpp"

#include <cmath>
#include <vector>

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

}  // namespace

TEST_CASE("softmax matches closed forms") {
    Graph g;
    auto y = g.softmax(g.leaf(Tensor::from_vector({0, 0, 0})));
    for (int i = 0; i < 3; ++i) CHECK(g.value(y)[i] == doctest::Approx(1.0 / 3).epsilon(1e-14));

    auto y2 = g.softmax(g.leaf(Tensor::from_vector({1, 1})));
    CHECK(g.value(y2)[0] == doctest::Approx(0.5).epsilon(1e-14));

    // e^2/(e^2+1) evaluated with long doubles as the oracle
    const long double e2 = std::exp(2.0L);
    const double expect0 = static_cast<double>(e2 / (e2 + 1.0L));
    auto y3 = g.softmax(g.leaf(Tensor::from_vector({2, 0})));
    CHECK(g.value(y3)[0] == doctest::Approx(expect0).epsilon(1e-14));
    CHECK(g.value(y3)[1] == doctest::Approx(1.0 - expect0).epsilon(1e-12));
}

TEST_CASE("softmax invariants: normalization, argmax, shift") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(6));
        Tensor v = random_tensor({n}, rng, -5.0, 5.0);
        Graph g;
        auto out = g.value(g.softmax(g.leaf(v)));

        double total = 0.0;
        int arg_in = 0, arg_out = 0;
        for (int i = 0; i < n; ++i) {
            total += out[i];
            CHECK(out[i] > 0.0);
            CHECK(out[i] < 1.0);
            if (v[i] > v[arg_in]) arg_in = i;
            if (out[i] > out[arg_out]) arg_out = i;
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
        CHECK(arg_in == arg_out);

        const double c = rng.uniform(-10.0, 10.0);
        Tensor shifted = v;
        for (int i = 0; i < n; ++i) shifted[i] += c;
        Graph g2;
        auto out2 = g2.value(g2.softmax(g2.leaf(shifted)));
        for (int i = 0; i < n; ++i) CHECK(std::abs(out[i] - out2[i]) < 1e-12);
    }
}

TEST_CASE("softmax rejects empty and non-vector input") {
    Graph g;
    CHECK_THROWS_AS(g.softmax(g.leaf(Tensor({1, 2, 2}))), std::invalid_argument);
}

TEST_CASE("elementwise identities and arithmetic") {
    Rng rng(3);
    Tensor x = random_tensor({2, 3, 3}, rng);
    Graph g;
    auto nx = g.leaf(x);
    auto zeros = g.leaf(Tensor::zeros({2, 3, 3}));
    auto ones = g.leaf(Tensor::full({2, 3, 3}, 1.0));
    CHECK(g.value(g.add(nx, zeros)).max_abs_diff(x) == 0.0);
    CHECK(g.value(g.mul(nx, ones)).max_abs_diff(x) == 0.0);

    auto s = g.add(g.leaf(Tensor::from_vector({1, 2})), g.leaf(Tensor::from_vector({3, 4})));
    CHECK(g.value(s)[0] == 4.0);
    CHECK(g.value(s)[1] == 6.0);
}

TEST_CASE("elementwise shape mismatch names both shapes") {
    Graph g;
    auto a = g.leaf(Tensor({2, 3}));
    auto b = g.leaf(Tensor({4}));
    try {
        g.add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4]") != std::string::npos);
    }
}

TEST_CASE("scalar broadcast on second operand") {
    Graph g;
    auto a = g.leaf(Tensor::from_vector({1, 2, 3}));
    auto c = g.leaf(Tensor::scalar(2.0));
    auto y = g.mul(a, c);
    CHECK(g.value(y)[2] == 6.0);
}

TEST_CASE("linear_map identity, constant, and 2x2 oracle") {
    Rng rng(5);
    Tensor x = random_tensor({2, 2, 2}, rng);

    Graph g;
    auto nx = g.leaf(x);
    Tensor eye({2, 2});
    eye[0] = 1.0;
    eye[3] = 1.0;
    auto y = g.linear_map(nx, g.leaf(eye), g.leaf(Tensor({2})));
    CHECK(g.value(y).max_abs_diff(x) < 1e-15);

    Tensor bias({2});
    bias[0] = 0.7;
    bias[1] = -0.3;
    auto yc = g.linear_map(nx, g.leaf(Tensor({2, 2})), g.leaf(bias));
    for (int p = 0; p < 4; ++p) {
        CHECK(g.value(yc)[p] == 0.7);
        CHECK(g.value(yc)[4 + p] == -0.3);
    }

    // random 2x2 weight on a 2x1x1 input, hand-multiplied
    Tensor xs({2, 1, 1});
    xs[0] = 1.5;
    xs[1] = -2.0;
    Tensor w = random_tensor({2, 2}, rng);
    Tensor b({2});
    b[0] = 0.1;
    b[1] = 0.2;
    auto ys = g.linear_map(g.leaf(xs), g.leaf(w), g.leaf(b));
    CHECK(g.value(ys)[0] == doctest::Approx(w[0] * 1.5 + w[1] * -2.0 + 0.1).epsilon(1e-14));
    CHECK(g.value(ys)[1] == doctest::Approx(w[2] * 1.5 + w[3] * -2.0 + 0.2).epsilon(1e-14));
}

TEST_CASE("linear_map dimension mismatch raises shape error") {
    Graph g;
    auto x = g.leaf(Tensor({3, 2, 2}));
    CHECK_THROWS_AS(g.linear_map(x, g.leaf(Tensor({2, 4})), g.leaf(Tensor({2}))), ShapeError);
}

TEST_CASE("resize_nearest identity, tile, block expansion") {
    Rng rng(7);
    Tensor x = random_tensor({1, 2, 2}, rng);
    Graph g;
    auto nx = g.leaf(x);
    CHECK(g.value(g.resize_nearest(nx, 2, 2)).max_abs_diff(x) == 0.0);

    auto tiled = g.value(g.resize_nearest(g.leaf(Tensor::full({1, 1, 1}, 3.5)), 4, 4));
    for (int i = 0; i < 16; ++i) CHECK(tiled[i] == 3.5);

    // 2x2 checker expands into 2x2 blocks
    Tensor checker({1, 2, 2}, {1, 0, 0, 1});
    auto up = g.value(g.resize_nearest(g.leaf(checker), 4, 4));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(up.at3(0, i, j) == checker.at3(0, i / 2, j / 2));

    CHECK_THROWS_AS(g.resize_nearest(nx, 0, 4), std::invalid_argument);
}

TEST_CASE("backward: sum of squares and disconnected parameters") {
    Graph g;
    Tensor x = Tensor::from_vector({1.0, -2.0, 3.0});
    auto nx = g.leaf(x, true);
    auto detached = g.leaf(Tensor::from_vector({5.0}), true);
    auto loss = g.sum(g.mul(nx, nx));
    g.backward(loss);
    const Tensor grad = g.grad(nx);
    for (int i = 0; i < 3; ++i) CHECK(grad[i] == doctest::Approx(2.0 * x[i]));
    CHECK(g.grad(detached).max_abs_diff(Tensor({1})) == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    Graph g;
    auto x = g.leaf(Tensor::from_vector({1, 2}));
    CHECK_THROWS_AS(g.backward(x), std::invalid_argument);
}

TEST_CASE("gradients match central finite differences on random graphs") {
    Rng rng(2024);
    for (int trial = 0; trial < 12; ++trial) {
        Tensor a = random_tensor({2, 4, 4}, rng);
        Tensor b = random_tensor({2, 4, 4}, rng);
        Tensor w = random_tensor({2, 4}, rng, -0.6, 0.6);
        Tensor bias = random_tensor({2}, rng, -0.2, 0.2);
        Tensor alpha = random_tensor({3}, rng, -1.5, 1.5);
        const int variant = trial % 4;

        testutil::check_gradients(
            [variant](Graph& g, std::vector<Graph::NodeId>& ids) {
                auto [a, b, w, bias, alpha] = std::tuple(ids[0], ids[1], ids[2], ids[3], ids[4]);
                auto weights = g.softmax(alpha);
                auto mixed = g.add(g.mul(a, g.pick(weights, 0)),
                                   g.mul(b, g.pick(weights, 1)));
                Graph::NodeId h;
                switch (variant) {
                    case 0: h = g.tanh_(g.linear_map(g.concat_channels(a, b), w, bias)); break;
                    case 1: h = g.sigmoid(g.avg_pool2(mixed)); break;
                    case 2: h = g.resize_nearest(g.sub(mixed, g.affine(a, 0.5, 0.1)), 6, 6); break;
                    default: h = g.mul(mixed, g.tanh_(b)); break;
                }
                return g.mean(g.mul(h, h));
            },
            {a, b, w, bias, alpha});
    }
}

TEST_CASE("bce_mean value and gradient") {
    Graph g;
    Tensor pred = Tensor::from_vector({0.5, 0.5});
    Tensor target = Tensor::from_vector({0.0, 0.0});
    auto loss = g.bce_mean(g.leaf(pred), g.leaf(target));
    CHECK(g.value(loss)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Rng rng(9);
    Tensor p = random_tensor({6}, rng, 0.05, 0.95);
    Tensor t({6});
    for (int i = 0; i < 6; ++i) t[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    testutil::check_gradients(
        [&](Graph& g2, std::vector<Graph::NodeId>& ids) {
            return g2.bce_mean(g2.sigmoid(ids[0]), g2.leaf(t));
        },
        {p});
}

TEST_CASE("tensor invariants after forward/backward on finite inputs") {
    Rng rng(31);
    Tensor a = random_tensor({3, 4, 4}, rng);
    Tensor w = random_tensor({3, 6}, rng);
    Tensor bias = random_tensor({3}, rng);
    Graph g;
    auto na = g.leaf(a, true);
    auto nw = g.leaf(w, true);
    auto nb = g.leaf(bias, true);
    auto h = g.tanh_(g.linear_map(g.concat_channels(na, g.sigmoid(na)), nw, nb));
    auto loss = g.mean(g.mul(h, h));
    g.backward(loss);
    CHECK(g.value(loss).all_finite());
    CHECK(g.grad(na).all_finite());
    CHECK(g.grad(nw).all_finite());
    CHECK(g.grad(nb).all_finite());
}
