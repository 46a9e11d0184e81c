#include "fusenas/dst.hpp"

#include <cmath>

#include "doctest.h"
#include "fusenas/errors.hpp"

using namespace fusenas;

namespace {

Opinion op(std::vector<double> b, double u) { return Opinion{std::move(b), u}; }

double conflict_oracle(const Opinion& l, const Opinion& m) {
    double z = 0.0;
    for (int i = 0; i < l.classes(); ++i)
        for (int j = 0; j < m.classes(); ++j)
            if (i != j) z += l.belief[i] * m.belief[j];
    return z;
}

}  // namespace

TEST_CASE("conflict: no cross terms, total conflict, double-loop oracle") {
    CHECK(conflict(op({1, 0}, 0), op({1, 0}, 0)) == 0.0);
    CHECK(conflict(op({1, 0}, 0), op({0, 1}, 0)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(conflict(op({0.6, 0.2}, 0.2), op({0.5, 0.3}, 0.2)) ==
          doctest::Approx(0.6 * 0.3 + 0.2 * 0.5).epsilon(1e-15));

    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        const int n = 2 + static_cast<int>(rng.uniform_int(4));
        const Opinion l = sample_opinion(rng, n);
        const Opinion m = sample_opinion(rng, n);
        CHECK(conflict(l, m) == doctest::Approx(conflict_oracle(l, m)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(conflict(op({1, 0}, 0), op({1, 0, 0}, 0)), std::invalid_argument);
}

TEST_CASE("combine: vacuous identity, certain agreement, worked example") {
    const Opinion l = op({0.6, 0.2}, 0.2);
    const Opinion f1 = combine(l, make_vacuous(2));
    CHECK(std::abs(f1.belief[0] - 0.6) < 1e-12);
    CHECK(std::abs(f1.belief[1] - 0.2) < 1e-12);
    CHECK(std::abs(f1.uncertainty - 0.2) < 1e-12);

    const Opinion certain = op({1, 0}, 0);
    const Opinion f2 = combine(certain, certain);
    CHECK(f2.belief[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(f2.uncertainty == 0.0);

    // z = 0.28, b_f^1 = (0.3 + 0.12 + 0.1)/0.72, b_f^2 = (0.06+0.04+0.06)/0.72
    const Opinion f3 = combine(l, op({0.5, 0.3}, 0.2));
    CHECK(f3.belief[0] == doctest::Approx(0.52 / 0.72).epsilon(1e-12));
    CHECK(f3.belief[1] == doctest::Approx(0.16 / 0.72).epsilon(1e-12));
    CHECK(f3.uncertainty == doctest::Approx(0.04 / 0.72).epsilon(1e-12));
    CHECK(std::abs(f3.belief[0] + f3.belief[1] + f3.uncertainty - 1.0) < 1e-12);
}

TEST_CASE("combine rejects total conflict") {
    CHECK_THROWS_AS(combine(op({1, 0}, 0), op({0, 1}, 0)), TotalConflictError);
}

TEST_CASE("combine is commutative and closed on random pairs") {
    Rng rng(2);
    for (int t = 0; t < 2000; ++t) {
        const int n = 2 + static_cast<int>(rng.uniform_int(4));
        OpinionConstraint c;
        c.max_conflict = 0.999;
        auto [l, m] = sample_opinion_pair(rng, n, c);
        const Opinion lm = combine(l, m);
        const Opinion ml = combine(m, l);
        double total = lm.uncertainty;
        for (int i = 0; i < n; ++i) {
            CHECK(std::abs(lm.belief[i] - ml.belief[i]) < 1e-12);
            CHECK(lm.belief[i] >= 0.0);
            total += lm.belief[i];
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("combine is associative within 1e-9 on low-conflict triples") {
    Rng rng(3);
    for (int t = 0; t < 500; ++t) {
        const int n = 2 + static_cast<int>(rng.uniform_int(4));
        Opinion a = sample_opinion(rng, n), b = sample_opinion(rng, n), c = sample_opinion(rng, n);
        if (conflict(a, b) >= 0.99 || conflict(a, c) >= 0.99 || conflict(b, c) >= 0.99) continue;
        const Opinion lhs = combine(combine(a, b), c);
        const Opinion rhs = combine(a, combine(b, c));
        for (int i = 0; i < n; ++i) CHECK(std::abs(lhs.belief[i] - rhs.belief[i]) < 1e-9);
        CHECK(std::abs(lhs.uncertainty - rhs.uncertainty) < 1e-9);
    }
}

TEST_CASE("proposition 1 on worked examples") {
    // g is 0-based here; the (0.5 >= 0.4) case
    CHECK(check_prop1(op({0.4, 0.3}, 0.3), op({0.5, 0.2}, 0.3), 0));
    // u_m = 1 with the precondition intact (b_l^max = 0): equality b_f^g = b_l^g
    CHECK(check_prop1(make_vacuous(2), make_vacuous(2), 0));
    CHECK(combine(op({0.4, 0.3}, 0.3), make_vacuous(2)).belief[0] ==
          doctest::Approx(0.4).epsilon(1e-13));
    // uniform L, concentrated M
    CHECK(check_prop1(op({0.25, 0.25, 0.25}, 0.25), op({0.9, 0.05, 0.0}, 0.05), 0));

    CHECK_THROWS_AS(check_prop1(op({0.4, 0.3}, 0.3), op({0.1, 0.4}, 0.5), 0), PreconditionError);
}

TEST_CASE("degradation bound: limits and the worked example") {
    const Opinion l = op({0.9, 0.0}, 0.1);
    const Opinion m = op({0.0, 0.9}, 0.1);
    const double bound = degradation_bound(l, m, 0);
    CHECK(bound == doctest::Approx(0.9 * 1.1 / (1.0 / 0.9 + 0.1)).epsilon(1e-12));

    const Opinion f = combine(l, m);
    const double drop = l.belief[0] - f.belief[0];
    CHECK(drop == doctest::Approx(0.9 - 0.09 / 0.19).epsilon(1e-12));
    CHECK(drop <= bound);

    CHECK(degradation_bound(l, make_vacuous(2), 0) == 0.0);
    CHECK(degradation_bound(op({0.0, 0.5}, 0.5), m, 0) == 0.0);  // b_l^g = 0
}

TEST_CASE("bound is non-increasing in u_m for fixed L") {
    const Opinion l = op({0.55, 0.25}, 0.2);
    double prev = 1e9;
    for (int i = 0; i <= 50; ++i) {
        const double um = i / 50.0;
        Opinion m = op({(1 - um) * 0.7, (1 - um) * 0.3}, um);
        const double bound = degradation_bound(l, m, 0);
        CHECK(bound <= prev + 1e-15);
        prev = bound;
    }
}

TEST_CASE("sample_opinion: construction, determinism, constraint filter") {
    Rng rng(4);
    for (int t = 0; t < 500; ++t) {
        const Opinion o = sample_opinion(rng, 3);
        double total = o.uncertainty;
        for (double b : o.belief) {
            CHECK(b >= 0.0);
            total += b;
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
    }

    Rng r1(77), r2(77);
    for (int t = 0; t < 20; ++t) {
        const Opinion a = sample_opinion(r1, 5);
        const Opinion b = sample_opinion(r2, 5);
        for (int i = 0; i < 5; ++i) CHECK(a.belief[i] == b.belief[i]);
        CHECK(a.uncertainty == b.uncertainty);
    }

    Rng r3(5);
    for (int t = 0; t < 200; ++t) {
        OpinionConstraint c;
        c.prop1_pair = true;
        c.g = 1;
        auto [l, m] = sample_opinion_pair(r3, 3, c);
        const double bl_max = std::max({l.belief[0], l.belief[1], l.belief[2]});
        CHECK(m.belief[1] >= bl_max);
    }

    CHECK_THROWS_AS(sample_opinion(rng, 1), std::invalid_argument);
}

TEST_CASE("dst_verify small run is clean and deterministic") {
    const DstVerifyReport a = dst_verify(2000, 9);
    CHECK(a.trials == 2000);
    CHECK(a.prop1_violations == 0);
    CHECK(a.bound_violations == 0);
    CHECK(a.max_assoc_error < 1e-9);
    CHECK(a.max_closure_error < 1e-9);

    const DstVerifyReport b = dst_verify(2000, 9);
    CHECK(a.max_assoc_error == b.max_assoc_error);
    CHECK(a.max_closure_error == b.max_closure_error);
    CHECK(dst_report_json(a) == dst_report_json(b));
}
