#include "fusenas/dst.hpp"

#include <algorithm>
#include <cmath>

#include "fusenas/errors.hpp"
#include "json.hpp"

namespace fusenas {

bool Opinion::valid(double tol) const {
    if (belief.empty() || uncertainty < 0.0) return false;
    double total = uncertainty;
    for (double b : belief) {
        if (b < 0.0 || !std::isfinite(b)) return false;
        total += b;
    }
    return std::abs(total - 1.0) <= tol;
}

void Opinion::require_valid() const {
    if (!valid()) throw std::invalid_argument("opinion must have non-negative masses summing to 1");
}

Opinion make_vacuous(int n_classes) {
    Opinion o;
    o.belief.assign(static_cast<size_t>(n_classes), 0.0);
    o.uncertainty = 1.0;
    return o;
}

double conflict(const Opinion& l, const Opinion& m) {
    if (l.classes() != m.classes())
        throw std::invalid_argument("conflict: class counts differ (" +
                                    std::to_string(l.classes()) + " vs " +
                                    std::to_string(m.classes()) + ")");
    // sum_{i != j} b_l^i b_m^j = (sum b_l)(sum b_m) - sum_n b_l^n b_m^n
    double sl = 0.0, sm = 0.0, diag = 0.0;
    for (int n = 0; n < l.classes(); ++n) {
        sl += l.belief[n];
        sm += m.belief[n];
        diag += l.belief[n] * m.belief[n];
    }
    return sl * sm - diag;
}

Opinion combine(const Opinion& l, const Opinion& m) {
    l.require_valid();
    m.require_valid();
    const double z = conflict(l, m);
    if (z >= 1.0 - 1e-9)
        throw TotalConflictError("combination undefined at total conflict (z = " +
                                 std::to_string(z) + ")");
    const double norm = 1.0 / (1.0 - z);
    Opinion f;
    f.belief.resize(l.belief.size());
    for (int n = 0; n < l.classes(); ++n)
        f.belief[n] = (l.belief[n] * m.belief[n] + l.belief[n] * m.uncertainty +
                       m.belief[n] * l.uncertainty) *
                      norm;
    f.uncertainty = l.uncertainty * m.uncertainty * norm;
    return f;
}

bool check_prop1(const Opinion& l, const Opinion& m, int g) {
    l.require_valid();
    m.require_valid();
    if (g < 0 || g >= l.classes())
        throw std::invalid_argument("class index " + std::to_string(g) + " out of range");
    const double bl_max = *std::max_element(l.belief.begin(), l.belief.end());
    if (m.belief[g] < bl_max)
        throw PreconditionError("requires b_m^g >= max_n b_l^n (" + std::to_string(m.belief[g]) +
                                " < " + std::to_string(bl_max) + ")");
    const Opinion f = combine(l, m);
    return f.belief[g] >= l.belief[g] - 1e-12;
}

double degradation_bound(const Opinion& l, const Opinion& m, int g) {
    l.require_valid();
    m.require_valid();
    if (g < 0 || g >= l.classes())
        throw std::invalid_argument("class index " + std::to_string(g) + " out of range");
    if (m.uncertainty >= 1.0) return 0.0;  // limit value; the drop is exactly 0 there
    return l.belief[g] * (1.0 + l.uncertainty) /
           (1.0 / (1.0 - m.uncertainty) + l.uncertainty);
}

Opinion sample_opinion(Rng& rng, int n_classes) {
    if (n_classes < 2)
        throw std::invalid_argument("opinions need at least 2 classes, got " +
                                    std::to_string(n_classes));
    Opinion o;
    o.belief.resize(static_cast<size_t>(n_classes));
    double total = 0.0;
    for (auto& b : o.belief) total += (b = rng.exponential());
    total += (o.uncertainty = rng.exponential());
    for (auto& b : o.belief) b /= total;
    o.uncertainty /= total;
    return o;
}

std::pair<Opinion, Opinion> sample_opinion_pair(Rng& rng, int n_classes,
                                                const OpinionConstraint& constraint) {
    constexpr long long kMaxDraws = 1000000;
    for (long long draw = 0; draw < kMaxDraws; ++draw) {
        Opinion l = sample_opinion(rng, n_classes);
        Opinion m = sample_opinion(rng, n_classes);
        if (constraint.prop1_pair) {
            const double bl_max = *std::max_element(l.belief.begin(), l.belief.end());
            if (m.belief[constraint.g] < bl_max) continue;
        }
        if (constraint.max_conflict && conflict(l, m) >= *constraint.max_conflict) continue;
        return {std::move(l), std::move(m)};
    }
    throw SamplingError("constraint rejection exceeded 10^6 draws");
}

DstVerifyReport dst_verify(long long trials, uint64_t seed) {
    DstVerifyReport rep;
    rep.trials = trials;
    const int class_counts[] = {2, 3, 5};

    Rng prop1_rng(seed, "dst.prop1");
    Rng bound_rng(seed, "dst.bound");
    Rng assoc_rng(seed, "dst.assoc");

    for (long long t = 0; t < trials; ++t) {
        const int n = class_counts[t % 3];

        // Proposition 1 on a constrained pair
        {
            OpinionConstraint c;
            c.prop1_pair = true;
            c.g = static_cast<int>(prop1_rng.uniform_int(static_cast<uint64_t>(n)));
            c.max_conflict = 1.0 - 1e-9;
            auto [l, m] = sample_opinion_pair(prop1_rng, n, c);
            if (!check_prop1(l, m, c.g)) ++rep.prop1_violations;
        }

        // Proposition 2 bound on an unconstrained pair (z < 0.999)
        {
            OpinionConstraint c;
            c.max_conflict = 0.999;
            auto [l, m] = sample_opinion_pair(bound_rng, n, c);
            const int g = static_cast<int>(bound_rng.uniform_int(static_cast<uint64_t>(n)));
            const Opinion f = combine(l, m);
            const double drop = l.belief[g] - f.belief[g];
            if (drop > degradation_bound(l, m, g) + 1e-12) ++rep.bound_violations;

            double closure = f.uncertainty;
            for (double b : f.belief) closure += b;
            rep.max_closure_error = std::max(rep.max_closure_error, std::abs(closure - 1.0));
        }

        // associativity on a triple with pairwise z < 0.99
        {
            OpinionConstraint c;
            c.max_conflict = 0.99;
            auto [a, b] = sample_opinion_pair(assoc_rng, n, c);
            Opinion cc;
            for (int tries = 0;; ++tries) {
                cc = sample_opinion(assoc_rng, n);
                if (conflict(a, cc) < 0.99 && conflict(b, cc) < 0.99) break;
                if (tries > 1000000) throw SamplingError("triple rejection exceeded 10^6 draws");
            }
            const Opinion lhs = combine(combine(a, b), cc);
            const Opinion rhs = combine(a, combine(b, cc));
            double err = std::abs(lhs.uncertainty - rhs.uncertainty);
            for (int i = 0; i < n; ++i) err = std::max(err, std::abs(lhs.belief[i] - rhs.belief[i]));
            rep.max_assoc_error = std::max(rep.max_assoc_error, err);
        }
    }
    return rep;
}

std::string dst_report_json(const DstVerifyReport& r) {
    nlohmann::ordered_json j{{"trials", r.trials},
                             {"prop1_violations", r.prop1_violations},
                             {"bound_violations", r.bound_violations},
                             {"max_assoc_error", r.max_assoc_error},
                             {"max_closure_error", r.max_closure_error}};
    return j.dump(2) + "\n";
}

}  // namespace fusenas
