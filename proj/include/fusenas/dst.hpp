#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fusenas/rng.hpp"

namespace fusenas {

// Subjective opinion: per-class belief masses plus an explicit uncertainty
// mass, summing to 1. Only singleton-plus-frame opinions are modeled.
struct Opinion {
    std::vector<double> belief;
    double uncertainty = 0.0;

    int classes() const { return static_cast<int>(belief.size()); }

    // sum-to-one within 1e-12, all components non-negative
    bool valid(double tol = 1e-12) const;
    void require_valid() const;
};

Opinion make_vacuous(int n_classes);

// Total cross-class belief product z between two opinions.
double conflict(const Opinion& l, const Opinion& m);

// Dempster combination:
//   b_f^n = (b_l^n b_m^n + b_l^n u_m + b_m^n u_l) / (1 - z)
//   u_f   = u_l u_m / (1 - z)
// Undefined at total conflict: z >= 1 - 1e-9 raises TotalConflictError.
Opinion combine(const Opinion& l, const Opinion& m);

// First proposition: if b_m^g >= max_n b_l^n, the combined belief in class g
// does not drop. Raises PreconditionError when the condition fails; on valid
// inputs the check itself should never be false.
bool check_prop1(const Opinion& l, const Opinion& m, int g);

// Second proposition's bound on the possible drop:
//   b_l^g - b_f^g  <=  b_l^g (1 + u_l) / (1/(1 - u_m) + u_l)
// At u_m = 1 the bound is the limit value 0 (the drop is exactly 0).
double degradation_bound(const Opinion& l, const Opinion& m, int g);

struct OpinionConstraint {
    // require b_m^g >= max_n b_l^n for the paired sample (set by the driver)
    bool prop1_pair = false;
    int g = 0;
    // reject pairs whose conflict reaches this value
    std::optional<double> max_conflict;
};

// Uniform sample on the simplex over (b^1..b^N, u); symmetric concentration-1
// (iid exponentials, normalized). Constraints are applied by rejection; more
// than 10^6 rejected draws raises SamplingError.
Opinion sample_opinion(Rng& rng, int n_classes);

// Samples a pair (L, M) satisfying the constraint set.
std::pair<Opinion, Opinion> sample_opinion_pair(Rng& rng, int n_classes,
                                                const OpinionConstraint& constraint);

// Monte-Carlo certification report (also serialized by the CLI).
struct DstVerifyReport {
    long long trials = 0;
    long long prop1_violations = 0;
    long long bound_violations = 0;
    double max_assoc_error = 0.0;
    double max_closure_error = 0.0;
};

DstVerifyReport dst_verify(long long trials, uint64_t seed);

std::string dst_report_json(const DstVerifyReport& r);

}  // namespace fusenas
