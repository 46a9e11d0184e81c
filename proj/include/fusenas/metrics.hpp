#pragma once

#include <cstdint>
#include <vector>

#include "fusenas/tensor.hpp"

namespace fusenas {

// Image-level scores with binary labels.
struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;  // 0 or 1
};

// Binary ground-truth mask, row-major.
struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> on;
};

// Connected anomaly region: flat pixel indices, sorted ascending.
struct Region {
    std::vector<int> pixels;
};

// Exact rank-based AUROC (Mann-Whitney, ties credit 0.5). Both classes must
// be present.
double auroc(const ScoredSet& s);

// Same value computed independently by integrating the empirical ROC curve
// with trapezoids; cross-checks the rank route to 1e-12.
double auroc_trapezoid(const ScoredSet& s);

// AUROC over the flattened concatenation of all pixels.
double p_auroc(const std::vector<Tensor>& maps, const std::vector<Mask>& masks);

// Regions from connectivity labeling (8 by default, 4 supported), ordered by
// the scanline position of each region's first pixel.
std::vector<Region> connected_components(const Mask& mask, int connectivity = 8);

// Area under the per-region-overlap curve vs false-positive rate, integrated
// on [0, fpr_cap] by trapezoid and normalized by fpr_cap. Thresholds sweep
// the distinct score values from high to low.
double aupro(const std::vector<Tensor>& maps, const std::vector<Mask>& masks, double fpr_cap,
             int connectivity = 8);

}  // namespace fusenas
