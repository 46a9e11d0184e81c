#pragma once

// Independent brute-force oracles for the benchmark metrics. Everything here
// recomputes from first principles (pairwise counts, full threshold sweeps,
// recursive flood fill) and never calls the implementations under test.

#include <algorithm>
#include <functional>
#include <set>
#include <vector>

#include "fusenas/metrics.hpp"

namespace fusenas::testutil {

// AUROC as the fraction of (positive, negative) pairs won, ties worth 0.5.
inline double auroc_pairwise_oracle(const ScoredSet& s) {
    double wins = 0.0;
    long long pairs = 0;
    for (size_t i = 0; i < s.scores.size(); ++i) {
        if (s.labels[i] != 1) continue;
        for (size_t j = 0; j < s.scores.size(); ++j) {
            if (s.labels[j] != 0) continue;
            ++pairs;
            if (s.scores[i] > s.scores[j])
                wins += 1.0;
            else if (s.scores[i] == s.scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// Recursive flood fill with 8- or 4-connectivity; regions in scanline order.
inline std::vector<Region> flood_fill_oracle(const Mask& mask, int connectivity = 8) {
    const int h = mask.h, w = mask.w;
    std::vector<char> seen(static_cast<size_t>(h) * w, 0);
    std::vector<Region> regions;
    std::function<void(int, int, Region&)> fill = [&](int y, int x, Region& r) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        const int p = y * w + x;
        if (!mask.on[static_cast<size_t>(p)] || seen[static_cast<size_t>(p)]) return;
        seen[static_cast<size_t>(p)] = 1;
        r.pixels.push_back(p);
        fill(y - 1, x, r);
        fill(y + 1, x, r);
        fill(y, x - 1, r);
        fill(y, x + 1, r);
        if (connectivity == 8) {
            fill(y - 1, x - 1, r);
            fill(y - 1, x + 1, r);
            fill(y + 1, x - 1, r);
            fill(y + 1, x + 1, r);
        }
    };
    for (int p = 0; p < h * w; ++p) {
        if (!mask.on[static_cast<size_t>(p)] || seen[static_cast<size_t>(p)]) continue;
        Region r;
        fill(p / w, p % w, r);
        std::sort(r.pixels.begin(), r.pixels.end());
        regions.push_back(std::move(r));
    }
    return regions;
}

// Full-threshold-sweep AUPRO: recompute PRO/FPR from scratch per distinct
// score, integrate with trapezoids, clip at the cap.
inline double aupro_sweep_oracle(const std::vector<Tensor>& maps, const std::vector<Mask>& masks,
                                 double fpr_cap, int connectivity = 8) {
    struct Img {
        std::vector<std::vector<int>> regions;
        const Tensor* map;
        const Mask* mask;
    };
    std::vector<Img> imgs;
    std::set<double, std::greater<double>> thresholds;
    long long total_neg = 0;
    for (size_t i = 0; i < maps.size(); ++i) {
        Img im;
        im.map = &maps[i];
        im.mask = &masks[i];
        for (const Region& r : flood_fill_oracle(masks[i], connectivity))
            im.regions.push_back(r.pixels);
        imgs.push_back(std::move(im));
        for (int p = 0; p < maps[i].numel(); ++p) thresholds.insert(maps[i][p]);
        for (auto bit : masks[i].on) total_neg += bit ? 0 : 1;
    }

    std::vector<std::pair<double, double>> curve{{0.0, 0.0}};  // (fpr, pro)
    for (double t : thresholds) {
        long long fp = 0;
        double pro = 0.0;
        long long n_regions = 0;
        for (const Img& im : imgs) {
            for (int p = 0; p < im.map->numel(); ++p)
                if ((*im.map)[p] >= t && !im.mask->on[static_cast<size_t>(p)]) ++fp;
            for (const auto& region : im.regions) {
                long long hit = 0;
                for (int p : region)
                    if ((*im.map)[p] >= t) ++hit;
                pro += static_cast<double>(hit) / static_cast<double>(region.size());
                ++n_regions;
            }
        }
        curve.emplace_back(static_cast<double>(fp) / static_cast<double>(total_neg),
                           pro / static_cast<double>(n_regions));
    }

    double area = 0.0;
    for (size_t i = 1; i < curve.size(); ++i) {
        auto [x0, y0] = curve[i - 1];
        auto [x1, y1] = curve[i];
        if (x0 >= fpr_cap) break;
        if (x1 > fpr_cap) {
            const double t = (fpr_cap - x0) / (x1 - x0);
            const double y_cap = y0 + t * (y1 - y0);
            area += 0.5 * (y0 + y_cap) * (fpr_cap - x0);
            break;
        }
        area += 0.5 * (y0 + y1) * (x1 - x0);
    }
    return area / fpr_cap;
}

}  // namespace fusenas::testutil
