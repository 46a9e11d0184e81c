#include "fusenas/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "fusenas/errors.hpp"

namespace fusenas {

namespace {

void require_both_classes(const ScoredSet& s) {
    if (s.scores.size() != s.labels.size())
        throw std::invalid_argument("scores and labels lengths differ");
    long long pos = 0;
    for (int l : s.labels) pos += l;
    if (pos == 0 || pos == static_cast<long long>(s.labels.size()))
        throw UndefinedMetricError("AUROC undefined with a single class");
}

}  // namespace

double auroc(const ScoredSet& s) {
    require_both_classes(s);
    const size_t n = s.scores.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return s.scores[a] < s.scores[b]; });

    // average ranks over tie groups
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && s.scores[idx[j + 1]] == s.scores[idx[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
        i = j + 1;
    }

    double rank_pos = 0.0;
    long long n_pos = 0;
    for (size_t k = 0; k < n; ++k)
        if (s.labels[k] == 1) {
            rank_pos += rank[k];
            ++n_pos;
        }
    const long long n_neg = static_cast<long long>(n) - n_pos;
    const double u = rank_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auroc_trapezoid(const ScoredSet& s) {
    require_both_classes(s);
    const size_t n = s.scores.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return s.scores[a] > s.scores[b]; });

    long long n_pos = 0;
    for (int l : s.labels) n_pos += l;
    const long long n_neg = static_cast<long long>(n) - n_pos;

    double area = 0.0;
    double tp = 0.0, fp = 0.0, prev_tpr = 0.0, prev_fpr = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && s.scores[idx[j + 1]] == s.scores[idx[i]]) ++j;
        for (size_t k = i; k <= j; ++k) {
            if (s.labels[idx[k]] == 1)
                tp += 1.0;
            else
                fp += 1.0;
        }
        const double tpr = tp / static_cast<double>(n_pos);
        const double fpr = fp / static_cast<double>(n_neg);
        area += 0.5 * (tpr + prev_tpr) * (fpr - prev_fpr);
        prev_tpr = tpr;
        prev_fpr = fpr;
        i = j + 1;
    }
    return area;
}

double p_auroc(const std::vector<Tensor>& maps, const std::vector<Mask>& masks) {
    if (maps.size() != masks.size())
        throw std::invalid_argument("maps and masks counts differ");
    ScoredSet s;
    for (size_t i = 0; i < maps.size(); ++i) {
        const int n = masks[i].h * masks[i].w;
        if (maps[i].numel() != n)
            throw ShapeError("map " + Tensor::shape_str(maps[i].shape) + " does not cover a " +
                             std::to_string(masks[i].h) + "x" + std::to_string(masks[i].w) + " mask");
        for (int p = 0; p < n; ++p) {
            s.scores.push_back(maps[i][p]);
            s.labels.push_back(masks[i].on[static_cast<size_t>(p)] ? 1 : 0);
        }
    }
    return auroc(s);
}

std::vector<Region> connected_components(const Mask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        throw std::invalid_argument("connectivity must be 4 or 8");
    const int h = mask.h, w = mask.w;
    std::vector<Region> regions;
    std::vector<char> seen(static_cast<size_t>(h) * w, 0);
    std::vector<int> stack;
    for (int start = 0; start < h * w; ++start) {
        if (!mask.on[static_cast<size_t>(start)] || seen[static_cast<size_t>(start)]) continue;
        Region region;
        stack.assign(1, start);
        seen[static_cast<size_t>(start)] = 1;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            region.pixels.push_back(p);
            const int y = p / w, x = p % w;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    if (connectivity == 4 && dy != 0 && dx != 0) continue;
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const int q = ny * w + nx;
                    if (mask.on[static_cast<size_t>(q)] && !seen[static_cast<size_t>(q)]) {
                        seen[static_cast<size_t>(q)] = 1;
                        stack.push_back(q);
                    }
                }
        }
        std::sort(region.pixels.begin(), region.pixels.end());
        regions.push_back(std::move(region));
    }
    return regions;
}

double aupro(const std::vector<Tensor>& maps, const std::vector<Mask>& masks, double fpr_cap,
             int connectivity) {
    if (maps.size() != masks.size())
        throw std::invalid_argument("maps and masks counts differ");
    if (!(fpr_cap > 0.0 && fpr_cap <= 1.0))
        throw std::invalid_argument("fpr_cap must lie in (0, 1], got " + std::to_string(fpr_cap));

    // global region table and per-pixel region assignment
    struct Px {
        double score;
        int region;  // -1 for normal pixels
    };
    std::vector<Px> pixels;
    std::vector<long long> region_size;
    long long total_neg = 0;
    for (size_t i = 0; i < maps.size(); ++i) {
        const int n = masks[i].h * masks[i].w;
        if (maps[i].numel() != n)
            throw ShapeError("map " + Tensor::shape_str(maps[i].shape) + " does not cover a " +
                             std::to_string(masks[i].h) + "x" + std::to_string(masks[i].w) + " mask");
        std::vector<int> region_of(static_cast<size_t>(n), -1);
        for (const Region& r : connected_components(masks[i], connectivity)) {
            const int rid = static_cast<int>(region_size.size());
            region_size.push_back(static_cast<long long>(r.pixels.size()));
            for (int p : r.pixels) region_of[static_cast<size_t>(p)] = rid;
        }
        for (int p = 0; p < n; ++p) {
            pixels.push_back({maps[i][p], region_of[static_cast<size_t>(p)]});
            if (region_of[static_cast<size_t>(p)] < 0) ++total_neg;
        }
    }
    if (region_size.empty()) throw UndefinedMetricError("AUPRO undefined without anomaly regions");
    if (total_neg == 0) throw UndefinedMetricError("AUPRO undefined without normal pixels");

    std::sort(pixels.begin(), pixels.end(),
              [](const Px& a, const Px& b) { return a.score > b.score; });

    // sweep thresholds (distinct scores, high to low), integrating PRO vs FPR
    std::vector<long long> hits(region_size.size(), 0);
    long long fp = 0;
    double area = 0.0;
    double prev_fpr = 0.0, prev_pro = 0.0;
    bool done = false;
    size_t i = 0;
    const double inv_regions = 1.0 / static_cast<double>(region_size.size());
    while (i < pixels.size() && !done) {
        size_t j = i;
        while (j + 1 < pixels.size() && pixels[j + 1].score == pixels[i].score) ++j;
        for (size_t k = i; k <= j; ++k) {
            if (pixels[k].region >= 0)
                ++hits[static_cast<size_t>(pixels[k].region)];
            else
                ++fp;
        }
        double pro = 0.0;
        for (size_t r = 0; r < region_size.size(); ++r)
            pro += static_cast<double>(hits[r]) / static_cast<double>(region_size[r]);
        pro *= inv_regions;
        const double fpr = static_cast<double>(fp) / static_cast<double>(total_neg);

        if (fpr >= fpr_cap) {
            // close the area at the cap with linear interpolation
            const double t = (fpr_cap - prev_fpr) / (fpr - prev_fpr);
            const double pro_cap = prev_pro + t * (pro - prev_pro);
            area += 0.5 * (prev_pro + pro_cap) * (fpr_cap - prev_fpr);
            done = true;
        } else {
            area += 0.5 * (prev_pro + pro) * (fpr - prev_fpr);
            prev_fpr = fpr;
            prev_pro = pro;
        }
        i = j + 1;
    }
    return area / fpr_cap;
}

}  // namespace fusenas
