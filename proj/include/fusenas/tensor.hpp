#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace fusenas {

// Dense multi-dimensional array of doubles, row-major. The carrier for all
// features, parameters, and gradients.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), 0.0) {}

    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor from_vector(std::vector<double> v);

    int numel() const { return static_cast<int>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& operator[](int i) { return data[static_cast<size_t>(i)]; }
    double operator[](int i) const { return data[static_cast<size_t>(i)]; }

    // Rank-3 (C,H,W) accessor.
    double& at3(int c, int y, int x) {
        return data[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }
    double at3(int c, int y, int x) const {
        return data[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool is_scalar() const { return numel() == 1; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs_diff(const Tensor& o) const;

    static int count(const std::vector<int>& s);
    static std::string shape_str(const std::vector<int>& s);
};

}  // namespace fusenas
