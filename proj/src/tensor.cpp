#include "fusenas/tensor.hpp"

#include <algorithm>
#include <stdexcept>

#include "fusenas/errors.hpp"

namespace fusenas {

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (count(shape) != static_cast<int>(data.size()))
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
}

Tensor Tensor::full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor Tensor::from_vector(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
}

double Tensor::max_abs_diff(const Tensor& o) const {
    if (!same_shape(o))
        throw ShapeError("max_abs_diff on shapes " + shape_str(shape) + " vs " + shape_str(o.shape));
    double m = 0.0;
    for (size_t i = 0; i < data.size(); ++i) m = std::max(m, std::abs(data[i] - o.data[i]));
    return m;
}

int Tensor::count(const std::vector<int>& s) {
    int n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string Tensor::shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

}  // namespace fusenas
