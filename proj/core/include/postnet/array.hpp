#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "postnet/errors.hpp"

namespace postnet {

// Dense row-major array of doubles. Rank 1 or 2 is all the model ever needs;
// a scalar is represented as shape {1}.
struct Array {
    std::vector<int> shape;
    std::vector<double> v;

    Array() = default;
    explicit Array(std::vector<int> s) : shape(std::move(s)), v(numel_of(shape), 0.0) {}
    Array(std::vector<int> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        if (static_cast<std::int64_t>(v.size()) != numel_of(shape))
            throw InvalidArgument("Array: data length does not match shape");
    }

    static Array scalar(double x) { return Array({1}, {x}); }
    static Array vec(std::vector<double> data) {
        const int n = static_cast<int>(data.size());
        return Array({n}, std::move(data));
    }
    static Array matrix(int r, int c, std::vector<double> data) { return Array({r, c}, std::move(data)); }
    static Array zeros(std::vector<int> s) { return Array(std::move(s)); }

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int e : s) {
            if (e < 0) throw InvalidArgument("Array: negative extent");
            n *= e;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? shape[0] : 1); }
    int cols() const { return rank() == 2 ? shape[1] : 1; }
    bool is_scalar() const { return numel() == 1; }

    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols() + j]; }

    bool same_shape(const Array& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

}  // namespace postnet
