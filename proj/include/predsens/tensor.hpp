#pragma once

// Dense row-major tensor of 64-bit floats, rank 1 or 2. Deliberately small:
// every model we differentiate fits comfortably in a few kilobytes, so clarity
// beats BLAS here.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "predsens/common.hpp"

namespace predsens {

struct Tensor {
    std::vector<std::size_t> shape;  // rank 1: {n}; rank 2: {rows, cols}
    std::vector<double> data;        // row-major

    Tensor() = default;

    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != data.size()) {
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape product " +
                                 std::to_string(numel(shape)));
        }
    }

    static std::size_t numel(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor row(std::vector<double> d) {
        std::size_t n = d.size();
        return Tensor({1, n}, std::move(d));
    }

    static Tensor vec(std::vector<double> d) {
        std::size_t n = d.size();
        return Tensor({n}, std::move(d));
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const { return rank() == 2 ? shape[0] : 1; }
    std::size_t cols() const { return rank() == 2 ? shape[1] : shape[0]; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double d : data) {
            if (!std::isfinite(d)) return false;
        }
        return true;
    }

    std::string shape_str() const {
        std::string s = "{";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "}";
    }
};

}  // namespace predsens
