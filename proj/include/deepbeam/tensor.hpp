// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

namespace deepbeam::nn {

/// Dense row-major tensor of doubles.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0);
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    std::size_t numel() const { return data.size(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // 3-D access (rows, cols, channels), the layout of network activations.
    double& at3(std::size_t i, std::size_t j, std::size_t c) {
        return data[(i * shape[1] + j) * shape[2] + c];
    }
    double at3(std::size_t i, std::size_t j, std::size_t c) const {
        return data[(i * shape[1] + j) * shape[2] + c];
    }

    bool all_finite() const;
    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

} // namespace deepbeam::nn
