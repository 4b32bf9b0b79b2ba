/**
 * @file tensor.hpp
 * @brief Dense row-major matrix of doubles. All model math is f64.
 */
#pragma once

#include <cstddef>
#include <vector>

namespace njord::diffcore {

struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0);

    static Tensor zeros(int r, int c) { return Tensor(r, c, 0.0); }
    static Tensor full(int r, int c, double v) { return Tensor(r, c, v); }
    static Tensor scalar(double v) { return Tensor(1, 1, v); }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const;
    double max_abs() const;
    void fill(double v);
};

}  // namespace njord::diffcore
