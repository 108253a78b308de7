// Copyright 2026 The crosscam Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "crosscam/core/error.hpp"

namespace crosscam {

using Shape = std::vector<std::size_t>;

/// Tensor storage. Every buffer starts on a SIMD boundary: vectorized
/// reductions peel up to the first aligned element, so an arbitrary start
/// address would make results depend on where the allocator put the data.
using TensorData = std::vector<double, Eigen::aligned_allocator<double>>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major float64 array. Value type: copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
    Tensor(Shape shape, const std::vector<double>& data) : Tensor(std::move(shape), TensorData(data.begin(), data.end())) {}
    Tensor(Shape shape, TensorData data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_numel(shape_))
            throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    /// Builds a 2-D tensor from nested rows; all rows must have equal length.
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        Tensor t({r, c});
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
            for (double v : row) t.data_[i++] = v;
        }
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    /// Rows/cols view of a tensor as a matrix: the last axis is columns.
    std::size_t rows() const { return shape_.empty() ? 1 : numel() / shape_.back(); }
    std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    TensorData& vec() { return data_; }
    const TensorData& vec() const { return data_; }
    std::span<double> span() { return data_; }
    std::span<const double> span() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    Tensor reshaped(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        return Tensor(std::move(shape), data_);
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        check_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    bool operator==(const Tensor& o) const = default;

    void check_same(const Tensor& o, const char* what) const {
        if (shape_ != o.shape_)
            throw ShapeError(std::string(what) + ": shape " + shape_str(shape_) + " vs " +
                             shape_str(o.shape_));
    }

private:
    Shape shape_;
    TensorData data_;
};

}  // namespace crosscam
