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

#include <cstddef>
#include <span>
#include <vector>

#include "crosscam/core/tensor.hpp"
#include "crosscam/dataset/manifest.hpp"
#include "crosscam/dataset/png_io.hpp"

namespace crosscam::dataset {

inline constexpr double kPixelMean = 0.5;
inline constexpr double kPixelStd = 0.25;

/// Planar [3, H, W] network input scaled to roughly zero mean, unit spread.
inline Tensor image_to_input(const RgbImage& img) {
    Tensor t({3, img.height, img.width});
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x)
                t[(ch * img.height + y) * img.width + x] = (img.at(y, x, ch) / 255.0 - kPixelMean) / kPixelStd;
    return t;
}

/// Decoded inputs for every manifest row, loaded once up front.
class ImageStore {
public:
    explicit ImageStore(const DatasetManifest& m) {
        images_.reserve(m.rows.size());
        for (const auto& r : m.rows) {
            images_.push_back(image_to_input(read_png(m.resolve(r))));
            if (images_.back().shape() != images_.front().shape())
                throw DataError("image " + r.image_ref + " has a different size than the first image");
        }
    }

    std::size_t size() const { return images_.size(); }
    const Tensor& at(std::size_t row) const { return images_.at(row); }

    /// Stacks the given rows into [N, 3, H, W].
    Tensor batch(std::span<const std::size_t> rows) const {
        if (rows.empty()) throw ShapeError("empty image batch");
        const Tensor& first = images_.at(rows.front());
        Shape shape{rows.size()};
        shape.insert(shape.end(), first.shape().begin(), first.shape().end());
        Tensor out(shape);
        const std::size_t n = first.numel();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const Tensor& img = images_.at(rows[i]);
            std::copy(img.vec().begin(), img.vec().end(), out.data() + i * n);
        }
        return out;
    }

private:
    std::vector<Tensor> images_;
};

}  // namespace crosscam::dataset
