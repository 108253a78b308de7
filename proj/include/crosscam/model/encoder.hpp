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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "crosscam/core/nn_ops.hpp"
#include "crosscam/core/random.hpp"
#include "crosscam/model/norm.hpp"

namespace crosscam::model {

struct EncoderConfig {
    std::vector<std::size_t> channels{16, 32, 64, 128};
    std::size_t in_channels = 3;
    /// stride of the last block; 1 keeps a finer final map
    std::size_t last_stride = 2;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
};

/// conv3x3 (stride 2) -> batch norm -> ReLU
struct ConvBlock {
    ag::Var weight;  // [Cout, Cin, 3, 3]
    ag::Var bias;    // [Cout]
    GlobalNormState norm;
};

struct EncoderParams {
    EncoderConfig config;
    std::vector<ConvBlock> blocks;

    static EncoderParams create(const EncoderConfig& cfg, std::uint64_t seed) {
        if (cfg.channels.empty()) throw ConfigError("encoder: at least one block is required");
        if (cfg.last_stride != 1 && cfg.last_stride != 2) throw ConfigError("encoder: last_stride must be 1 or 2");
        EncoderParams p{cfg, {}};
        std::size_t cin = cfg.in_channels;
        for (std::size_t b = 0; b < cfg.channels.size(); ++b) {
            const std::size_t cout = cfg.channels[b];
            auto eng = keyed_engine(seed, {0xe7c, b});
            Tensor w({cout, cin, 3, 3});
            const double std = std::sqrt(2.0 / static_cast<double>(cin * 9));
            for (auto& v : w.vec()) v = std * standard_normal(eng);
            p.blocks.push_back({ag::parameter(std::move(w)), ag::parameter(Tensor({cout})),
                                GlobalNormState::create(cout, cfg.bn_eps, cfg.bn_momentum)});
            cin = cout;
        }
        return p;
    }

    std::size_t out_channels() const { return config.channels.back(); }
    ag::Conv2dSpec conv_spec(std::size_t block) const {
        return {3, block + 1 == blocks.size() ? config.last_stride : 2, 1};
    }
};

/// Feature maps z for a batch of images [N, 3, H, W] -> [N, d, H/16, W/16]
/// with the default four blocks (H/8, W/8 with last_stride 1). Train phase normalizes with batch moments
/// and updates the running moments.
inline ag::Var encode(EncoderParams& params, const ag::Var& images, NormPhase phase) {
    if (images.value().ndim() != 4 || images.dim(0) == 0) throw ShapeError("encode: expected a non-empty [N, C, H, W] batch");
    if (images.dim(1) != params.config.in_channels) throw ShapeError("encode: input channel mismatch");
    ag::Var x = images;
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        auto& blk = params.blocks[b];
        ag::Var y = global_bn(blk.norm, ag::conv2d(x, blk.weight, blk.bias, params.conv_spec(b)), phase);
        // checked before the ReLU, which would map NaN to 0
        const Tensor& v = y.value();
        const std::size_t per = v.numel() / v.dim(0);
        for (std::size_t i = 0; i < v.numel(); ++i)
            if (!std::isfinite(v[i]))
                throw NumericError("encode: non-finite activation in block " + std::to_string(b) + " for batch index " +
                                   std::to_string(i / per));
        x = ag::relu(y);
    }
    return x;
}

}  // namespace crosscam::model
