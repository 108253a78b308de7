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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "crosscam/core/autograd.hpp"

namespace crosscam::train {

/// Adam with bias correction; optional L2 weight decay added to the gradient.
struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::size_t t = 0;
    std::map<std::string, Tensor> m, v;

    void step(const std::vector<std::pair<std::string, ag::Var>>& params, double lr) {
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (const auto& [name, p] : params) {
            const Tensor& g = p.grad();
            if (g.numel() == 0) continue;  // untouched by this step's losses
            auto& mt = m.try_emplace(name, Tensor::zeros_like(p.value())).first->second;
            auto& vt = v.try_emplace(name, Tensor::zeros_like(p.value())).first->second;
            Tensor& w = ag::Var(p).mutable_value();
            for (std::size_t i = 0; i < w.numel(); ++i) {
                const double gi = g[i] + weight_decay * w[i];
                mt[i] = beta1 * mt[i] + (1.0 - beta1) * gi;
                vt[i] = beta2 * vt[i] + (1.0 - beta2) * gi * gi;
                w[i] -= lr * (mt[i] / c1) / (std::sqrt(vt[i] / c2) + eps);
            }
        }
    }
};

}  // namespace crosscam::train
