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

#include <optional>
#include <string>
#include <vector>

#include "crosscam/losses/loss_value.hpp"

namespace crosscam::losses {

struct TermInput {
    std::string name;
    bool enabled = true;
    double weight = 1.0;
    std::optional<LossValue> value;
};

/// Weighted sum of the enabled terms. An enabled term without a value is a
/// configuration error; disabled terms are ignored. The breakdown holds each
/// weighted contribution, so it sums to the total.
inline LossValue total_loss(const std::vector<TermInput>& parts) {
    std::vector<LossValue> used;
    for (const auto& p : parts) {
        if (!p.enabled) continue;
        if (!p.value) throw ConfigError("total_loss: term " + p.name + " is enabled but was not computed");
        if (p.weight == 1.0) {
            used.push_back(*p.value);
            continue;
        }
        LossValue w{ag::scale(p.value->value, p.weight), p.value->terms};
        for (auto& [n, v] : w.terms) v *= p.weight;
        used.push_back(std::move(w));
    }
    if (used.empty()) throw ConfigError("total_loss: every term is disabled");
    return sum_of(used);
}

}  // namespace crosscam::losses
