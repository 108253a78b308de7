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
#include <string>
#include <utility>
#include <vector>

#include "crosscam/core/error.hpp"
#include "crosscam/core/ops.hpp"

namespace crosscam::losses {

/// A scalar objective with its named contributions; value is their sum.
struct LossValue {
    ag::Var value;
    std::vector<std::pair<std::string, double>> terms;

    double item() const { return value.item(); }
    bool has(const std::string& name) const {
        for (const auto& [n, v] : terms)
            if (n == name) return true;
        return false;
    }
    double term(const std::string& name) const {
        for (const auto& [n, v] : terms)
            if (n == name) return v;
        throw ConfigError("loss term '" + name + "' not present");
    }
};

inline LossValue single_term(const std::string& name, ag::Var v) {
    const double x = v.item();
    if (!std::isfinite(x)) throw NumericError(name + ": non-finite loss value");
    return {std::move(v), {{name, x}}};
}

/// Sum of parts with a merged breakdown.
inline LossValue sum_of(const std::vector<LossValue>& parts) {
    if (parts.empty()) throw ConfigError("sum_of: no loss terms");
    LossValue out{parts.front().value, parts.front().terms};
    for (std::size_t i = 1; i < parts.size(); ++i) {
        out.value = ag::add(out.value, parts[i].value);
        out.terms.insert(out.terms.end(), parts[i].terms.begin(), parts[i].terms.end());
    }
    return out;
}

enum class Reduction { sum, mean };

namespace detail {
inline void require_detached(const ag::Var& v, const char* what) {
    if (v.requires_grad()) throw ContractError(std::string(what) + ": targets must be gradient-detached");
}
}  // namespace detail

}  // namespace crosscam::losses
