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
#include <map>
#include <string>
#include <vector>

#include "crosscam/losses/loss_value.hpp"

namespace crosscam::losses {

enum class AlignmentKind { mmd_linear, coral };

namespace detail {
inline std::vector<std::vector<std::size_t>> rows_by_camera(const std::vector<int>& cameras) {
    std::map<int, std::vector<std::size_t>> by;
    for (std::size_t i = 0; i < cameras.size(); ++i) by[cameras[i]].push_back(i);
    std::vector<std::vector<std::size_t>> out;
    for (auto& [c, rows] : by) out.push_back(std::move(rows));
    return out;
}
}  // namespace detail

/// Distribution-alignment penalty between the cameras of a batch, averaged
/// over camera pairs. mmd_linear: |mean_a - mean_b|^2. coral: squared
/// Frobenius distance of the covariances (n - 1 divisor).
inline LossValue alignment_loss(const ag::Var& feats, const std::vector<int>& cameras, AlignmentKind kind) {
    if (feats.value().ndim() != 2 || cameras.size() != feats.dim(0)) throw ShapeError("alignment_loss: one camera per row is required");
    const auto groups = detail::rows_by_camera(cameras);
    if (groups.size() < 2) throw ConfigError("alignment_loss: need at least 2 cameras in the batch");
    std::vector<ag::Var> stats;
    for (const auto& rows : groups) {
        ag::Var x = ag::gather_rows(feats, rows);
        ag::Var mu = ag::mean_rows(x);
        if (kind == AlignmentKind::mmd_linear) {
            stats.push_back(mu);
            continue;
        }
        if (rows.size() < 2) throw ConfigError("alignment_loss: coral needs at least 2 samples per camera");
        ag::Var xc = ag::sub_row(x, mu);
        stats.push_back(ag::scale(ag::matmul(ag::transpose(xc), xc), 1.0 / static_cast<double>(rows.size() - 1)));
    }
    ag::Var total;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < stats.size(); ++a)
        for (std::size_t b = a + 1; b < stats.size(); ++b) {
            ag::Var diff = ag::sub(stats[a], stats[b]);
            ag::Var sq = ag::sum(ag::mul(diff, diff));
            total = total.defined() ? ag::add(total, sq) : sq;
            ++pairs;
        }
    return single_term(kind == AlignmentKind::mmd_linear ? "L_MMD" : "L_CORAL", ag::scale(total, 1.0 / static_cast<double>(pairs)));
}

}  // namespace crosscam::losses
