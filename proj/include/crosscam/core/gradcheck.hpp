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
#include <functional>
#include <random>
#include <vector>

#include "crosscam/core/autograd.hpp"
#include "crosscam/core/random.hpp"

namespace crosscam::ag {

struct GradCheckOptions {
    double step = 1e-5;
    /// Upper bound of checked coordinates per input; larger inputs are subsampled.
    std::size_t max_coords_per_input = 64;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    /// max over inputs of |analytic - numeric|_2 / max(|analytic|_2, |numeric|_2)
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    /// true when some checked analytic coordinate is nonzero
    bool nonzero_gradient = false;
};

using ScalarFn = std::function<Var(const std::vector<Var>&)>;

/// Compares reverse-mode gradients with central finite differences. `fn`
/// must be deterministic and build a scalar from the given inputs.
inline GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs, GradCheckOptions opt = {}) {
    std::vector<Var> params;
    params.reserve(inputs.size());
    for (const auto& t : inputs) params.push_back(parameter(t));
    Var out = fn(params);
    backward(out);

    GradCheckResult res;
    auto eng = keyed_engine(opt.seed, {0x67726164ULL});
    for (std::size_t which = 0; which < inputs.size(); ++which) {
        const std::size_t n = inputs[which].numel();
        std::vector<std::size_t> coords(n);
        for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        if (n > opt.max_coords_per_input) {
            shuffle_with(coords.begin(), coords.end(), eng);
            coords.resize(opt.max_coords_per_input);
        }
        const Tensor& analytic = params[which].grad();
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t idx : coords) {
            auto eval = [&](double delta) {
                NoGradGuard guard;
                std::vector<Var> args;
                args.reserve(inputs.size());
                for (std::size_t j = 0; j < inputs.size(); ++j) {
                    Tensor t = inputs[j];
                    if (j == which) t[idx] += delta;
                    args.push_back(constant(std::move(t)));
                }
                return fn(args).item();
            };
            const double numeric = (eval(opt.step) - eval(-opt.step)) / (2.0 * opt.step);
            const double a = analytic.empty() ? 0.0 : analytic[idx];
            if (a != 0.0) res.nonzero_gradient = true;
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
            ++res.coords_checked;
        }
        const double denom = std::max(std::sqrt(std::max(a2, n2)), 1e-6);
        const double rel = (a2 == 0.0 && n2 == 0.0) ? 0.0 : std::sqrt(diff2) / denom;
        res.max_rel_error = std::max(res.max_rel_error, rel);
    }
    return res;
}

}  // namespace crosscam::ag
