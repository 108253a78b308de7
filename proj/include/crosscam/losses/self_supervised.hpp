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
#include <span>
#include <string>
#include <vector>

#include "crosscam/losses/loss_value.hpp"

namespace crosscam::losses {

/// 1 - a.b / (|a||b|)
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("cosine_distance: length mismatch");
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) throw NumericError("cosine_distance: zero-norm input");
    return 1.0 - ab / std::sqrt(aa * bb);
}

/// Global self-supervised loss. f_glo [N, d] is the online branch; fakes[c]
/// [N, d] holds every sample moved into camera c and must be detached.
/// (1/N) sum_i (1/C) (1/|P_i|) sum_c sum_{j in P_i} D(f_glo_i, fake_c_j),
/// with P_i the samples sharing i's label (i included).
inline LossValue gsl_loss(const ag::Var& f_glo, const std::vector<ag::Var>& fakes, const std::vector<long>& labels) {
    const std::size_t n = f_glo.dim(0), c = fakes.size();
    if (c == 0) throw ConfigError("gsl_loss: no fake views");
    if (labels.size() != n) throw ShapeError("gsl_loss: one label per sample is required");
    for (const auto& fk : fakes) {
        detail::require_detached(fk, "gsl_loss");
        if (fk.shape() != f_glo.shape()) throw ShapeError("gsl_loss: fake shape mismatch");
    }
    // weights w_ij = 1 / (N C |P_i|) on label matches, tiled over the C views
    Tensor w({n, c * n});
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pi = 0;
        for (std::size_t j = 0; j < n; ++j) pi += labels[i] == labels[j];
        for (std::size_t v = 0; v < c; ++v)
            for (std::size_t j = 0; j < n; ++j)
                if (labels[i] == labels[j]) w.at(i, v * n + j) = 1.0 / static_cast<double>(n * c * pi);
    }
    ag::Var targets = ag::l2_normalize_rows(ag::concat_rows(fakes));
    ag::Var sim = ag::matmul(ag::l2_normalize_rows(f_glo), ag::transpose(targets));
    // sum w (1 - s) = 1 - sum w s, since each row of w sums to 1/N
    return single_term("L_GSL", ag::add_scalar(ag::scale(ag::sum(ag::mul(sim, ag::constant(std::move(w)))), -1.0), 1.0));
}

/// Local self-supervised loss: mean over (i, c, p) of D(w_glo[i,p], w_fakes[c][i,p]).
/// Regions are rows of [N*P, d] tensors.
inline LossValue ls_loss(const ag::Var& w_glo, const std::vector<ag::Var>& w_fakes) {
    if (w_fakes.empty()) throw ConfigError("ls_loss: no fake views");
    for (const auto& fk : w_fakes) {
        detail::require_detached(fk, "ls_loss");
        if (fk.shape() != w_glo.shape()) throw ShapeError("ls_loss: fake shape mismatch");
    }
    ag::Var online = ag::tile_rows(ag::l2_normalize_rows(w_glo), w_fakes.size());
    ag::Var sim = ag::rowwise_dot(online, ag::l2_normalize_rows(ag::concat_rows(w_fakes)));
    return single_term("L_LS", ag::add_scalar(ag::scale(ag::mean(sim), -1.0), 1.0));
}

/// Region-specific loss: every region should be most similar to itself
/// among the P regions of its map. Cosine similarity, no temperature.
inline LossValue specific_loss(const ag::Var& w_glo, std::size_t p, Reduction red = Reduction::sum) {
    if (p < 2) throw ConfigError("specific_loss: need at least 2 regions");
    if (w_glo.value().ndim() != 2 || w_glo.dim(0) % p != 0) throw ShapeError("specific_loss: expected [N*P, d]");
    const std::size_t rows = w_glo.dim(0);
    ag::Var logp = ag::log_softmax_rows(ag::block_gram(ag::l2_normalize_rows(w_glo), rows / p));
    std::vector<std::size_t> diag(rows);
    for (std::size_t r = 0; r < rows; ++r) diag[r] = r * p + r % p;
    ag::Var total = ag::scale(ag::sum(ag::gather(logp, std::move(diag))), -1.0);
    if (red == Reduction::mean) total = ag::scale(total, 1.0 / static_cast<double>(rows));
    return single_term("L_specific", total);
}

/// Region-shared loss: a linear classifier [d, P] (+ bias [P]) must recover
/// each region's index.
inline LossValue shared_loss(const ag::Var& w_glo, std::size_t p, const ag::Var& clf_weight, const ag::Var& clf_bias,
                             Reduction red = Reduction::sum) {
    if (clf_weight.value().ndim() != 2 || clf_weight.dim(1) != p || clf_bias.numel() != p)
        throw ShapeError("shared_loss: classifier width must equal the region count");
    if (w_glo.value().ndim() != 2 || w_glo.dim(0) % p != 0 || w_glo.dim(1) != clf_weight.dim(0))
        throw ShapeError("shared_loss: expected [N*P, d] regions matching the classifier input");
    const std::size_t rows = w_glo.dim(0);
    ag::Var logp = ag::log_softmax_rows(ag::linear(w_glo, clf_weight, clf_bias));
    std::vector<std::size_t> target(rows);
    for (std::size_t r = 0; r < rows; ++r) target[r] = r * p + r % p;
    ag::Var total = ag::scale(ag::sum(ag::gather(logp, std::move(target))), -1.0);
    if (red == Reduction::mean) total = ag::scale(total, 1.0 / static_cast<double>(rows));
    return single_term("L_share", total);
}

inline LossValue ssrc_loss(const LossValue& specific, const LossValue& shared) { return sum_of({specific, shared}); }
inline LossValue lsl_loss(const LossValue& ls, const LossValue& ssrc) { return sum_of({ls, ssrc}); }

}  // namespace crosscam::losses
