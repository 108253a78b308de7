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
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "crosscam/losses/loss_value.hpp"

namespace crosscam::losses {

struct MCNLMargins {
    double m1 = 0.3;
    double m2 = 0.1;
};

enum class Metric { euclidean, cosine };

inline Metric parse_metric(const std::string& s) {
    if (s == "euclidean") return Metric::euclidean;
    if (s == "cosine") return Metric::cosine;
    throw ConfigError("unknown metric '" + s + "' (expected euclidean or cosine)");
}

/// All pairwise distances of the rows of x [N, D] as [N, N].
inline ag::Var distance_matrix(const ag::Var& x, Metric metric) {
    if (metric == Metric::euclidean) return ag::sqrt_clamped(ag::pairwise_sq_dist(x));
    ag::Var u = ag::l2_normalize_rows(x);
    return ag::add_scalar(ag::scale(ag::matmul(u, ag::transpose(u)), -1.0), 1.0);
}

/// Per-anchor hinge pair given its hardest distances.
inline double mcnl_hinge(double pos_intra, double neg_cross, double neg_intra, MCNLMargins m) {
    return std::max(0.0, m.m1 + pos_intra - neg_cross) + std::max(0.0, m.m2 + neg_cross - neg_intra);
}

namespace detail {

struct HardPairs {
    std::vector<std::size_t> pos, cross_neg, intra_neg;  // flat [N, N] indices
};

/// Hardest intra-camera positive, cross-camera negative and intra-camera
/// negative per anchor.
inline HardPairs mine_mcnl(const Tensor& d, const std::vector<long>& labels, const std::vector<int>& cameras) {
    const std::size_t n = labels.size();
    HardPairs h;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t bp = n, bc = n, bn = n;
        double vp = -std::numeric_limits<double>::infinity();
        double vc = std::numeric_limits<double>::infinity(), vn = vc;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dij = d[i * n + j];
            const bool same_cam = cameras[i] == cameras[j], same_id = labels[i] == labels[j];
            if (same_cam && same_id) {
                if (dij > vp) vp = dij, bp = j;
            } else if (!same_cam && !same_id) {
                if (dij < vc) vc = dij, bc = j;
            } else if (same_cam && !same_id) {
                if (dij < vn) vn = dij, bn = j;
            }
        }
        const std::string who = "gl_mcnl_loss: anchor " + std::to_string(i);
        if (bp == n) throw BatchCompositionError(who + " has no intra-camera positive");
        if (bc == n) throw BatchCompositionError(who + " has no cross-camera negative");
        if (bn == n) throw BatchCompositionError(who + " has no intra-camera negative");
        h.pos.push_back(i * n + bp);
        h.cross_neg.push_back(i * n + bc);
        h.intra_neg.push_back(i * n + bn);
    }
    return h;
}

inline ag::Var mcnl_level(const ag::Var& x, const std::vector<long>& labels, const std::vector<int>& cameras, MCNLMargins m,
                          Metric metric) {
    ag::Var d = distance_matrix(x, metric);
    const HardPairs h = mine_mcnl(d.value(), labels, cameras);
    ag::Var dp = ag::gather(d, h.pos), dc = ag::gather(d, h.cross_neg), dn = ag::gather(d, h.intra_neg);
    ag::Var first = ag::relu(ag::add_scalar(ag::sub(dp, dc), m.m1));
    ag::Var second = ag::relu(ag::add_scalar(ag::sub(dc, dn), m.m2));
    return ag::add(ag::sum(first), ag::sum(second));
}

}  // namespace detail

/// Global-local multi-camera negative loss. `f` is [N, d]; `w_conca` holds
/// each sample's concatenated region features [N, P*d_local] and may be
/// undefined to use the global level only. Levels are added, then / N.
/// `local_metric` overrides `metric` for the local level.
inline LossValue gl_mcnl_loss(const ag::Var& f, const ag::Var& w_conca, const std::vector<long>& labels,
                              const std::vector<int>& cameras, MCNLMargins margins = {}, Metric metric = Metric::euclidean,
                              std::optional<Metric> local_metric = std::nullopt) {
    const std::size_t n = f.dim(0);
    if (labels.size() != n || cameras.size() != n) throw ShapeError("gl_mcnl_loss: one label and camera per sample is required");
    ag::Var total = detail::mcnl_level(f, labels, cameras, margins, metric);
    if (w_conca.defined()) {
        if (w_conca.dim(0) != n) throw ShapeError("gl_mcnl_loss: local features need one row per sample");
        total = ag::add(total, detail::mcnl_level(w_conca, labels, cameras, margins, local_metric.value_or(metric)));
    }
    return single_term("L_GL_MCNL", ag::scale(total, 1.0 / static_cast<double>(n)));
}

/// Batch-hard triplet loss: mean over anchors of [margin + max d(pos) - min d(neg)]_+.
inline LossValue triplet_loss(const ag::Var& f, const std::vector<long>& labels, double margin = 0.3,
                              Metric metric = Metric::euclidean) {
    const std::size_t n = f.dim(0);
    if (labels.size() != n) throw ShapeError("triplet_loss: one label per sample is required");
    ag::Var d = distance_matrix(f, metric);
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t bp = n, bn = n;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dij = d.value()[i * n + j];
            if (labels[i] == labels[j]) {
                if (bp == n || dij > d.value()[i * n + bp]) bp = j;
            } else if (bn == n || dij < d.value()[i * n + bn]) {
                bn = j;
            }
        }
        if (bp == n || bn == n) throw BatchCompositionError("triplet_loss: anchor " + std::to_string(i) + " lacks a positive or negative");
        pos.push_back(i * n + bp);
        neg.push_back(i * n + bn);
    }
    ag::Var hinge = ag::relu(ag::add_scalar(ag::sub(ag::gather(d, pos), ag::gather(d, neg)), margin));
    return single_term("L_triplet", ag::mean(hinge));
}

}  // namespace crosscam::losses
