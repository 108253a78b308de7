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
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "crosscam/losses/loss_value.hpp"

namespace crosscam::losses {

enum class SoftLabelMode { camera_smoothing, as_written };

inline SoftLabelMode parse_soft_label_mode(const std::string& s) {
    if (s == "camera_smoothing") return SoftLabelMode::camera_smoothing;
    if (s == "as_written") return SoftLabelMode::as_written;
    throw ConfigError("unknown soft-label mode '" + s + "' (expected camera_smoothing or as_written)");
}

struct SoftLabel {
    std::vector<double> p;
    SoftLabelMode mode = SoftLabelMode::camera_smoothing;
    double epsilon = 0.1;
    std::size_t k_e = 0;  // classes sharing the target's camera (target included)
    std::size_t k_n = 0;  // classes in other cameras
};

/// Camera-aware soft target for class `target`.
///
/// camera_smoothing: 1 - eps on the target, eps spread evenly over classes of
/// other cameras, 0 for other classes of the same camera. With no other
/// camera the target keeps all mass.
/// as_written: 1 - eps on the target, -eps/(K_e-1) for classes of other
/// cameras, +eps/(K_n-1) for other classes of the same camera.
inline SoftLabel cace_labels(std::size_t target, const std::vector<int>& class_cameras, double epsilon,
                             SoftLabelMode mode = SoftLabelMode::camera_smoothing) {
    const std::size_t k = class_cameras.size();
    if (target >= k) throw ConfigError("cace_labels: target class " + std::to_string(target) + " out of range");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("cace_labels: epsilon must be in [0, 1)");
    SoftLabel s;
    s.mode = mode;
    s.epsilon = epsilon;
    const int cam = class_cameras[target];
    for (int c : class_cameras) (c == cam ? s.k_e : s.k_n) += 1;
    s.p.assign(k, 0.0);
    if (mode == SoftLabelMode::as_written) {
        if (s.k_e <= 1 || s.k_n <= 1)
            throw ConfigError("cace_labels: as_written formula is undefined with K_e = " + std::to_string(s.k_e) +
                              ", K_n = " + std::to_string(s.k_n));
        for (std::size_t j = 0; j < k; ++j)
            s.p[j] = class_cameras[j] == cam ? epsilon / static_cast<double>(s.k_n - 1) : -epsilon / static_cast<double>(s.k_e - 1);
        s.p[target] = 1.0 - epsilon;
        return s;
    }
    if (s.k_n == 0) {
        s.p[target] = 1.0;
        return s;
    }
    for (std::size_t j = 0; j < k; ++j)
        if (class_cameras[j] != cam) s.p[j] = epsilon / static_cast<double>(s.k_n);
    s.p[target] = 1.0 - epsilon;
    return s;
}

/// One-hot target (plain cross-entropy).
inline SoftLabel one_hot_label(std::size_t target, std::size_t classes) {
    if (target >= classes) throw ConfigError("one_hot_label: target out of range");
    SoftLabel s;
    s.epsilon = 0.0;
    s.p.assign(classes, 0.0);
    s.p[target] = 1.0;
    return s;
}

inline constexpr double kLogFloor = 1e-12;

/// Mean over samples of -sum_k p_k log q_k, q = softmax(logits). Terms
/// whose q_k falls below 1e-12 while p_k != 0 use log(1e-12) and carry no
/// gradient.
inline LossValue soft_cross_entropy(const ag::Var& logits, const std::vector<SoftLabel>& labels, const std::string& name) {
    if (logits.value().ndim() != 2) throw ShapeError(name + ": logits must be [N, K]");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) throw ShapeError(name + ": one label per sample is required");
    for (const auto& l : labels)
        if (l.p.size() != k) throw ShapeError(name + ": label width " + std::to_string(l.p.size()) + " != class count " + std::to_string(k));
    ag::Var logq = ag::log_softmax_rows(logits);
    const double floor_log = std::log(kLogFloor);
    Tensor weight({n, k});
    double clamped = 0.0;
    std::size_t n_clamped = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const double p = labels[i].p[j];
            if (p == 0.0) continue;
            if (logq.value().at(i, j) < floor_log) {
                clamped += -p * floor_log;
                ++n_clamped;
            } else {
                weight.at(i, j) = -p;
            }
        }
    if (n_clamped > 0) spdlog::warn("{}: {} probabilities below {} clamped in the log", name, n_clamped, kLogFloor);
    ag::Var total = ag::add_scalar(ag::sum(ag::mul(logq, ag::constant(std::move(weight)))), clamped);
    return single_term(name, ag::scale(total, 1.0 / static_cast<double>(n)));
}

inline LossValue cace_loss(const ag::Var& logits, const std::vector<SoftLabel>& labels) {
    return soft_cross_entropy(logits, labels, "L_CaCE");
}

inline LossValue cross_entropy_loss(const ag::Var& logits, const std::vector<std::size_t>& targets) {
    std::vector<SoftLabel> labels;
    labels.reserve(targets.size());
    for (std::size_t t : targets) labels.push_back(one_hot_label(t, logits.dim(1)));
    return soft_cross_entropy(logits, labels, "L_CE");
}

}  // namespace crosscam::losses
