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
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosscam/core/error.hpp"
#include "crosscam/core/random.hpp"
#include "crosscam/dataset/manifest.hpp"

namespace crosscam::sampler {

/// Intra-camera class labels for the train split. Under intra-camera
/// supervision a label is only meaningful within its camera, so each
/// (identity, camera) pair is its own class. Classes are numbered in
/// (identity, camera) order.
struct IntraCameraLabels {
    std::vector<int> row_class;               // per manifest row; -1 for non-train rows
    std::vector<int> class_camera;            // camera of each class
    std::vector<std::pair<long, int>> class_key;  // (identity, camera) of each class
    std::vector<std::vector<std::size_t>> class_rows;

    std::size_t num_classes() const { return class_camera.size(); }

    static IntraCameraLabels build(const dataset::DatasetManifest& m) {
        IntraCameraLabels out;
        std::map<std::pair<long, int>, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < m.rows.size(); ++i)
            if (m.rows[i].split == dataset::Split::train) groups[{m.rows[i].identity, m.rows[i].camera}].push_back(i);
        out.row_class.assign(m.rows.size(), -1);
        for (auto& [key, rows] : groups) {
            const int cls = static_cast<int>(out.class_camera.size());
            out.class_camera.push_back(key.second);
            out.class_key.push_back(key);
            for (auto r : rows) out.row_class[r] = cls;
            out.class_rows.push_back(std::move(rows));
        }
        return out;
    }
};

struct BatchPlan {
    std::vector<std::size_t> indices;
    std::pair<int, int> camera_pair{0, 0};

    bool operator==(const BatchPlan&) const = default;
};

inline nlohmann::json to_json(const BatchPlan& b) {
    return {{"camera_pair", {b.camera_pair.first, b.camera_pair.second}}, {"indices", b.indices}};
}

struct SamplerConfig {
    std::size_t batch_size = 128;
    std::size_t instances_per_identity = 4;
};

/// One epoch of camera-pair batches.
///
/// Each batch draws two distinct cameras uniformly, then
/// batch_size / (2 * instances_per_identity) classes per camera and
/// instances_per_identity rows per class (with replacement when a class is
/// short of images). Classes are consumed without replacement from a
/// per-camera queue that reshuffles when exhausted; the epoch ends once every
/// class of an eligible camera has appeared. Cameras with fewer than two
/// classes cannot supply intra-camera negatives and are not sampled.
inline std::vector<BatchPlan> make_batches(const dataset::DatasetManifest& m, const SamplerConfig& cfg, std::uint64_t seed) {
    const std::size_t k = cfg.instances_per_identity;
    if (k < 2) throw ConfigError("sampler: instances_per_identity must be >= 2 so every class has a positive");
    if (cfg.batch_size == 0) throw ConfigError("sampler: batch_size must be positive");
    if (cfg.batch_size % (2 * k) != 0)
        throw ConfigError("sampler: batch_size " + std::to_string(cfg.batch_size) + " is not divisible by 2 * instances_per_identity");
    const std::size_t per_camera = cfg.batch_size / (2 * k);

    const auto labels = IntraCameraLabels::build(m);
    std::map<int, std::vector<int>> camera_classes;
    for (std::size_t c = 0; c < labels.num_classes(); ++c) camera_classes[labels.class_camera[c]].push_back(static_cast<int>(c));
    std::vector<int> cameras;
    for (const auto& [cam, classes] : camera_classes)
        if (classes.size() >= 2) cameras.push_back(cam);
    if (cameras.size() < 2)
        throw ConfigError("sampler: train split needs at least 2 cameras with 2 or more identities, found " +
                          std::to_string(cameras.size()));

    auto eng = keyed_engine(seed, {0x5a3b});
    std::map<int, std::vector<int>> queue;  // back() is next
    auto next_class = [&](int cam, const std::set<int>& taken) {
        auto& q = queue[cam];
        if (q.empty()) {
            q = camera_classes[cam];
            shuffle_with(q.begin(), q.end(), eng);
        }
        // Prefer a class not yet in this batch when the queue offers one.
        for (auto it = q.rbegin(); it != q.rend(); ++it)
            if (!taken.count(*it)) {
                const int c = *it;
                q.erase(std::next(it).base());
                return c;
            }
        const int c = q.back();
        q.pop_back();
        return c;
    };

    std::set<int> uncovered;
    for (int cam : cameras)
        for (int c : camera_classes[cam]) uncovered.insert(c);

    std::vector<BatchPlan> plans;
    while (!uncovered.empty()) {
        const std::size_t a = uniform_index(eng, cameras.size());
        std::size_t b = uniform_index(eng, cameras.size() - 1);
        if (b >= a) ++b;
        BatchPlan plan;
        plan.camera_pair = {cameras[a], cameras[b]};
        plan.indices.reserve(cfg.batch_size);
        for (int cam : {cameras[a], cameras[b]}) {
            std::set<int> taken;
            for (std::size_t j = 0; j < per_camera; ++j) {
                const int cls = next_class(cam, taken);
                taken.insert(cls);
                uncovered.erase(cls);
                std::vector<std::size_t> rows = labels.class_rows[static_cast<std::size_t>(cls)];
                shuffle_with(rows.begin(), rows.end(), eng);
                for (std::size_t t = 0; t < k; ++t)
                    plan.indices.push_back(t < rows.size() ? rows[t] : rows[uniform_index(eng, rows.size())]);
            }
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

}  // namespace crosscam::sampler
