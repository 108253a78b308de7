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
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "crosscam/core/error.hpp"
#include "crosscam/core/random.hpp"
#include "crosscam/dataset/manifest.hpp"

namespace crosscam::dataset {

struct SplitConfig {
    /// Fraction of train identities that keep all of their cameras.
    double overlap_ratio = 0.0;
    /// Fraction of identities assigned to training when the input has no
    /// query/gallery rows yet.
    double train_fraction = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(overlap_ratio >= 0.0 && overlap_ratio <= 0.5))
            throw ConfigError("split: overlap_ratio must lie in [0, 0.5], got " + std::to_string(overlap_ratio));
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw ConfigError("split: train_fraction must lie in (0, 1)");
    }
};

/// Single-camera-training split.
///
/// Inputs that already carry query/gallery rows keep them verbatim and only
/// the train rows are reduced. A pure train pool (synth output) is first
/// partitioned by identity: `train_fraction` of identities train, the rest
/// become test identities whose first image per camera is a query and the
/// others gallery.
///
/// Train reduction: round(overlap_ratio * n_train) identities keep every
/// camera; each remaining identity keeps one camera. Cameras are dealt from
/// freshly shuffled decks so the per-camera identity counts stay balanced.
inline DatasetManifest sct_split(const DatasetManifest& in, const SplitConfig& cfg) {
    cfg.validate();
    DatasetManifest out;
    out.base_dir = in.base_dir;
    auto eng = keyed_engine(cfg.seed, {0x5c7});

    const bool has_test = std::any_of(in.rows.begin(), in.rows.end(), [](const ManifestRow& r) { return r.split != Split::train; });
    std::map<long, std::set<int>> train_cams = in.cameras_per_identity(Split::train);
    std::vector<long> train_ids;
    for (const auto& [id, cams] : train_cams) train_ids.push_back(id);
    std::set<long> test_ids;

    if (!has_test) {
        shuffle_with(train_ids.begin(), train_ids.end(), eng);
        if (train_ids.size() < 2) throw ConfigError("split: need at least 2 identities to form train and test sets");
        auto n_train = static_cast<std::size_t>(std::lround(cfg.train_fraction * static_cast<double>(train_ids.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, train_ids.size() - 1);
        test_ids.insert(train_ids.begin() + static_cast<std::ptrdiff_t>(n_train), train_ids.end());
        train_ids.resize(n_train);
        std::sort(train_ids.begin(), train_ids.end());
    }

    std::vector<long> order = train_ids;
    shuffle_with(order.begin(), order.end(), eng);
    const auto n_overlap = static_cast<std::size_t>(std::lround(cfg.overlap_ratio * static_cast<double>(order.size())));

    std::map<long, int> kept_camera;  // absent => keep all cameras
    std::set<int> all_cams;
    for (const auto& [id, cams] : train_cams) all_cams.insert(cams.begin(), cams.end());
    std::vector<int> deck;
    for (std::size_t k = n_overlap; k < order.size(); ++k) {
        const long id = order[k];
        const auto& cams = train_cams.at(id);
        if (deck.empty()) {
            deck.assign(all_cams.begin(), all_cams.end());
            shuffle_with(deck.begin(), deck.end(), eng);
        }
        const int dealt = deck.back();
        deck.pop_back();
        if (cams.count(dealt)) {
            kept_camera[id] = dealt;
        } else {
            auto it = cams.begin();
            std::advance(it, static_cast<std::ptrdiff_t>(uniform_index(eng, cams.size())));
            kept_camera[id] = *it;
        }
    }

    const std::set<long> train_set(train_ids.begin(), train_ids.end());
    std::set<std::pair<long, int>> query_taken;
    for (const auto& r : in.rows) {
        if (has_test) {
            if (r.split != Split::train) {
                out.rows.push_back(r);
                continue;
            }
        } else if (test_ids.count(r.identity)) {
            ManifestRow t = r;
            t.split = query_taken.insert({r.identity, r.camera}).second ? Split::query : Split::gallery;
            out.rows.push_back(std::move(t));
            continue;
        }
        if (!train_set.count(r.identity)) continue;
        auto it = kept_camera.find(r.identity);
        if (it == kept_camera.end() || it->second == r.camera) out.rows.push_back(r);
    }
    return out;
}

}  // namespace crosscam::dataset
