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
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crosscam/core/error.hpp"
#include "crosscam/core/ops.hpp"
#include "crosscam/model/encoder.hpp"
#include "crosscam/model/norm.hpp"
#include "crosscam/model/transformer.hpp"

namespace crosscam::model {

struct ModelConfig {
    EncoderConfig encoder;
    std::size_t n_cameras = 4;
    std::size_t n_classes = 0;
    bool local_branch = true;
    TransformerConfig transformer;  // d_model is the local width
    CsbnAffine csbn_affine = CsbnAffine::shared_with_global;

    std::size_t num_regions() const { return transformer.num_queries; }
    std::size_t d_local() const { return transformer.d_model; }
    void validate() const {
        if (n_cameras == 0) throw ConfigError("model: n_cameras must be positive");
        if (n_classes == 0) throw ConfigError("model: n_classes must be positive");
        if (local_branch) transformer.validate();
    }
};

/// Rows of a [R, ...] tensor.
inline Tensor select_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
    const std::size_t w = t.numel() / t.dim(0);
    Shape shape = t.shape();
    shape[0] = rows.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(t.data() + rows[i] * w, w, out.data() + i * w);
    return out;
}

struct FeatureBundle {
    ag::Var z;      // [N, d, h, w]
    ag::Var f;      // [N, d] pooled
    ag::Var f_glo;  // [N, d] after global BN
    ag::Var logits; // [N, n_classes]
    /// Cameras with a fake view, ascending; fakes[k] is every sample moved
    /// into camera fake_cameras[k]. Detached.
    std::vector<int> fake_cameras;
    std::vector<Tensor> fakes;  // each [N, d]

    // local branch; regions are [N*P, d_local], region index fastest
    std::size_t map_h = 0, map_w = 0;
    ag::Var z_glo;                // [N*h*w, d_local] tokens after map-level global BN
    ag::Var w_glo;                // [N*P, d_local]
    std::vector<Tensor> z_fakes;  // each [N*h*w, d_local]
    std::vector<Tensor> w_fakes;  // each [N*P, d_local]

    std::size_t batch() const { return f.dim(0); }
};

struct ForwardOptions {
    bool fakes = true;
    bool local = true;
};

struct Model {
    ModelConfig config;
    EncoderParams encoder;
    GlobalNormState global_norm;
    CameraNormState camera_norm;
    ag::Var classifier;  // [d, n_classes], no bias
    // local branch
    Linear reduce;       // 1x1 projection d -> d_local
    GlobalNormState map_norm;
    CameraNormState map_camera_norm;
    TransformerParams transformer;
    Linear region_classifier;  // d_local -> P

    static Model create(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Model m;
        m.config = cfg;
        m.encoder = EncoderParams::create(cfg.encoder, seed);
        const std::size_t d = m.encoder.out_channels();
        m.global_norm = GlobalNormState::create(d);
        m.camera_norm = CameraNormState::create(cfg.n_cameras, d, cfg.csbn_affine, m.global_norm);
        auto eng = keyed_engine(seed, {0xc1a});
        Tensor w({d, cfg.n_classes});
        for (auto& v : w.vec()) v = 0.001 * standard_normal(eng);
        m.classifier = ag::parameter(std::move(w));
        if (cfg.local_branch) {
            const std::size_t dl = cfg.d_local();
            m.reduce = Linear::create(d, dl, eng);
            m.map_norm = GlobalNormState::create(dl);
            m.map_camera_norm = CameraNormState::create(cfg.n_cameras, dl, cfg.csbn_affine, m.map_norm);
            m.transformer = TransformerParams::create(cfg.transformer, seed);
            m.region_classifier = Linear::create(dl, cfg.num_regions(), eng);
        }
        return m;
    }

    /// Trainable tensors by stable name. CSBN affines either alias the global
    /// BN entries or are frozen, so they never appear separately.
    std::vector<std::pair<std::string, ag::Var>> parameters() const {
        std::vector<std::pair<std::string, ag::Var>> out;
        for (std::size_t b = 0; b < encoder.blocks.size(); ++b) {
            const auto& blk = encoder.blocks[b];
            const std::string p = "encoder." + std::to_string(b) + ".";
            out.emplace_back(p + "weight", blk.weight);
            out.emplace_back(p + "bias", blk.bias);
            out.emplace_back(p + "bn.gamma", blk.norm.gamma);
            out.emplace_back(p + "bn.beta", blk.norm.beta);
        }
        out.emplace_back("global_bn.gamma", global_norm.gamma);
        out.emplace_back("global_bn.beta", global_norm.beta);
        out.emplace_back("classifier.weight", classifier);
        if (!config.local_branch) return out;
        out.emplace_back("reduce.weight", reduce.weight);
        out.emplace_back("reduce.bias", reduce.bias);
        out.emplace_back("map_bn.gamma", map_norm.gamma);
        out.emplace_back("map_bn.beta", map_norm.beta);
        auto add_linear = [&](const std::string& p, const Linear& l) {
            out.emplace_back(p + ".weight", l.weight);
            out.emplace_back(p + ".bias", l.bias);
        };
        auto add_attention = [&](const std::string& p, const Attention& a) {
            add_linear(p + ".q", a.q);
            add_linear(p + ".k", a.k);
            add_linear(p + ".v", a.v);
            add_linear(p + ".out", a.out);
        };
        auto add_norm = [&](const std::string& p, const LayerNorm& ln) {
            out.emplace_back(p + ".gamma", ln.gamma);
            out.emplace_back(p + ".beta", ln.beta);
        };
        for (std::size_t i = 0; i < transformer.encoder.size(); ++i) {
            const auto& l = transformer.encoder[i];
            const std::string p = "transformer.encoder." + std::to_string(i);
            add_attention(p + ".self_attn", l.self_attn);
            add_norm(p + ".norm1", l.norm1);
            add_linear(p + ".ff.in", l.ff.in);
            add_linear(p + ".ff.out", l.ff.out);
            add_norm(p + ".norm2", l.norm2);
        }
        for (std::size_t i = 0; i < transformer.decoder.size(); ++i) {
            const auto& l = transformer.decoder[i];
            const std::string p = "transformer.decoder." + std::to_string(i);
            add_attention(p + ".self_attn", l.self_attn);
            add_norm(p + ".norm1", l.norm1);
            add_attention(p + ".cross_attn", l.cross_attn);
            add_norm(p + ".norm2", l.norm2);
            add_linear(p + ".ff.in", l.ff.in);
            add_linear(p + ".ff.out", l.ff.out);
            add_norm(p + ".norm3", l.norm3);
        }
        add_norm("transformer.decoder_norm", transformer.decoder_norm);
        out.emplace_back("transformer.queries", transformer.queries);
        add_linear("region_classifier", region_classifier);
        return out;
    }

    /// Running-statistic slots by stable name.
    std::vector<std::pair<std::string, NormSlot*>> buffers() {
        std::vector<std::pair<std::string, NormSlot*>> out;
        for (std::size_t b = 0; b < encoder.blocks.size(); ++b)
            out.emplace_back("encoder." + std::to_string(b) + ".bn", &encoder.blocks[b].norm.slot);
        out.emplace_back("global_bn", &global_norm.slot);
        for (std::size_t c = 0; c < camera_norm.slots.size(); ++c)
            out.emplace_back("csbn." + std::to_string(c), &camera_norm.slots[c]);
        if (!config.local_branch) return out;
        out.emplace_back("map_bn", &map_norm.slot);
        for (std::size_t c = 0; c < map_camera_norm.slots.size(); ++c)
            out.emplace_back("map_csbn." + std::to_string(c), &map_camera_norm.slots[c]);
        return out;
    }
};

namespace detail {

/// Updates the per-camera slots from the batch rows of each camera present
/// and returns the fake views for every camera that has statistics.
/// `rows_per_sample` > 1 when `feats` holds several token rows per sample.
inline void camera_fakes(CameraNormState& state, const Tensor& feats, const std::vector<int>& cameras, std::size_t rows_per_sample,
                         std::vector<int>& fake_cameras, std::vector<Tensor>& fakes) {
    const std::size_t n_cams = state.cameras();
    std::vector<std::vector<std::size_t>> rows(n_cams);
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        const int c = cameras[i];
        if (c < 0 || static_cast<std::size_t>(c) >= n_cams) throw ConfigError("forward: camera " + std::to_string(c) + " out of range");
        for (std::size_t r = 0; r < rows_per_sample; ++r) rows[static_cast<std::size_t>(c)].push_back(i * rows_per_sample + r);
    }
    std::vector<std::optional<ag::ChannelMoments>> batch(n_cams);
    for (std::size_t c = 0; c < n_cams; ++c) {
        if (rows[c].empty()) continue;
        auto& slot = state.slots[c];
        const bool fresh = !slot.initialized;
        batch[c] = csbn_update(state, select_rows(feats, rows[c]), static_cast<int>(c));
        if (fresh) slot.reset_to(*batch[c]);
    }
    fake_cameras.clear();
    fakes.clear();
    for (std::size_t c = 0; c < n_cams; ++c) {
        const int cam = static_cast<int>(c);
        if (batch[c]) {
            fakes.push_back(csbn_augment(state, feats, cam, AugmentMode::batch_stats, &*batch[c]));
        } else if (state.slots[c].initialized) {
            fakes.push_back(csbn_augment(state, feats, cam, AugmentMode::running_stats));
        } else {
            continue;
        }
        fake_cameras.push_back(cam);
    }
}

}  // namespace detail

/// Full forward pass. `cameras` gives each sample's camera and is only read
/// when fakes are requested. In the infer phase only z, f and f_glo are
/// produced and no camera branch is touched.
inline FeatureBundle forward(Model& m, const ag::Var& images, const std::vector<int>& cameras, NormPhase phase,
                             ForwardOptions opt = {}) {
    FeatureBundle out;
    out.z = encode(m.encoder, images, phase);
    out.f = ag::global_avg_pool(out.z);
    out.f_glo = global_bn(m.global_norm, out.f, phase);
    if (phase == NormPhase::infer) return out;

    const std::size_t n = out.f.dim(0);
    out.logits = ag::matmul(out.f_glo, m.classifier);
    if (opt.fakes) {
        if (cameras.size() != n) throw ShapeError("forward: one camera id per sample is required");
        detail::camera_fakes(m.camera_norm, out.f.value(), cameras, 1, out.fake_cameras, out.fakes);
    }
    if (!opt.local || !m.config.local_branch) return out;

    out.map_h = out.z.dim(2);
    out.map_w = out.z.dim(3);
    const std::size_t s = out.map_h * out.map_w;
    if (s < m.config.num_regions()) throw ShapeError("forward: feature map has fewer cells than regions");
    ag::Var reduced = m.reduce(ag::maps_to_tokens(out.z));
    out.z_glo = global_bn(m.map_norm, reduced, phase);
    out.w_glo = local_extract(m.transformer, out.z_glo, n, out.map_h, out.map_w);
    if (opt.fakes) {
        std::vector<int> map_cams;
        detail::camera_fakes(m.map_camera_norm, reduced.value(), cameras, s, map_cams, out.z_fakes);
        if (map_cams != out.fake_cameras) throw StateError("forward: vector and map camera branches disagree");
        ag::NoGradGuard no_grad;
        for (const auto& zf : out.z_fakes)
            out.w_fakes.push_back(local_extract(m.transformer, ag::constant(zf), n, out.map_h, out.map_w).value());
    }
    return out;
}

/// Replaces the inference moments of the encoder norms and the global norm
/// with the equal-weight average of train-phase moments over `batches`.
/// Batches hold two cameras at a time, so exponential running averages lean
/// towards whichever camera pairs came last.
inline void recompute_norm_stats(Model& m, const std::vector<Tensor>& batches) {
    std::vector<GlobalNormState*> states;
    for (auto& b : m.encoder.blocks) states.push_back(&b.norm);
    states.push_back(&m.global_norm);
    std::vector<double> saved;
    for (auto* st : states) saved.push_back(st->momentum);
    ag::NoGradGuard no_grad;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        for (auto* st : states) st->momentum = 1.0 / static_cast<double>(i + 1);
        global_bn(m.global_norm, ag::global_avg_pool(encode(m.encoder, ag::constant(batches[i]), NormPhase::train)), NormPhase::train);
    }
    for (std::size_t k = 0; k < states.size(); ++k) states[k]->momentum = saved[k];
}

/// Inference embeddings f_glo, [N, d].
inline Tensor embed(Model& m, const Tensor& images) {
    ag::NoGradGuard no_grad;
    return forward(m, ag::constant(images), {}, NormPhase::infer).f_glo.value();
}

}  // namespace crosscam::model
