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
#include <functional>
#include <string>
#include <vector>

#include "crosscam/core/gradcheck.hpp"
#include "crosscam/losses/losses.hpp"
#include "crosscam/model/model.hpp"

namespace crosscam::cli {

struct GradSuiteRow {
    std::string name;
    std::string kind;  // "loss" or "op"
    std::size_t instances = 0;
    double max_rel_error = 0.0;
    std::size_t zero_gradient_instances = 0;
    bool passed = false;
};

inline constexpr double kGradTolerance = 1e-4;

namespace detail {

using Case = std::function<ag::GradCheckResult(std::uint64_t seed)>;

inline Tensor rnd(Shape s, std::uint64_t seed, std::uint64_t key, double scale = 1.0) {
    Tensor t(std::move(s));
    auto eng = keyed_engine(seed, {0x9c, key});
    for (auto& v : t.vec()) v = scale * standard_normal(eng);
    return t;
}

inline ag::Var cst(Tensor t) { return ag::constant(std::move(t)); }

/// Weighted sum so that every output coordinate matters.
inline ag::Var probe(const ag::Var& out, std::uint64_t seed) { return ag::sum(ag::mul(out, cst(rnd(out.shape(), seed, 0xfeed)))); }

struct Labels {
    std::vector<long> y;
    std::vector<int> cam;
};

/// 2 cameras x 2 intra-camera classes x 2 instances.
inline Labels mcnl_labels() {
    return {{0, 0, 1, 1, 2, 2, 3, 3}, {0, 0, 0, 0, 1, 1, 1, 1}};
}

inline std::vector<std::pair<std::string, std::pair<std::string, Case>>> cases() {
    using losses::LossValue;
    using V = std::vector<ag::Var>;
    std::vector<std::pair<std::string, std::pair<std::string, Case>>> out;
    auto loss = [&](std::string name, Case c) { out.push_back({std::move(name), {"loss", std::move(c)}}); };
    auto op = [&](std::string name, Case c) { out.push_back({std::move(name), {"op", std::move(c)}}); };

    loss("GSL", [](std::uint64_t s) {
        const Tensor f1 = rnd({6, 4}, s, 1), f2 = rnd({6, 4}, s, 2);
        return ag::grad_check([&](const V& in) { return losses::gsl_loss(in[0], {cst(f1), cst(f2)}, {0, 0, 1, 1, 2, 2}).value; },
                              {rnd({6, 4}, s, 3)});
    });
    loss("LS", [](std::uint64_t s) {
        const Tensor f1 = rnd({6, 4}, s, 1), f2 = rnd({6, 4}, s, 2);
        return ag::grad_check([&](const V& in) { return losses::ls_loss(in[0], {cst(f1), cst(f2)}).value; }, {rnd({6, 4}, s, 3)});
    });
    loss("specific", [](std::uint64_t s) {
        return ag::grad_check([](const V& in) { return losses::specific_loss(in[0], 3).value; }, {rnd({6, 4}, s, 1)});
    });
    loss("shared", [](std::uint64_t s) {
        return ag::grad_check([](const V& in) { return losses::shared_loss(in[0], 3, in[1], in[2]).value; },
                              {rnd({6, 4}, s, 1), rnd({4, 3}, s, 2), rnd({3}, s, 3)});
    });
    loss("GL-MCNL", [](std::uint64_t s) {
        const Labels b = mcnl_labels();
        return ag::grad_check(
            [&](const V& in) { return losses::gl_mcnl_loss(in[0], in[1], b.y, b.cam, {1.0, 1.0}).value; },
            {rnd({8, 3}, s, 1), rnd({8, 5}, s, 2)});
    });
    loss("GL-MCNL(cosine)", [](std::uint64_t s) {
        const Labels b = mcnl_labels();
        return ag::grad_check(
            [&](const V& in) { return losses::gl_mcnl_loss(in[0], in[1], b.y, b.cam, {1.0, 1.0}, losses::Metric::cosine).value; },
            {rnd({8, 3}, s, 1), rnd({8, 5}, s, 2)});
    });
    loss("CaCE", [](std::uint64_t s) {
        std::vector<losses::SoftLabel> labels;
        for (std::size_t i = 0; i < 4; ++i) labels.push_back(losses::cace_labels((i + s) % 5, {0, 0, 1, 1, 2}, 0.1));
        return ag::grad_check([&](const V& in) { return losses::cace_loss(in[0], labels).value; }, {rnd({4, 5}, s, 1, 2.0)});
    });
    loss("MMD", [](std::uint64_t s) {
        return ag::grad_check(
            [](const V& in) { return losses::alignment_loss(in[0], {0, 1, 2, 0, 1, 2}, losses::AlignmentKind::mmd_linear).value; },
            {rnd({6, 3}, s, 1)});
    });
    loss("CORAL", [](std::uint64_t s) {
        return ag::grad_check(
            [](const V& in) { return losses::alignment_loss(in[0], {0, 1, 0, 1, 0, 1}, losses::AlignmentKind::coral).value; },
            {rnd({6, 3}, s, 1)});
    });
    loss("triplet", [](std::uint64_t s) {
        return ag::grad_check([](const V& in) { return losses::triplet_loss(in[0], {0, 0, 1, 1, 2, 2}, 1.0).value; },
                              {rnd({6, 3}, s, 1)});
    });

    op("linear", [](std::uint64_t s) {
        return ag::grad_check([s](const V& in) { return probe(ag::linear(in[0], in[1], in[2]), s); },
                              {rnd({3, 4}, s, 1), rnd({4, 5}, s, 2), rnd({5}, s, 3)});
    });
    op("conv2d", [](std::uint64_t s) {
        return ag::grad_check([s](const V& in) { return probe(ag::conv2d(in[0], in[1], in[2], {3, 2, 1}), s); },
                              {rnd({2, 2, 5, 4}, s, 1), rnd({3, 2, 3, 3}, s, 2), rnd({3}, s, 3)});
    });
    op("batch_norm", [](std::uint64_t s) {
        return ag::grad_check([s](const V& in) { return probe(ag::batch_norm_train(in[0], in[1], in[2], 1e-5), s); },
                              {rnd({3, 2, 2, 2}, s, 1), rnd({2}, s, 2), rnd({2}, s, 3)});
    });
    op("global_bn(infer)", [](std::uint64_t s) {
        const Tensor mu = rnd({3}, s, 4), var({3}, 1.7);
        return ag::grad_check([&](const V& in) { return probe(ag::channel_affine_norm(in[0], mu, var, in[1], in[2], 1e-5), s); },
                              {rnd({4, 3}, s, 1), rnd({3}, s, 2), rnd({3}, s, 3)});
    });
    op("pool", [](std::uint64_t s) {
        return ag::grad_check([s](const V& in) { return probe(ag::global_avg_pool(in[0]), s); }, {rnd({2, 3, 2, 2}, s, 1)});
    });
    op("maps_to_tokens", [](std::uint64_t s) {
        return ag::grad_check([s](const V& in) { return probe(ag::maps_to_tokens(in[0]), s); }, {rnd({2, 3, 2, 2}, s, 1)});
    });
    op("layer_norm", [](std::uint64_t s) {
        return ag::grad_check([s](const V& in) { return probe(ag::layer_norm_rows(in[0], in[1], in[2]), s); },
                              {rnd({4, 5}, s, 1), rnd({5}, s, 2), rnd({5}, s, 3)});
    });
    op("attention", [](std::uint64_t s) {
        return ag::grad_check([s](const V& in) { return probe(ag::multi_head_attention_core(in[0], in[1], in[2], 2, 2), s); },
                              {rnd({2 * 3, 4}, s, 1), rnd({2 * 5, 4}, s, 2), rnd({2 * 5, 4}, s, 3)});
    });
    op("log_softmax", [](std::uint64_t s) {
        return ag::grad_check([s](const V& in) { return probe(ag::log_softmax_rows(in[0]), s); }, {rnd({3, 4}, s, 1)});
    });
    op("l2_normalize", [](std::uint64_t s) {
        return ag::grad_check([s](const V& in) { return probe(ag::l2_normalize_rows(in[0]), s); }, {rnd({3, 4}, s, 1)});
    });
    op("pairwise_dist", [](std::uint64_t s) {
        return ag::grad_check([s](const V& in) { return probe(ag::sqrt_clamped(ag::pairwise_sq_dist(in[0])), s); },
                              {rnd({4, 3}, s, 1)});
    });
    op("block_gram", [](std::uint64_t s) {
        return ag::grad_check([s](const V& in) { return probe(ag::block_gram(in[0], 2), s); }, {rnd({6, 3}, s, 1)});
    });
    op("encode", [](std::uint64_t s) {
        model::EncoderConfig cfg;
        cfg.channels = {3, 4};
        const auto base = model::EncoderParams::create(cfg, s);
        const Tensor images = rnd({3, 3, 8, 6}, s, 1);
        return ag::grad_check(
            [&](const V& in) {
                auto p = base;
                p.blocks[0].weight = in[0];
                p.blocks[1].weight = in[1];
                return probe(model::encode(p, ag::constant(images), model::NormPhase::train), s);
            },
            {base.blocks[0].weight.value(), base.blocks[1].weight.value()});
    });
    op("local_extract", [](std::uint64_t s) {
        model::TransformerConfig cfg;
        cfg.d_model = 8;
        cfg.heads = 2;
        cfg.ff_dim = 12;
        cfg.encoder_layers = 1;
        cfg.decoder_layers = 1;
        cfg.num_queries = 3;
        const auto base = model::TransformerParams::create(cfg, s);
        return ag::grad_check(
            [&](const V& in) {
                auto tp = base;
                tp.queries = in[0];
                return probe(model::local_extract(tp, in[1], 2, 3, 2), s);
            },
            {base.queries.value(), rnd({12, 8}, s, 1)});
    });
    return out;
}

}  // namespace detail

/// Central finite-difference checks of every loss and forward op on
/// `instances` random small inputs each.
inline std::vector<GradSuiteRow> run_gradcheck_suite(std::size_t instances = 20, std::uint64_t seed = 0) {
    std::vector<GradSuiteRow> rows;
    for (const auto& [name, kc] : detail::cases()) {
        GradSuiteRow r{name, kc.first, instances, 0.0, 0, true};
        for (std::size_t i = 0; i < instances; ++i) {
            const auto res = kc.second(hash_keys(seed, {i}));
            r.max_rel_error = std::max(r.max_rel_error, res.max_rel_error);
            if (!res.nonzero_gradient) ++r.zero_gradient_instances;
        }
        r.passed = r.max_rel_error <= kGradTolerance && r.zero_gradient_instances == 0;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace crosscam::cli
