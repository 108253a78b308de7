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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crosscam/core/gradcheck.hpp"
#include "crosscam/model/model.hpp"
#include "test_util.hpp"

namespace crosscam::model {
namespace {

using crosscam::testing::random_tensor;
constexpr double kTol = 1e-4;

EncoderConfig tiny_encoder() {
    EncoderConfig c;
    c.channels = {3, 4};
    return c;
}

TransformerConfig tiny_transformer(std::size_t p = 3) {
    TransformerConfig t;
    t.d_model = 8;
    t.heads = 2;
    t.ff_dim = 12;
    t.encoder_layers = 1;
    t.decoder_layers = 1;
    t.num_queries = p;
    return t;
}

TEST(Encoder, DefaultOutputShape) {
    auto p = EncoderParams::create({}, 1);
    ag::Var z = encode(p, ag::constant(random_tensor({4, 3, 64, 32}, 2)), NormPhase::train);
    EXPECT_EQ(z.shape(), (Shape{4, 128, 4, 2}));
}

TEST(Encoder, ZeroWeightsGiveZeroMaps) {
    auto p = EncoderParams::create(tiny_encoder(), 1);
    for (auto& b : p.blocks) {
        b.weight.mutable_value().fill(0.0);
        b.bias.mutable_value().fill(0.0);
    }
    // BN of a constant channel is 0 before the affine; beta is 0.
    ag::Var z = encode(p, ag::constant(random_tensor({2, 3, 8, 8}, 3)), NormPhase::train);
    for (double v : z.value().vec()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, WeightGradientsMatchFiniteDifferences) {
    for (std::size_t blk = 0; blk < 2; ++blk) {
        auto base = EncoderParams::create(tiny_encoder(), 5 + blk);
        const Tensor images = random_tensor({3, 3, 8, 8}, 9 + blk);
        auto r = ag::grad_check(
            [&](const std::vector<ag::Var>& in) {
                auto p = base;
                p.blocks[blk].weight = in[0];
                p.blocks[blk].norm.gamma = in[1];
                ag::Var z = encode(p, ag::constant(images), NormPhase::train);
                return ag::sum(ag::mul(z, z));
            },
            {base.blocks[blk].weight.value(), random_tensor({base.blocks[blk].norm.gamma.numel()}, 4)});
        EXPECT_LT(r.max_rel_error, kTol);
        EXPECT_TRUE(r.nonzero_gradient);
    }
}

TEST(Encoder, NonFiniteActivationNamesBatchIndex) {
    auto p = EncoderParams::create(tiny_encoder(), 1);
    Tensor x = random_tensor({3, 3, 8, 8}, 3);
    x[2 * 3 * 64 + 5] = std::nan("");
    try {
        encode(p, ag::constant(x), NormPhase::infer);
        FAIL() << "expected an error";
    } catch (const StateError&) {
        // running stats not initialized: infer refuses before touching data
    }
    encode(p, ag::constant(random_tensor({3, 3, 8, 8}, 4)), NormPhase::train);
    try {
        encode(p, ag::constant(x), NormPhase::infer);
        FAIL() << "expected an error";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("batch index 2"), std::string::npos) << e.what();
    }
}

TEST(Pool, Examples) {
    Tensor c({1, 2, 2, 2}, 2.0);
    const Tensor pooled = ag::global_avg_pool(ag::constant(c)).value();
    for (double v : pooled.vec()) EXPECT_EQ(v, 2.0);
    Tensor two({1, 1, 1, 2}, std::vector<double>{1.0, 3.0});
    EXPECT_EQ(ag::global_avg_pool(ag::constant(two)).value()[0], 2.0);
    Tensor z1 = random_tensor({2, 3, 2, 2}, 1), z2 = random_tensor({2, 3, 2, 2}, 2);
    Tensor mix = z2;
    for (std::size_t i = 0; i < mix.numel(); ++i) mix[i] += 1.7 * z1[i];
    Tensor lhs = ag::global_avg_pool(ag::constant(mix)).value();
    Tensor p1 = ag::global_avg_pool(ag::constant(z1)).value(), p2 = ag::global_avg_pool(ag::constant(z2)).value();
    for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], 1.7 * p1[i] + p2[i], 1e-12);
}

CameraNormState identity_csbn(std::size_t cams, std::size_t dims, double eps) {
    return CameraNormState::create(cams, dims, ag::constant(Tensor({dims}, 1.0)), ag::constant(Tensor({dims}, 0.0)), eps, 0.1);
}

TEST(Csbn, UpdateExamples) {
    auto s = identity_csbn(2, 1, 1e-5);
    auto m = csbn_update(s, Tensor::from_rows({{1}, {3}}), 0);
    EXPECT_DOUBLE_EQ(m.mean[0], 2.0);
    EXPECT_DOUBLE_EQ(m.var[0], 1.0);
    EXPECT_NEAR(s.slots[0].running_mean[0], 0.2, 1e-15);
    EXPECT_NEAR(s.slots[0].running_var[0], 0.9 * 1.0 + 0.1 * 1.0, 1e-15);
}

TEST(Csbn, CameraIsolation) {
    auto s = identity_csbn(3, 4, 1e-5);
    csbn_update(s, random_tensor({5, 4}, 1), 1);
    const NormSlot before1 = s.slots[1], before2 = s.slots[2];
    csbn_update(s, random_tensor({6, 4}, 2), 0);
    csbn_update(s, random_tensor({6, 4}, 3), 0);
    EXPECT_TRUE(s.slots[1] == before1);
    EXPECT_TRUE(s.slots[2] == before2);
}

TEST(Csbn, Errors) {
    auto s = identity_csbn(2, 1, 1e-5);
    EXPECT_THROW(csbn_update(s, Tensor::from_rows({{1}}), 0), NumericError);
    EXPECT_THROW(csbn_augment(s, Tensor::from_rows({{1}}), 1, AugmentMode::running_stats), StateError);
    EXPECT_THROW(csbn_augment(s, Tensor::from_rows({{1}}), 0, AugmentMode::batch_stats), StateError);
    EXPECT_THROW(csbn_update(s, Tensor::from_rows({{1}, {2}}), 2), ConfigError);
}

TEST(Csbn, AugmentExamples) {
    auto s = identity_csbn(2, 1, 0.0);
    s.slots[1].reset_to({Tensor({1}, 2.0), Tensor({1}, 4.0)});
    EXPECT_DOUBLE_EQ(csbn_augment(s, Tensor::from_rows({{4}}), 1, AugmentMode::running_stats)[0], 1.0);
    EXPECT_DOUBLE_EQ(csbn_augment(s, Tensor::from_rows({{2}}), 1, AugmentMode::running_stats)[0], 0.0);
    EXPECT_EQ(s.augment_calls, 2u);
}

TEST(Csbn, OwnBatchNormalizationIdentity) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto s = identity_csbn(2, 6, 0.0);
        Tensor x = random_tensor({9, 6}, seed, 3.0);
        for (std::size_t i = 0; i < x.numel(); ++i) x[i] += 5.0;
        auto m = csbn_update(s, x, 1);
        Tensor y = csbn_augment(s, x, 1, AugmentMode::batch_stats, &m);
        for (std::size_t c = 0; c < 6; ++c) {
            double mu = 0, var = 0;
            for (std::size_t r = 0; r < 9; ++r) mu += y.at(r, c) / 9.0;
            for (std::size_t r = 0; r < 9; ++r) var += (y.at(r, c) - mu) * (y.at(r, c) - mu) / 9.0;
            EXPECT_LE(std::abs(mu), 1e-6);
            EXPECT_LE(std::abs(var - 1.0), 1e-5);
        }
    }
}

TEST(GlobalBn, Examples) {
    auto g = GlobalNormState::create(1, 0.0);
    Tensor out = global_bn(g, ag::constant(Tensor::from_rows({{0}, {2}})), NormPhase::train).value();
    EXPECT_DOUBLE_EQ(out[0], -1.0);
    EXPECT_DOUBLE_EQ(out[1], 1.0);

    auto h = GlobalNormState::create(1, 0.0);
    EXPECT_THROW(global_bn(h, ag::constant(Tensor::from_rows({{3}})), NormPhase::infer), StateError);
    h.slot.reset_to({Tensor({1}, 1.0), Tensor({1}, 1.0)});
    EXPECT_DOUBLE_EQ(global_bn(h, ag::constant(Tensor::from_rows({{3}})), NormPhase::infer).value()[0], 2.0);
    h.gamma.mutable_value()[0] = 2.0;
    h.beta.mutable_value()[0] = 5.0;
    EXPECT_DOUBLE_EQ(global_bn(h, ag::constant(Tensor::from_rows({{2}})), NormPhase::infer).value()[0], 7.0);
}

TEST(GlobalBn, InferIsAffine) {
    auto g = GlobalNormState::create(3);
    global_bn(g, ag::constant(random_tensor({5, 3}, 1)), NormPhase::train);
    g.gamma.mutable_value() = random_tensor({3}, 2);
    g.beta.mutable_value() = random_tensor({3}, 3);
    const Tensor x = random_tensor({2, 3}, 4);
    const double alpha = -2.5;
    Tensor ax = x;
    for (auto& v : ax.vec()) v *= alpha;
    auto f = [&](const Tensor& t) { return global_bn(g, ag::constant(t), NormPhase::infer).value(); };
    Tensor f0 = f(Tensor({2, 3})), fx = f(x), fax = f(ax);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(fax[i] - f0[i], alpha * (fx[i] - f0[i]), 1e-12);
}

TEST(LocalExtract, DefaultShape) {
    TransformerConfig cfg;  // width 256, P 12
    auto tp = TransformerParams::create(cfg, 1);
    ag::Var w = local_extract(tp, ag::constant(random_tensor({2 * 8, 256}, 2)), 2, 4, 2);
    EXPECT_EQ(w.shape(), (Shape{24, 256}));
    EXPECT_THROW(local_extract(tp, ag::constant(random_tensor({16, 128}, 2)), 2, 4, 2), ShapeError);
}

TEST(LocalExtract, QueriesDistinctAtInit) {
    auto tp = TransformerParams::create(tiny_transformer(6), 3);
    const Tensor& q = tp.queries.value();
    for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = a + 1; b < 6; ++b) {
            double diff = 0;
            for (std::size_t k = 0; k < 8; ++k) diff += std::abs(q.at(a, k) - q.at(b, k));
            EXPECT_GT(diff, 0.0);
        }
}

TEST(LocalExtract, SamplePermutationEquivariance) {
    auto tp = TransformerParams::create(tiny_transformer(), 1);
    const std::size_t s = 6, p = 3, d = 8;
    Tensor x = random_tensor({3 * s, d}, 4);
    Tensor perm({3 * s, d});
    const std::vector<std::size_t> order{2, 0, 1};
    for (std::size_t i = 0; i < 3; ++i)
        std::copy_n(x.data() + order[i] * s * d, s * d, perm.data() + i * s * d);
    Tensor a = local_extract(tp, ag::constant(x), 3, 3, 2).value();
    Tensor b = local_extract(tp, ag::constant(perm), 3, 3, 2).value();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < p * d; ++k) EXPECT_NEAR(b[i * p * d + k], a[order[i] * p * d + k], 1e-12);
}

TEST(LocalExtract, QueryGradientMatchesFiniteDifferences) {
    auto base = TransformerParams::create(tiny_transformer(), 2);
    const Tensor x = random_tensor({2 * 6, 8}, 5);
    for (std::uint64_t s = 0; s < 3; ++s) {
        auto r = ag::grad_check(
            [&](const std::vector<ag::Var>& in) {
                auto tp = base;
                tp.queries = in[0];
                ag::Var w = local_extract(tp, in[1], 2, 3, 2);
                return ag::sum(ag::mul(w, ag::constant(random_tensor(w.shape(), 77))));
            },
            {random_tensor({3, 8}, s), x});
        EXPECT_LT(r.max_rel_error, kTol);
        EXPECT_TRUE(r.nonzero_gradient);
    }
}

Tensor permute_cells(const Tensor& x, std::size_t s, const std::vector<std::size_t>& order) {
    Tensor out(x.shape());
    const std::size_t d = x.cols(), n = x.rows() / s;
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < s; ++i) std::copy_n(x.data() + (b * s + order[i]) * d, d, out.data() + (b * s + i) * d);
    return out;
}

TEST(LocalExtract, PositionalEncodingSensitivity) {
    const std::vector<std::size_t> order{5, 3, 0, 1, 4, 2};
    Tensor x = random_tensor({6, 8}, 6);
    Tensor px = permute_cells(x, 6, order);

    auto with_pe = TransformerParams::create(tiny_transformer(), 1);
    Tensor a = local_extract(with_pe, ag::constant(x), 1, 3, 2).value();
    Tensor b = local_extract(with_pe, ag::constant(px), 1, 3, 2).value();
    double diff = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    EXPECT_GT(diff, 1e-6);

    auto cfg = tiny_transformer();
    cfg.encoder_layers = 0;
    cfg.positional_encoding = false;
    auto plain = TransformerParams::create(cfg, 1);
    a = local_extract(plain, ag::constant(x), 1, 3, 2).value();
    b = local_extract(plain, ag::constant(px), 1, 3, 2).value();
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

ModelConfig tiny_model() {
    ModelConfig c;
    c.encoder = tiny_encoder();
    c.n_cameras = 3;
    c.n_classes = 5;
    c.transformer = tiny_transformer();
    return c;
}

TEST(Forward, BundleShapesAndFakes) {
    auto m = Model::create(tiny_model(), 1);
    const Tensor x = random_tensor({4, 3, 16, 8}, 2);
    auto fb = forward(m, ag::constant(x), {0, 0, 2, 2}, NormPhase::train);
    EXPECT_EQ(fb.f.shape(), (Shape{4, 4}));
    EXPECT_EQ(fb.logits.shape(), (Shape{4, 5}));
    // camera 1 has never been seen
    EXPECT_EQ(fb.fake_cameras, (std::vector<int>{0, 2}));
    ASSERT_EQ(fb.fakes.size(), 2u);
    EXPECT_EQ(fb.w_glo.shape(), (Shape{4 * 3, 8}));
    ASSERT_EQ(fb.w_fakes.size(), 2u);
    EXPECT_EQ(fb.w_fakes[0].shape(), (Shape{4 * 3, 8}));
    EXPECT_TRUE(m.camera_norm.slots[0].initialized);
    EXPECT_FALSE(m.camera_norm.slots[1].initialized);

    fb = forward(m, ag::constant(x), {1, 1, 2, 2}, NormPhase::train);
    EXPECT_EQ(fb.fake_cameras, (std::vector<int>{0, 1, 2}));
    for (const auto& t : fb.fakes) EXPECT_TRUE(t.all_finite());
}

TEST(Forward, InferTouchesNoCameraBranch) {
    auto m = Model::create(tiny_model(), 1);
    const Tensor x = random_tensor({4, 3, 16, 8}, 2);
    forward(m, ag::constant(x), {0, 0, 1, 1}, NormPhase::train);
    const std::size_t calls = m.camera_norm.augment_calls + m.map_camera_norm.augment_calls;
    Tensor e1 = embed(m, x), e2 = embed(m, x);
    EXPECT_EQ(m.camera_norm.augment_calls + m.map_camera_norm.augment_calls, calls);
    EXPECT_TRUE(e1 == e2);
    EXPECT_EQ(e1.shape(), (Shape{4, 4}));
}

TEST(Forward, ParameterNamesUnique) {
    auto m = Model::create(tiny_model(), 1);
    auto params = m.parameters();
    std::vector<std::string> names;
    for (auto& [n, v] : params) {
        names.push_back(n);
        EXPECT_TRUE(v.requires_grad()) << n;
    }
    std::sort(names.begin(), names.end());
    EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());
    EXPECT_EQ(m.buffers().size(), 2u + 1 + 3 + 1 + 3);
}

}  // namespace
}  // namespace crosscam::model
