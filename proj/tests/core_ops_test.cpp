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

#include <cmath>

#include "crosscam/core/gradcheck.hpp"
#include "crosscam/core/nn_ops.hpp"

namespace crosscam::ag {
namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
    Tensor t(std::move(shape));
    auto eng = keyed_engine(seed, {1});
    for (auto& v : t.vec()) v = scale * standard_normal(eng);
    return t;
}

constexpr double kTol = 1e-4;

TEST(CoreOps, MatmulAndLinearGradients) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        auto r = grad_check([](const std::vector<Var>& in) { return sum(mul(linear(in[0], in[1], in[2]), linear(in[0], in[1], in[2]))); },
                            {random_tensor({3, 4}, s), random_tensor({4, 5}, s + 10), random_tensor({5}, s + 20)});
        EXPECT_LT(r.max_rel_error, kTol);
        EXPECT_TRUE(r.nonzero_gradient);
    }
}

TEST(CoreOps, ElementwiseGradients) {
    auto r = grad_check(
        [](const std::vector<Var>& in) {
            Var a = relu(sub(in[0], scale(in[1], 0.5)));
            Var b = sqrt_clamped(add_scalar(mul(in[0], in[0]), 0.1));
            return mean(add(mul(a, b), transpose(transpose(in[1]))));
        },
        {random_tensor({4, 3}, 1), random_tensor({4, 3}, 2)});
    EXPECT_LT(r.max_rel_error, kTol);
}

TEST(CoreOps, GatherConcatTileGradients) {
    auto r = grad_check(
        [](const std::vector<Var>& in) {
            Var g = gather_rows(in[0], {0, 2, 2, 1});
            Var c = concat_rows({g, tile_rows(in[1], 2)});
            Var e = gather(reshape(c, {c.numel()}), {0, 3, 5, 5, 11});
            return add(sum(mul(c, c)), sum(mul(e, e)));
        },
        {random_tensor({3, 2}, 3), random_tensor({1, 2}, 4)});
    EXPECT_LT(r.max_rel_error, kTol);
}

TEST(CoreOps, SoftmaxNormalizeDistanceGradients) {
    for (std::uint64_t s = 0; s < 3; ++s) {
        Tensor w = random_tensor({5, 4}, s + 100);
        auto r = grad_check(
            [w](const std::vector<Var>& in) {
                Var n = l2_normalize_rows(in[0]);
                Var ls = log_softmax_rows(matmul(n, transpose(constant(w))));
                Var d = sqrt_clamped(pairwise_sq_dist(in[0]));
                Var dots = rowwise_dot(n, in[0]);
                return add(add(sum(mul(ls, ls)), sum(d)), sum(dots));
            },
            {random_tensor({6, 4}, s)});
        EXPECT_LT(r.max_rel_error, kTol);
    }
}

TEST(CoreOps, BlockGramAndRowStatsGradients) {
    auto r = grad_check(
        [](const std::vector<Var>& in) {
            Var g = block_gram(in[0], 2);
            Var m = mean_rows(in[0]);
            Var c = sub_row(in[0], m);
            return add(sum(mul(g, g)), sum(mul(c, c)));
        },
        {random_tensor({6, 3}, 7)});
    EXPECT_LT(r.max_rel_error, kTol);
}

TEST(CoreOps, Conv2dMatchesDirectSum) {
    Tensor x = random_tensor({2, 2, 5, 4}, 11);
    Tensor w = random_tensor({3, 2, 3, 3}, 12);
    Tensor b = random_tensor({3}, 13);
    Conv2dSpec spec{3, 2, 1};
    Var y = conv2d(constant(x), constant(w), constant(b), spec);
    ASSERT_EQ(y.shape(), (Shape{2, 3, 3, 2}));
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t co = 0; co < 3; ++co)
            for (std::size_t oy = 0; oy < 3; ++oy)
                for (std::size_t ox = 0; ox < 2; ++ox) {
                    double acc = b[co];
                    for (std::size_t ci = 0; ci < 2; ++ci)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int iy = static_cast<int>(oy) * 2 + ky - 1, ix = static_cast<int>(ox) * 2 + kx - 1;
                                if (iy < 0 || ix < 0 || iy >= 5 || ix >= 4) continue;
                                acc += w[((co * 2 + ci) * 3 + ky) * 3 + kx] * x[((n * 2 + ci) * 5 + iy) * 4 + ix];
                            }
                    EXPECT_NEAR(y.value()[((n * 3 + co) * 3 + oy) * 2 + ox], acc, 1e-12);
                }
}

TEST(CoreOps, Conv2dGradients) {
    for (std::uint64_t s = 0; s < 3; ++s) {
        auto r = grad_check(
            [](const std::vector<Var>& in) {
                Var y = conv2d(in[0], in[1], in[2], {3, 2, 1});
                return sum(mul(y, y));
            },
            {random_tensor({2, 2, 5, 4}, s), random_tensor({3, 2, 3, 3}, s + 1), random_tensor({3}, s + 2)});
        EXPECT_LT(r.max_rel_error, kTol);
    }
}

TEST(CoreOps, BatchNormTrainGradientsAndMoments) {
    Tensor wt = random_tensor({3, 2, 4}, 99);
    auto r = grad_check(
        [wt](const std::vector<Var>& in) {
            Var y = batch_norm_train(in[0], in[1], in[2], 1e-5);
            return sum(mul(y, constant(wt)));
        },
        {random_tensor({3, 2, 4}, 21), random_tensor({2}, 22), random_tensor({2}, 23)});
    EXPECT_LT(r.max_rel_error, kTol);

    ChannelMoments m;
    Var y = batch_norm_train(constant(Tensor::from_rows({{0.0}, {2.0}})), constant(Tensor({1}, 1.0)),
                             constant(Tensor({1}, 0.0)), 0.0, &m);
    EXPECT_DOUBLE_EQ(m.mean[0], 1.0);
    EXPECT_DOUBLE_EQ(m.var[0], 1.0);
    EXPECT_DOUBLE_EQ(y.value()[0], -1.0);
    EXPECT_DOUBLE_EQ(y.value()[1], 1.0);
}

TEST(CoreOps, AffineNormAndPoolGradients) {
    Tensor mu = random_tensor({2}, 31), var({2}, 0.7);
    auto r = grad_check(
        [mu, var](const std::vector<Var>& in) {
            Var y = channel_affine_norm(in[0], mu, var, in[1], in[2], 1e-5);
            Var p = global_avg_pool(y);
            Var t = maps_to_tokens(y);
            return add(sum(mul(p, p)), sum(mul(t, mul(t, t))));
        },
        {random_tensor({2, 2, 3}, 32), random_tensor({2}, 33), random_tensor({2}, 34)});
    EXPECT_LT(r.max_rel_error, kTol);
}

TEST(CoreOps, LayerNormGradients) {
    Tensor wt = random_tensor({4, 6}, 41);
    auto r = grad_check(
        [wt](const std::vector<Var>& in) { return sum(mul(layer_norm_rows(in[0], in[1], in[2]), constant(wt))); },
        {random_tensor({4, 6}, 42), random_tensor({6}, 43), random_tensor({6}, 44)});
    EXPECT_LT(r.max_rel_error, kTol);
}

TEST(CoreOps, AttentionGradientsAndIsolation) {
    Tensor wt = random_tensor({2 * 3, 4}, 51);
    auto r = grad_check(
        [wt](const std::vector<Var>& in) {
            return sum(mul(multi_head_attention_core(in[0], in[1], in[2], 2, 2), constant(wt)));
        },
        {random_tensor({2 * 3, 4}, 52), random_tensor({2 * 5, 4}, 53), random_tensor({2 * 5, 4}, 54)});
    EXPECT_LT(r.max_rel_error, kTol);

    // Changing the second sample's keys leaves the first sample's output alone.
    Tensor q = random_tensor({2 * 3, 4}, 55), k = random_tensor({2 * 5, 4}, 56), v = random_tensor({2 * 5, 4}, 57);
    Var y1 = multi_head_attention_core(constant(q), constant(k), constant(v), 2, 2);
    for (std::size_t i = 20; i < 40; ++i) k[i] += 1.0;
    Var y2 = multi_head_attention_core(constant(q), constant(k), constant(v), 2, 2);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(y1.value()[i], y2.value()[i]);
}

TEST(CoreOps, NoGradGuardRecordsNothing) {
    Var p = parameter(Tensor({2}, 1.0));
    Var y;
    {
        NoGradGuard g;
        y = scale(p, 2.0);
    }
    EXPECT_FALSE(y.requires_grad());
    EXPECT_FALSE(detach(scale(p, 2.0)).requires_grad());
    EXPECT_TRUE(scale(p, 2.0).requires_grad());
}

TEST(CoreOps, ZeroNormRowIsNumericError) {
    EXPECT_THROW(l2_normalize_rows(constant(Tensor({1, 2}, 0.0))), NumericError);
}

}  // namespace
}  // namespace crosscam::ag
