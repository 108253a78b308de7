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

#include "crosscam/core/ops.hpp"

/// Neural-network building blocks with hand-written backward passes.
namespace crosscam::ag {

namespace detail {
/// (N, C, S) view of a tensor with ndim >= 2; trailing axes fold into S.
struct NCS {
    std::size_t n, c, s;
};
inline NCS ncs_of(const Tensor& t, const char* op) {
    if (t.ndim() < 2) throw ShapeError(std::string(op) + ": expected [N, C, ...], got " + shape_str(t.shape()));
    std::size_t s = 1;
    for (std::size_t i = 2; i < t.ndim(); ++i) s *= t.dim(i);
    return {t.dim(0), t.dim(1), s};
}
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
}  // namespace detail

struct Conv2dSpec {
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 0;
};

inline std::size_t conv_out_size(std::size_t in, const Conv2dSpec& s) {
    return (in + 2 * s.padding - s.kernel) / s.stride + 1;
}

/// 2-D convolution. x [N, Cin, H, W]; weight [Cout, Cin, k, k]; bias [Cout].
/// The whole batch is lowered to one im2col matrix and a single GEMM.
inline Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dSpec spec) {
    const auto& xs = x.shape();
    if (xs.size() != 4) throw ShapeError("conv2d: input must be [N, C, H, W], got " + shape_str(xs));
    const std::size_t n = xs[0], cin = xs[1], h = xs[2], w = xs[3];
    const std::size_t k = spec.kernel;
    const std::size_t cout = weight.dim(0);
    if (weight.shape() != Shape{cout, cin, k, k})
        throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " + shape_str(xs));
    if (bias.numel() != cout) throw ShapeError("conv2d: bias size mismatch");
    if (h + 2 * spec.padding < k || w + 2 * spec.padding < k) throw ShapeError("conv2d: kernel larger than padded input");
    const std::size_t ho = conv_out_size(h, spec), wo = conv_out_size(w, spec);
    const std::size_t kk = cin * k * k, so = ho * wo, ncols = n * so;

    // cols[(ci, ky, kx), (sample, oy, ox)]
    Tensor cols({kk, ncols});
    const auto& xv = x.value();
    for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                double* dst = cols.data() + ((ci * k + ky) * k + kx) * ncols;
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        const long iy = static_cast<long>(oy * spec.stride + ky) - static_cast<long>(spec.padding);
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const long ix = static_cast<long>(ox * spec.stride + kx) - static_cast<long>(spec.padding);
                            double v = 0.0;
                            if (iy >= 0 && ix >= 0 && iy < static_cast<long>(h) && ix < static_cast<long>(w))
                                v = xv[((b * cin + ci) * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
                            dst[b * so + oy * wo + ox] = v;
                        }
                    }
            }
    RowMat prod = as_mat(weight.value(), cout, kk) * as_mat(cols, kk, ncols);
    Tensor out({n, cout, ho, wo});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t co = 0; co < cout; ++co) {
            const double bc = bias.value()[co];
            double* dst = out.data() + (b * cout + co) * so;
            const double* src = prod.data() + co * ncols + b * so;
            for (std::size_t i = 0; i < so; ++i) dst[i] = src[i] + bc;
        }

    return make_result(std::move(out), {x, weight, bias},
                       [=, cols = std::move(cols)](Node& self) {
        // Regroup dOut as [Cout, N*So] to match the im2col layout.
        RowMat dprod(static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(ncols));
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t co = 0; co < cout; ++co) {
                const double* src = self.grad.data() + (b * cout + co) * so;
                double* dst = dprod.data() + co * ncols + b * so;
                std::copy_n(src, so, dst);
            }
        if (Tensor* gb = parent_grad(self, 2)) {
            for (std::size_t co = 0; co < cout; ++co) (*gb)[co] += dprod.row(static_cast<Eigen::Index>(co)).sum();
        }
        if (Tensor* gw = parent_grad(self, 1))
            as_mat(*gw, cout, kk).noalias() += dprod * as_mat(cols, kk, ncols).transpose();
        if (Tensor* gx = parent_grad(self, 0)) {
            RowMat dcols = as_mat(parent_value(self, 1), cout, kk).transpose() * dprod;
            for (std::size_t ci = 0; ci < cin; ++ci)
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const double* src = dcols.data() + ((ci * k + ky) * k + kx) * ncols;
                        for (std::size_t b = 0; b < n; ++b)
                            for (std::size_t oy = 0; oy < ho; ++oy) {
                                const long iy = static_cast<long>(oy * spec.stride + ky) - static_cast<long>(spec.padding);
                                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                                for (std::size_t ox = 0; ox < wo; ++ox) {
                                    const long ix = static_cast<long>(ox * spec.stride + kx) - static_cast<long>(spec.padding);
                                    if (ix < 0 || ix >= static_cast<long>(w)) continue;
                                    (*gx)[((b * cin + ci) * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                                        src[b * so + oy * wo + ox];
                                }
                            }
                    }
        }
    });
}

/// Per-channel moments of an [N, C, ...] tensor over (N x spatial), using
/// the population variance.
struct ChannelMoments {
    Tensor mean;  // [C]
    Tensor var;   // [C]
};

inline ChannelMoments channel_moments(const Tensor& x) {
    const auto [n, c, s] = detail::ncs_of(x, "channel_moments");
    ChannelMoments m{Tensor({c}), Tensor({c})};
    const double count = static_cast<double>(n * s);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < s; ++i) acc += x[(b * c + ch) * s + i];
        const double mu = acc / count;
        double v = 0.0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < s; ++i) {
                const double d = x[(b * c + ch) * s + i] - mu;
                v += d * d;
            }
        m.mean[ch] = mu;
        m.var[ch] = v / count;
    }
    return m;
}

/// Training-mode batch normalization over channel axis 1. The batch moments
/// used for normalization are written to `moments` for running-stat updates.
inline Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps, ChannelMoments* moments = nullptr) {
    const auto [n, c, s] = detail::ncs_of(x.value(), "batch_norm_train");
    if (gamma.numel() != c || beta.numel() != c) throw ShapeError("batch_norm_train: affine size mismatch");
    if (n * s < 2) throw NumericError("batch_norm_train: need at least 2 values per channel");
    ChannelMoments m = channel_moments(x.value());
    std::vector<double> inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(m.var[ch] + eps);
    Tensor xhat = x.value();
    Tensor out(x.shape());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < s; ++i) {
                const std::size_t idx = (b * c + ch) * s + i;
                xhat[idx] = (xhat[idx] - m.mean[ch]) * inv_std[ch];
                out[idx] = gamma.value()[ch] * xhat[idx] + beta.value()[ch];
            }
    if (moments) *moments = m;
    return make_result(std::move(out), {x, gamma, beta},
                       [n = n, c = c, s = s, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& self) {
        const auto& g = parent_value(self, 1);
        const double count = static_cast<double>(n * s);
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < s; ++i) {
                    const std::size_t idx = (b * c + ch) * s + i;
                    sum_dy[ch] += self.grad[idx];
                    sum_dy_xhat[ch] += self.grad[idx] * xhat[idx];
                }
        if (Tensor* gg = parent_grad(self, 1))
            for (std::size_t ch = 0; ch < c; ++ch) (*gg)[ch] += sum_dy_xhat[ch];
        if (Tensor* gb = parent_grad(self, 2))
            for (std::size_t ch = 0; ch < c; ++ch) (*gb)[ch] += sum_dy[ch];
        if (Tensor* gx = parent_grad(self, 0))
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < s; ++i) {
                        const std::size_t idx = (b * c + ch) * s + i;
                        (*gx)[idx] += g[ch] * inv_std[ch] *
                                      (self.grad[idx] - sum_dy[ch] / count - xhat[idx] * sum_dy_xhat[ch] / count);
                    }
    });
}

/// Normalization with fixed statistics: gamma * (x - mean) / sqrt(var + eps) + beta,
/// per channel of an [N, C, ...] tensor. Differentiable in x, gamma, beta.
inline Var channel_affine_norm(const Var& x, const Tensor& mean, const Tensor& var, const Var& gamma, const Var& beta,
                               double eps) {
    const auto [n, c, s] = detail::ncs_of(x.value(), "channel_affine_norm");
    if (mean.numel() != c || var.numel() != c || gamma.numel() != c || beta.numel() != c)
        throw ShapeError("channel_affine_norm: statistics size mismatch");
    std::vector<double> inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
    Tensor out(x.shape());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < s; ++i) {
                const std::size_t idx = (b * c + ch) * s + i;
                out[idx] = gamma.value()[ch] * (x.value()[idx] - mean[ch]) * inv_std[ch] + beta.value()[ch];
            }
    return make_result(std::move(out), {x, gamma, beta},
                       [n = n, c = c, s = s, mean, inv_std = std::move(inv_std)](Node& self) {
        const auto& xv = parent_value(self, 0);
        const auto& g = parent_value(self, 1);
        Tensor* gx = parent_grad(self, 0);
        Tensor* gg = parent_grad(self, 1);
        Tensor* gb = parent_grad(self, 2);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < s; ++i) {
                    const std::size_t idx = (b * c + ch) * s + i;
                    const double dy = self.grad[idx];
                    if (gx) (*gx)[idx] += dy * g[ch] * inv_std[ch];
                    if (gg) (*gg)[ch] += dy * (xv[idx] - mean[ch]) * inv_std[ch];
                    if (gb) (*gb)[ch] += dy;
                }
    });
}

/// Spatial global average pooling: [N, C, ...] -> [N, C].
inline Var global_avg_pool(const Var& x) {
    const auto [n, c, s] = detail::ncs_of(x.value(), "global_avg_pool");
    Tensor out({n, c});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t i = 0; i < s; ++i) acc += x.value()[(b * c + ch) * s + i];
            out[b * c + ch] = acc / static_cast<double>(s);
        }
    return make_result(std::move(out), {x}, [n = n, c = c, s = s](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < s; ++i)
                        (*g)[(b * c + ch) * s + i] += self.grad[b * c + ch] / static_cast<double>(s);
    });
}

/// [N, C, ...] feature maps to a token matrix [N*S, C] (sample-major).
inline Var maps_to_tokens(const Var& x) {
    const auto [n, c, s] = detail::ncs_of(x.value(), "maps_to_tokens");
    Tensor out({n * s, c});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < s; ++i) out[(b * s + i) * c + ch] = x.value()[(b * c + ch) * s + i];
    return make_result(std::move(out), {x}, [n = n, c = c, s = s](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < s; ++i) (*g)[(b * c + ch) * s + i] += self.grad[(b * s + i) * c + ch];
    });
}

/// Row-wise layer normalization of X [R, D] with affine gamma, beta [D].
inline Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
    const std::size_t r = x.value().rows(), d = x.value().cols();
    if (gamma.numel() != d || beta.numel() != d) throw ShapeError("layer_norm_rows: affine size mismatch");
    Tensor xhat = x.value();
    std::vector<double> inv_std(r);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < r; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xhat[i * d + j];
        mu /= static_cast<double>(d);
        double v = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double t = xhat[i * d + j] - mu;
            v += t * t;
        }
        inv_std[i] = 1.0 / std::sqrt(v / static_cast<double>(d) + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (xhat[i * d + j] - mu) * inv_std[i];
            out[i * d + j] = gamma.value()[j] * xhat[i * d + j] + beta.value()[j];
        }
    }
    return make_result(std::move(out), {x, gamma, beta},
                       [r, d, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& self) {
        const auto& g = parent_value(self, 1);
        Tensor* gx = parent_grad(self, 0);
        Tensor* gg = parent_grad(self, 1);
        Tensor* gb = parent_grad(self, 2);
        std::vector<double> dxhat(d);
        for (std::size_t i = 0; i < r; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double dy = self.grad[i * d + j];
                if (gg) (*gg)[j] += dy * xhat[i * d + j];
                if (gb) (*gb)[j] += dy;
                dxhat[j] = dy * g[j];
                s1 += dxhat[j];
                s2 += dxhat[j] * xhat[i * d + j];
            }
            if (gx)
                for (std::size_t j = 0; j < d; ++j)
                    (*gx)[i * d + j] += inv_std[i] / static_cast<double>(d) *
                                        (static_cast<double>(d) * dxhat[j] - s1 - xhat[i * d + j] * s2);
        }
    });
}

/// Scaled dot-product attention core for a batch of independent sequences.
/// q [B*Lq, D], k and v [B*Lk, D]; D splits into `heads` contiguous column
/// groups. Returns the concatenated head outputs [B*Lq, D]. Samples never
/// attend across each other.
inline Var multi_head_attention_core(const Var& q, const Var& k, const Var& v, std::size_t batch, std::size_t heads) {
    detail::require_2d(q, "attention");
    detail::require_2d(k, "attention");
    detail::require_same(k, v, "attention");
    const std::size_t d = q.dim(1);
    if (k.dim(1) != d) throw ShapeError("attention: q/k width mismatch");
    if (batch == 0 || q.dim(0) % batch != 0 || k.dim(0) % batch != 0) throw ShapeError("attention: rows not divisible by batch");
    if (heads == 0 || d % heads != 0) throw ShapeError("attention: width not divisible by heads");
    const std::size_t lq = q.dim(0) / batch, lk = k.dim(0) / batch, dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    using detail::ConstStridedMap;
    using detail::StridedMap;
    const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
    const auto Lq = static_cast<Eigen::Index>(lq), Lk = static_cast<Eigen::Index>(lk), Dh = static_cast<Eigen::Index>(dh);

    Tensor out({batch * lq, d});
    Tensor probs({batch * heads, lq, lk});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h) {
            ConstStridedMap qh(q.value().data() + b * lq * d + h * dh, Lq, Dh, stride);
            ConstStridedMap kh(k.value().data() + b * lk * d + h * dh, Lk, Dh, stride);
            ConstStridedMap vh(v.value().data() + b * lk * d + h * dh, Lk, Dh, stride);
            MatMap a(probs.data() + (b * heads + h) * lq * lk, Lq, Lk);
            a.noalias() = (qh * kh.transpose()) * scale;
            for (Eigen::Index i = 0; i < Lq; ++i) {
                const double mx = a.row(i).maxCoeff();
                a.row(i) = (a.row(i).array() - mx).exp();
                a.row(i) /= a.row(i).sum();
            }
            StridedMap(out.data() + b * lq * d + h * dh, Lq, Dh, stride).noalias() = a * vh;
        }
    return make_result(std::move(out), {q, k, v},
                       [=, probs = std::move(probs)](Node& self) {
        const auto& qv = parent_value(self, 0);
        const auto& kv = parent_value(self, 1);
        const auto& vv = parent_value(self, 2);
        Tensor* gq = parent_grad(self, 0);
        Tensor* gk = parent_grad(self, 1);
        Tensor* gv = parent_grad(self, 2);
        RowMat da, ds;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t h = 0; h < heads; ++h) {
                ConstStridedMap qh(qv.data() + b * lq * d + h * dh, Lq, Dh, stride);
                ConstStridedMap kh(kv.data() + b * lk * d + h * dh, Lk, Dh, stride);
                ConstStridedMap vh(vv.data() + b * lk * d + h * dh, Lk, Dh, stride);
                ConstStridedMap dout(self.grad.data() + b * lq * d + h * dh, Lq, Dh, stride);
                ConstMatMap a(probs.data() + (b * heads + h) * lq * lk, Lq, Lk);
                if (gv) StridedMap(gv->data() + b * lk * d + h * dh, Lk, Dh, stride).noalias() += a.transpose() * dout;
                if (!gq && !gk) continue;
                da.noalias() = dout * vh.transpose();
                ds = a.array() * (da.array().colwise() - (da.array() * a.array()).rowwise().sum());
                if (gq) StridedMap(gq->data() + b * lq * d + h * dh, Lq, Dh, stride).noalias() += (ds * kh) * scale;
                if (gk) StridedMap(gk->data() + b * lk * d + h * dh, Lk, Dh, stride).noalias() += (ds.transpose() * qh) * scale;
            }
    });
}

}  // namespace crosscam::ag
