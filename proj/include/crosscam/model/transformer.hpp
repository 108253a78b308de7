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
#include <cstdint>
#include <string>
#include <vector>

#include "crosscam/core/nn_ops.hpp"
#include "crosscam/core/random.hpp"

namespace crosscam::model {

struct TransformerConfig {
    std::size_t d_model = 256;
    std::size_t heads = 4;
    std::size_t ff_dim = 512;
    std::size_t encoder_layers = 2;
    std::size_t decoder_layers = 2;
    std::size_t num_queries = 12;  // P
    bool positional_encoding = true;
    double ln_eps = 1e-5;

    void validate() const {
        if (num_queries < 2) throw ConfigError("transformer: need at least 2 region queries");
        if (heads == 0 || d_model % heads != 0) throw ConfigError("transformer: d_model must be divisible by heads");
        if (positional_encoding && d_model % 4 != 0) throw ConfigError("transformer: 2-D positional encoding needs d_model % 4 == 0");
        if (decoder_layers == 0) throw ConfigError("transformer: need at least one decoder layer");
    }
};

struct Linear {
    ag::Var weight;  // [in, out]
    ag::Var bias;    // [out]

    static Linear create(std::size_t in, std::size_t out, std::mt19937_64& eng) {
        Tensor w({in, out});
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        for (auto& v : w.vec()) v = bound * (2.0 * uniform01(eng) - 1.0);
        return {ag::parameter(std::move(w)), ag::parameter(Tensor({out}))};
    }
    ag::Var operator()(const ag::Var& x) const { return ag::linear(x, weight, bias); }
};

struct LayerNorm {
    ag::Var gamma, beta;
    static LayerNorm create(std::size_t d) { return {ag::parameter(Tensor({d}, 1.0)), ag::parameter(Tensor({d}, 0.0))}; }
};

struct Attention {
    Linear q, k, v, out;
    static Attention create(std::size_t d, std::mt19937_64& eng) {
        return {Linear::create(d, d, eng), Linear::create(d, d, eng), Linear::create(d, d, eng), Linear::create(d, d, eng)};
    }
};

struct FeedForward {
    Linear in, out;
    static FeedForward create(std::size_t d, std::size_t ff, std::mt19937_64& eng) {
        return {Linear::create(d, ff, eng), Linear::create(ff, d, eng)};
    }
};

struct EncoderLayer {
    Attention self_attn;
    LayerNorm norm1;
    FeedForward ff;
    LayerNorm norm2;
};

struct DecoderLayer {
    Attention self_attn;
    LayerNorm norm1;
    Attention cross_attn;
    LayerNorm norm2;
    FeedForward ff;
    LayerNorm norm3;
};

/// Encoder-decoder transformer that turns a feature map into P region
/// features, one per learned query.
struct TransformerParams {
    TransformerConfig config;
    std::vector<EncoderLayer> encoder;
    std::vector<DecoderLayer> decoder;
    LayerNorm decoder_norm;
    ag::Var queries;  // [P, d] learned query embeddings

    static TransformerParams create(const TransformerConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        auto eng = keyed_engine(seed, {0x7f0});
        const std::size_t d = cfg.d_model;
        TransformerParams p;
        p.config = cfg;
        for (std::size_t i = 0; i < cfg.encoder_layers; ++i)
            p.encoder.push_back({Attention::create(d, eng), LayerNorm::create(d), FeedForward::create(d, cfg.ff_dim, eng), LayerNorm::create(d)});
        for (std::size_t i = 0; i < cfg.decoder_layers; ++i)
            p.decoder.push_back({Attention::create(d, eng), LayerNorm::create(d), Attention::create(d, eng), LayerNorm::create(d),
                                 FeedForward::create(d, cfg.ff_dim, eng), LayerNorm::create(d)});
        p.decoder_norm = LayerNorm::create(d);
        Tensor q({cfg.num_queries, d});
        for (auto& v : q.vec()) v = standard_normal(eng);
        p.queries = ag::parameter(std::move(q));
        return p;
    }
};

/// Fixed 2-D sine/cosine positional encoding for an h x w grid, [h*w, d]:
/// the first d/2 channels encode the row, the rest the column.
inline Tensor sine_position_encoding(std::size_t h, std::size_t w, std::size_t d) {
    const std::size_t half = d / 2;
    Tensor pe({h * w, d});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t i = 0; i < half; ++i) {
                const double freq = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(half));
                const double ay = (static_cast<double>(y) + 1.0) / freq;
                const double ax = (static_cast<double>(x) + 1.0) / freq;
                pe[(y * w + x) * d + i] = i % 2 == 0 ? std::sin(ay) : std::cos(ay);
                pe[(y * w + x) * d + half + i] = i % 2 == 0 ? std::sin(ax) : std::cos(ax);
            }
    return pe;
}

namespace detail {
inline ag::Var attend(const Attention& a, const ag::Var& query_in, const ag::Var& key_in, const ag::Var& value_in,
                      std::size_t batch, std::size_t heads) {
    return a.out(ag::multi_head_attention_core(a.q(query_in), a.k(key_in), a.v(value_in), batch, heads));
}
inline ag::Var norm(const LayerNorm& ln, const ag::Var& x, double eps) { return ag::layer_norm_rows(x, ln.gamma, ln.beta, eps); }
inline ag::Var feed_forward(const FeedForward& ff, const ag::Var& x) { return ff.out(ag::relu(ff.in(x))); }
}  // namespace detail

/// Region features for a batch of maps given as tokens [N*h*w, d]
/// (sample-major, row-major grid). Returns [N*P, d], query index fastest.
/// Post-norm layers; positional encodings enter queries and keys only.
inline ag::Var local_extract(const TransformerParams& tp, const ag::Var& tokens, std::size_t batch, std::size_t h, std::size_t w) {
    const auto& cfg = tp.config;
    const std::size_t d = cfg.d_model, s = h * w;
    if (tokens.value().ndim() != 2 || tokens.dim(1) != d)
        throw ShapeError("local_extract: token width " + std::to_string(tokens.value().cols()) + " does not match model width " + std::to_string(d));
    if (batch == 0 || tokens.dim(0) != batch * s) throw ShapeError("local_extract: token count does not match batch x grid");

    ag::Var pos = cfg.positional_encoding ? ag::tile_rows(ag::constant(sine_position_encoding(h, w, d)), batch)
                                          : ag::constant(Tensor({batch * s, d}));
    ag::Var memory = tokens;
    for (const auto& layer : tp.encoder) {
        ag::Var qk = ag::add(memory, pos);
        memory = detail::norm(layer.norm1, ag::add(memory, detail::attend(layer.self_attn, qk, qk, memory, batch, cfg.heads)), cfg.ln_eps);
        memory = detail::norm(layer.norm2, ag::add(memory, detail::feed_forward(layer.ff, memory)), cfg.ln_eps);
    }
    ag::Var query_pos = ag::tile_rows(tp.queries, batch);
    ag::Var keys = ag::add(memory, pos);
    // The target starts from the queries: a zero target leaves every region
    // identical until cross attention sharpens, a fixed point of the region
    // contrast.
    ag::Var tgt = query_pos;
    for (const auto& layer : tp.decoder) {
        ag::Var qk = ag::add(tgt, query_pos);
        tgt = detail::norm(layer.norm1, ag::add(tgt, detail::attend(layer.self_attn, qk, qk, tgt, batch, cfg.heads)), cfg.ln_eps);
        tgt = detail::norm(layer.norm2,
                           ag::add(tgt, detail::attend(layer.cross_attn, ag::add(tgt, query_pos), keys, memory, batch, cfg.heads)),
                           cfg.ln_eps);
        tgt = detail::norm(layer.norm3, ag::add(tgt, detail::feed_forward(layer.ff, tgt)), cfg.ln_eps);
    }
    return detail::norm(tp.decoder_norm, tgt, cfg.ln_eps);
}

}  // namespace crosscam::model
