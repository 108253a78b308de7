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

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "crosscam/core/error.hpp"
#include "crosscam/core/tensor.hpp"
#include "crosscam/model/model.hpp"
#include "crosscam/train/config.hpp"
#include "crosscam/train/optim.hpp"

namespace crosscam::train {

inline constexpr char kCheckpointMagic[8] = {'C', 'X', 'C', 'A', 'M', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training or run inference. Tensors are keyed
/// by name: "param/<name>", "buffer/<name>/mean|var", "adam_m/<name>",
/// "adam_v/<name>".
struct Checkpoint {
    std::string config_text;
    std::uint64_t config_hash = 0;
    std::uint64_t epoch = 0;  // completed epochs
    std::uint64_t step = 0;   // completed optimizer steps
    std::uint64_t adam_t = 0;
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::uint8_t> flags;  // "buffer/<name>/initialized"

    bool operator==(const Checkpoint&) const = default;
    TrainConfig config() const { return parse_config(config_text); }
};

namespace detail {

class Writer {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double d) {
        std::uint64_t v;
        std::memcpy(&v, &d, 8);
        u64(v);
    }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    std::string& buffer() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
    void need(std::size_t n) {
        if (n > end_ - pos_) throw DataError("checkpoint is corrupt: truncated record");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == end_; }

private:
    const std::string& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc_of(const std::string& s, std::size_t n) {
    return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(n)));
}

}  // namespace detail

inline std::string serialize(const Checkpoint& ck) {
    detail::Writer w;
    w.bytes(kCheckpointMagic, 8);
    w.u32(kCheckpointVersion);
    w.str(ck.config_text);
    w.u64(ck.config_hash);
    w.u64(ck.epoch);
    w.u64(ck.step);
    w.u64(ck.adam_t);
    w.u64(ck.tensors.size());
    for (const auto& [name, t] : ck.tensors) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.ndim()));
        for (std::size_t d : t.shape()) w.u64(d);
        for (double v : t.vec()) w.f64(v);
    }
    w.u64(ck.flags.size());
    for (const auto& [name, f] : ck.flags) {
        w.str(name);
        w.u8(f);
    }
    w.u32(detail::crc_of(w.buffer(), w.buffer().size()));
    return std::move(w.buffer());
}

inline Checkpoint deserialize(const std::string& buf) {
    if (buf.size() < 8 + 4 + 4 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
        throw DataError("not a checkpoint file (bad magic or truncated)");
    const std::size_t body = buf.size() - 4;
    {
        std::uint32_t stored = 0;
        for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[body + i])) << (8 * i);
        if (stored != detail::crc_of(buf, body)) throw DataError("checkpoint is corrupt: checksum mismatch");
    }
    detail::Reader r(buf, body);
    for (int i = 0; i < 8; ++i) r.u8();
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw DataError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    Checkpoint ck;
    ck.config_text = r.str();
    ck.config_hash = r.u64();
    if (ck.config_hash != fnv1a64(ck.config_text)) throw DataError("checkpoint config hash does not match its config");
    ck.epoch = r.u64();
    ck.step = r.u64();
    ck.adam_t = r.u64();
    const std::uint64_t nt = r.u64();
    for (std::uint64_t i = 0; i < nt; ++i) {
        std::string name = r.str();
        const std::uint32_t nd = r.u32();
        if (nd > 8) throw DataError("checkpoint is corrupt: tensor rank " + std::to_string(nd));
        Shape shape(nd);
        std::uint64_t count = 1;
        for (auto& d : shape) {
            d = r.u64();
            count *= d;
        }
        r.need(count * 8);
        std::vector<double> data(count);
        for (auto& v : data) v = r.f64();
        ck.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    const std::uint64_t nf = r.u64();
    for (std::uint64_t i = 0; i < nf; ++i) {
        std::string name = r.str();
        ck.flags.emplace(std::move(name), r.u8());
    }
    if (!r.done()) throw DataError("checkpoint is corrupt: trailing bytes");
    return ck;
}

inline void checkpoint_save(const std::filesystem::path& path, const Checkpoint& ck) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::string bytes = serialize(ck);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write checkpoint " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("failed writing checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint checkpoint_load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

/// Snapshot of a model (and optionally its optimizer).
inline Checkpoint capture(model::Model& m, const TrainConfig& cfg, const Adam* opt, std::uint64_t epoch, std::uint64_t step) {
    Checkpoint ck;
    ck.config_text = to_text(cfg);
    ck.config_hash = fnv1a64(ck.config_text);
    ck.epoch = epoch;
    ck.step = step;
    for (const auto& [name, p] : m.parameters()) ck.tensors.emplace("param/" + name, p.value());
    for (const auto& [name, slot] : m.buffers()) {
        ck.tensors.emplace("buffer/" + name + "/mean", slot->running_mean);
        ck.tensors.emplace("buffer/" + name + "/var", slot->running_var);
        ck.flags.emplace("buffer/" + name + "/initialized", slot->initialized ? 1 : 0);
    }
    if (opt) {
        ck.adam_t = opt->t;
        for (const auto& [name, t] : opt->m) ck.tensors.emplace("adam_m/" + name, t);
        for (const auto& [name, t] : opt->v) ck.tensors.emplace("adam_v/" + name, t);
    }
    return ck;
}

/// Keys whose values fix tensor shapes; a checkpoint only fits a model built
/// with the same values.
inline const std::vector<std::string>& structural_keys() {
    static const std::vector<std::string> keys{"encoder_channels", "last_stride", "regions", "d_local", "heads", "ff_dim",
                                               "encoder_layers", "decoder_layers", "n_classes", "n_cameras", "csbn_affine",
                                               "use_ls", "use_ssrc", "use_mcnl_local"};
    return keys;
}

inline void check_compatible(const TrainConfig& stored, const TrainConfig& wanted) {
    for (const auto& k : structural_keys()) {
        const std::string a = get_value(stored, k), b = get_value(wanted, k);
        if (a != b) throw ConfigError("checkpoint config mismatch: " + k + " is " + a + " in the checkpoint but " + b + " was requested");
    }
}

/// Builds the model stored in a checkpoint.
inline model::Model restore_model(const Checkpoint& ck) {
    const TrainConfig cfg = ck.config();
    model::Model m = model::Model::create(model_config(cfg), cfg.seed);
    auto take = [&](const std::string& key, Tensor& dst) {
        auto it = ck.tensors.find(key);
        if (it == ck.tensors.end()) throw DataError("checkpoint is missing tensor " + key);
        if (it->second.shape() != dst.shape())
            throw ConfigError("checkpoint tensor " + key + " has shape " + shape_str(it->second.shape()) + ", model expects " +
                              shape_str(dst.shape()));
        dst = it->second;
    };
    for (auto& [name, p] : m.parameters()) take("param/" + name, ag::Var(p).mutable_value());
    for (auto& [name, slot] : m.buffers()) {
        take("buffer/" + name + "/mean", slot->running_mean);
        take("buffer/" + name + "/var", slot->running_var);
        auto it = ck.flags.find("buffer/" + name + "/initialized");
        if (it == ck.flags.end()) throw DataError("checkpoint is missing flag for " + name);
        slot->initialized = it->second != 0;
    }
    return m;
}

inline Adam restore_optimizer(const Checkpoint& ck) {
    const TrainConfig cfg = ck.config();
    Adam opt{cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay, ck.adam_t, {}, {}};
    for (const auto& [key, t] : ck.tensors) {
        if (key.rfind("adam_m/", 0) == 0) opt.m.emplace(key.substr(7), t);
        if (key.rfind("adam_v/", 0) == 0) opt.v.emplace(key.substr(7), t);
    }
    return opt;
}

}  // namespace crosscam::train
