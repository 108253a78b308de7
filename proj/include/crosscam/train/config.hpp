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

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "crosscam/core/error.hpp"
#include "crosscam/core/random.hpp"
#include "crosscam/losses/cace.hpp"
#include "crosscam/losses/metric.hpp"
#include "crosscam/model/model.hpp"

namespace crosscam::train {

/// Every training setting. Defaults are the full-scale values; the desk
/// profile shrinks them for CPU runs.
struct TrainConfig {
    // schedule
    std::size_t epochs = 300;
    double base_lr = 6e-4;
    double lr_decay_factor = 0.1;
    std::size_t lr_decay_every = 100;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    std::size_t batch_size = 128;
    std::size_t instances_per_identity = 4;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;  // epochs; 0 = final only
    bool precise_norm = true;          // re-average inference norm moments after the last epoch

    // objectives
    bool use_ce = false;
    bool use_triplet = false;
    bool use_cace = true;
    bool use_mcnl = true;
    bool use_mcnl_local = true;
    bool use_gsl = true;
    bool use_ls = true;
    bool use_ssrc = true;
    std::string alignment = "none";  // none | mmd_linear | coral
    double weight_ce = 1.0, weight_triplet = 1.0, weight_cace = 1.0, weight_mcnl = 1.0, weight_gsl = 1.0, weight_ls = 1.0,
           weight_ssrc = 1.0, weight_alignment = 1.0;
    double margin_m1 = 0.3;
    double margin_m2 = 0.1;
    double triplet_margin = 0.3;
    std::string metric = "euclidean";
    std::string mcnl_local_metric = "cosine";
    double epsilon_smooth = 0.1;
    std::string soft_label_mode = "camera_smoothing";
    std::string ssrc_reduction = "mean";  // sum | mean over (sample, region)

    // model
    std::string encoder_channels = "16,32,64,128";
    std::size_t last_stride = 1;
    std::size_t regions = 12;
    std::size_t d_local = 256;
    std::size_t heads = 4;
    std::size_t ff_dim = 512;
    std::size_t encoder_layers = 2;
    std::size_t decoder_layers = 2;
    bool positional_encoding = true;
    std::string csbn_affine = "shared_with_global";

    // filled from the data at train time; 0 = not yet known
    std::size_t n_classes = 0;
    std::size_t n_cameras = 0;

    bool local_branch() const { return use_ls || use_ssrc || use_mcnl_local; }
    bool needs_fakes() const { return use_gsl || use_ls; }
    bool operator==(const TrainConfig&) const = default;
};

namespace detail {

struct Field {
    std::string key;
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string&)> set;
};

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size() || x < 0) throw 0;
        return static_cast<std::size_t>(x);
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw 0;
        return x;
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

template <typename T>
Field size_field(std::string key, T TrainConfig::*m) {
    return {key, [m](const TrainConfig& c) { return std::to_string(c.*m); },
            [m, key](TrainConfig& c, const std::string& v) { c.*m = static_cast<T>(parse_size(key, v)); }};
}
inline Field double_field(std::string key, double TrainConfig::*m) {
    return {key, [m](const TrainConfig& c) { return fmt_double(c.*m); },
            [m, key](TrainConfig& c, const std::string& v) { c.*m = parse_double(key, v); }};
}
inline Field bool_field(std::string key, bool TrainConfig::*m) {
    return {key, [m](const TrainConfig& c) { return std::string(c.*m ? "true" : "false"); },
            [m, key](TrainConfig& c, const std::string& v) { c.*m = parse_bool(key, v); }};
}
inline Field string_field(std::string key, std::string TrainConfig::*m) {
    return {key, [m](const TrainConfig& c) { return c.*m; }, [m](TrainConfig& c, const std::string& v) { c.*m = v; }};
}

}  // namespace detail

/// The documented key list, in file order.
inline const std::vector<detail::Field>& config_fields() {
    using namespace detail;
    static const std::vector<Field> fields{
        size_field("epochs", &TrainConfig::epochs),
        double_field("base_lr", &TrainConfig::base_lr),
        double_field("lr_decay_factor", &TrainConfig::lr_decay_factor),
        size_field("lr_decay_every", &TrainConfig::lr_decay_every),
        double_field("adam_beta1", &TrainConfig::adam_beta1),
        double_field("adam_beta2", &TrainConfig::adam_beta2),
        double_field("adam_eps", &TrainConfig::adam_eps),
        double_field("weight_decay", &TrainConfig::weight_decay),
        size_field("batch_size", &TrainConfig::batch_size),
        size_field("instances_per_identity", &TrainConfig::instances_per_identity),
        size_field("seed", &TrainConfig::seed),
        size_field("checkpoint_every", &TrainConfig::checkpoint_every),
        bool_field("precise_norm", &TrainConfig::precise_norm),
        bool_field("use_ce", &TrainConfig::use_ce),
        bool_field("use_triplet", &TrainConfig::use_triplet),
        bool_field("use_cace", &TrainConfig::use_cace),
        bool_field("use_mcnl", &TrainConfig::use_mcnl),
        bool_field("use_mcnl_local", &TrainConfig::use_mcnl_local),
        bool_field("use_gsl", &TrainConfig::use_gsl),
        bool_field("use_ls", &TrainConfig::use_ls),
        bool_field("use_ssrc", &TrainConfig::use_ssrc),
        string_field("alignment", &TrainConfig::alignment),
        double_field("weight_ce", &TrainConfig::weight_ce),
        double_field("weight_triplet", &TrainConfig::weight_triplet),
        double_field("weight_cace", &TrainConfig::weight_cace),
        double_field("weight_mcnl", &TrainConfig::weight_mcnl),
        double_field("weight_gsl", &TrainConfig::weight_gsl),
        double_field("weight_ls", &TrainConfig::weight_ls),
        double_field("weight_ssrc", &TrainConfig::weight_ssrc),
        double_field("weight_alignment", &TrainConfig::weight_alignment),
        double_field("margin_m1", &TrainConfig::margin_m1),
        double_field("margin_m2", &TrainConfig::margin_m2),
        double_field("triplet_margin", &TrainConfig::triplet_margin),
        string_field("metric", &TrainConfig::metric),
        string_field("mcnl_local_metric", &TrainConfig::mcnl_local_metric),
        double_field("epsilon_smooth", &TrainConfig::epsilon_smooth),
        string_field("soft_label_mode", &TrainConfig::soft_label_mode),
        string_field("ssrc_reduction", &TrainConfig::ssrc_reduction),
        string_field("encoder_channels", &TrainConfig::encoder_channels),
        size_field("last_stride", &TrainConfig::last_stride),
        size_field("regions", &TrainConfig::regions),
        size_field("d_local", &TrainConfig::d_local),
        size_field("heads", &TrainConfig::heads),
        size_field("ff_dim", &TrainConfig::ff_dim),
        size_field("encoder_layers", &TrainConfig::encoder_layers),
        size_field("decoder_layers", &TrainConfig::decoder_layers),
        bool_field("positional_encoding", &TrainConfig::positional_encoding),
        string_field("csbn_affine", &TrainConfig::csbn_affine),
        size_field("n_classes", &TrainConfig::n_classes),
        size_field("n_cameras", &TrainConfig::n_cameras),
    };
    return fields;
}

inline void set_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : config_fields())
        if (f.key == key) return f.set(cfg, value);
    throw ConfigError("config: unknown key '" + key + "'");
}

inline std::string get_value(const TrainConfig& cfg, const std::string& key) {
    for (const auto& f : config_fields())
        if (f.key == key) return f.get(cfg);
    throw ConfigError("config: unknown key '" + key + "'");
}

/// Canonical key=value text, one line per key in documented order.
inline std::string to_text(const TrainConfig& cfg) {
    std::string out;
    for (const auto& f : config_fields()) out += f.key + "=" + f.get(cfg) + "\n";
    return out;
}

/// Applies key=value lines on top of `base`. Blank lines and '#' comments
/// are skipped.
inline TrainConfig parse_config(const std::string& text, TrainConfig base = {}) {
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        set_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

inline TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

inline std::uint64_t config_hash(const TrainConfig& cfg) { return fnv1a64(to_text(cfg)); }

inline std::vector<std::size_t> parse_channels(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::size_t c = detail::parse_size("encoder_channels", item);
        if (c == 0) throw ConfigError("config: encoder_channels entries must be positive");
        out.push_back(c);
    }
    if (out.empty()) throw ConfigError("config: encoder_channels is empty");
    return out;
}

inline losses::AlignmentKind alignment_kind(const TrainConfig& cfg) {
    if (cfg.alignment == "mmd_linear") return losses::AlignmentKind::mmd_linear;
    if (cfg.alignment == "coral") return losses::AlignmentKind::coral;
    throw ConfigError("config: alignment must be none, mmd_linear or coral");
}

inline losses::Reduction ssrc_reduction(const TrainConfig& cfg) {
    if (cfg.ssrc_reduction == "sum") return losses::Reduction::sum;
    if (cfg.ssrc_reduction == "mean") return losses::Reduction::mean;
    throw ConfigError("config: ssrc_reduction must be sum or mean");
}

inline model::CsbnAffine csbn_affine(const TrainConfig& cfg) {
    if (cfg.csbn_affine == "shared_with_global") return model::CsbnAffine::shared_with_global;
    if (cfg.csbn_affine == "independent_frozen") return model::CsbnAffine::independent_frozen;
    throw ConfigError("config: csbn_affine must be shared_with_global or independent_frozen");
}

inline void validate(const TrainConfig& cfg) {
    if (cfg.epochs == 0) throw ConfigError("config: epochs must be positive");
    if (!(cfg.base_lr > 0)) throw ConfigError("config: base_lr must be positive");
    if (!(cfg.lr_decay_factor > 0 && cfg.lr_decay_factor <= 1)) throw ConfigError("config: lr_decay_factor must be in (0, 1]");
    if (cfg.lr_decay_every == 0) throw ConfigError("config: lr_decay_every must be positive");
    if (cfg.batch_size == 0 || cfg.instances_per_identity == 0) throw ConfigError("config: batch sizes must be positive");
    if (cfg.margin_m1 < 0 || cfg.margin_m2 < 0) throw ConfigError("config: margins must be non-negative");
    if (cfg.alignment != "none") alignment_kind(cfg);
    losses::parse_metric(cfg.metric);
    losses::parse_metric(cfg.mcnl_local_metric);
    losses::parse_soft_label_mode(cfg.soft_label_mode);
    ssrc_reduction(cfg);
    csbn_affine(cfg);
    parse_channels(cfg.encoder_channels);
    if (!(cfg.use_ce || cfg.use_triplet || cfg.use_cace || cfg.use_mcnl || cfg.use_gsl || cfg.use_ls || cfg.use_ssrc ||
          cfg.alignment != "none"))
        throw ConfigError("config: every loss term is disabled");
    if (cfg.use_mcnl_local && !cfg.use_mcnl) throw ConfigError("config: use_mcnl_local requires use_mcnl");
}

inline model::ModelConfig model_config(const TrainConfig& cfg) {
    model::ModelConfig m;
    m.encoder.channels = parse_channels(cfg.encoder_channels);
    m.encoder.last_stride = cfg.last_stride;
    m.n_cameras = cfg.n_cameras;
    m.n_classes = cfg.n_classes;
    m.local_branch = cfg.local_branch();
    m.transformer.d_model = cfg.d_local;
    m.transformer.heads = cfg.heads;
    m.transformer.ff_dim = cfg.ff_dim;
    m.transformer.encoder_layers = cfg.encoder_layers;
    m.transformer.decoder_layers = cfg.decoder_layers;
    m.transformer.num_queries = cfg.regions;
    m.transformer.positional_encoding = cfg.positional_encoding;
    m.csbn_affine = csbn_affine(cfg);
    return m;
}

/// Ablation presets: baseline, cace, cace_gsl, cace_gsl_lsl_nossrc, full,
/// plus baseline + distribution alignment (mmd, coral).
inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"baseline", "cace", "cace_gsl", "cace_gsl_lsl_nossrc", "full", "mmd", "coral"};
    return names;
}

inline void apply_preset(TrainConfig& cfg, const std::string& name) {
    auto set = [&](bool ce, bool tri, bool cace, bool mcnl, bool mcnl_local, bool gsl, bool ls, bool ssrc, const char* align) {
        cfg.use_ce = ce;
        cfg.use_triplet = tri;
        cfg.use_cace = cace;
        cfg.use_mcnl = mcnl;
        cfg.use_mcnl_local = mcnl_local;
        cfg.use_gsl = gsl;
        cfg.use_ls = ls;
        cfg.use_ssrc = ssrc;
        cfg.alignment = align;
    };
    if (name == "baseline") set(true, true, false, false, false, false, false, false, "none");
    else if (name == "cace") set(false, false, true, true, false, false, false, false, "none");
    else if (name == "cace_gsl") set(false, false, true, true, false, true, false, false, "none");
    else if (name == "cace_gsl_lsl_nossrc") set(false, false, true, true, true, true, true, false, "none");
    else if (name == "full") set(false, false, true, true, true, true, true, true, "none");
    else if (name == "mmd") set(true, true, false, false, false, false, false, false, "mmd_linear");
    else if (name == "coral") set(true, true, false, false, false, false, false, false, "coral");
    else throw ConfigError("unknown ablation preset '" + name + "'");
}

/// desk: small batch, 30 epochs, a faster schedule and a narrow local branch
/// for CPU runs.
/// paper: the full-scale defaults.
inline void apply_profile(TrainConfig& cfg, const std::string& name) {
    if (name == "paper") {
        const TrainConfig d;
        cfg.batch_size = d.batch_size;
        cfg.epochs = d.epochs;
        cfg.base_lr = d.base_lr;
        cfg.lr_decay_every = d.lr_decay_every;
        cfg.d_local = d.d_local;
        cfg.ff_dim = d.ff_dim;
        return;
    }
    if (name != "desk") throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
    cfg.batch_size = 32;
    cfg.epochs = 30;
    cfg.base_lr = 3e-3;
    cfg.lr_decay_every = 25;
    cfg.d_local = 64;
    cfg.ff_dim = 128;
}

/// base_lr * factor^floor(epoch / every)
inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    double lr = cfg.base_lr;
    for (std::size_t i = 0; i < epoch / cfg.lr_decay_every; ++i) lr *= cfg.lr_decay_factor;
    return lr;
}

}  // namespace crosscam::train
