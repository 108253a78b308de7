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
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "crosscam/core/error.hpp"
#include "crosscam/core/random.hpp"
#include "crosscam/dataset/manifest.hpp"
#include "crosscam/dataset/png_io.hpp"

namespace crosscam::dataset {

struct SynthConfig {
    int n_identities = 40;
    int n_cameras = 4;
    int images_per_identity_per_camera = 8;
    int image_height = 64;
    int image_width = 32;
    int n_parts = 6;
    double style_strength = 1.0;
    double noise_std = 0.03;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_identities < 2) throw ConfigError("synth: n_identities must be >= 2");
        if (n_cameras < 2) throw ConfigError("synth: n_cameras must be >= 2");
        if (images_per_identity_per_camera < 1) throw ConfigError("synth: images_per_identity_per_camera must be >= 1");
        if (image_height < 16 || image_width < 8) throw ConfigError("synth: image must be at least 16x8");
        if (n_parts < 1 || n_parts > image_height / 4) throw ConfigError("synth: n_parts out of range for image height");
        if (!(style_strength >= 0.0) || !std::isfinite(style_strength)) throw ConfigError("synth: style_strength must be >= 0");
        if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("synth: noise_std must be >= 0");
    }
};

using Rgb = std::array<double, 3>;

/// Latent appearance of one person: a color per horizontal body band.
struct IdentityLook {
    std::vector<Rgb> part_colors;
    double half_width = 0.0;  // body half width in pixels
};

/// Fixed rendering style of one camera at unit strength.
struct CameraStyle {
    std::array<Rgb, 3> color_mix{};  // added to the identity matrix
    Rgb color_offset{};
    double gradient_y = 0.0;
    double gradient_x = 0.0;
    Rgb background{};
};

namespace synth_keys {
inline constexpr std::uint64_t identity = 0x1d;
inline constexpr std::uint64_t camera = 0xca;
inline constexpr std::uint64_t image = 0x1a;
}  // namespace synth_keys

inline IdentityLook identity_look(const SynthConfig& cfg, long identity) {
    auto eng = keyed_engine(cfg.seed, {synth_keys::identity, static_cast<std::uint64_t>(identity)});
    IdentityLook look;
    look.part_colors.resize(static_cast<std::size_t>(cfg.n_parts));
    for (auto& c : look.part_colors)
        for (auto& v : c) v = 0.1 + 0.8 * uniform01(eng);
    look.half_width = cfg.image_width * (0.17 + 0.1 * uniform01(eng));
    return look;
}

inline CameraStyle camera_style(const SynthConfig& cfg, int camera) {
    auto eng = keyed_engine(cfg.seed, {synth_keys::camera, static_cast<std::uint64_t>(camera)});
    auto u = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(eng); };
    CameraStyle s;
    for (auto& row : s.color_mix)
        for (auto& v : row) v = u(-0.04, 0.04);
    for (auto& v : s.color_offset) v = u(-0.12, 0.12);
    s.gradient_y = u(-0.3, 0.3);
    s.gradient_x = u(-0.3, 0.3);
    for (auto& v : s.background) v = u(-0.4, 0.4);
    return s;
}

/// Renders image `index` of `identity` seen by `camera`. Pure function of
/// (cfg, identity, camera, index).
inline RgbImage render_image(const SynthConfig& cfg, long identity, int camera, int index) {
    const IdentityLook look = identity_look(cfg, identity);
    const CameraStyle style = camera_style(cfg, camera);
    const double s = cfg.style_strength;
    auto eng = keyed_engine(cfg.seed, {synth_keys::image, static_cast<std::uint64_t>(identity),
                                       static_cast<std::uint64_t>(camera), static_cast<std::uint64_t>(index)});
    const auto H = static_cast<std::size_t>(cfg.image_height);
    const auto W = static_cast<std::size_t>(cfg.image_width);

    // Pose and appearance jitter shared by all pixels of this image.
    const double shift_x = std::round(4.0 * uniform01(eng) - 2.0);
    const double shift_y = std::round(4.0 * uniform01(eng) - 2.0);
    const double gain = 1.0 + 0.08 * standard_normal(eng);
    std::vector<Rgb> parts = look.part_colors;
    for (auto& c : parts)
        for (auto& v : c) v = std::clamp(gain * v + 0.03 * standard_normal(eng), 0.0, 1.0);

    const double top = 0.06 * H + shift_y, bottom = 0.94 * H + shift_y;
    const double center = 0.5 * W + shift_x;
    const double band = (bottom - top) / cfg.n_parts;

    RgbImage img{H, W, std::vector<std::uint8_t>(H * W * 3)};
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const double py = y + 0.5, px = x + 0.5;
            Rgb base;
            bool on_body = false;
            if (py >= top && py < bottom) {
                const auto part = std::min<std::size_t>(static_cast<std::size_t>((py - top) / band), parts.size() - 1);
                const double hw = part == 0 ? 0.6 * look.half_width : look.half_width;
                if (std::abs(px - center) < hw) {
                    base = parts[part];
                    on_body = true;
                }
            }
            if (!on_body)
                for (std::size_t ch = 0; ch < 3; ++ch) base[ch] = 0.5 + s * style.background[ch];

            const double illum = 1.0 + s * (style.gradient_y * (py / H - 0.5) + style.gradient_x * (px / W - 0.5));
            for (std::size_t ch = 0; ch < 3; ++ch) {
                double v = base[ch] + s * style.color_offset[ch];
                for (std::size_t k = 0; k < 3; ++k) v += s * style.color_mix[ch][k] * base[k];
                v = v * illum + cfg.noise_std * standard_normal(eng);
                img.at(y, x, ch) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
        }
    return img;
}

inline std::string synth_image_name(long identity, int camera, int index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "id%05ld_c%02d_%03d.png", identity, camera, index);
    return buf;
}

/// Renders the full dataset into out_dir/images and writes
/// out_dir/manifest.csv. Every row is a train-pool row; sct_split assigns
/// query/gallery.
inline DatasetManifest synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    DatasetManifest m;
    m.base_dir = out_dir;
    for (long id = 0; id < cfg.n_identities; ++id)
        for (int cam = 0; cam < cfg.n_cameras; ++cam)
            for (int k = 0; k < cfg.images_per_identity_per_camera; ++k) {
                const std::string ref = "images/" + synth_image_name(id, cam, k);
                write_png(out_dir / ref, render_image(cfg, id, cam, k));
                m.rows.push_back({ref, id, cam, Split::train});
            }
    save_manifest(out_dir / "manifest.csv", m);
    return m;
}

}  // namespace crosscam::dataset
