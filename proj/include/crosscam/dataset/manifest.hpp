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
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "crosscam/core/error.hpp"

namespace crosscam::dataset {

enum class Split { train, query, gallery };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::query: return "query";
        case Split::gallery: return "gallery";
    }
    return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "query") return Split::query;
    if (s == "gallery") return Split::gallery;
    return std::nullopt;
}

struct ManifestRow {
    std::string image_ref;
    long identity = 0;
    int camera = 0;
    Split split = Split::train;

    bool operator==(const ManifestRow&) const = default;
};

/// Rows plus the directory that relative image refs resolve against.
struct DatasetManifest {
    std::vector<ManifestRow> rows;
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const ManifestRow& row) const {
        std::filesystem::path p(row.image_ref);
        return p.is_absolute() ? p : base_dir / p;
    }

    /// 1 + largest camera id in the manifest.
    int camera_count() const {
        int c = 0;
        for (const auto& r : rows) c = std::max(c, r.camera + 1);
        return c;
    }

    std::vector<std::size_t> indices_of(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].split == s) out.push_back(i);
        return out;
    }

    /// Distinct cameras per identity among rows of split `s`.
    std::map<long, std::set<int>> cameras_per_identity(Split s) const {
        std::map<long, std::set<int>> out;
        for (const auto& r : rows)
            if (r.split == s) out[r.identity].insert(r.camera);
        return out;
    }
};

inline constexpr std::string_view kManifestHeader = "image_ref,identity,camera,split";

struct LoadOptions {
    bool check_files = true;
    /// When set to 0, the train split must satisfy the ICS-DS condition (no
    /// identity under two cameras).
    std::optional<double> declared_overlap_ratio;
};

/// Structural checks shared by load and save. Throws DataError naming the
/// offending row (1-based data row number, header excluded).
inline void validate_manifest(const DatasetManifest& m, const LoadOptions& opt = {}) {
    std::unordered_set<std::string> refs;
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        const auto& r = m.rows[i];
        const std::string where = "manifest row " + std::to_string(i + 1) + " (" + r.image_ref + ")";
        if (r.image_ref.empty()) throw DataError(where + ": empty image_ref");
        if (r.identity < 0) throw DataError(where + ": identity must be non-negative");
        if (r.camera < 0) throw DataError(where + ": camera must be non-negative, got " + std::to_string(r.camera));
        if (!refs.insert(r.image_ref).second) throw DataError(where + ": duplicate image_ref");
        if (opt.check_files && !std::filesystem::exists(m.resolve(r)))
            throw DataError(where + ": image file not found at " + m.resolve(r).string());
    }

    std::map<long, std::set<int>> test_cams;
    for (const auto& r : m.rows)
        if (r.split != Split::train) test_cams[r.identity].insert(r.camera);
    for (const auto& [id, cams] : test_cams)
        if (cams.size() < 2)
            throw DataError("query/gallery identity " + std::to_string(id) + " is captured by only one camera");

    if (opt.declared_overlap_ratio && *opt.declared_overlap_ratio == 0.0) {
        std::map<long, std::pair<int, std::size_t>> first_seen;  // identity -> (camera, row)
        for (std::size_t i = 0; i < m.rows.size(); ++i) {
            const auto& r = m.rows[i];
            if (r.split != Split::train) continue;
            auto [it, inserted] = first_seen.try_emplace(r.identity, r.camera, i);
            if (!inserted && it->second.first != r.camera)
                throw DataError("ICS-DS violation at manifest row " + std::to_string(i + 1) + ": identity " +
                                std::to_string(r.identity) + " appears under camera " + std::to_string(it->second.first) +
                                " (row " + std::to_string(it->second.second + 1) + ") and camera " +
                                std::to_string(r.camera) + " with overlap ratio 0");
        }
    }
}

namespace detail {
template <typename T>
bool parse_int(std::string_view s, T& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}
}  // namespace detail

inline DatasetManifest parse_manifest(std::istream& in, std::filesystem::path base_dir, const LoadOptions& opt = {}) {
    DatasetManifest m;
    m.base_dir = std::move(base_dir);
    std::string line;
    if (!std::getline(in, line)) throw DataError("manifest is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader) throw DataError("manifest header must be '" + std::string(kManifestHeader) + "'");
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row_no;
        std::vector<std::string_view> cols;
        std::string_view rest(line);
        for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos;) {
            cols.push_back(rest.substr(0, pos));
            rest.remove_prefix(pos + 1);
        }
        cols.push_back(rest);
        const std::string where = "manifest row " + std::to_string(row_no);
        if (cols.size() != 4) throw DataError(where + ": expected 4 columns, got " + std::to_string(cols.size()));
        ManifestRow r;
        r.image_ref = std::string(cols[0]);
        if (!detail::parse_int(cols[1], r.identity)) throw DataError(where + ": malformed identity '" + std::string(cols[1]) + "'");
        if (!detail::parse_int(cols[2], r.camera)) throw DataError(where + ": malformed camera '" + std::string(cols[2]) + "'");
        auto sp = parse_split(cols[3]);
        if (!sp) throw DataError(where + ": unknown split '" + std::string(cols[3]) + "'");
        r.split = *sp;
        m.rows.push_back(std::move(r));
    }
    validate_manifest(m, opt);
    return m;
}

/// Reads a manifest CSV; relative image refs resolve against its directory.
inline DatasetManifest load_manifest(const std::filesystem::path& path, const LoadOptions& opt = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open manifest " + path.string());
    return parse_manifest(in, path.parent_path(), opt);
}

inline void write_manifest(std::ostream& out, const DatasetManifest& m) {
    out << kManifestHeader << '\n';
    for (const auto& r : m.rows) {
        if (r.image_ref.find_first_of(",\n\r") != std::string::npos)
            throw DataError("image_ref may not contain commas or newlines: " + r.image_ref);
        out << r.image_ref << ',' << r.identity << ',' << r.camera << ',' << to_string(r.split) << '\n';
    }
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write manifest " + path.string());
    write_manifest(out, m);
    if (!out) throw DataError("failed writing manifest " + path.string());
}

}  // namespace crosscam::dataset
