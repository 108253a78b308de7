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
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "crosscam/dataset/loader.hpp"
#include "crosscam/dataset/manifest.hpp"
#include "crosscam/losses/metric.hpp"
#include "crosscam/model/model.hpp"

namespace crosscam::eval {

struct EmbeddingRow {
    long identity = 0;
    int camera = 0;
    dataset::Split split = dataset::Split::query;
    std::vector<double> v;

    bool operator==(const EmbeddingRow&) const = default;
};

struct EmbeddingTable {
    std::vector<EmbeddingRow> rows;

    std::size_t dim() const { return rows.empty() ? 0 : rows.front().v.size(); }
    EmbeddingTable filter(dataset::Split s) const {
        EmbeddingTable out;
        for (const auto& r : rows)
            if (r.split == s) out.rows.push_back(r);
        return out;
    }
    bool operator==(const EmbeddingTable&) const = default;
};

/// Inference features (after global BN) for every query and gallery row,
/// in manifest order.
inline EmbeddingTable extract_embeddings(model::Model& m, const dataset::DatasetManifest& manifest, const dataset::ImageStore& images,
                                         std::size_t batch_size = 64) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < manifest.rows.size(); ++i)
        if (manifest.rows[i].split != dataset::Split::train) rows.push_back(i);
    EmbeddingTable out;
    for (std::size_t start = 0; start < rows.size(); start += batch_size) {
        const std::size_t end = std::min(rows.size(), start + batch_size);
        std::vector<std::size_t> chunk(rows.begin() + static_cast<long>(start), rows.begin() + static_cast<long>(end));
        const Tensor e = model::embed(m, images.batch(chunk));
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            const auto& r = manifest.rows[chunk[i]];
            auto row = e.row(i);
            if (!std::all_of(row.begin(), row.end(), [](double x) { return std::isfinite(x); }))
                throw NumericError("extract_embeddings: non-finite embedding for " + r.image_ref);
            out.rows.push_back({r.identity, r.camera, r.split, std::vector<double>(row.begin(), row.end())});
        }
    }
    return out;
}

struct MetricsReport {
    double rank1 = 0, rank5 = 0, rank10 = 0, mAP = 0;
    std::vector<double> cmc;
    std::size_t n_query = 0;
    std::size_t n_gallery = 0;
    std::size_t n_dropped_queries = 0;

    bool empty() const { return cmc.empty() || n_query == 0; }
    bool operator==(const MetricsReport&) const = default;
};

inline constexpr std::size_t kMaxCmcRank = 50;

inline double distance(const std::vector<double>& a, const std::vector<double>& b, losses::Metric metric) {
    if (metric == losses::Metric::euclidean) {
        double s = 0;
        for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
        return std::sqrt(s);
    }
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    if (aa == 0.0 || bb == 0.0) throw NumericError("cmc_map: zero-norm embedding under cosine distance");
    return 1.0 - ab / std::sqrt(aa * bb);
}

/// Cross-camera retrieval metrics. Gallery items with the query's identity
/// and camera are skipped; distance ties keep gallery order. Queries without
/// any remaining true match are dropped and counted. The CMC curve has
/// min(50, n_gallery) entries.
inline MetricsReport cmc_map(const EmbeddingTable& query, const EmbeddingTable& gallery,
                             losses::Metric metric = losses::Metric::euclidean) {
    MetricsReport r;
    r.n_gallery = gallery.rows.size();
    if (gallery.rows.empty()) throw DataError("cmc_map: empty gallery");
    const std::size_t len = std::min(kMaxCmcRank, r.n_gallery);
    std::vector<double> cmc(len, 0.0);
    double ap_sum = 0;
    std::size_t used = 0;
    std::vector<std::size_t> order(r.n_gallery);
    std::vector<double> dist(r.n_gallery);
    for (const auto& q : query.rows) {
        for (std::size_t g = 0; g < r.n_gallery; ++g) {
            if (gallery.rows[g].v.size() != q.v.size()) throw ShapeError("cmc_map: embedding width mismatch");
            dist[g] = distance(q.v, gallery.rows[g].v, metric);
        }
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
        std::size_t rank = 0, hits = 0, first_hit = 0;
        double precision_sum = 0;
        for (std::size_t g : order) {
            const auto& item = gallery.rows[g];
            if (item.identity == q.identity && item.camera == q.camera) continue;
            ++rank;
            if (item.identity == q.identity) {
                ++hits;
                if (hits == 1) first_hit = rank;
                precision_sum += static_cast<double>(hits) / static_cast<double>(rank);
            }
        }
        if (hits == 0) {
            ++r.n_dropped_queries;
            continue;
        }
        ++used;
        ap_sum += precision_sum / static_cast<double>(hits);
        for (std::size_t k = first_hit - 1; k < len; ++k) cmc[k] += 1.0;
    }
    r.n_query = used;
    if (r.n_dropped_queries > 0) spdlog::warn("cmc_map: {} queries without a valid gallery match were dropped", r.n_dropped_queries);
    if (used == 0) return r;
    for (auto& c : cmc) c /= static_cast<double>(used);
    r.cmc = std::move(cmc);
    r.mAP = ap_sum / static_cast<double>(used);
    auto at = [&](std::size_t k) { return r.cmc[std::min(k, len) - 1]; };
    r.rank1 = at(1);
    r.rank5 = at(5);
    r.rank10 = at(10);
    return r;
}

inline nlohmann::json to_json(const MetricsReport& m) {
    return {{"rank1", m.rank1}, {"rank5", m.rank5},       {"rank10", m.rank10},       {"mAP", m.mAP},
            {"cmc", m.cmc},     {"n_query", m.n_query}, {"n_gallery", m.n_gallery}, {"n_dropped_queries", m.n_dropped_queries}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
    MetricsReport m;
    try {
        m.rank1 = j.at("rank1").get<double>();
        m.rank5 = j.at("rank5").get<double>();
        m.rank10 = j.at("rank10").get<double>();
        m.mAP = j.at("mAP").get<double>();
        m.cmc = j.at("cmc").get<std::vector<double>>();
        m.n_query = j.at("n_query").get<std::size_t>();
        m.n_gallery = j.at("n_gallery").get<std::size_t>();
        m.n_dropped_queries = j.at("n_dropped_queries").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("metrics JSON: ") + e.what());
    }
    return m;
}

inline MetricsReport load_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read metrics " + path.string());
    try {
        return metrics_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("metrics JSON " + path.string() + ": " + e.what());
    }
}

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& p) {
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    out.precision(17);
    return out;
}
}  // namespace detail

/// Writes <dir>/metrics.json and <dir>/cmc.csv.
inline void write_report(const MetricsReport& m, const std::filesystem::path& dir) {
    if (m.empty()) throw DataError("report: refusing to write empty metrics");
    {
        auto out = detail::open_out(dir / "metrics.json");
        out << to_json(m).dump(2) << '\n';
        if (!out) throw DataError("failed writing " + (dir / "metrics.json").string());
    }
    auto out = detail::open_out(dir / "cmc.csv");
    out << "k,accuracy\n";
    for (std::size_t k = 0; k < m.cmc.size(); ++k) out << k + 1 << ',' << m.cmc[k] << '\n';
    if (!out) throw DataError("failed writing " + (dir / "cmc.csv").string());
}

/// identity,camera,split,v0..v{d-1}
inline void write_embeddings_csv(const EmbeddingTable& t, const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << "identity,camera,split";
    for (std::size_t k = 0; k < t.dim(); ++k) out << ",v" << k;
    out << '\n';
    for (const auto& r : t.rows) {
        out << r.identity << ',' << r.camera << ',' << dataset::to_string(r.split);
        for (double x : r.v) out << ',' << x;
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace crosscam::eval
