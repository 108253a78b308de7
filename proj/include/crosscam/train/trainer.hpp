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
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "crosscam/dataset/loader.hpp"
#include "crosscam/dataset/manifest.hpp"
#include "crosscam/losses/losses.hpp"
#include "crosscam/model/model.hpp"
#include "crosscam/sampler/sampler.hpp"
#include "crosscam/train/checkpoint.hpp"
#include "crosscam/train/config.hpp"
#include "crosscam/train/optim.hpp"

namespace crosscam::train {

/// Loss breakdown of one optimizer step.
struct StepRecord {
    std::uint64_t step = 0;
    double total = 0.0;
    std::vector<std::pair<std::string, double>> terms;

    double term(const std::string& name) const {
        for (const auto& [n, v] : terms)
            if (n == name) return v;
        throw ConfigError("step record has no term " + name);
    }
    bool operator==(const StepRecord&) const = default;
};

/// Keys always present in a log line; absent terms are written as null.
inline const std::vector<std::string>& log_keys() {
    static const std::vector<std::string> keys{"L_CaCE", "L_GL_MCNL", "L_GSL", "L_LS", "L_specific", "L_share"};
    return keys;
}

inline nlohmann::json to_json(const StepRecord& r) {
    nlohmann::json j;
    j["step"] = r.step;
    for (const auto& k : log_keys()) j[k] = nullptr;
    for (const auto& [n, v] : r.terms) j[n] = v;
    j["total"] = r.total;
    return j;
}

/// The optimization driver: sampler -> forward -> losses -> Adam step.
class Trainer {
public:
    /// Fresh run. Fills cfg.n_classes and cfg.n_cameras from the train split.
    Trainer(TrainConfig cfg, const dataset::DatasetManifest& manifest, const dataset::ImageStore& images)
        : cfg_(std::move(cfg)), manifest_(manifest), images_(images), labels_(sampler::IntraCameraLabels::build(manifest)) {
        if (labels_.num_classes() == 0) throw DataError("train: manifest has no train rows");
        if (images_.size() != manifest_.rows.size()) throw DataError("train: image store does not match the manifest");
        cfg_.n_classes = labels_.num_classes();
        cfg_.n_cameras = static_cast<std::size_t>(manifest_.camera_count());
        validate(cfg_);
        model_ = model::Model::create(model_config(cfg_), cfg_.seed);
        opt_ = Adam{cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps, cfg_.weight_decay, 0, {}, {}};
        build_labels();
    }

    /// Continues from a checkpoint; the manifest must yield the same classes.
    Trainer(const Checkpoint& ck, const dataset::DatasetManifest& manifest, const dataset::ImageStore& images)
        : cfg_(ck.config()), manifest_(manifest), images_(images), labels_(sampler::IntraCameraLabels::build(manifest)) {
        TrainConfig from_data = cfg_;
        from_data.n_classes = labels_.num_classes();
        from_data.n_cameras = static_cast<std::size_t>(manifest_.camera_count());
        check_compatible(cfg_, from_data);
        validate(cfg_);
        model_ = restore_model(ck);
        opt_ = restore_optimizer(ck);
        epoch_ = ck.epoch;
        step_ = ck.step;
        build_labels();
    }

    const TrainConfig& config() const { return cfg_; }
    model::Model& model() { return model_; }
    const Adam& optimizer() const { return opt_; }
    std::uint64_t epoch() const { return epoch_; }
    std::uint64_t step_count() const { return step_; }
    const sampler::IntraCameraLabels& labels() const { return labels_; }

    /// Re-averages the inference norm moments over one pass of train batches.
    void recompute_norm_stats() {
        std::vector<Tensor> batches;
        for (const auto& b : epoch_batches(cfg_.epochs)) batches.push_back(images_.batch(b.indices));
        model::recompute_norm_stats(model_, batches);
    }

    Checkpoint checkpoint() { return capture(model_, cfg_, &opt_, epoch_, step_); }

    /// Batches of epoch `e`; depends only on the seed and e.
    std::vector<sampler::BatchPlan> epoch_batches(std::uint64_t e) const {
        return sampler::make_batches(manifest_, {cfg_.batch_size, cfg_.instances_per_identity}, hash_keys(cfg_.seed, {0xe90c, e}));
    }

    /// Forward pass and enabled losses on a batch, without an update.
    losses::LossValue compute_loss(const sampler::BatchPlan& batch) {
        const std::size_t n = batch.indices.size();
        std::vector<int> cams(n);
        std::vector<long> y(n);
        std::vector<std::size_t> targets(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t row = batch.indices[i];
            const int cls = labels_.row_class.at(row);
            if (cls < 0) throw DataError("train: batch row " + std::to_string(row) + " is not a train row");
            cams[i] = manifest_.rows[row].camera;
            y[i] = cls;
            targets[i] = static_cast<std::size_t>(cls);
        }
        const model::ForwardOptions fo{cfg_.needs_fakes(), cfg_.local_branch()};
        model::FeatureBundle fb = model::forward(model_, ag::constant(images_.batch(batch.indices)), cams, model::NormPhase::train, fo);

        const losses::Metric metric = losses::parse_metric(cfg_.metric);
        const std::size_t p = cfg_.regions;
        std::vector<losses::TermInput> parts;
        auto add = [&](const char* name, bool on, double w, auto&& fn) {
            losses::TermInput t{name, on, w, std::nullopt};
            if (on) t.value = fn();
            parts.push_back(std::move(t));
        };
        add("CE", cfg_.use_ce, cfg_.weight_ce, [&] { return losses::cross_entropy_loss(fb.logits, targets); });
        add("triplet", cfg_.use_triplet, cfg_.weight_triplet, [&] { return losses::triplet_loss(fb.f, y, cfg_.triplet_margin, metric); });
        add("CaCE", cfg_.use_cace, cfg_.weight_cace, [&] {
            std::vector<losses::SoftLabel> soft;
            soft.reserve(n);
            for (auto t : targets) soft.push_back(soft_labels_[t]);
            return losses::cace_loss(fb.logits, soft);
        });
        add("GL_MCNL", cfg_.use_mcnl, cfg_.weight_mcnl, [&] {
            ag::Var local = cfg_.use_mcnl_local ? ag::reshape(fb.w_glo, {n, p * cfg_.d_local}) : ag::Var();
            return losses::gl_mcnl_loss(fb.f, local, y, cams, {cfg_.margin_m1, cfg_.margin_m2}, metric,
                                        losses::parse_metric(cfg_.mcnl_local_metric));
        });
        add("GSL", cfg_.use_gsl, cfg_.weight_gsl, [&] { return losses::gsl_loss(fb.f_glo, as_constants(fb.fakes), y); });
        add("LS", cfg_.use_ls, cfg_.weight_ls, [&] { return losses::ls_loss(fb.w_glo, as_constants(fb.w_fakes)); });
        add("SSRC", cfg_.use_ssrc, cfg_.weight_ssrc, [&] {
            const auto red = ssrc_reduction(cfg_);
            return losses::ssrc_loss(losses::specific_loss(fb.w_glo, p, red),
                                     losses::shared_loss(fb.w_glo, p, model_.region_classifier.weight, model_.region_classifier.bias, red));
        });
        add("alignment", cfg_.alignment != "none", cfg_.weight_alignment,
            [&] { return losses::alignment_loss(fb.f, cams, alignment_kind(cfg_)); });
        losses::LossValue total = losses::total_loss(parts);
        if (!std::isfinite(total.item())) {
            std::string dump = "train: non-finite loss at step " + std::to_string(step_) + "; terms:";
            for (const auto& [k, v] : total.terms) dump += " " + k + "=" + std::to_string(v);
            dump += "; batch rows:";
            for (auto r : batch.indices) dump += " " + std::to_string(r);
            throw NumericError(dump);
        }
        return total;
    }

    /// One full optimization step on `batch` at the current epoch's rate.
    StepRecord train_step(const sampler::BatchPlan& batch) {
        losses::LossValue loss = compute_loss(batch);
        const auto params = model_.parameters();
        for (const auto& [name, v] : params) ag::Var(v).zero_grad();
        ag::backward(loss.value);
        opt_.step(params, lr_at(epoch_, cfg_));
        StepRecord rec{step_, loss.item(), loss.terms};
        ++step_;
        return rec;
    }

    /// Runs epoch `epoch()` and advances the counter.
    std::vector<StepRecord> run_epoch(const std::function<void(const StepRecord&)>& on_step = {}) {
        std::vector<StepRecord> out;
        for (const auto& b : epoch_batches(epoch_)) {
            out.push_back(train_step(b));
            if (on_step) on_step(out.back());
        }
        ++epoch_;
        return out;
    }

private:
    static std::vector<ag::Var> as_constants(const std::vector<Tensor>& ts) {
        std::vector<ag::Var> out;
        out.reserve(ts.size());
        for (const auto& t : ts) out.push_back(ag::constant(t));
        return out;
    }

    void build_labels() {
        const auto mode = losses::parse_soft_label_mode(cfg_.soft_label_mode);
        soft_labels_.clear();
        for (std::size_t c = 0; c < labels_.num_classes(); ++c)
            soft_labels_.push_back(losses::cace_labels(c, labels_.class_camera, cfg_.epsilon_smooth, mode));
    }

    TrainConfig cfg_;
    const dataset::DatasetManifest& manifest_;
    const dataset::ImageStore& images_;
    sampler::IntraCameraLabels labels_;
    model::Model model_;
    Adam opt_;
    std::uint64_t epoch_ = 0;
    std::uint64_t step_ = 0;
    std::vector<losses::SoftLabel> soft_labels_;
};

struct TrainOutputs {
    std::filesystem::path out_dir;  // receives checkpoint.bin and intermediate checkpoints
    std::filesystem::path log_path; // JSON lines, appended; empty = no log
};

/// Runs the remaining epochs, writing periodic and final checkpoints.
/// Returns the final checkpoint.
inline Checkpoint run_training(Trainer& t, const TrainOutputs& out) {
    std::ofstream log;
    if (!out.log_path.empty()) {
        if (out.log_path.has_parent_path()) std::filesystem::create_directories(out.log_path.parent_path());
        log.open(out.log_path, std::ios::app);
        if (!log) throw DataError("cannot open loss log " + out.log_path.string());
    }
    const auto& cfg = t.config();
    while (t.epoch() < cfg.epochs) {
        double sum = 0;
        std::size_t count = 0;
        t.run_epoch([&](const StepRecord& r) {
            if (log) log << to_json(r).dump() << '\n';
            sum += r.total;
            ++count;
        });
        spdlog::info("epoch {}/{}: {} steps, mean loss {:.4f}, lr {:.2e}", t.epoch(), cfg.epochs, count, sum / static_cast<double>(count),
                     lr_at(t.epoch() - 1, cfg));
        if (cfg.checkpoint_every > 0 && t.epoch() % cfg.checkpoint_every == 0 && t.epoch() < cfg.epochs && !out.out_dir.empty())
            checkpoint_save(out.out_dir / ("checkpoint_epoch" + std::to_string(t.epoch()) + ".bin"), t.checkpoint());
    }
    if (cfg.precise_norm) t.recompute_norm_stats();
    Checkpoint final_ck = t.checkpoint();
    if (!out.out_dir.empty()) checkpoint_save(out.out_dir / "checkpoint.bin", final_ck);
    return final_ck;
}

}  // namespace crosscam::train
