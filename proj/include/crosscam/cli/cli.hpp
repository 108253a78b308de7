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

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "crosscam/cli/gradcheck_suite.hpp"
#include "crosscam/dataset/loader.hpp"
#include "crosscam/dataset/manifest.hpp"
#include "crosscam/dataset/split.hpp"
#include "crosscam/dataset/synth.hpp"
#include "crosscam/eval/eval.hpp"
#include "crosscam/train/trainer.hpp"

namespace crosscam::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline nlohmann::json describe(const CLI::App& app) {
    nlohmann::json j;
    j["name"] = app.get_name();
    j["description"] = app.get_description();
    j["options"] = nlohmann::json::array();
    for (const CLI::Option* o : app.get_options()) {
        if (o->get_name() == "--help" || o->get_name() == "--help-json") continue;
        nlohmann::json oj{{"name", o->get_name()}, {"description", o->get_description()}, {"required", o->get_required()},
                          {"takes_value", o->get_type_size() != 0}};
        if (!o->get_default_str().empty()) oj["default"] = o->get_default_str();
        j["options"].push_back(oj);
    }
    j["subcommands"] = nlohmann::json::array();
    for (const CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) j["subcommands"].push_back(describe(*sub));
    return j;
}

}  // namespace detail

/// Parses argv and runs one subcommand. Returns 0 on success, 2 on usage or
/// configuration errors, 1 on runtime failures; messages go to `err`.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"crosscam: cross-camera re-identification training and evaluation"};
    app.name("crosscam");
    app.require_subcommand(0, 1);
    bool help_json = false;
    app.add_flag("--help-json", help_json, "Print a machine-readable description of all commands and flags");

    // synth
    dataset::SynthConfig synth_cfg;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Render a synthetic multi-camera dataset and its manifest");
    synth->add_option("--ids", synth_cfg.n_identities, "Number of identities")->capture_default_str();
    synth->add_option("--cams", synth_cfg.n_cameras, "Number of cameras")->capture_default_str();
    synth->add_option("--per-camera", synth_cfg.images_per_identity_per_camera, "Images per identity per camera")->capture_default_str();
    synth->add_option("--height", synth_cfg.image_height, "Image height in pixels")->capture_default_str();
    synth->add_option("--width", synth_cfg.image_width, "Image width in pixels")->capture_default_str();
    synth->add_option("--parts", synth_cfg.n_parts, "Body color bands per identity")->capture_default_str();
    synth->add_option("--style", synth_cfg.style_strength, "Camera style strength (0 = no camera shift)")->capture_default_str();
    synth->add_option("--noise", synth_cfg.noise_std, "Pixel noise standard deviation")->capture_default_str();
    synth->add_option("--seed", synth_cfg.seed, "Random seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory (manifest.csv and images/)")->required();

    // split
    dataset::SplitConfig split_cfg;
    std::string split_in, split_out;
    std::optional<double> overlap;
    auto* split = app.add_subcommand("split", "Build a single-camera-training split from a manifest");
    split->add_option("--manifest", split_in, "Input manifest CSV")->required();
    split->add_option("--out", split_out, "Output manifest CSV")->required();
    split->add_option("--overlap", overlap, "Fraction of train identities seen by two cameras, in [0, 0.5]");
    split->add_option("--train-fraction", split_cfg.train_fraction, "Fraction of identities used for training")->capture_default_str();
    split->add_option("--seed", split_cfg.seed, "Random seed")->capture_default_str();

    // train
    std::string train_manifest, train_out, train_config, ablation, profile, resume, log_path;
    auto* trn = app.add_subcommand("train", "Train a model on the train rows of a manifest");
    trn->add_option("--manifest", train_manifest, "Manifest CSV with train rows")->required();
    trn->add_option("--out", train_out, "Output directory for checkpoints and the loss log")->required();
    trn->add_option("--config", train_config, "key=value config file");
    trn->add_option("--ablation", ablation, "Loss preset: baseline, cace, cace_gsl, cace_gsl_lsl_nossrc, full, mmd, coral");
    trn->add_option("--profile", profile, "Scale profile: desk or paper");
    trn->add_option("--resume", resume, "Continue from a checkpoint");
    trn->add_option("--log", log_path, "Loss log path (JSON lines, appended); default <out>/loss_log.jsonl");
    std::map<std::string, std::string> key_values;
    for (const auto& f : train::config_fields()) {
        if (f.key == "n_classes" || f.key == "n_cameras") continue;  // derived from the data
        auto* o = trn->add_option_function<std::string>("--" + f.key, [&key_values, k = f.key](const std::string& v) { key_values[k] = v; },
                                                        "Config key " + f.key + " (default " + f.get(train::TrainConfig{}) + ")");
        o->group("Config keys");
    }

    // eval
    std::string eval_ckpt, eval_manifest, eval_out, eval_metric = "euclidean", eval_dump;
    auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on the query/gallery rows of a manifest");
    evl->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    evl->add_option("--manifest", eval_manifest, "Manifest CSV with query and gallery rows")->required();
    evl->add_option("--out", eval_out, "Output directory for metrics.json and cmc.csv")->required();
    evl->add_option("--metric", eval_metric, "euclidean or cosine")->capture_default_str();
    evl->add_option("--embeddings", eval_dump, "Also write an embedding CSV to this path");

    // report
    std::string report_metrics, report_out;
    auto* rep = app.add_subcommand("report", "Print a metrics file and optionally rewrite its JSON/CSV reports");
    rep->add_option("--metrics", report_metrics, "metrics.json written by eval")->required();
    rep->add_option("--out", report_out, "Directory to write metrics.json and cmc.csv into");

    // gradcheck
    std::size_t gc_instances = 20;
    std::uint64_t gc_seed = 0;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every loss and forward op");
    gc->add_option("--instances", gc_instances, "Random instances per check")->capture_default_str();
    gc->add_option("--seed", gc_seed, "Random seed")->capture_default_str();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    if (help_json) {
        out << detail::describe(app).dump(2) << "\n";
        return kExitOk;
    }

    try {
        if (synth->parsed()) {
            synth_cfg.validate();
            const auto m = dataset::synth_generate(synth_cfg, synth_out);
            out << "wrote " << m.rows.size() << " images and " << (std::filesystem::path(synth_out) / "manifest.csv").string() << "\n";
        } else if (split->parsed()) {
            if (overlap) split_cfg.overlap_ratio = *overlap;
            split_cfg.validate();
            const auto in = dataset::load_manifest(split_in);
            auto m = dataset::sct_split(in, split_cfg);
            m.base_dir = in.base_dir;
            // image refs stay relative to the input manifest's directory
            const auto out_dir = std::filesystem::absolute(split_out).parent_path();
            std::filesystem::create_directories(out_dir);
            for (auto& r : m.rows) {
                const auto abs = std::filesystem::absolute(in.base_dir / r.image_ref);
                r.image_ref = std::filesystem::relative(abs, out_dir).generic_string();
            }
            dataset::save_manifest(split_out, m);
            dataset::validate_manifest(dataset::load_manifest(split_out), {true, split_cfg.overlap_ratio});
            out << "wrote " << split_out << "\n";
        } else if (trn->parsed()) {
            const auto manifest = dataset::load_manifest(train_manifest);
            const dataset::ImageStore images(manifest);
            std::optional<train::Trainer> trainer;
            if (!resume.empty()) {
                if (!train_config.empty() || !ablation.empty() || !profile.empty() || !key_values.empty())
                    throw ConfigError("--resume takes its configuration from the checkpoint; drop the other config flags");
                trainer.emplace(train::checkpoint_load(resume), manifest, images);
            } else {
                train::TrainConfig cfg;
                if (!train_config.empty()) cfg = train::load_config(train_config, cfg);
                if (!profile.empty()) train::apply_profile(cfg, profile);
                if (!ablation.empty()) train::apply_preset(cfg, ablation);
                for (const auto& [k, v] : key_values) train::set_value(cfg, k, v);
                trainer.emplace(cfg, manifest, images);
            }
            const std::filesystem::path out_dir(train_out);
            std::filesystem::create_directories(out_dir);
            {
                std::ofstream cfg_out(out_dir / "config.txt", std::ios::binary | std::ios::trunc);
                cfg_out << train::to_text(trainer->config());
            }
            train::run_training(*trainer, {out_dir, log_path.empty() ? out_dir / "loss_log.jsonl" : std::filesystem::path(log_path)});
            out << "wrote " << (out_dir / "checkpoint.bin").string() << "\n";
        } else if (evl->parsed()) {
            const auto metric = losses::parse_metric(eval_metric);
            const auto ck = train::checkpoint_load(eval_ckpt);
            auto model = train::restore_model(ck);
            const auto manifest = dataset::load_manifest(eval_manifest);
            const dataset::ImageStore images(manifest);
            const auto table = eval::extract_embeddings(model, manifest, images);
            const auto metrics = eval::cmc_map(table.filter(dataset::Split::query), table.filter(dataset::Split::gallery), metric);
            eval::write_report(metrics, eval_out);
            if (!eval_dump.empty()) eval::write_embeddings_csv(table, eval_dump);
            out << std::fixed << std::setprecision(4) << "rank1 " << metrics.rank1 << "  rank5 " << metrics.rank5 << "  rank10 "
                << metrics.rank10 << "  mAP " << metrics.mAP << "  (" << metrics.n_query << " queries, " << metrics.n_gallery
                << " gallery, " << metrics.n_dropped_queries << " dropped)\n";
        } else if (rep->parsed()) {
            const auto m = eval::load_metrics(report_metrics);
            out << std::fixed << std::setprecision(4) << "rank1   " << m.rank1 << "\nrank5   " << m.rank5 << "\nrank10  " << m.rank10
                << "\nmAP     " << m.mAP << "\nqueries " << m.n_query << " (dropped " << m.n_dropped_queries << ")\ngallery "
                << m.n_gallery << "\n";
            if (!report_out.empty()) eval::write_report(m, report_out);
        } else if (gc->parsed()) {
            const auto rows = run_gradcheck_suite(gc_instances, gc_seed);
            bool ok = true;
            out << std::left << std::setw(18) << "check" << std::setw(6) << "kind" << std::setw(11) << "instances" << std::setw(14)
                << "max_rel_err" << "result\n";
            for (const auto& r : rows) {
                out << std::left << std::setw(18) << r.name << std::setw(6) << r.kind << std::setw(11) << r.instances << std::setw(14)
                    << std::scientific << std::setprecision(2) << r.max_rel_error << std::defaultfloat
                    << (r.passed ? "PASS" : "FAIL") << (r.zero_gradient_instances ? " (zero gradient)" : "") << "\n";
                ok = ok && r.passed;
            }
            return ok ? kExitOk : kExitFailure;
        } else {
            out << app.help();
            return kExitUsage;
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace crosscam::cli
