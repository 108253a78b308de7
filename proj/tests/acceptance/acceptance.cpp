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


// Acceptance suite: one PASS/FAIL line per criterion, then a summary.
// Exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "crosscam/cli/gradcheck_suite.hpp"
#include "crosscam/eval/eval.hpp"
#include "crosscam/train/trainer.hpp"
#include "oracles.hpp"
#include "train_fixture.hpp"

namespace {

using namespace crosscam;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1. gradient suite

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    const auto rows = cli::run_gradcheck_suite(20);
    const double secs = seconds_since(t0);
    Outcome o{secs <= 120.0, ""};
    double worst = 0;
    for (const auto& r : rows) {
        worst = std::max(worst, r.max_rel_error);
        if (!r.passed) {
            o.pass = false;
            o.detail += r.name + " failed (rel " + fmt("%.2e", r.max_rel_error) + ", " + std::to_string(r.zero_gradient_instances) +
                        " zero-gradient instances); ";
        }
    }
    o.detail += std::to_string(rows.size()) + " cases x 20 instances, worst rel error " + fmt("%.2e", worst) + ", " + fmt("%.1f s", secs);
    return o;
}

// 2. stop-gradient audit

struct Batch {
    Tensor images;
    std::vector<int> cams;
    std::vector<long> y;
};

Batch first_batch(train::Trainer& t, const testing::TinyData& d, std::uint64_t epoch) {
    const auto plan = t.epoch_batches(epoch).front();
    Batch b{d.images->batch(plan.indices), {}, {}};
    for (auto r : plan.indices) {
        b.cams.push_back(d.manifest.rows[r].camera);
        b.y.push_back(t.labels().row_class.at(r));
    }
    return b;
}

std::vector<ag::Var> consts(const std::vector<Tensor>& ts) {
    std::vector<ag::Var> v;
    for (const auto& x : ts) v.push_back(ag::constant(x));
    return v;
}

double abs_sum(const Tensor& t) {
    double s = 0;
    for (double x : t.vec()) s += std::abs(x);
    return s;
}

void zero_grads(model::Model& m) {
    for (auto& [name, v] : m.parameters()) ag::Var(v).zero_grad();
    for (auto* v : {&m.camera_norm.gamma, &m.camera_norm.beta, &m.map_camera_norm.gamma, &m.map_camera_norm.beta})
        if (v->requires_grad()) v->zero_grad();
}

double grad_mass(const model::Model& m, const std::string& prefix) {
    double s = 0;
    for (const auto& [name, v] : m.parameters())
        if (name.rfind(prefix, 0) == 0 && !v.grad().empty()) s += abs_sum(v.grad());
    return s;
}

losses::LossValue term_loss(const std::string& term, model::Model& m, const model::FeatureBundle& fb, const Batch& b,
                            const train::TrainConfig& c, const sampler::IntraCameraLabels& labels) {
    const std::size_t n = b.y.size(), p = c.regions;
    if (term == "GSL") return losses::gsl_loss(fb.f_glo, consts(fb.fakes), b.y);
    if (term == "LS") return losses::ls_loss(fb.w_glo, consts(fb.w_fakes));
    if (term == "SSRC")
        return losses::ssrc_loss(losses::specific_loss(fb.w_glo, p),
                                 losses::shared_loss(fb.w_glo, p, m.region_classifier.weight, m.region_classifier.bias));
    if (term == "GL_MCNL")
        return losses::gl_mcnl_loss(fb.f, ag::reshape(fb.w_glo, {n, p * c.d_local}), b.y, b.cams, {}, losses::Metric::euclidean,
                                    losses::Metric::cosine);
    std::vector<losses::SoftLabel> soft;
    for (auto cls : b.y) soft.push_back(losses::cace_labels(static_cast<std::size_t>(cls), labels.class_camera, 0.1));
    return losses::cace_loss(fb.logits, soft);
}

// Relative error of the autograd gradient of `param` against central
// differences of `loss`, in the norm used by the gradient suite.
double fd_rel_error(ag::Var param, const Tensor& analytic, const std::function<double()>& loss) {
    Tensor& w = param.mutable_value();
    double d2 = 0, a2 = 0, n2 = 0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < w.numel(); ++i) {
        const double keep = w[i];
        w[i] = keep + h;
        const double up = loss();
        w[i] = keep - h;
        const double down = loss();
        w[i] = keep;
        const double num = (up - down) / (2 * h);
        d2 += (analytic[i] - num) * (analytic[i] - num);
        a2 += analytic[i] * analytic[i];
        n2 += num * num;
    }
    return std::sqrt(d2) / std::max(std::sqrt(std::max(a2, n2)), 1e-6);
}

Outcome stop_gradient_audit() {
    Outcome o{true, ""};
    auto fail = [&](const std::string& why) {
        o.pass = false;
        o.detail += why + "; ";
    };
    testing::TinyData d;
    const std::vector<std::string> terms{"GSL", "LS", "SSRC", "GL_MCNL", "CaCE"};

    // Frozen camera affine: every detached branch is the only consumer of the
    // CSBN parameters, so any gradient reaching them leaked through a fake.
    std::size_t checks = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        train::TrainConfig c = testing::tiny_config();
        c.csbn_affine = "independent_frozen";
        c.seed = seed;
        train::Trainer t(c, d.manifest, *d.images);
        auto& m = t.model();
        const Batch b = first_batch(t, d, seed);
        // warm-up so every camera in the batch has statistics
        model::forward(m, ag::constant(b.images), b.cams, model::NormPhase::train);
        for (const auto& term : terms) {
            const auto fb = model::forward(m, ag::constant(b.images), b.cams, model::NormPhase::train);
            zero_grads(m);
            ag::backward(term_loss(term, m, fb, b, c, t.labels()).value);
            double csbn = 0;
            for (const auto* v : {&m.camera_norm.gamma, &m.camera_norm.beta, &m.map_camera_norm.gamma, &m.map_camera_norm.beta})
                if (!v->grad().empty()) csbn += abs_sum(v->grad());
            if (csbn != 0.0) fail(term + ": camera affine received gradient " + fmt("%.3e", csbn));
            if (!(grad_mass(m, "encoder.") > 0.0)) fail(term + ": zero online encoder gradient, seed " + std::to_string(seed));
            const bool local = term == "LS" || term == "SSRC" || term == "GL_MCNL";
            if (local && !(grad_mass(m, "transformer.") > 0.0)) fail(term + ": zero online transformer gradient");
            ++checks;
        }
    }

    // Shared affine: the fakes are functions of the global norm parameters.
    // Autograd must agree with finite differences taken with the fakes held
    // fixed, which is only true when no gradient flows into them.
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        train::TrainConfig c = testing::tiny_config();
        c.seed = 10 + seed;
        train::Trainer t(c, d.manifest, *d.images);
        auto& m = t.model();
        const Batch b = first_batch(t, d, seed);
        model::forward(m, ag::constant(b.images), b.cams, model::NormPhase::train);
        // perturb the affine away from its identity start
        for (auto* v : {&m.global_norm.gamma, &m.global_norm.beta, &m.map_norm.gamma, &m.map_norm.beta}) {
            Tensor noise = testing::random_tensor(v->shape(), 100 + seed, 0.3);
            Tensor& w = v->mutable_value();
            for (std::size_t i = 0; i < w.numel(); ++i) w[i] += noise[i];
        }
        auto online = [&] {
            ag::NoGradGuard g;
            return model::forward(m, ag::constant(b.images), b.cams, model::NormPhase::train, {false, true});
        };
        struct Probe {
            const char* term;
            ag::Var* param;
        };
        for (const Probe pr : {Probe{"GSL", &m.global_norm.gamma}, Probe{"GSL", &m.global_norm.beta}, Probe{"LS", &m.map_norm.gamma},
                               Probe{"LS", &m.map_norm.beta}}) {
            const bool gsl = std::string(pr.term) == "GSL";
            const auto fb = model::forward(m, ag::constant(b.images), b.cams, model::NormPhase::train);
            const std::vector<Tensor> fakes = fb.fakes, w_fakes = fb.w_fakes;
            zero_grads(m);
            ag::backward(gsl ? losses::gsl_loss(fb.f_glo, consts(fakes), b.y).value : losses::ls_loss(fb.w_glo, consts(w_fakes)).value);
            const Tensor analytic = pr.param->grad();
            if (!(abs_sum(analytic) > 0.0)) fail(std::string(pr.term) + ": zero gradient on the online affine");
            const double rel = fd_rel_error(*pr.param, analytic, [&] {
                const auto f = online();
                return gsl ? losses::gsl_loss(f.f_glo, consts(fakes), b.y).item() : losses::ls_loss(f.w_glo, consts(w_fakes)).item();
            });
            worst = std::max(worst, rel);
            if (rel > cli::kGradTolerance) fail(std::string(pr.term) + ": fixed-fake finite differences disagree, rel " + fmt("%.2e", rel));
        }
    }

    // A fake that still carries history is refused.
    {
        ag::Var src = ag::parameter(testing::random_tensor({4, 3}, 1));
        bool gsl_refused = false, ls_refused = false;
        try {
            losses::gsl_loss(ag::constant(testing::random_tensor({4, 3}, 2)), {ag::scale(src, 2.0)}, {0, 0, 1, 1});
        } catch (const ContractError&) {
            gsl_refused = true;
        }
        try {
            losses::ls_loss(ag::constant(testing::random_tensor({4, 3}, 2)), {ag::scale(src, 2.0)});
        } catch (const ContractError&) {
            ls_refused = true;
        }
        if (!gsl_refused || !ls_refused) fail("a gradient-carrying fake was accepted");
    }
    o.detail += std::to_string(checks) + " frozen-affine term checks exactly zero, fixed-fake FD worst rel " + fmt("%.2e", worst);
    return o;
}

// 3. CSBN normalization identity

Outcome csbn_identity() {
    double worst_mu = 0, worst_var = 0;
    auto eng = keyed_engine(3, {0xc5b});
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t rows = 2 + uniform_index(eng, 30), dims = 1 + uniform_index(eng, 64);
        const double scale = 1.0 + 4.0 * uniform01(eng), shift = 10.0 * (uniform01(eng) - 0.5);
        const std::size_t cams = 2 + uniform_index(eng, 3);
        const int cam = static_cast<int>(uniform_index(eng, cams));
        auto s = model::CameraNormState::create(cams, dims, ag::constant(Tensor({dims}, 1.0)), ag::constant(Tensor({dims}, 0.0)));
        // Columns are standardized and rescaled so every batch variance is
        // scale^2 >= 1; the eps term then moves the variance by under 1e-5.
        Tensor x = testing::random_tensor({rows, dims}, static_cast<std::uint64_t>(inst));
        const auto raw = ag::channel_moments(x);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < dims; ++c) x.at(r, c) = shift + scale * (x.at(r, c) - raw.mean[c]) / std::sqrt(raw.var[c]);
        const auto m = model::csbn_update(s, x, cam);
        const Tensor y = model::csbn_augment(s, x, cam, model::AugmentMode::batch_stats, &m);
        for (std::size_t c = 0; c < dims; ++c) {
            double mu = 0, var = 0;
            for (std::size_t r = 0; r < rows; ++r) mu += y.at(r, c);
            mu /= static_cast<double>(rows);
            for (std::size_t r = 0; r < rows; ++r) var += (y.at(r, c) - mu) * (y.at(r, c) - mu);
            var /= static_cast<double>(rows);
            worst_mu = std::max(worst_mu, std::abs(mu));
            worst_var = std::max(worst_var, std::abs(var - 1.0));
        }
    }
    return {worst_mu <= 1e-6 && worst_var <= 1e-5,
            "200 instances, max |mu| " + fmt("%.2e", worst_mu) + ", max |var-1| " + fmt("%.2e", worst_var)};
}

// 4. evaluator oracle

eval::EmbeddingTable random_table(std::mt19937_64& eng, std::size_t n, dataset::Split split, bool grid) {
    std::uniform_int_distribution<long> id(0, 5);
    std::uniform_int_distribution<int> cam(0, 2), cell(0, 2);
    std::normal_distribution<double> nd;
    eval::EmbeddingTable t;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(4);
        for (auto& x : v) x = grid ? static_cast<double>(cell(eng)) + 1.0 : nd(eng);
        t.rows.push_back({id(eng), cam(eng), split, v});
    }
    return t;
}

std::vector<oracle::RetrievalItem> items(const eval::EmbeddingTable& t) {
    std::vector<oracle::RetrievalItem> out;
    for (const auto& r : t.rows) out.push_back({r.identity, r.camera, r.v});
    return out;
}

Outcome evaluator_oracle() {
    std::mt19937_64 eng(2024);
    std::size_t mismatches = 0, compared = 0, with_ties = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const bool grid = inst % 2 == 1;  // integer coordinates force distance ties
        const auto metric = inst % 3 == 0 ? losses::Metric::cosine : losses::Metric::euclidean;
        const std::size_t nq = 1 + std::uniform_int_distribution<std::size_t>(0, 19)(eng);
        const std::size_t ng = 1 + std::uniform_int_distribution<std::size_t>(0, 49)(eng);
        const auto q = random_table(eng, nq, dataset::Split::query, grid);
        const auto g = random_table(eng, ng, dataset::Split::gallery, grid);
        const auto want = oracle::cmc_map(items(q), items(g), metric == losses::Metric::cosine);
        const auto got = eval::cmc_map(q, g, metric);
        with_ties += grid;
        if (got.cmc != want.cmc || got.mAP != want.mAP || got.n_query != want.n_query || got.n_dropped_queries != want.n_dropped ||
            (!want.cmc.empty() && got.rank1 != want.cmc[0]))
            ++mismatches;
        ++compared;
    }
    return {mismatches == 0, std::to_string(compared) + " instances (" + std::to_string(with_ties) + " with tied distances), " +
                                 std::to_string(mismatches) + " mismatches"};
}

// 5. loss closed forms

Outcome closed_forms() {
    using ag::constant;
    double worst = 0;
    auto check = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
    check(losses::specific_loss(constant(Tensor::from_rows({{1, 2}, {1, 2}})), 2).item(), 2 * std::log(2.0));
    check(losses::specific_loss(constant(Tensor::from_rows({{1, 0}, {0, 3}})), 2).item(), 2 * std::log(1 + std::exp(-1.0)));
    check(losses::specific_loss(constant(Tensor::from_rows({{1, 1}, {-2, -2}})), 2).item(), 2 * std::log(1 + std::exp(-2.0)));
    check(losses::shared_loss(constant(testing::random_tensor({2, 3}, 1)), 2, constant(Tensor({3, 2})), constant(Tensor({2}))).item(),
          2 * std::log(2.0));
    check(losses::shared_loss(constant(testing::random_tensor({12, 3}, 1)), 12, constant(Tensor({3, 12})), constant(Tensor({12}))).item(),
          12 * std::log(12.0));
    Tensor w({3, 3});
    for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = 1000.0;
    check(losses::shared_loss(constant(Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}})), 3, constant(w), constant(Tensor({3}))).item(),
          0.0);

    double worst_sum = 0;
    auto eng = keyed_engine(5, {0xcace});
    for (int t = 0; t < 500; ++t) {
        const std::size_t k = 2 + uniform_index(eng, 30);
        std::vector<int> cams(k);
        for (auto& c : cams) c = static_cast<int>(uniform_index(eng, 6));
        const auto l = losses::cace_labels(uniform_index(eng, k), cams, 0.49 * uniform01(eng));
        worst_sum = std::max(worst_sum, std::abs(std::accumulate(l.p.begin(), l.p.end(), 0.0) - 1.0));
    }
    const auto aw = losses::cace_labels(0, {0, 0, 1, 1}, 0.1, losses::SoftLabelMode::as_written);
    const std::vector<double> want{0.9, 0.1, -0.1, -0.1};
    double worst_aw = 0;
    for (std::size_t i = 0; i < 4; ++i) worst_aw = std::max(worst_aw, std::abs(aw.p.at(i) - want[i]));
    return {worst <= 1e-10 && worst_sum <= 1e-9 && worst_aw <= 1e-12 && aw.p.size() == 4,
            "closed forms max error " + fmt("%.2e", worst) + ", smoothing |sum-1| max " + fmt("%.2e", worst_sum) + " over 500 draws, as_written error " +
                fmt("%.2e", worst_aw)};
}

// 6-10. end-to-end runs on the synthetic benchmark

class Benchmark {
public:
    Benchmark() {
        dataset::SynthConfig sc;
        sc.n_identities = 40;
        sc.n_cameras = 4;
        sc.style_strength = 1.5;
        sc.images_per_identity_per_camera = 16;
        pool_ = dataset::synth_generate(sc, dir_.path());
    }

    struct Split {
        dataset::DatasetManifest manifest;
        std::unique_ptr<dataset::ImageStore> images;
    };

    const Split& split(double overlap) {
        auto it = splits_.find(overlap);
        if (it == splits_.end()) {
            Split s;
            s.manifest = dataset::sct_split(pool_, {overlap, 0.5, 0});
            s.images = std::make_unique<dataset::ImageStore>(s.manifest);
            it = splits_.emplace(overlap, std::move(s)).first;
        }
        return it->second;
    }

    static train::TrainConfig config(const std::string& preset, std::uint64_t seed) {
        train::TrainConfig c;
        train::apply_profile(c, "desk");
        train::apply_preset(c, preset);
        c.seed = seed;
        return c;
    }

    static eval::MetricsReport evaluate(model::Model& m, const Split& s) {
        const auto table = eval::extract_embeddings(m, s.manifest, *s.images);
        return eval::cmc_map(table.filter(dataset::Split::query), table.filter(dataset::Split::gallery), losses::Metric::euclidean);
    }

    eval::MetricsReport run(const std::string& preset, std::uint64_t seed, double overlap = 0.0,
                            const std::function<void(train::TrainConfig&)>& tweak = {}) {
        const auto key = std::make_tuple(preset, seed, overlap);
        if (!tweak) {
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        const Split& s = split(overlap);
        train::TrainConfig c = config(preset, seed);
        if (tweak) tweak(c);
        const auto t0 = Clock::now();
        train::Trainer t(c, s.manifest, *s.images);
        train::run_training(t, {});
        const auto r = evaluate(t.model(), s);
        std::printf("  %-9s seed %llu overlap %.2f%s: rank1 %.4f  mAP %.4f  (%.1f s)\n", preset.c_str(), static_cast<unsigned long long>(seed),
                    overlap, tweak ? " (custom)" : "", r.rank1, r.mAP, seconds_since(t0));
        std::fflush(stdout);
        if (!tweak) cache_[key] = r;
        return r;
    }

    double median_rank1(const std::string& preset, double overlap = 0.0) {
        std::vector<double> v;
        for (std::uint64_t seed : {1, 2, 3}) v.push_back(run(preset, seed, overlap).rank1);
        return median(v);
    }

private:
    testing::TempDir dir_{"acceptance"};
    dataset::DatasetManifest pool_;
    std::map<double, Split> splits_;
    std::map<std::tuple<std::string, std::uint64_t, double>, eval::MetricsReport> cache_;
};

std::string pts(double x) { return fmt("%.1f", 100.0 * x); }

Outcome ablation(Benchmark& b) {
    const auto t0 = Clock::now();
    const std::vector<std::string> order{"baseline", "cace", "cace_gsl", "full"};
    std::vector<double> med;
    for (const auto& p : order) med.push_back(b.median_rank1(p));
    const double secs = seconds_since(t0);
    Outcome o{true, ""};
    for (std::size_t i = 0; i < order.size(); ++i) o.detail += order[i] + " " + pts(med[i]) + ", ";
    if (!(med[3] >= med[0] + 0.10)) {
        o.pass = false;
        o.detail += "full < baseline + 10; ";
    }
    for (std::size_t i = 0; i + 1 < order.size(); ++i)
        if (!(med[i + 1] >= med[i] - 0.02)) {
            o.pass = false;
            o.detail += order[i + 1] + " below " + order[i] + " by " + pts(med[i] - med[i + 1]) + " points; ";
        }
    if (secs > 900.0) o.pass = false;
    o.detail += "median rank-1 over seeds 1-3, " + fmt("%.0f s", secs);
    return o;
}

Outcome alignment(Benchmark& b) {
    const double full = b.median_rank1("full"), mmd = b.median_rank1("mmd"), coral = b.median_rank1("coral");
    return {full >= mmd && full >= coral, "full " + pts(full) + ", mmd " + pts(mmd) + ", coral " + pts(coral)};
}

Outcome overlap(Benchmark& b) {
    std::vector<double> med;
    std::string detail;
    for (double ov : {0.0, 0.25, 0.5}) {
        med.push_back(b.median_rank1("full", ov));
        detail += "overlap " + fmt("%.2f", ov) + " " + pts(med.back()) + ", ";
    }
    const double spread = *std::max_element(med.begin(), med.end()) - *std::min_element(med.begin(), med.end());
    return {spread <= 0.08, detail + "spread " + pts(spread) + " points"};
}

Outcome region_counts(Benchmark& b) {
    Outcome o{true, ""};
    for (std::size_t p : {2, 4, 12, 16}) {
        const auto r = b.run("full", 1, 0.0, [p](train::TrainConfig& c) {
            c.regions = p;
            c.epochs = 3;
        });
        const bool ok = std::isfinite(r.rank1) && std::isfinite(r.mAP) && r.n_query > 0;
        o.pass = o.pass && ok;
        o.detail += "P=" + std::to_string(p) + " rank1 " + pts(r.rank1) + " mAP " + pts(r.mAP) + (ok ? "" : " (no metrics)") + ", ";
    }
    o.detail += "3 epochs each";
    return o;
}

Outcome determinism(Benchmark& b) {
    const auto& s = b.split(0.0);
    train::TrainConfig c = Benchmark::config("full", 7);
    c.epochs = 2;
    Outcome o{true, ""};

    auto losses_of = [&](train::Trainer& t, std::size_t steps) {
        std::vector<train::StepRecord> out;
        std::uint64_t e = 0;
        while (out.size() < steps) {
            for (const auto& bp : t.epoch_batches(e))
                if (out.size() < steps) out.push_back(t.train_step(bp));
            ++e;
        }
        return out;
    };
    train::Trainer a(c, s.manifest, *s.images), a2(c, s.manifest, *s.images);
    const auto la = losses_of(a, 12), lb = losses_of(a2, 12);
    bool same = true;
    for (std::size_t i = 0; i < la.size(); ++i) same = same && la[i].total == lb[i].total && la[i].terms == lb[i].terms;
    if (!same) {
        o.pass = false;
        o.detail += "loss sequences differ; ";
    }

    // uninterrupted two epochs vs one epoch, save, load, resume
    train::Trainer full(c, s.manifest, *s.images);
    const auto ck_full = train::run_training(full, {});
    testing::TempDir dir("resume");
    train::TrainConfig c1 = c;
    train::Trainer first(c1, s.manifest, *s.images);
    first.run_epoch();
    train::checkpoint_save(dir.path() / "epoch1.bin", first.checkpoint());
    train::Trainer resumed(train::checkpoint_load(dir.path() / "epoch1.bin"), s.manifest, *s.images);
    const auto ck_resumed = train::run_training(resumed, {dir.path(), {}});
    const bool bitwise = train::serialize(ck_full) == train::serialize(ck_resumed) &&
                         testing::read_bytes(dir.path() / "checkpoint.bin") == train::serialize(ck_full);
    if (!bitwise) {
        o.pass = false;
        o.detail += "resumed checkpoint differs; ";
    }
    o.detail += "12 steps bitwise equal: " + std::string(same ? "yes" : "no") + ", resume after epoch 1 of 2 byte-identical: " +
                (bitwise ? "yes" : "no") + " (" + std::to_string(ck_full.step) + " steps)";
    return o;
}

}  // namespace

// Optional arguments select criteria by number; default runs all.
int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::err);
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    Benchmark bench;
    const std::vector<Criterion> criteria{
        {"gradient suite", gradient_suite},
        {"stop-gradient audit", stop_gradient_audit},
        {"csbn normalization identity", csbn_identity},
        {"evaluator oracle", evaluator_oracle},
        {"loss closed forms", closed_forms},
        {"synthetic ablation ordering", [&] { return ablation(bench); }},
        {"distribution alignment comparison", [&] { return alignment(bench); }},
        {"overlap robustness", [&] { return overlap(bench); }},
        {"region count harness", [&] { return region_counts(bench); }},
        {"determinism and persistence", [&] { return determinism(bench); }},
    };
    std::vector<bool> selected(criteria.size(), argc == 1);
    for (int a = 1; a < argc; ++a) {
        const int k = std::atoi(argv[a]);
        if (k < 1 || k > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "usage: %s [criterion number 1-%zu ...]\n", argv[0], criteria.size());
            return 2;
        }
        selected[static_cast<std::size_t>(k - 1)] = true;
    }
    std::vector<std::pair<bool, std::string>> lines;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected[i]) continue;
        std::printf("[%zu] %s\n", i + 1, criteria[i].name);
        std::fflush(stdout);
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("  %s\n", o.detail.c_str());
        std::fflush(stdout);
        lines.emplace_back(o.pass, std::to_string(i + 1) + ". " + criteria[i].name + ": " + o.detail);
    }
    std::printf("\n");
    int failed = 0;
    for (const auto& [pass, text] : lines) {
        std::printf("%s %s\n", pass ? "PASS" : "FAIL", text.c_str());
        failed += !pass;
    }
    std::printf("%zu/%zu criteria passed\n", lines.size() - static_cast<std::size_t>(failed), lines.size());
    return failed == 0 ? 0 : 1;
}
