// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "denoiser_check.hpp"
#include "scorediff/data.hpp"
#include "scorediff/denoiser.hpp"
#include "scorediff/diffusion.hpp"
#include "scorediff/knapsack.hpp"
#include "scorediff/metrics.hpp"
#include "scorediff/pipeline.hpp"
#include "support.hpp"

using namespace scorediff;
using namespace scorediff::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

bool y_star_optimal(const std::vector<double>& pred, const KPInstance& inst, const std::vector<std::uint8_t>& y) {
    const auto bf = brute_force_kp(pred, inst.weights, inst.capacity);
    return selection_value(pred, y) >= bf.best - 1e-9;
}

Outcome knapsack_exactness() {
    std::mt19937_64 rng(101);
    int mismatches = 0;
    for (int i = 0; i < 500; ++i) {
        KPInstance inst = random_instance(rng, 1 + i % 20);
        if (i % 4 == 0)
            for (double& v : inst.values) v = std::round(v * 8) / 8;
        const auto bf = brute_force_kp(inst.values, inst.weights, inst.capacity);
        const auto y = solve_kp(inst);
        const bool ok = std::abs(y.total_value - bf.best) <= 1e-12 && y.total_weight <= inst.capacity &&
                        std::abs(selection_value(inst.values, y.selection) - bf.best) <= 1e-12;
        mismatches += ok ? 0 : 1;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches in 500 instances"};
}

Outcome cis_soundness() {
    std::mt19937_64 rng(102);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int certified = 0, counterexamples = 0;
    for (int i = 0; i < 1000; ++i) {
        const KPInstance inst = random_instance(rng, 1 + i % 12);
        const double scale = std::pow(10.0, -3.0 * unit(rng));  // 1e-3 .. 1
        std::vector<double> pred = inst.values;
        for (double& x : pred)
            if (unit(rng) < 0.7) x = std::max(0.0, x + scale * normal(rng));
        const auto ctx = make_sensitivity_context(inst, pred);
        if (cis(ctx) > 0) continue;
        ++certified;
        if (!y_star_optimal(pred, inst, ctx.optimum.selection)) ++counterexamples;
    }
    return {counterexamples == 0 && certified > 0,
            std::to_string(counterexamples) + " counterexamples among " + std::to_string(certified) + " certified cases"};
}

Outcome interval_soundness() {
    std::mt19937_64 rng(103);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int checked = 0, counterexamples = 0;
    for (int i = 0; i < 500; ++i) {
        const KPInstance inst = random_instance(rng, 1 + i % 12);
        const auto ctx = make_sensitivity_context(inst, inst.values);
        for (std::size_t item = 0; item < inst.size(); ++item) {
            const std::vector<std::size_t> gamma{item};
            const auto iv = inclusion_intervals(ctx, gamma)[item];
            const double lo = std::max(iv.lower, -inst.values[item]);
            const double hi = std::isfinite(iv.upper) ? iv.upper : 2.0;
            for (int draw = 0; draw < 3; ++draw) {
                const double d = draw == 0 ? lo : draw == 1 ? hi : lo + (hi - lo) * unit(rng);
                std::vector<double> pred = inst.values;
                pred[item] += d;
                ++checked;
                if (!y_star_optimal(pred, inst, ctx.optimum.selection)) ++counterexamples;
            }
        }
    }
    return {counterexamples == 0, std::to_string(counterexamples) + " counterexamples in " + std::to_string(checked) + " perturbations"};
}

Outcome multiplicity_trend() {
    MultiplicityConfig cfg;
    cfg.num_items = 15;
    cfg.trials = 2000;
    cfg.seed = 104;
    const auto rows = kp_multiplicity_study(cfg);
    bool ok = rows.size() == 5;
    std::ostringstream d;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        d << "K=" << rows[k].bins << ":" << fmt("%.3f", rows[k].expected_num_optima) << "/" << fmt("%.3f", rows[k].expected_l1_delta)
          << " ";
        if (k == 0) continue;
        const auto& a = rows[k - 1];
        const auto& b = rows[k];
        ok = ok && b.expected_num_optima - a.expected_num_optima <= 3 * std::hypot(a.stderr_optima, b.stderr_optima);
        ok = ok && b.expected_l1_delta - a.expected_l1_delta <= 3 * std::hypot(a.stderr_delta, b.stderr_delta);
    }
    return {ok, "E|{y*}|/E[dy*] " + d.str()};
}

Outcome gradient_check() {
    const auto r = denoiser_gradcheck(tiny_denoiser_config(), 4, 105);
    return {r.max_rel_error < 1e-4,
            "max rel error " + fmt("%.2e", r.max_rel_error) + " over " + std::to_string(r.checked) + " entries (worst " + r.worst_param + ")"};
}

Outcome adaln_identity() {
    double worst = 0;
    std::mt19937_64 rng(106);
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int trial = 0; trial < 5; ++trial) {
        DenoiserConfig cfg = tiny_denoiser_config();
        cfg.hidden_dim = 16;
        cfg.decoder_layers = 1 + trial % 3;
        const Denoiser model(cfg, 200 + trial);
        FeatureMatrix f(12, cfg.input_dim);
        for (double& x : f.values) x = normal(rng);
        std::vector<double> u(12);
        for (double& x : u) x = normal(rng);
        const Tensor hidden = model.decode_hidden(u, 1 + trial * 20, model.encode_video(f));
        const Tensor c = model.quantize_embed(u);
        for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, std::abs(hidden.data()[i] - c.data()[i]));
    }
    return {worst < 1e-12, "max abs deviation " + fmt("%.1e", worst)};
}

Outcome forward_statistics() {
    const auto s = make_schedule(ScheduleKind::kCosine, 1000);
    const std::vector<double> u0{1.5, -2.0, 0.0};
    std::mt19937_64 rng(107);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int draws = 100000;
    bool ok = true;
    std::ostringstream d;
    for (int t : {1, s.num_steps / 2, s.num_steps}) {
        double worst_z = 0;
        std::vector<double> m(3), m2(3), noise(3);
        for (int k = 0; k < draws; ++k) {
            for (double& e : noise) e = normal(rng);
            const auto x = forward_sample(u0, t, s, noise);
            for (int j = 0; j < 3; ++j) {
                m[j] += x[j];
                m2[j] += x[j] * x[j];
            }
        }
        const double var_target = 1.0 - s.alpha_bar(t);
        for (int j = 0; j < 3; ++j) {
            const double mean = m[j] / draws;
            const double var = m2[j] / draws - mean * mean;
            const double zm = std::abs(mean - std::sqrt(s.alpha_bar(t)) * u0[j]) / std::sqrt(var_target / draws);
            const double zv = std::abs(var - var_target) / (var_target * std::sqrt(2.0 / (draws - 1)));
            worst_z = std::max({worst_z, zm, zv});
        }
        ok = ok && worst_z < 3.0;
        d << "t=" << t << " max|z|=" << fmt("%.2f", worst_z) << " ";
    }
    return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// Trained-model criteria share one synthetic benchmark.

struct Benchmark {
    SynthDataset data;
    AnnotatorSplit split;
    DenoiserConfig model_cfg;
    TrainConfig train_cfg;
};

Benchmark make_benchmark() {
    Benchmark b;
    SynthConfig sc;
    sc.num_videos = 20;
    sc.frames_per_video = 60;
    sc.num_annotators = 10;
    sc.num_modes = 2;
    sc.seed = 108;
    b.data = synth_generate(sc);
    b.split = hold_out_annotators(b.data, 1);
    b.model_cfg.input_dim = sc.feature_dim;
    b.model_cfg.hidden_dim = 32;
    b.model_cfg.num_heads = 4;
    b.model_cfg.ffn_dim = 128;
    b.model_cfg.encoder_layers = 1;
    b.model_cfg.decoder_layers = 1;
    b.train_cfg.learning_rate = 1e-3;
    b.train_cfg.batch_size = 16;
    b.train_cfg.epochs = 1500;  // 2 steps per epoch
    b.train_cfg.ema_decay = 0.999;
    return b;
}

Benchmark& benchmark() {
    static Benchmark b = make_benchmark();
    return b;
}

const Denoiser& trained_model() {
    static const Denoiser model = [] {
        const auto& b = benchmark();
        return train(b.split.train, Denoiser(b.model_cfg, 109), b.train_cfg).model;
    }();
    return model;
}

bool covers_all_modes(const std::vector<double>& coverage, const ModeTable& modes, std::size_t num_modes) {
    std::vector<bool> hit(num_modes, false);
    for (std::size_t a = 0; a < coverage.size(); ++a)
        if (coverage[a] >= 0.2) hit[modes.annotator_mode[a]] = true;
    return std::all_of(hit.begin(), hit.end(), [](bool h) { return h; });
}

Outcome multimodal_coverage() {
    const auto& b = benchmark();
    const auto t0 = std::chrono::steady_clock::now();
    const Denoiser& model = trained_model();
    const double train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto schedule = make_schedule(b.train_cfg.schedule, b.model_cfg.num_train_steps);
    SamplerConfig sampler;  // 10 steps, eta = 1

    std::size_t generative_hits = 0, clustered = 0;
    for (std::size_t v = 0; v < b.split.heldout.size(); ++v) {
        const auto& video = b.split.heldout[v];
        const auto samples = sample_video(model, schedule, video, sampler, 200, derive_seed(110, "video", v));
        const auto cov = annotator_coverage(samples, video.annotations, 0.25);
        generative_hits += covers_all_modes(cov, b.split.heldout_modes[v], 2) ? 1 : 0;
        // Cluster samples by the closest generator template (tau >= 0.25).
        std::set<std::size_t> groups;
        for (const auto& smp : samples) {
            double best = 0.25;
            std::optional<std::size_t> group;
            for (std::size_t k = 0; k < b.split.heldout_modes[v].templates.size(); ++k) {
                const double tau = kendall_tau(smp, b.split.heldout_modes[v].templates[k]);
                if (tau >= best) {
                    best = tau;
                    group = k;
                }
            }
            if (group) groups.insert(*group);
        }
        clustered += groups.size() >= 2 ? 1 : 0;
    }

    // SAG with a small scale perturbs samples but keeps the top segment of the mean.
    std::size_t sag_changed = 0, sag_kept = 0;
    const std::size_t sag_videos = 3;
    for (std::size_t v = 0; v < sag_videos; ++v) {
        const auto& video = b.split.heldout[v];
        SamplerConfig guided = sampler;
        guided.sag_enabled = true;
        guided.sag_scale = 0.1;
        const auto plain = sample_video(model, schedule, video, sampler, 200, derive_seed(117, "video", v));
        const auto sag = sample_video(model, schedule, video, guided, 200, derive_seed(117, "video", v));
        sag_changed += plain != sag ? 1 : 0;
        const SegmentList seg = segment_video(video.features, SegmentCommandConfig{});
        const auto a = clip_values(mean_vector(plain), seg), c = clip_values(mean_vector(sag), seg);
        sag_kept += std::max_element(a.begin(), a.end()) - a.begin() == std::max_element(c.begin(), c.end()) - c.begin() ? 1 : 0;
    }

    // Baseline: regress the averaged annotation, one deterministic sample.
    std::vector<VideoRecord> averaged = b.split.train;
    for (auto& video : averaged) video.annotations = {mean_vector(video.annotations)};
    const auto t1 = std::chrono::steady_clock::now();
    const Denoiser baseline = train(averaged, Denoiser(b.model_cfg, 109), b.train_cfg).model;
    const double base_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    SamplerConfig det = sampler;
    det.eta = 0.0;
    std::size_t baseline_hits = 0;
    for (std::size_t v = 0; v < b.split.heldout.size(); ++v) {
        const auto& video = b.split.heldout[v];
        const auto one = sample_video(baseline, schedule, video, det, 1, derive_seed(111, "video", v));
        baseline_hits += covers_all_modes(annotator_coverage(one, video.annotations, 0.25), b.split.heldout_modes[v], 2) ? 1 : 0;
    }
    const double n = static_cast<double>(b.split.heldout.size());
    const double gen = generative_hits / n, base = baseline_hits / n;
    return {gen >= 0.7 && base < 0.3 && train_s < 1800.0,
            "both modes covered on " + fmt("%.0f%%", 100 * gen) + " of videos (baseline " + fmt("%.0f%%", 100 * base) +
                "); training " + fmt("%.0f s", train_s) + " + baseline " + fmt("%.0f s", base_s) + "; samples form >= 2 template clusters on " +
                fmt("%.0f%%", 100 * clustered / n) + " of videos; SAG s=0.1 changed samples on " + std::to_string(sag_changed) + "/" +
                std::to_string(sag_videos) + " and kept the top segment on " + std::to_string(sag_kept) + "/" + std::to_string(sag_videos)};
}

Outcome overfit_one_video() {
    SynthConfig sc;
    sc.num_videos = 1;
    sc.frames_per_video = 60;
    sc.num_annotators = 1;
    sc.num_modes = 1;
    sc.seed = 112;
    auto data = synth_generate(sc).videos;
    DenoiserConfig mc;
    mc.input_dim = sc.feature_dim;
    mc.hidden_dim = 32;
    mc.num_heads = 4;
    mc.ffn_dim = 64;
    mc.encoder_layers = 1;
    mc.decoder_layers = 1;
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 8;
    tc.epochs = 2000;  // one step per epoch
    tc.cond_dropout_prob = 0.0;
    Trainer trainer(data, Denoiser(mc, 113), tc);
    const auto& target = data[0].annotations[0];
    double tau = -1.0;
    while (trainer.steps_done() < 2000) {
        for (int k = 0; k < 100; ++k) trainer.step();
        const auto s = sample_video(trainer.model(), trainer.schedule(), data[0], SamplerConfig{}, 1, 114);
        tau = kendall_tau(s[0], target);
        if (tau > 0.9) break;
    }
    return {tau > 0.9, "tau " + fmt("%.3f", tau) + " after " + std::to_string(trainer.steps_done()) + " steps"};
}

Outcome rank_exactness() {
    std::mt19937_64 rng(115);
    int tau_mismatch = 0;
    double spearman_diff = 0;
    int cases = 0;
    while (cases < 200) {
        const std::size_t n = 2 + cases % 60;
        std::uniform_int_distribution<int> level(0, 1 + cases % 10);
        std::vector<double> a(n), b(n);
        for (double& x : a) x = level(rng);
        for (double& x : b) x = level(rng);
        const bool constant = std::all_of(a.begin(), a.end(), [&](double x) { return x == a[0]; }) ||
                              std::all_of(b.begin(), b.end(), [&](double x) { return x == b[0]; });
        if (constant) continue;
        ++cases;
        tau_mismatch += kendall_tau(a, b) == naive_kendall_tau_b(a, b) ? 0 : 1;
        spearman_diff = std::max(spearman_diff, std::abs(spearman_rho(a, b) - naive_spearman(a, b)));
    }
    return {tau_mismatch == 0 && spearman_diff <= 1e-12,
            std::to_string(tau_mismatch) + " tau mismatches, max spearman diff " + fmt("%.1e", spearman_diff) + " over 200 cases"};
}

// Per sample: tau against the closest annotator. The mean annotation of a
// two-mode video is nearly flat, so tau against it is reported but not used.
Outcome ddim_step_ordering() {
    const auto& b = benchmark();
    const Denoiser& model = trained_model();
    const auto schedule = make_schedule(b.train_cfg.schedule, b.model_cfg.num_train_steps);
    auto mean_tau = [&](int steps, double& against_mean) {
        SamplerConfig sampler;
        sampler.num_steps = steps;
        double acc = 0, acc_mean = 0;
        std::size_t count = 0;
        for (std::size_t v = 0; v < b.data.videos.size(); ++v) {
            const auto& video = b.data.videos[v];
            const auto samples = sample_video(model, schedule, video, sampler, 20, derive_seed(116, "video", v));
            for (const auto& s : samples) {
                double best = -1.0;
                for (const auto& a : video.annotations) best = std::max(best, kendall_tau(s, a));
                acc += best;
                ++count;
            }
            acc_mean += kendall_tau(mean_vector(samples), mean_vector(video.annotations));
        }
        against_mean = acc_mean / static_cast<double>(b.data.videos.size());
        return acc / static_cast<double>(count);
    };
    double m100 = 0, m10 = 0, m1 = 0;
    const double t100 = mean_tau(100, m100), t10 = mean_tau(10, m10), t1 = mean_tau(1, m1);
    return {t100 >= t1 - 0.02, "mean closest-annotator tau: 100 steps " + fmt("%.3f", t100) + ", 10 steps " + fmt("%.3f", t10) +
                                   ", 1 step " + fmt("%.3f", t1) + "; vs mean annotation " + fmt("%.3f", m100) + "/" + fmt("%.3f", m10) +
                                   "/" + fmt("%.3f", m1)};
}

Outcome config_defaults() {
    const RunConfig run;
    const SamplerConfig sampler;
    const bool ok = kDefaultLogitEps == 1e-3 && run.model.logit_eps == 1e-3 && run.train.optim.logit_eps == 1e-3 &&
                    run.sample.sampler.logit_eps == 1e-3 && sampler.num_steps == 10 && run.sample.sampler.num_steps == 10 &&
                    to_logit(std::vector<double>{0.0})[0] == std::log(1e-3 / (1 - 1e-3));
    return {ok, "logit eps " + fmt("%g", run.model.logit_eps) + ", sampler steps " + std::to_string(run.sample.sampler.num_steps)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"knapsack DP equals brute force", knapsack_exactness},
        {"CIS certificate soundness", cis_soundness},
        {"inclusion interval soundness", interval_soundness},
        {"quantization multiplicity trend", multiplicity_trend},
        {"denoiser gradient check", gradient_check},
        {"AdaLN-Zero identity at init", adaln_identity},
        {"forward process statistics", forward_statistics},
        {"multi-modal coverage vs mean regression", multimodal_coverage},
        {"one-video overfit", overfit_one_video},
        {"rank metric exactness", rank_exactness},
        {"DDIM 100 vs 1 step non-degradation", ddim_step_ordering},
        {"logit clip and sampler defaults", config_defaults},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %2d %s: %s (%.1f s)\n", r.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), r.detail.c_str(), secs);
        std::fflush(stdout);
        failures += r.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
