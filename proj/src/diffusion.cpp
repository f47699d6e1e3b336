// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include "scorediff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "scorediff/error.hpp"

namespace scorediff {

ScheduleKind parse_schedule_kind(const std::string& name) {
    if (name == "linear") return ScheduleKind::kLinear;
    if (name == "cosine") return ScheduleKind::kCosine;
    throw ConfigError("unknown schedule kind '" + name + "' (expected linear or cosine)");
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::kLinear ? "linear" : "cosine"; }

NoiseSchedule make_schedule(ScheduleKind kind, int num_steps) {
    if (num_steps < 1) throw ContractError("make_schedule: T_train must be at least 1");
    NoiseSchedule s;
    s.kind = kind;
    s.num_steps = num_steps;
    s.beta_values.resize(static_cast<std::size_t>(num_steps));
    const double T = num_steps;
    if (kind == ScheduleKind::kLinear) {
        constexpr double kStart = 1e-4, kEnd = 0.02;
        for (int t = 1; t <= num_steps; ++t)
            s.beta_values[static_cast<std::size_t>(t - 1)] =
                num_steps == 1 ? kStart : kStart + (kEnd - kStart) * (t - 1) / (T - 1);
    } else {
        constexpr double kOffset = 0.008, kMaxBeta = 0.999;
        auto f = [&](double t) {
            const double c = std::cos((t / T + kOffset) / (1.0 + kOffset) * std::numbers::pi / 2.0);
            return c * c;
        };
        for (int t = 1; t <= num_steps; ++t)
            s.beta_values[static_cast<std::size_t>(t - 1)] = std::min(1.0 - f(t) / f(t - 1), kMaxBeta);
    }
    s.alpha_bar_values.resize(s.beta_values.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < s.beta_values.size(); ++i) s.alpha_bar_values[i] = (prod *= 1.0 - s.beta_values[i]);
    return s;
}

void SamplerConfig::validate(const NoiseSchedule& schedule) const {
    if (num_steps < 1) throw ConfigError("sampler: num_steps must be at least 1");
    if (num_steps > schedule.num_steps) throw ConfigError("sampler: num_steps exceeds T_train");
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("sampler: eta must lie in [0, 1]");
    if (!(logit_eps > 0.0 && logit_eps < 0.5)) throw ConfigError("sampler: logit_eps must lie in (0, 0.5)");
    if (sag_blur_sigma < 0.0) throw ConfigError("sampler: sag_blur_sigma must be non-negative");
}

std::vector<double> to_logit(std::span<const double> s, double eps) {
    const ScoreVector clipped = logit_clip(ScoreVector(s.begin(), s.end()), eps);
    std::vector<double> u(clipped.size());
    std::transform(clipped.begin(), clipped.end(), u.begin(), [](double x) { return std::log(x / (1.0 - x)); });
    return u;
}

ScoreVector from_logit(std::span<const double> u) {
    ScoreVector s(u.size());
    std::transform(u.begin(), u.end(), s.begin(), [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    return s;
}

namespace {

void check_step(int t, const NoiseSchedule& schedule, const char* what) {
    if (t < 1 || t > schedule.num_steps)
        throw ContractError(std::string(what) + ": step " + std::to_string(t) + " outside [1, " +
                            std::to_string(schedule.num_steps) + "]");
}

void check_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw DimensionError(std::string(what) + ": lengths " + std::to_string(a) + " and " + std::to_string(b));
}

}  // namespace

std::vector<double> forward_sample(std::span<const double> u0, int t, const NoiseSchedule& schedule,
                                   std::span<const double> noise) {
    check_step(t, schedule, "forward_sample");
    check_same_length(u0.size(), noise.size(), "forward_sample");
    const double a = schedule.alpha_bar(t);
    const double ca = std::sqrt(a), cn = std::sqrt(1.0 - a);
    std::vector<double> out(u0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ca * u0[i] + cn * noise[i];
    return out;
}

double reverse_sigma(int t_cur, int t_prev, const NoiseSchedule& schedule, double eta) {
    if (t_prev == 0) return 0.0;
    const double a = schedule.alpha_bar(t_cur), ap = schedule.alpha_bar(t_prev);
    return eta * std::sqrt((1.0 - ap) / (1.0 - a)) * std::sqrt(1.0 - a / ap);
}

std::vector<double> reverse_step(std::span<const double> u_t, int t_cur, int t_prev, std::span<const double> x0_pred,
                                 const NoiseSchedule& schedule, double eta, std::span<const double> noise) {
    check_step(t_cur, schedule, "reverse_step");
    if (t_prev < 0 || t_prev >= t_cur)
        throw ContractError("reverse_step: t_prev " + std::to_string(t_prev) + " must lie in [0, " +
                            std::to_string(t_cur) + ")");
    check_same_length(u_t.size(), x0_pred.size(), "reverse_step");
    if (t_prev == 0) return {x0_pred.begin(), x0_pred.end()};
    check_same_length(u_t.size(), noise.size(), "reverse_step");

    const double a = schedule.alpha_bar(t_cur), ap = schedule.alpha_bar(t_prev);
    const double sigma = reverse_sigma(t_cur, t_prev, schedule, eta);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ap - sigma * sigma));
    const double sa = std::sqrt(a), sna = std::sqrt(1.0 - a), sap = std::sqrt(ap);
    std::vector<double> out(u_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double eps_hat = (u_t[i] - sa * x0_pred[i]) / sna;
        out[i] = dir * eps_hat + sap * x0_pred[i] + sigma * noise[i];
    }
    return out;
}

std::vector<double> cfg_combine(std::span<const double> cond_pred, std::span<const double> uncond_pred, double w) {
    check_same_length(cond_pred.size(), uncond_pred.size(), "cfg_combine");
    std::vector<double> out(cond_pred.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 + w) * cond_pred[i] - w * uncond_pred[i];
    return out;
}

std::vector<int> step_sequence(int num_train_steps, int num_steps) {
    if (num_steps < 1 || num_steps > num_train_steps)
        throw ContractError("step_sequence: num_steps must lie in [1, T_train]");
    if (num_steps == 1) return {num_train_steps};
    std::vector<int> seq(static_cast<std::size_t>(num_steps));
    const double span = num_train_steps - 1;
    for (int k = 0; k < num_steps; ++k)
        seq[static_cast<std::size_t>(k)] =
            static_cast<int>(std::lround(num_train_steps - span * k / static_cast<double>(num_steps - 1)));
    return seq;
}

std::vector<double> gaussian_blur(std::span<const double> x, double sigma) {
    if (sigma <= 0.0 || x.empty()) return {x.begin(), x.end()};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (int k = -radius; k <= radius; ++k)
        kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
    const double norm = std::accumulate(kernel.begin(), kernel.end(), 0.0);
    for (double& k : kernel) k /= norm;
    const int n = static_cast<int>(x.size());
    std::vector<double> out(x.size(), 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = -radius; k <= radius; ++k) {
            const int j = std::clamp(i + k, 0, n - 1);
            out[static_cast<std::size_t>(i)] += kernel[static_cast<std::size_t>(k + radius)] * x[static_cast<std::size_t>(j)];
        }
    return out;
}

namespace {

std::vector<double> cfg_prediction(const ScoreModel& model, std::span<const double> u_t, int t, double w,
                                   Prediction* cond_out = nullptr) {
    Prediction cond = model.predict(u_t, t, false);
    std::vector<double> x0 = cond.x0_logits;
    if (w != 0.0) x0 = cfg_combine(cond.x0_logits, model.predict(u_t, t, true).x0_logits, w);
    if (cond_out != nullptr) *cond_out = std::move(cond);
    return x0;
}

}  // namespace

std::vector<double> sag_adjust(const ScoreModel& model, std::span<const double> u_t, int t,
                               const Prediction& prediction, const NoiseSchedule& schedule, const SamplerConfig& cfg) {
    const auto& pred = prediction.x0_logits;
    const auto& attn = prediction.attention;
    check_same_length(u_t.size(), pred.size(), "sag_adjust");
    if (attn.empty()) return pred;
    check_same_length(attn.size(), pred.size(), "sag_adjust");

    const double threshold =
        cfg.sag_threshold < 0.0 ? std::accumulate(attn.begin(), attn.end(), 0.0) / static_cast<double>(attn.size())
                                : cfg.sag_threshold;
    std::vector<bool> mask(attn.size());
    bool any = false;
    for (std::size_t i = 0; i < attn.size(); ++i) any |= (mask[i] = attn[i] > threshold);
    if (!any) return pred;

    // Implied noise from the current estimate; the blurred estimate is pushed
    // back to level t with the same noise.
    const double a = schedule.alpha_bar(t);
    const double sa = std::sqrt(a), sna = std::sqrt(1.0 - a);
    const std::vector<double> blurred = gaussian_blur(pred, cfg.sag_blur_sigma);
    std::vector<double> degraded(u_t.begin(), u_t.end());
    for (std::size_t i = 0; i < degraded.size(); ++i) {
        if (!mask[i]) continue;
        const double eps_hat = (u_t[i] - sa * pred[i]) / sna;
        degraded[i] = sa * blurred[i] + sna * eps_hat;
    }
    const std::vector<double> degraded_pred = cfg_prediction(model, degraded, t, cfg.cfg_weight);
    std::vector<double> out(pred.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pred[i] + (1.0 + cfg.sag_scale) * (pred[i] - degraded_pred[i]);
    return out;
}

std::vector<double> guided_prediction(const ScoreModel& model, std::span<const double> u_t, int t,
                                      const NoiseSchedule& schedule, const SamplerConfig& cfg) {
    Prediction cond;
    std::vector<double> x0 = cfg_prediction(model, u_t, t, cfg.cfg_weight, &cond);
    if (!cfg.sag_enabled) return x0;
    return sag_adjust(model, u_t, t, Prediction{std::move(x0), std::move(cond.attention)}, schedule, cfg);
}

ScoreVector sample(const ScoreModel& model, const NoiseSchedule& schedule, const SamplerConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    return sample(model, schedule, cfg, rng);
}

ScoreVector sample(const ScoreModel& model, const NoiseSchedule& schedule, const SamplerConfig& cfg,
                   std::mt19937_64& rng) {
    cfg.validate(schedule);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t n = model.num_frames();
    std::vector<double> u(n);
    for (double& x : u) x = normal(rng);
    const std::vector<int> seq = step_sequence(schedule.num_steps, cfg.num_steps);
    std::vector<double> noise(n);
    for (std::size_t k = 0; k < seq.size(); ++k) {
        const int t = seq[k];
        const int t_prev = k + 1 < seq.size() ? seq[k + 1] : 0;
        const std::vector<double> x0 = guided_prediction(model, u, t, schedule, cfg);
        if (t_prev > 0)
            for (double& x : noise) x = normal(rng);
        u = reverse_step(u, t, t_prev, x0, schedule, cfg.eta, noise);
    }
    return from_logit(u);
}

}  // namespace scorediff
