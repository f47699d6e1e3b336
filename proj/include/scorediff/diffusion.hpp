// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scorediff/data.hpp"

namespace scorediff {

enum class ScheduleKind { kLinear, kCosine };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// Variance schedule indexed by diffusion step t in [1, T]. Vectors are stored
/// zero-based, so beta(t) == beta_values[t - 1].
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::kCosine;
    int num_steps = 0;
    std::vector<double> beta_values;
    std::vector<double> alpha_bar_values;

    double beta(int t) const { return beta_values.at(static_cast<std::size_t>(t - 1)); }
    /// alpha_bar(0) == 1 by convention.
    double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_values.at(static_cast<std::size_t>(t - 1)); }
};

NoiseSchedule make_schedule(ScheduleKind kind, int num_steps);

struct SamplerConfig {
    int num_steps = 10;
    double eta = 1.0;
    double cfg_weight = 0.0;
    double sag_scale = 0.0;
    bool sag_enabled = false;
    /// Negative means "mean of the attention map".
    double sag_threshold = -1.0;
    double sag_blur_sigma = 1.5;
    double logit_eps = kDefaultLogitEps;
    std::uint64_t seed = 0;

    void validate(const NoiseSchedule& schedule) const;
};

/// u = log(s / (1 - s)) after clipping to [eps, 1 - eps].
std::vector<double> to_logit(std::span<const double> s, double eps = kDefaultLogitEps);
/// Elementwise sigmoid.
ScoreVector from_logit(std::span<const double> u);

/// u_t = sqrt(abar_t) u0 + sqrt(1 - abar_t) noise.
std::vector<double> forward_sample(std::span<const double> u0, int t, const NoiseSchedule& schedule,
                                   std::span<const double> noise);

/// One reverse update from t_cur to t_prev given the clean-logit estimate.
/// eta scales the DDPM posterior standard deviation; t_prev == 0 returns
/// x0_pred unchanged.
std::vector<double> reverse_step(std::span<const double> u_t, int t_cur, int t_prev, std::span<const double> x0_pred,
                                 const NoiseSchedule& schedule, double eta, std::span<const double> noise);

/// Standard deviation of the stochastic term in reverse_step.
double reverse_sigma(int t_cur, int t_prev, const NoiseSchedule& schedule, double eta);

/// (1 + w) cond - w uncond.
std::vector<double> cfg_combine(std::span<const double> cond_pred, std::span<const double> uncond_pred, double w);

/// Descending timesteps for a sampler run: uniformly spaced over [1, T]
/// including T and 1. A single step uses {T}.
std::vector<int> step_sequence(int num_train_steps, int num_steps);

/// What a denoiser returns for one noisy input.
struct Prediction {
    std::vector<double> x0_logits;
    /// Per-position attention mass (may be empty when the model has none).
    std::vector<double> attention;
};

/// A conditional clean-logit predictor bound to one video. Implementations
/// must be safe to call concurrently from several threads.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;
    virtual std::size_t num_frames() const = 0;
    /// Prediction for u_t at step t. `null_condition` selects the empty-video
    /// condition used by classifier-free guidance.
    virtual Prediction predict(std::span<const double> u_t, int t, bool null_condition) const = 0;
};

/// Temporal Gaussian blur along the frame axis (edge-replicated borders).
std::vector<double> gaussian_blur(std::span<const double> x, double sigma);

/// Self-attention guidance for one step. Blurs the clean estimate, re-noises
/// the attended positions back to level t, and steers the prediction away
/// from the model's output on that degraded input:
/// pred + (1 + s) (pred - degraded_pred). `prediction` carries the current
/// (possibly CFG-combined) estimate and the attention map; the degraded
/// prediction is CFG-combined the same way.
std::vector<double> sag_adjust(const ScoreModel& model, std::span<const double> u_t, int t,
                               const Prediction& prediction, const NoiseSchedule& schedule, const SamplerConfig& cfg);

/// Guided clean-logit estimate at one step (CFG and SAG as configured).
std::vector<double> guided_prediction(const ScoreModel& model, std::span<const double> u_t, int t,
                                      const NoiseSchedule& schedule, const SamplerConfig& cfg);

/// Draws u_T ~ N(0, I), runs the reverse chain and returns sigmoid(u_0).
ScoreVector sample(const ScoreModel& model, const NoiseSchedule& schedule, const SamplerConfig& cfg);
/// Same, with an explicit generator (for drawing many samples in sequence).
ScoreVector sample(const ScoreModel& model, const NoiseSchedule& schedule, const SamplerConfig& cfg,
                   std::mt19937_64& rng);

}  // namespace scorediff
