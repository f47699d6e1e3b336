// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scorediff/data.hpp"
#include "scorediff/diffusion.hpp"
#include "scorediff/tensor.hpp"

namespace scorediff {

struct DenoiserConfig {
    std::size_t input_dim = 8;
    std::size_t hidden_dim = 64;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 256;
    std::size_t encoder_layers = 2;
    std::size_t decoder_layers = 2;
    std::size_t codebook_size = 200;
    /// Adds a query self-attention block after each cross-attention block so
    /// frames can agree on one summary mode.
    bool decoder_self_attention = true;
    int num_train_steps = 1000;
    double logit_eps = kDefaultLogitEps;

    void validate() const;
};

/// Bin of a score in [0, 1] among K uniform bins; 1.0 falls in the last bin.
std::size_t quantize_bin(double score, std::size_t num_bins);

/// Standard sinusoidal embedding: column 2i = sin(p w_i), 2i+1 = cos(p w_i),
/// w_i = 10000^(-2i/dim). Returns positions.size() x dim.
Tensor sinusoidal_embedding(std::span<const double> positions, std::size_t dim);
/// Temporal positional embedding for frames 0..n-1.
Tensor pos_embed(std::size_t n, std::size_t dim);

/// Weights of one adaptive cross-attention block. The modulation layer maps
/// the per-frame condition to [A1 | B1 | G1 | A2 | B2 | G2].
struct BlockWeights {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    Tensor mod_w, mod_b;
};

/// One modulated attention block:
///   H' = G1 * H + H + B1            for H in {Q, K, V}
///   X1 = A1 * Attn(Q', K', V') + Q'
///   X2 = G2 * X1 + X1 + B2
///   out = A2 * MLP(X2) + X2
/// `condition` is N x D (already passed through the modulation activation).
/// When `attention_out` is set, the head-averaged attention probabilities
/// (rows = queries) are written there.
Tensor adaln_block(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& condition, const BlockWeights& w,
                   std::size_t num_heads, Tensor* attention_out = nullptr);

class Denoiser {
public:
    struct Output {
        Tensor logits;  // N clean-logit estimate, before sigmoid
        Tensor scores;  // sigmoid(logits)
        std::vector<double> attention;  // per-frame attention mass, sums to 1
    };

    Denoiser(DenoiserConfig config, std::uint64_t seed);
    Denoiser(DenoiserConfig config, ParameterMap params);

    const DenoiserConfig& config() const noexcept { return config_; }
    ParameterMap& parameters() noexcept { return params_; }
    const ParameterMap& parameters() const noexcept { return params_; }
    const Tensor& param(const std::string& name) const;

    /// Projection plus position-free self-attention layers: N x D_in -> N x D.
    Tensor encode_video(const FeatureMatrix& features) const;
    /// Sinusoidal time features through the time MLP: 1 x D.
    Tensor time_embed(int t) const;
    /// Codebook rows for the quantized sigmoid(u_t): N x D.
    Tensor quantize_embed(std::span<const double> u_t) const;
    /// Modulated block stack over C(u_t) with keys/values from Z, then the
    /// per-frame affine head.
    Output forward(std::span<const double> u_t, int t, const Tensor& z) const;
    /// Just the block stack output (N x D), before the head.
    Tensor decode_hidden(std::span<const double> u_t, int t, const Tensor& z, std::vector<double>* attention = nullptr) const;

    /// Deep copy of the parameters.
    Denoiser clone() const;

    void save(const std::filesystem::path& checkpoint) const;
    static Denoiser load(const std::filesystem::path& checkpoint);

    /// Views of the weights of one block ("enc.0.", "dec.1.self_", ...).
    BlockWeights block(const std::string& prefix) const;

private:
    DenoiserConfig config_;
    ParameterMap params_;
};

/// Path of the metadata sidecar written next to a checkpoint.
std::filesystem::path checkpoint_meta_path(const std::filesystem::path& checkpoint);

/// A denoiser bound to one video's features, with the encoded condition and
/// the encoded null (all-zero) video cached. Inference only.
class ConditionedDenoiser final : public ScoreModel {
public:
    ConditionedDenoiser(const Denoiser& model, const FeatureMatrix& features);

    std::size_t num_frames() const override { return frames_; }
    Prediction predict(std::span<const double> u_t, int t, bool null_condition) const override;

private:
    const Denoiser* model_;
    std::size_t frames_;
    Tensor z_;
    Tensor z_null_;
};

/// ||s0 - s0_hat||^2 for one sample.
Tensor score_loss(const Tensor& target, const Tensor& predicted);

struct TrainConfig {
    double learning_rate = 5e-5;
    double weight_decay = 5e-4;
    std::size_t batch_size = 256;
    std::size_t epochs = 200;
    double ema_decay = 0.999;
    double cond_dropout_prob = 0.1;
    std::uint64_t seed = 0;
    ScheduleKind schedule = ScheduleKind::kCosine;
    int num_train_steps = 1000;
    double logit_eps = kDefaultLogitEps;

    void validate() const;
};

struct TrainingLog {
    std::vector<double> epoch_loss;
};

/// Decoupled-weight-decay adaptive-moment optimizer state.
struct AdamState {
    ParameterMap first_moment;
    ParameterMap second_moment;
    std::size_t step = 0;
};

/// Stateful training loop. Each step draws `batch_size` examples from a
/// shuffled cyclic stream over videos; every example takes one uniformly
/// chosen annotator, a uniform step t, forward-noises the clipped logit target
/// and regresses the clean score. The learning rate follows a cosine decay
/// over epochs * steps_per_epoch updates.
class Trainer {
public:
    Trainer(const std::vector<VideoRecord>& dataset, Denoiser model, TrainConfig config);

    std::size_t steps_per_epoch() const;
    std::size_t total_steps() const;
    std::size_t steps_done() const noexcept { return adam_.step; }
    std::size_t epochs_done() const noexcept { return epochs_done_; }

    /// Runs one optimizer step and returns the batch loss.
    double step();
    /// Runs up to `count` epochs (bounded by config.epochs); returns their losses.
    std::vector<double> run_epochs(std::size_t count);
    /// Loss of a fixed, deterministic batch (no update). Used for progress checks.
    double evaluate_batch(std::uint64_t seed, std::size_t size) const;

    const Denoiser& model() const noexcept { return model_; }
    const Denoiser& ema_model() const noexcept { return ema_; }
    const TrainingLog& log() const noexcept { return log_; }
    const NoiseSchedule& schedule() const noexcept { return schedule_; }
    const TrainConfig& config() const noexcept { return config_; }

    /// Writes model, EMA, optimizer moments and RNG state into `dir`.
    void save_state(const std::filesystem::path& dir) const;
    /// Restores a state written by save_state (dataset and config must match).
    void load_state(const std::filesystem::path& dir);

private:
    struct Example {
        std::size_t video;
        std::size_t annotator;
        int t;
        std::vector<double> noise;
        bool drop_condition;
    };
    Example draw_example(std::mt19937_64& rng, std::size_t& cursor, std::vector<std::size_t>& order) const;
    double example_loss(const Example& ex, const Denoiser& model, bool with_grad) const;
    void apply_update();
    double current_learning_rate() const;

    const std::vector<VideoRecord>* dataset_;
    std::vector<std::vector<ScoreVector>> targets_;  // clipped, per video and annotator
    Denoiser model_;
    Denoiser ema_;
    TrainConfig config_;
    NoiseSchedule schedule_;
    AdamState adam_;
    TrainingLog log_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::size_t epochs_done_ = 0;
};

struct TrainResult {
    Denoiser model;
    Denoiser ema;
    TrainingLog log;
};

TrainResult train(const std::vector<VideoRecord>& dataset, Denoiser model, const TrainConfig& config);

/// Saves parameters and a sidecar recording the denoiser config, the training
/// config and the noise schedule kind and length.
void save_checkpoint(const std::filesystem::path& checkpoint, const Denoiser& model, const TrainConfig& config);
/// Training config stored in a checkpoint sidecar (defaults when absent).
TrainConfig load_checkpoint_train_config(const std::filesystem::path& checkpoint);

}  // namespace scorediff
