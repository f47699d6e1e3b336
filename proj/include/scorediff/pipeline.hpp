// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scorediff/data.hpp"
#include "scorediff/denoiser.hpp"
#include "scorediff/diffusion.hpp"
#include "scorediff/knapsack.hpp"
#include "scorediff/segmentation.hpp"

namespace scorediff {

struct SynthCommandConfig {
    SynthConfig data;
    /// Annotators per mode withheld into heldout.json (0 writes no split).
    std::size_t holdout_per_mode = 0;
};

struct TrainCommandConfig {
    TrainConfig optim;
    /// Write resumable trainer state every this many epochs (0: only at the end).
    std::size_t checkpoint_every = 0;
    /// Continue from <out>/train_state when it exists.
    bool resume = false;
    /// Stop after this many epochs in this invocation (0: run to completion).
    std::size_t stop_after_epochs = 0;
};

struct SampleCommandConfig {
    SamplerConfig sampler;
    std::size_t num_samples = 100;
    /// Also emit knapsack summaries of every sample.
    bool summarize = false;
    double rho = 0.15;
    /// Sample from the EMA weights instead of the raw weights.
    bool use_ema = false;
    std::size_t workers = 1;
};

struct SegmentCommandConfig {
    /// Upper bound on change points; clamped to N - 1 per video.
    std::size_t max_segments = 20;
    double penalty = 1.0;
};

struct EvaluateCommandConfig {
    double coverage_threshold = 0.25;
    double rho = 0.15;
    std::size_t workers = 1;
};

/// Input/output locations. Empty entries resolve inside the output directory.
struct PathConfig {
    std::filesystem::path dataset;
    std::filesystem::path modes;
    std::filesystem::path checkpoint;
    std::filesystem::path samples;
    /// Annotations used for the coverage matrix (defaults to the dataset).
    std::filesystem::path coverage_dataset;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out";
    SynthCommandConfig synth;
    /// input_dim == 0 means "take it from the dataset".
    DenoiserConfig model = [] {
        DenoiserConfig c;
        c.input_dim = 0;
        return c;
    }();
    TrainCommandConfig train;
    SampleCommandConfig sample;
    SegmentCommandConfig segment;
    EvaluateCommandConfig evaluate;
    MultiplicityConfig kp_study;
    PathConfig paths;

    std::filesystem::path dataset_path() const;
    std::filesystem::path modes_path() const;
    std::filesystem::path checkpoint_path() const;
    std::filesystem::path samples_path() const;
    std::filesystem::path coverage_dataset_path() const;
};

/// Config document with one section per command. Sub-component seeds are not
/// part of it: they derive from the top-level seed.
nlohmann::json run_config_to_json(const RunConfig& cfg);
/// Strict: unknown keys and wrong types raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& doc);

/// Every leaf of the config document as a dotted key ("train.learning_rate").
std::vector<std::string> config_keys();

/// Sets a dotted key from its textual value, parsed by the type of the
/// existing entry (numbers, booleans, strings, JSON arrays).
void apply_override(nlohmann::json& doc, const std::string& dotted_key, const std::string& value);

struct ConfigSources {
    std::optional<std::filesystem::path> config_file;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
};

/// Defaults, then the config file, then dotted overrides, then --seed/--out.
RunConfig resolve_run_config(const ConfigSources& sources);

/// Stable 64-bit seed for a named sub-component (splitmix64 over seed and tag).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

// Commands. All validate the configuration and inputs before writing
// anything, write into cfg.out_dir and report what they wrote on `log`.

void cmd_synth(const RunConfig& cfg, std::ostream& log);
void cmd_train(const RunConfig& cfg, std::ostream& log);
void cmd_sample(const RunConfig& cfg, std::ostream& log);
void cmd_evaluate(const RunConfig& cfg, std::ostream& log);
void cmd_kp_study(const RunConfig& cfg, std::ostream& log);

// Pieces shared with the bindings and tests.

struct VideoSamples {
    std::string id;
    std::vector<ScoreVector> samples;
    std::vector<std::vector<std::uint8_t>> summaries;  // empty unless summarised
    SegmentList segments;
};

void save_samples(const std::filesystem::path& path, const std::vector<VideoSamples>& videos);
std::vector<VideoSamples> load_samples(const std::filesystem::path& path);

/// Samples for one video from a trained denoiser, seeded per video.
std::vector<ScoreVector> sample_video(const Denoiser& model, const NoiseSchedule& schedule, const VideoRecord& video,
                                      const SamplerConfig& sampler, std::size_t num_samples, std::uint64_t seed);

/// KTS segmentation with the pipeline's clamping of the change-point bound.
SegmentList segment_video(const FeatureMatrix& features, const SegmentCommandConfig& cfg);

struct VideoMetrics {
    std::optional<double> tau, rho, map50, map15;
    double f1 = 0.0, cis = 0.0, wir = 0.0, wse = 0.0;
    SegmentList segments;
};

/// Metrics of the mean generated score against the mean annotation.
VideoMetrics evaluate_video(const VideoRecord& video, const std::vector<ScoreVector>& samples, const SegmentCommandConfig& seg,
                            double rho);

/// Element-wise mean of equal-length vectors.
ScoreVector mean_vector(const std::vector<ScoreVector>& rows);

}  // namespace scorediff
