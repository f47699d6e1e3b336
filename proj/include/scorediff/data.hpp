// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace scorediff {

/// Per-frame importance scores in [0, 1].
using ScoreVector = std::vector<double>;

/// Row-major frames x dims matrix of frame embeddings.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    FeatureMatrix() = default;
    FeatureMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct VideoRecord {
    std::string id;
    double fps = 1.0;
    FeatureMatrix features;
    std::vector<ScoreVector> annotations;

    std::size_t num_frames() const { return features.rows; }
};

/// Throws ValidationError naming the video and field on any violation.
void validate(const VideoRecord& video);

std::vector<VideoRecord> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const std::vector<VideoRecord>& videos);

struct SynthConfig {
    std::size_t num_videos = 20;
    std::size_t frames_per_video = 60;
    std::size_t feature_dim = 8;
    std::size_t num_annotators = 10;
    std::size_t num_modes = 2;
    double mode_noise = 0.05;     // per-annotator jitter std
    double feature_noise = 0.1;   // noise on feature channels
    double fps = 2.0;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
};

/// Ground truth behind a synthetic video: one template per mode and the mode
/// each annotator was drawn from.
struct ModeTable {
    std::string video_id;
    std::vector<std::size_t> annotator_mode;
    std::vector<ScoreVector> templates;
};

struct SynthDataset {
    std::vector<VideoRecord> videos;
    std::vector<ModeTable> modes;
};

/// Multi-annotator data with known summary modes.
///
/// Each video is split into `num_modes` contiguous regions at random cut
/// points. Template k is a flat-topped bump (logistic edges) over region k and
/// low elsewhere, so the templates partition the video and their average is
/// nearly flat. Annotators are assigned to modes in balanced counts and emit
/// their template plus clipped Gaussian jitter. Feature channel k carries
/// template k plus noise; remaining channels carry piecewise-constant shot
/// offsets (runs of 3 to 8 frames) plus noise.
SynthDataset synth_generate(const SynthConfig& cfg);

/// Training and held-out views of a synthetic dataset. The held-out set keeps
/// the same videos and features with only the withheld annotators.
struct AnnotatorSplit {
    std::vector<VideoRecord> train;
    std::vector<VideoRecord> heldout;
    std::vector<ModeTable> train_modes;
    std::vector<ModeTable> heldout_modes;
};

/// Withholds the first `per_mode` annotators of every mode in every video.
/// Each mode must keep at least one training annotator.
AnnotatorSplit hold_out_annotators(const SynthDataset& data, std::size_t per_mode);

void save_mode_table(const std::filesystem::path& path, const std::vector<ModeTable>& modes);
std::vector<ModeTable> load_mode_table(const std::filesystem::path& path);

/// Clamps every entry into [eps, 1 - eps]; eps must lie in (0, 0.5).
ScoreVector logit_clip(const ScoreVector& s, double eps);

/// Default clipping constant for logit transforms.
inline constexpr double kDefaultLogitEps = 1e-3;

}  // namespace scorediff
