// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "scorediff/data.hpp"

namespace scorediff {

/// Disjoint, covering frame intervals [boundaries[i], boundaries[i+1]).
struct SegmentList {
    std::vector<std::size_t> boundaries{0};

    std::size_t num_segments() const noexcept { return boundaries.empty() ? 0 : boundaries.size() - 1; }
    std::size_t num_frames() const noexcept { return boundaries.empty() ? 0 : boundaries.back(); }
    /// Segment lengths in frames.
    std::vector<std::size_t> weights() const;
    /// Throws ContractError unless 0 = t0 < t1 < ... < tM with M >= 1.
    void validate() const;
};

/// Segmentation with `num_change_points` interior boundaries minimising the
/// within-segment scatter sum ||x_t - mu_j||^2. Also returns that scatter.
SegmentList kts_segment_fixed(const FeatureMatrix& features, std::size_t num_change_points, double* objective = nullptr);

/// Kernel temporal segmentation with a linear kernel. Every change-point
/// count m in [0, max_segments] is solved exactly by dynamic programming; the
/// returned m minimises scatter(m) + penalty_coeff * m * (log(N / m) + 1).
SegmentList kts_segment(const FeatureMatrix& features, std::size_t max_segments, double penalty_coeff = 1.0);

/// Mean score inside each segment.
std::vector<double> clip_values(const ScoreVector& scores, const SegmentList& seg);

/// Splits [0, n) into pieces of `length` frames (the last may be short).
SegmentList uniform_segments(std::size_t n, std::size_t length);

}  // namespace scorediff
