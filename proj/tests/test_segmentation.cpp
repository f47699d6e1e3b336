// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <functional>
#include <limits>
#include <random>

#include "scorediff/error.hpp"
#include "scorediff/segmentation.hpp"

using namespace scorediff;

namespace {

// Direct two-pass scatter of frames [a, b).
double naive_scatter(const FeatureMatrix& x, std::size_t a, std::size_t b) {
    double total = 0;
    for (std::size_t j = 0; j < x.cols; ++j) {
        double mean = 0;
        for (std::size_t t = a; t < b; ++t) mean += x(t, j);
        mean /= static_cast<double>(b - a);
        for (std::size_t t = a; t < b; ++t) total += (x(t, j) - mean) * (x(t, j) - mean);
    }
    return total;
}

// Exhaustive search over all placements of m interior boundaries.
double brute_force_objective(const FeatureMatrix& x, std::size_t m) {
    const std::size_t n = x.rows;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> cuts;
    std::function<void(std::size_t, double)> rec = [&](std::size_t start, double acc) {
        if (cuts.size() == m) {
            best = std::min(best, acc + naive_scatter(x, start, n));
            return;
        }
        for (std::size_t c = start + 1; c < n; ++c) {
            cuts.push_back(c);
            rec(c, acc + naive_scatter(x, start, c));
            cuts.pop_back();
        }
    };
    rec(0, 0.0);
    return best;
}

FeatureMatrix random_features(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    std::normal_distribution<double> normal(0.0, 1.0);
    FeatureMatrix f(n, d);
    for (double& v : f.values) v = normal(rng);
    return f;
}

}  // namespace

TEST(Kts, ConstantFeaturesGiveOneSegment) {
    const FeatureMatrix f(30, 3, 0.7);
    for (double pen : {1e-6, 0.5, 10.0}) {
        const SegmentList s = kts_segment(f, 10, pen);
        EXPECT_EQ(s.num_segments(), 1u);
        EXPECT_EQ(s.num_frames(), 30u);
    }
}

TEST(Kts, BlockSignalSplitsAtTheJump) {
    FeatureMatrix f(6, 2);
    for (std::size_t t = 0; t < 6; ++t) {
        f(t, 0) = t < 3 ? 1.0 : -2.0;
        f(t, 1) = t < 3 ? 0.5 : 3.0;
    }
    // Independent check: the best single boundary by exhaustive search.
    std::size_t best_cut = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 1; c < 6; ++c) {
        const double v = naive_scatter(f, 0, c) + naive_scatter(f, c, 6);
        if (v < best) {
            best = v;
            best_cut = c;
        }
    }
    EXPECT_EQ(best_cut, 3u);
    const SegmentList s = kts_segment_fixed(f, 1);
    EXPECT_EQ(s.boundaries, (std::vector<std::size_t>{0, 3, 6}));
}

TEST(Kts, DynamicProgramMatchesExhaustiveSearch) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 4 + trial % 9;  // 4..12
        const FeatureMatrix f = random_features(rng, n, 1 + trial % 3);
        for (std::size_t m = 0; m <= std::min<std::size_t>(3, n - 1); ++m) {
            double objective = 0;
            const SegmentList s = kts_segment_fixed(f, m, &objective);
            EXPECT_EQ(s.num_segments(), m + 1);
            double recomputed = 0;
            for (std::size_t i = 0; i < s.num_segments(); ++i) recomputed += naive_scatter(f, s.boundaries[i], s.boundaries[i + 1]);
            EXPECT_NEAR(objective, recomputed, 1e-9);
            EXPECT_NEAR(objective, brute_force_objective(f, m), 1e-9);
        }
    }
}

TEST(Kts, PenaltySelectsFewerSegmentsWhenLarger) {
    std::mt19937_64 rng(22);
    FeatureMatrix f = random_features(rng, 40, 2);
    for (double& x : f.values) x *= 0.2;
    for (std::size_t t = 0; t < 40; ++t) f(t, 0) += static_cast<double>(t / 10) * 4.0;
    const SegmentList s = kts_segment(f, 8, 1.0);
    EXPECT_EQ(s.boundaries, (std::vector<std::size_t>{0, 10, 20, 30, 40}));
    EXPECT_LE(kts_segment(f, 8, 1e4).num_segments(), s.num_segments());
    EXPECT_EQ(kts_segment(f, 8, 1e-9).num_segments(), 9u);
    EXPECT_THROW(kts_segment(f, 40, 1.0), ContractError);
}

TEST(Kts, BoundariesInvariantUnderJointRescaling) {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 10; ++trial) {
        FeatureMatrix f = random_features(rng, 30, 3);
        for (std::size_t t = 0; t < 30; ++t) f(t, trial % 3) += t < 12 ? 0.0 : 2.5;
        FeatureMatrix g = f;
        for (double& x : g.values) x *= 3.0;
        EXPECT_EQ(kts_segment(f, 6, 2.0).boundaries, kts_segment(g, 6, 18.0).boundaries);
    }
}

TEST(ClipValues, ClosedForms) {
    const SegmentList s{{0, 2, 5}};
    EXPECT_EQ(clip_values(ScoreVector(5, 0.3), s), (std::vector<double>{0.3, 0.3}));
    EXPECT_EQ(clip_values({1.0, 0.0}, SegmentList{{0, 1, 2}}), (std::vector<double>{1.0, 0.0}));
    EXPECT_THROW(clip_values(ScoreVector(4, 0.3), s), DimensionError);
}

TEST(ClipValues, MatchesLoopAveraging) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 10 + trial;
        ScoreVector scores(n);
        for (double& x : scores) x = unit(rng);
        SegmentList s{{0}};
        std::size_t pos = 0;
        while (pos < n) {
            pos = std::min(n, pos + 1 + static_cast<std::size_t>(unit(rng) * 7));
            s.boundaries.push_back(pos);
        }
        const auto v = clip_values(scores, s);
        for (std::size_t i = 0; i < s.num_segments(); ++i) {
            double acc = 0;
            std::size_t count = 0;
            for (std::size_t t = s.boundaries[i]; t < s.boundaries[i + 1]; ++t, ++count) acc += scores[t];
            EXPECT_NEAR(v[i], acc / static_cast<double>(count), 1e-14);
        }
    }
}

TEST(Segments, UniformAndValidation) {
    const SegmentList s = uniform_segments(10, 4);
    EXPECT_EQ(s.boundaries, (std::vector<std::size_t>{0, 4, 8, 10}));
    EXPECT_EQ(s.weights(), (std::vector<std::size_t>{4, 4, 2}));
    EXPECT_THROW((SegmentList{{0, 3, 3}}).validate(), ContractError);
    EXPECT_THROW((SegmentList{{1, 3}}).validate(), ContractError);
}
