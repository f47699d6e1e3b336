// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include "scorediff/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scorediff/error.hpp"

namespace scorediff {

std::vector<std::size_t> SegmentList::weights() const {
    std::vector<std::size_t> w;
    for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) w.push_back(boundaries[i + 1] - boundaries[i]);
    return w;
}

void SegmentList::validate() const {
    if (boundaries.size() < 2 || boundaries.front() != 0) throw ContractError("segments: need boundaries 0 = t0 < ... < tM, M >= 1");
    for (std::size_t i = 0; i + 1 < boundaries.size(); ++i)
        if (boundaries[i + 1] <= boundaries[i]) throw ContractError("segments: boundaries must be strictly increasing");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Prefix sums giving the scatter of any frame range in O(D).
class ScatterTable {
public:
    explicit ScatterTable(const FeatureMatrix& x) : n_(x.rows), d_(x.cols), sum_((n_ + 1) * d_, 0.0), sq_(n_ + 1, 0.0) {
        for (std::size_t t = 0; t < n_; ++t) {
            double s = 0.0;
            for (std::size_t j = 0; j < d_; ++j) {
                const double v = x(t, j);
                sum_[(t + 1) * d_ + j] = sum_[t * d_ + j] + v;
                s += v * v;
            }
            sq_[t + 1] = sq_[t] + s;
        }
    }

    // Scatter of frames [a, b).
    double operator()(std::size_t a, std::size_t b) const {
        const double len = static_cast<double>(b - a);
        double norm = 0.0;
        for (std::size_t j = 0; j < d_; ++j) {
            const double m = sum_[b * d_ + j] - sum_[a * d_ + j];
            norm += m * m;
        }
        return std::max(0.0, sq_[b] - sq_[a] - norm / len);
    }

private:
    std::size_t n_, d_;
    std::vector<double> sum_;
    std::vector<double> sq_;
};

struct DpResult {
    // cost[m][j]: best scatter of frames [0, j) with m change points.
    std::vector<std::vector<double>> cost;
    std::vector<std::vector<std::size_t>> back;
};

DpResult run_dp(const ScatterTable& scatter, std::size_t n, std::size_t max_cp) {
    DpResult r;
    r.cost.assign(max_cp + 1, std::vector<double>(n + 1, kInf));
    r.back.assign(max_cp + 1, std::vector<std::size_t>(n + 1, 0));
    for (std::size_t j = 1; j <= n; ++j) r.cost[0][j] = scatter(0, j);
    for (std::size_t m = 1; m <= max_cp; ++m)
        for (std::size_t j = m + 1; j <= n; ++j)
            for (std::size_t i = m; i < j; ++i) {
                const double c = r.cost[m - 1][i] + scatter(i, j);
                if (c < r.cost[m][j]) {
                    r.cost[m][j] = c;
                    r.back[m][j] = i;
                }
            }
    return r;
}

SegmentList backtrack(const DpResult& r, std::size_t n, std::size_t m) {
    std::vector<std::size_t> cuts{n};
    std::size_t j = n;
    for (std::size_t k = m; k > 0; --k) {
        j = r.back[k][j];
        cuts.push_back(j);
    }
    cuts.push_back(0);
    SegmentList seg;
    seg.boundaries.assign(cuts.rbegin(), cuts.rend());
    return seg;
}

void check_features(const FeatureMatrix& features, std::size_t max_cp, const char* what) {
    if (features.rows < 2) throw ContractError(std::string(what) + ": need at least 2 frames");
    if (features.values.size() != features.rows * features.cols) throw DimensionError(std::string(what) + ": ragged features");
    if (max_cp >= features.rows)
        throw ContractError(std::string(what) + ": change points (" + std::to_string(max_cp) + ") must be fewer than frames (" +
                            std::to_string(features.rows) + ")");
}

}  // namespace

SegmentList kts_segment_fixed(const FeatureMatrix& features, std::size_t num_change_points, double* objective) {
    check_features(features, num_change_points, "kts_segment_fixed");
    const std::size_t n = features.rows;
    const DpResult r = run_dp(ScatterTable(features), n, num_change_points);
    if (objective) *objective = r.cost[num_change_points][n];
    return backtrack(r, n, num_change_points);
}

SegmentList kts_segment(const FeatureMatrix& features, std::size_t max_segments, double penalty_coeff) {
    if (max_segments < 1) throw ContractError("kts_segment: max_segments must be at least 1");
    check_features(features, max_segments, "kts_segment");
    if (!(penalty_coeff >= 0.0)) throw ContractError("kts_segment: penalty_coeff must be non-negative");
    const std::size_t n = features.rows;
    const DpResult r = run_dp(ScatterTable(features), n, max_segments);
    const double nf = static_cast<double>(n);
    std::size_t best_m = 0;
    double best = r.cost[0][n];
    for (std::size_t m = 1; m <= max_segments; ++m) {
        const double mf = static_cast<double>(m);
        const double score = r.cost[m][n] + penalty_coeff * mf * (std::log(nf / mf) + 1.0);
        if (score < best) {
            best = score;
            best_m = m;
        }
    }
    return backtrack(r, n, best_m);
}

std::vector<double> clip_values(const ScoreVector& scores, const SegmentList& seg) {
    seg.validate();
    if (scores.size() != seg.num_frames())
        throw DimensionError("clip_values: " + std::to_string(scores.size()) + " scores for " + std::to_string(seg.num_frames()) +
                             " segmented frames");
    std::vector<double> v;
    v.reserve(seg.num_segments());
    for (std::size_t i = 0; i + 1 < seg.boundaries.size(); ++i) {
        double s = 0.0;
        for (std::size_t f = seg.boundaries[i]; f < seg.boundaries[i + 1]; ++f) s += scores[f];
        v.push_back(s / static_cast<double>(seg.boundaries[i + 1] - seg.boundaries[i]));
    }
    return v;
}

SegmentList uniform_segments(std::size_t n, std::size_t length) {
    if (n == 0 || length == 0) throw ContractError("uniform_segments: n and length must be positive");
    SegmentList seg;
    for (std::size_t b = length; b < n; b += length) seg.boundaries.push_back(b);
    seg.boundaries.push_back(n);
    return seg;
}

}  // namespace scorediff
