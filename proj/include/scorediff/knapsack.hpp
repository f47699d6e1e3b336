// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "scorediff/data.hpp"
#include "scorediff/segmentation.hpp"

namespace scorediff {

/// Two objective values closer than this (relative to max(1, |optimum|)) are
/// treated as tied. Absorbs summation-order rounding in quantized instances.
inline constexpr double kKnapsackTieTolerance = 1e-9;

struct KPInstance {
    std::vector<double> values;       // >= 0
    std::vector<std::size_t> weights;  // >= 1
    std::size_t capacity = 0;

    std::size_t size() const noexcept { return values.size(); }
    /// Throws ContractError / DimensionError.
    void validate() const;
};

struct BinarySummary {
    std::vector<std::uint8_t> selection;
    double total_value = 0.0;
    std::size_t total_weight = 0;
};

/// v . y and w . y for an arbitrary selection.
BinarySummary make_summary(const KPInstance& inst, std::vector<std::uint8_t> selection);

/// Exact 0/1 knapsack by dynamic programming over integer capacity with real
/// profits. Among co-optimal selections the lexicographically smallest one
/// (item 0 excluded before included) is returned.
BinarySummary solve_kp(const KPInstance& inst);

struct OptimaSet {
    double optimal_value = 0.0;
    std::vector<BinarySummary> solutions;  // lexicographic order; solutions[0] == solve_kp
    bool truncated = false;                // more optima exist beyond `limit`
};

/// Every distinct selection attaining the optimum, up to `limit` of them.
OptimaSet enumerate_optima(const KPInstance& inst, std::size_t limit);

/// floor(rho * n), guarded against representation error in rho * n.
std::size_t budget_capacity(double rho, std::size_t n);

struct FrameSummary {
    std::vector<std::uint8_t> frames;  // length N
    SegmentList segments;
    std::vector<double> clip_values;
    BinarySummary clips;
};

/// Segment values are mean scores, weights are segment lengths and the
/// capacity is floor(rho * N). The clip selection is expanded to frames.
FrameSummary generate_summary(const ScoreVector& scores, const SegmentList& seg, double rho);

/// Midpoint of each value's bin among K uniform bins over [0, 1]; values
/// outside [0, 1] fall into the end bins.
std::vector<double> quantize_values(const std::vector<double>& v, std::size_t num_bins);

struct MultiplicityConfig {
    std::size_t num_items = 15;
    std::vector<std::size_t> bins{4, 16, 64, 256, 1024};
    std::size_t trials = 2000;
    double rho = 0.15;  // capacity = floor(rho * total weight)
    std::size_t min_weight = 1;
    std::size_t max_weight = 10;
    /// Multiplies the N(0, 1/K) perturbation; 0 disables it.
    double perturbation_scale = 1.0;
    /// When false, profits are used unquantized (K still sets the perturbation).
    bool quantize = true;
    std::size_t enumeration_limit = 1u << 20;
    std::uint64_t seed = 0;
    /// Worker threads; results do not depend on this.
    std::size_t workers = 1;

    void validate() const;
};

struct MultiplicityRow {
    std::size_t bins = 0;
    double expected_num_optima = 0.0;
    double expected_l1_delta = 0.0;
    double stderr_optima = 0.0;
    double stderr_delta = 0.0;
};

/// Monte-Carlo estimate of the number of optima and of the L1 distance between
/// the solutions for v1 and v1 + dv, dv ~ N(0, I/K), after quantization.
/// Each trial draws its instance from a seed derived from (seed, trial), so
/// every K sees the same instances.
std::vector<MultiplicityRow> kp_multiplicity_study(const MultiplicityConfig& cfg);

void write_multiplicity_csv(std::ostream& out, const std::vector<MultiplicityRow>& rows);

}  // namespace scorediff
