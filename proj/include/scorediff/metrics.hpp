// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "scorediff/data.hpp"
#include "scorediff/knapsack.hpp"

namespace scorediff {

// ---------------------------------------------------------------------------
// Rank correlations

/// Kendall tau-b: (C - D) / sqrt((n0 - n1)(n0 - n2)), where n1 and n2 count
/// pairs tied in a and in b. O(N log N). Throws ContractError when either
/// input is constant (the statistic is undefined).
double kendall_tau(std::span<const double> a, std::span<const double> b);

/// Ranks with ties sharing their average rank (1-based).
std::vector<double> average_ranks(std::span<const double> x);

/// Pearson correlation of average-tie ranks. Throws ContractError on zero
/// rank variance.
double spearman_rho(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Highlight detection and summary overlap

/// Average precision of shot ranking. Shots are ceil(5 fps) frames long (last
/// may be short); the top ceil(rho * shots) shots by mean ground truth are
/// positives (earlier shot wins ties); shots are ranked by mean prediction
/// (earlier shot wins ties). Needs at least 2 shots.
double map_at_rho(std::span<const double> pred, std::span<const double> gt, double fps, double rho);

/// Frame-overlap F1; 0 when either summary is empty.
double f1_summary(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

// ---------------------------------------------------------------------------
// Knapsack sensitivity

struct SensitivityContext {
    KPInstance instance;             // true values v, weights, capacity
    std::vector<double> predicted;   // v-hat
    std::vector<double> delta;       // v-hat - v
    BinarySummary optimum;           // y* = KP(v, w, capacity)
    std::vector<std::size_t> gamma0_plus;   // y*_i = 0, delta_i > 0
    std::vector<std::size_t> gamma1_minus;  // y*_i = 1, delta_i < 0
};

/// Solves the true instance and classifies the perturbed items.
SensitivityContext make_sensitivity_context(const KPInstance& truth, std::span<const double> predicted);

/// Psi+ = max over Gamma0+ of the best true value of a solution forced to
/// contain i: v_i + v . KP(v - v_i e_i, w, C - w_i) (items heavier than C are
/// skipped). Psi- = max over Gamma1- of v . KP(v - v_i e_i, w, C), the best
/// solution without i. Empty maxima are nullopt.
struct PsiTerms {
    std::optional<double> psi_plus;
    std::optional<double> psi_minus;
};
PsiTerms psi_terms(const SensitivityContext& ctx);

/// Confidence score: sum_{Gamma0+} dv - sum_{Gamma1-} dv - v . y* + max(Psi+, Psi-).
/// When both Psi terms are empty the max term is dropped. CIS <= 0 certifies
/// that y* stays optimal for v-hat.
double cis(const SensitivityContext& ctx);

/// Critical ratio of the greedy relaxation over all items except `excluded`
/// with budget `budget`: items sorted by v/w descending, the first whose
/// cumulative weight exceeds the budget is critical. nullopt when everything
/// fits.
std::optional<double> critical_ratio(const KPInstance& inst, std::size_t excluded, long long budget);

struct InclusionInterval {
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    double delta_bound = 0.0;            // Delta_i^- (included) or Delta_i^+ (excluded)
    std::optional<double> ratio_bound;   // w_i max mu - v_i or w_i min mu - v_i
    bool ratio_bound_applied = false;

    bool contains(double x) const { return x >= lower && x <= upper; }
};

/// Safe perturbation interval per item with Gamma = items whose delta is
/// nonzero. For y*_i = 1 the interval is [Delta_i^-, inf) with
/// Delta_i^- = v . KP(v - v_i e_i, w, C) - v . y*; for y*_i = 0 it is
/// (-inf, Delta_i^+] with Delta_i^+ = v . y* - Psi+_i. The critical-ratio
/// bound tightens the interval when it is defined and keeps 0 inside.
std::vector<InclusionInterval> inclusion_intervals(const SensitivityContext& ctx);
/// Same with an explicit Gamma.
std::vector<InclusionInterval> inclusion_intervals(const SensitivityContext& ctx, std::span<const std::size_t> gamma);

/// Weight-normalised fraction of items whose delta lies in its interval.
double wir(const SensitivityContext& ctx, const std::vector<InclusionInterval>& intervals);

/// sum_i w_i |dv_i|.
double wse(const SensitivityContext& ctx);

// ---------------------------------------------------------------------------
// Multi-annotator coverage and projection

/// Entry r: fraction of generated samples with kendall_tau(sample, annotation r) >= threshold.
std::vector<double> annotator_coverage(const std::vector<ScoreVector>& generated, const std::vector<ScoreVector>& annotations,
                                       double threshold = 0.25);

/// Principal axes fit by power iteration with deflation.
struct PrincipalComponents {
    std::vector<double> mean;
    std::vector<std::vector<double>> axes;  // unit vectors
    std::vector<double> variances;          // eigenvalues of the covariance

    std::vector<double> project(std::span<const double> x) const;
    std::vector<double> reconstruct(std::span<const double> coords) const;
};

PrincipalComponents fit_principal_components(const std::vector<ScoreVector>& rows, std::size_t num_components = 2,
                                             std::size_t max_iterations = 5000, double tolerance = 1e-13);

}  // namespace scorediff
