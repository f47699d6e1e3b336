// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used as test oracles. Nothing here
// calls into the library code it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "scorediff/knapsack.hpp"

namespace scorediff::testing {

struct BruteForceResult {
    double best = 0.0;
    std::vector<std::vector<std::uint8_t>> optima;  // all selections within tol of best
};

/// Enumerates all 2^M selections.
inline BruteForceResult brute_force_kp(const std::vector<double>& v, const std::vector<std::size_t>& w, std::size_t cap,
                                       double tol = 1e-9) {
    const std::size_t m = v.size();
    std::vector<double> value(std::size_t{1} << m, -1.0);
    BruteForceResult r;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
        double val = 0.0;
        std::size_t wt = 0;
        for (std::size_t i = 0; i < m; ++i)
            if (mask >> i & 1U) {
                val += v[i];
                wt += w[i];
            }
        if (wt <= cap) {
            value[mask] = val;
            r.best = std::max(r.best, val);
        }
    }
    const double slack = tol * std::max(1.0, std::abs(r.best));
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask)
        if (value[mask] >= 0.0 && value[mask] >= r.best - slack) {
            std::vector<std::uint8_t> y(m);
            for (std::size_t i = 0; i < m; ++i) y[i] = mask >> i & 1U;
            r.optima.push_back(std::move(y));
        }
    return r;
}

inline double selection_value(const std::vector<double>& v, const std::vector<std::uint8_t>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (y[i]) s += v[i];
    return s;
}

/// Tau-b straight from the pair-counting definition.
inline double naive_kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
    long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0, pairs = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            ++pairs;
            const double da = a[i] - a[j], db = b[i] - b[j];
            if (da == 0.0) ++ties_a;
            if (db == 0.0) ++ties_b;
            if (da == 0.0 || db == 0.0) continue;
            if ((da > 0) == (db > 0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    return static_cast<double>(concordant - discordant) /
           std::sqrt(static_cast<double>(pairs - ties_a) * static_cast<double>(pairs - ties_b));
}

/// Average ranks by counting smaller and equal elements, O(N^2).
inline std::vector<double> naive_ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double less = 0, equal = 0;
        for (double y : x) {
            if (y < x[i]) less += 1;
            if (y == x[i]) equal += 1;
        }
        r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
}

inline double naive_spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = naive_ranks(a), rb = naive_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i] / n;
        mb += rb[i] / n;
    }
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

/// Random knapsack instance with M items, integer weights in [1, max_w] and
/// capacity a random fraction of the total weight.
inline KPInstance random_instance(std::mt19937_64& rng, std::size_t m, std::size_t max_w = 10) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> weight(1, max_w);
    KPInstance inst;
    std::size_t total = 0;
    for (std::size_t i = 0; i < m; ++i) {
        inst.values.push_back(unit(rng));
        inst.weights.push_back(weight(rng));
        total += inst.weights.back();
    }
    inst.capacity = static_cast<std::size_t>(std::floor(unit(rng) * static_cast<double>(total)));
    return inst;
}

}  // namespace scorediff::testing
