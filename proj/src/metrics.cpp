// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include "scorediff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "scorediff/error.hpp"

namespace scorediff {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size())
        throw DimensionError(std::string(what) + ": lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    if (a.size() < 2) throw ContractError(std::string(what) + ": need at least 2 entries");
}

// Pairs tied within runs of equal keys in an already sorted sequence.
template <typename Eq>
std::int64_t tied_pairs(const std::vector<std::size_t>& order, Eq eq) {
    std::int64_t total = 0, run = 1;
    for (std::size_t i = 1; i <= order.size(); ++i) {
        if (i < order.size() && eq(order[i - 1], order[i])) {
            ++run;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    return total;
}

// Sorts `keys` ascending and returns the number of strict inversions.
std::int64_t count_inversions(std::vector<double>& keys) {
    std::vector<double> buf(keys.size());
    std::int64_t swaps = 0;
    for (std::size_t width = 1; width < keys.size(); width *= 2) {
        for (std::size_t lo = 0; lo < keys.size(); lo += 2 * width) {
            const std::size_t mid = std::min(lo + width, keys.size()), hi = std::min(lo + 2 * width, keys.size());
            std::size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (keys[j] < keys[i]) {
                    swaps += static_cast<std::int64_t>(mid - i);
                    buf[k++] = keys[j++];
                } else {
                    buf[k++] = keys[i++];
                }
            }
            while (i < mid) buf[k++] = keys[i++];
            while (j < hi) buf[k++] = keys[j++];
        }
        keys.swap(buf);
    }
    return swaps;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw ContractError("spearman_rho: ranks have zero variance");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double kendall_tau(std::span<const double> a, std::span<const double> b) {
    check_pair(a, b, "kendall_tau");
    const std::size_t n = a.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j] || (a[i] == a[j] && b[i] < b[j]); });

    const std::int64_t n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
    const std::int64_t n1 = tied_pairs(order, [&](std::size_t i, std::size_t j) { return a[i] == a[j]; });
    const std::int64_t n3 = tied_pairs(order, [&](std::size_t i, std::size_t j) { return a[i] == a[j] && b[i] == b[j]; });
    std::vector<double> keys(n);
    for (std::size_t i = 0; i < n; ++i) keys[i] = b[order[i]];
    const std::int64_t swaps = count_inversions(keys);
    std::vector<std::size_t> identity(n);
    std::iota(identity.begin(), identity.end(), 0);
    const std::int64_t n2 = tied_pairs(identity, [&](std::size_t i, std::size_t j) { return keys[i] == keys[j]; });

    const std::int64_t untied_a = n0 - n1, untied_b = n0 - n2;
    if (untied_a == 0 || untied_b == 0) throw ContractError("kendall_tau: undefined for a constant input");
    const std::int64_t c_minus_d = n0 - n1 - n2 + n3 - 2 * swaps;
    return static_cast<double>(c_minus_d) / std::sqrt(static_cast<double>(untied_a) * static_cast<double>(untied_b));
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> rank(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
        i = j + 1;
    }
    return rank;
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
    check_pair(a, b, "spearman_rho");
    const std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
    return pearson(ra, rb);
}

double map_at_rho(std::span<const double> pred, std::span<const double> gt, double fps, double rho) {
    if (pred.size() != gt.size()) throw DimensionError("map_at_rho: prediction and ground truth lengths differ");
    if (!(fps > 0.0)) throw ContractError("map_at_rho: fps must be positive");
    if (!(rho > 0.0 && rho <= 1.0)) throw ContractError("map_at_rho: rho must lie in (0, 1]");
    const std::size_t shot_len = static_cast<std::size_t>(std::max(1.0, std::ceil(5.0 * fps - 1e-9)));
    const std::size_t n = pred.size();
    const std::size_t shots = (n + shot_len - 1) / shot_len;
    if (shots < 2)
        throw ContractError("map_at_rho: " + std::to_string(n) + " frames at " + std::to_string(fps) + " fps give fewer than 2 shots");

    std::vector<double> p(shots, 0.0), g(shots, 0.0);
    for (std::size_t s = 0; s < shots; ++s) {
        const std::size_t lo = s * shot_len, hi = std::min(n, lo + shot_len);
        for (std::size_t f = lo; f < hi; ++f) {
            p[s] += pred[f];
            g[s] += gt[f];
        }
        p[s] /= static_cast<double>(hi - lo);
        g[s] /= static_cast<double>(hi - lo);
    }
    auto ranking = [shots](const std::vector<double>& m) {
        std::vector<std::size_t> order(shots);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return m[i] > m[j]; });
        return order;
    };
    const std::size_t num_pos = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(rho * static_cast<double>(shots) - 1e-9)));
    std::vector<bool> positive(shots, false);
    const auto by_gt = ranking(g);
    for (std::size_t k = 0; k < num_pos; ++k) positive[by_gt[k]] = true;

    const auto by_pred = ranking(p);
    double hits = 0.0, ap = 0.0;
    for (std::size_t k = 0; k < shots; ++k)
        if (positive[by_pred[k]]) {
            hits += 1.0;
            ap += hits / static_cast<double>(k + 1);
        }
    return ap / static_cast<double>(num_pos);
}

double f1_summary(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
    if (pred.size() != gt.size()) throw DimensionError("f1_summary: lengths differ");
    double overlap = 0.0, np = 0.0, ng = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        np += pred[i] ? 1.0 : 0.0;
        ng += gt[i] ? 1.0 : 0.0;
        overlap += pred[i] && gt[i] ? 1.0 : 0.0;
    }
    if (np == 0.0 || ng == 0.0 || overlap == 0.0) return 0.0;
    const double precision = overlap / np, recall = overlap / ng;
    return 2.0 * precision * recall / (precision + recall);
}

// ---------------------------------------------------------------------------

SensitivityContext make_sensitivity_context(const KPInstance& truth, std::span<const double> predicted) {
    truth.validate();
    if (predicted.size() != truth.size()) throw DimensionError("sensitivity: predicted values length mismatch");
    SensitivityContext ctx;
    ctx.instance = truth;
    ctx.predicted.assign(predicted.begin(), predicted.end());
    ctx.optimum = solve_kp(truth);
    ctx.delta.resize(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ctx.delta[i] = ctx.predicted[i] - truth.values[i];
        if (!ctx.optimum.selection[i] && ctx.delta[i] > 0.0) ctx.gamma0_plus.push_back(i);
        if (ctx.optimum.selection[i] && ctx.delta[i] < 0.0) ctx.gamma1_minus.push_back(i);
    }
    return ctx;
}

namespace {

// Best true value over selections that leave item i out, with `capacity`.
double best_without(const KPInstance& inst, std::size_t i, std::size_t capacity) {
    KPInstance reduced = inst;
    reduced.values[i] = 0.0;
    reduced.capacity = capacity;
    std::vector<std::uint8_t> y = solve_kp(reduced).selection;
    y[i] = 0;
    return make_summary(inst, std::move(y)).total_value;
}

// Best true value over selections forced to contain i, or nullopt if i cannot fit.
std::optional<double> best_with(const KPInstance& inst, std::size_t i) {
    if (inst.weights[i] > inst.capacity) return std::nullopt;
    return inst.values[i] + best_without(inst, i, inst.capacity - inst.weights[i]);
}

}  // namespace

PsiTerms psi_terms(const SensitivityContext& ctx) {
    PsiTerms out;
    for (std::size_t i : ctx.gamma0_plus)
        if (const auto v = best_with(ctx.instance, i)) out.psi_plus = std::max(out.psi_plus.value_or(*v), *v);
    for (std::size_t i : ctx.gamma1_minus) {
        const double v = best_without(ctx.instance, i, ctx.instance.capacity);
        out.psi_minus = std::max(out.psi_minus.value_or(v), v);
    }
    return out;
}

double cis(const SensitivityContext& ctx) {
    double shift = 0.0;
    for (std::size_t i : ctx.gamma0_plus) shift += ctx.delta[i];
    for (std::size_t i : ctx.gamma1_minus) shift -= ctx.delta[i];
    const PsiTerms psi = psi_terms(ctx);
    double value = shift - ctx.optimum.total_value;
    if (psi.psi_plus || psi.psi_minus)
        value += std::max(psi.psi_plus.value_or(-std::numeric_limits<double>::infinity()),
                          psi.psi_minus.value_or(-std::numeric_limits<double>::infinity()));
    return value;
}

std::optional<double> critical_ratio(const KPInstance& inst, std::size_t excluded, long long budget) {
    std::vector<std::size_t> items;
    for (std::size_t i = 0; i < inst.size(); ++i)
        if (i != excluded) items.push_back(i);
    auto ratio = [&](std::size_t i) { return inst.values[i] / static_cast<double>(inst.weights[i]); };
    std::stable_sort(items.begin(), items.end(), [&](std::size_t i, std::size_t j) { return ratio(i) > ratio(j); });
    long long cumulative = 0;
    for (std::size_t i : items) {
        cumulative += static_cast<long long>(inst.weights[i]);
        if (cumulative > budget) return ratio(i);
    }
    return std::nullopt;
}

std::vector<InclusionInterval> inclusion_intervals(const SensitivityContext& ctx) {
    std::vector<std::size_t> gamma;
    for (std::size_t i = 0; i < ctx.delta.size(); ++i)
        if (ctx.delta[i] != 0.0) gamma.push_back(i);
    return inclusion_intervals(ctx, gamma);
}

std::vector<InclusionInterval> inclusion_intervals(const SensitivityContext& ctx, std::span<const std::size_t> gamma) {
    const KPInstance& inst = ctx.instance;
    const std::vector<std::uint8_t>& y = ctx.optimum.selection;
    const double opt = ctx.optimum.total_value;

    std::optional<double> mu_min, mu_max;
    for (std::size_t k : gamma) {
        if (k >= inst.size()) throw DimensionError("inclusion_intervals: Gamma index out of range");
        const long long budget = static_cast<long long>(inst.capacity) - (y[k] ? 0LL : static_cast<long long>(inst.weights[k]));
        if (const auto mu = critical_ratio(inst, k, budget)) {
            mu_min = std::min(mu_min.value_or(*mu), *mu);
            mu_max = std::max(mu_max.value_or(*mu), *mu);
        }
    }

    std::vector<InclusionInterval> out(inst.size());
    for (std::size_t i = 0; i < inst.size(); ++i) {
        InclusionInterval& iv = out[i];
        const double w = static_cast<double>(inst.weights[i]);
        if (y[i]) {
            // Optimality of y* makes this non-positive; the clamp removes rounding noise.
            iv.delta_bound = std::min(0.0, best_without(inst, i, inst.capacity) - opt);
            iv.lower = iv.delta_bound;
            if (mu_max) {
                iv.ratio_bound = w * *mu_max - inst.values[i];
                if (*iv.ratio_bound <= 0.0) {
                    iv.lower = std::max(iv.lower, *iv.ratio_bound);
                    iv.ratio_bound_applied = true;
                }
            }
        } else {
            const auto with_i = best_with(inst, i);
            iv.delta_bound = with_i ? std::max(0.0, opt - *with_i) : std::numeric_limits<double>::infinity();
            iv.upper = iv.delta_bound;
            if (mu_min) {
                iv.ratio_bound = w * *mu_min - inst.values[i];
                if (*iv.ratio_bound >= 0.0) {
                    iv.upper = std::min(iv.upper, *iv.ratio_bound);
                    iv.ratio_bound_applied = true;
                }
            }
        }
    }
    return out;
}

double wir(const SensitivityContext& ctx, const std::vector<InclusionInterval>& intervals) {
    if (intervals.size() != ctx.delta.size()) throw DimensionError("wir: one interval per item required");
    double inside = 0.0, total = 0.0;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const double w = static_cast<double>(ctx.instance.weights[i]);
        total += w;
        if (intervals[i].contains(ctx.delta[i])) inside += w;
    }
    return total > 0.0 ? inside / total : 0.0;
}

double wse(const SensitivityContext& ctx) {
    double s = 0.0;
    for (std::size_t i = 0; i < ctx.delta.size(); ++i) s += static_cast<double>(ctx.instance.weights[i]) * std::abs(ctx.delta[i]);
    return s;
}

// ---------------------------------------------------------------------------

std::vector<double> annotator_coverage(const std::vector<ScoreVector>& generated, const std::vector<ScoreVector>& annotations,
                                       double threshold) {
    if (generated.empty()) throw ContractError("annotator_coverage: need at least one generated sample");
    std::vector<double> out(annotations.size(), 0.0);
    for (std::size_t r = 0; r < annotations.size(); ++r) {
        std::size_t hits = 0;
        for (const auto& g : generated)
            if (kendall_tau(g, annotations[r]) >= threshold) ++hits;
        out[r] = static_cast<double>(hits) / static_cast<double>(generated.size());
    }
    return out;
}

std::vector<double> PrincipalComponents::project(std::span<const double> x) const {
    if (x.size() != mean.size()) throw DimensionError("projection: dimension mismatch");
    std::vector<double> c(axes.size(), 0.0);
    for (std::size_t k = 0; k < axes.size(); ++k)
        for (std::size_t j = 0; j < x.size(); ++j) c[k] += (x[j] - mean[j]) * axes[k][j];
    return c;
}

std::vector<double> PrincipalComponents::reconstruct(std::span<const double> coords) const {
    if (coords.size() != axes.size()) throw DimensionError("reconstruct: coordinate count mismatch");
    std::vector<double> x = mean;
    for (std::size_t k = 0; k < axes.size(); ++k)
        for (std::size_t j = 0; j < x.size(); ++j) x[j] += coords[k] * axes[k][j];
    return x;
}

PrincipalComponents fit_principal_components(const std::vector<ScoreVector>& rows, std::size_t num_components,
                                             std::size_t max_iterations, double tolerance) {
    if (rows.empty()) throw ContractError("principal components: no rows");
    const std::size_t d = rows[0].size();
    for (const auto& r : rows)
        if (r.size() != d) throw DimensionError("principal components: ragged rows");
    if (num_components == 0 || num_components > d) throw ContractError("principal components: bad component count");

    PrincipalComponents pc;
    pc.mean.assign(d, 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < d; ++j) pc.mean[j] += r[j];
    for (double& m : pc.mean) m /= static_cast<double>(rows.size());

    std::vector<double> cov(d * d, 0.0);
    for (const auto& r : rows)
        for (std::size_t i = 0; i < d; ++i) {
            const double ci = r[i] - pc.mean[i];
            for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += ci * (r[j] - pc.mean[j]);
        }
    for (double& c : cov) c /= static_cast<double>(rows.size());

    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto normalise = [](std::vector<double>& v) {
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n > 0.0)
            for (double& x : v) x /= n;
        return n;
    };
    for (std::size_t k = 0; k < num_components; ++k) {
        std::vector<double> v(d);
        for (double& x : v) x = normal(rng);
        normalise(v);
        double lambda = 0.0;
        for (std::size_t it = 0; it < max_iterations; ++it) {
            std::vector<double> next(d, 0.0);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) next[i] += cov[i * d + j] * v[j];
            // Deflate: stay orthogonal to the axes already found.
            for (const auto& a : pc.axes) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += next[j] * a[j];
                for (std::size_t j = 0; j < d; ++j) next[j] -= dot * a[j];
            }
            lambda = normalise(next);
            if (lambda == 0.0) break;
            double change = 0.0;
            for (std::size_t j = 0; j < d; ++j) change = std::max(change, std::abs(next[j] - v[j]));
            v.swap(next);
            if (change < tolerance) break;
        }
        if (lambda == 0.0) {
            // No variance left: take the first basis direction orthogonal to the found axes.
            for (std::size_t j = 0; j < d; ++j) {
                std::vector<double> e(d, 0.0);
                e[j] = 1.0;
                for (const auto& a : pc.axes)
                    for (std::size_t i = 0; i < d; ++i) e[i] -= a[j] * a[i];
                if (normalise(e) > 1e-8) {
                    v = std::move(e);
                    break;
                }
            }
        }
        pc.axes.push_back(v);
        pc.variances.push_back(lambda);
    }
    return pc;
}

}  // namespace scorediff
