// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include "scorediff/knapsack.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <string>
#include <thread>

#include "scorediff/error.hpp"

namespace scorediff {

void KPInstance::validate() const {
    if (values.size() != weights.size())
        throw DimensionError("knapsack: " + std::to_string(values.size()) + " values but " + std::to_string(weights.size()) +
                             " weights");
    for (double v : values)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ContractError("knapsack: values must be finite and non-negative");
    for (std::size_t w : weights)
        if (w == 0) throw ContractError("knapsack: weights must be positive");
}

BinarySummary make_summary(const KPInstance& inst, std::vector<std::uint8_t> selection) {
    if (selection.size() != inst.size()) throw DimensionError("knapsack: selection length mismatch");
    BinarySummary s;
    for (std::size_t i = 0; i < selection.size(); ++i)
        if (selection[i]) {
            s.total_value += inst.values[i];
            s.total_weight += inst.weights[i];
        }
    s.selection = std::move(selection);
    return s;
}

namespace {

// best[i][c]: optimum over items i..M-1 with capacity c. Row M is zero.
class SuffixTable {
public:
    explicit SuffixTable(const KPInstance& inst) : m_(inst.size()), cap_(inst.capacity), best_((m_ + 1) * (cap_ + 1), 0.0) {
        for (std::size_t i = m_; i-- > 0;) {
            const std::size_t w = inst.weights[i];
            const double v = inst.values[i];
            for (std::size_t c = 0; c <= cap_; ++c) {
                double b = at(i + 1, c);
                if (w <= c) b = std::max(b, v + at(i + 1, c - w));
                best_[i * (cap_ + 1) + c] = b;
            }
        }
        tol_ = kKnapsackTieTolerance * std::max(1.0, std::abs(at(0, cap_)));
    }

    double at(std::size_t i, std::size_t c) const { return best_[i * (cap_ + 1) + c]; }
    double tolerance() const { return tol_; }

private:
    std::size_t m_, cap_;
    std::vector<double> best_;
    double tol_ = 0.0;
};

}  // namespace

BinarySummary solve_kp(const KPInstance& inst) {
    inst.validate();
    const SuffixTable table(inst);
    std::vector<std::uint8_t> y(inst.size(), 0);
    std::size_t c = inst.capacity;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        // Exclusion wins whenever it keeps the optimum reachable.
        if (table.at(i + 1, c) >= table.at(i, c) - table.tolerance()) continue;
        y[i] = 1;
        c -= inst.weights[i];
    }
    return make_summary(inst, std::move(y));
}

OptimaSet enumerate_optima(const KPInstance& inst, std::size_t limit) {
    inst.validate();
    if (limit == 0) throw ContractError("enumerate_optima: limit must be positive");
    const SuffixTable table(inst);
    const double target = table.at(0, inst.capacity) - table.tolerance();
    OptimaSet out;
    out.optimal_value = table.at(0, inst.capacity);
    std::vector<std::uint8_t> y(inst.size(), 0);

    // Depth-first, exclusion first, so solutions come out in lexicographic order.
    auto visit = [&](auto& self, std::size_t i, std::size_t c, double acc) -> bool {
        if (i == inst.size()) {
            if (out.solutions.size() == limit) {
                out.truncated = true;
                return false;
            }
            out.solutions.push_back(make_summary(inst, y));
            return true;
        }
        if (acc + table.at(i + 1, c) >= target)
            if (!self(self, i + 1, c, acc)) return false;
        const std::size_t w = inst.weights[i];
        if (w <= c && acc + inst.values[i] + table.at(i + 1, c - w) >= target) {
            y[i] = 1;
            const bool more = self(self, i + 1, c - w, acc + inst.values[i]);
            y[i] = 0;
            if (!more) return false;
        }
        return true;
    };
    visit(visit, 0, inst.capacity, 0.0);
    return out;
}

std::size_t budget_capacity(double rho, std::size_t n) {
    if (!(rho > 0.0 && rho <= 1.0)) throw ContractError("budget ratio rho must lie in (0, 1]");
    const double raw = rho * static_cast<double>(n);
    return std::min(n, static_cast<std::size_t>(std::floor(raw + 1e-9)));
}

FrameSummary generate_summary(const ScoreVector& scores, const SegmentList& seg, double rho) {
    FrameSummary out;
    out.segments = seg;
    out.clip_values = clip_values(scores, seg);
    KPInstance inst;
    inst.values = out.clip_values;
    for (std::size_t w : seg.weights()) inst.weights.push_back(w);
    inst.capacity = budget_capacity(rho, seg.num_frames());
    out.clips = solve_kp(inst);
    out.frames.assign(seg.num_frames(), 0);
    for (std::size_t i = 0; i < inst.size(); ++i)
        if (out.clips.selection[i])
            std::fill(out.frames.begin() + static_cast<std::ptrdiff_t>(seg.boundaries[i]),
                      out.frames.begin() + static_cast<std::ptrdiff_t>(seg.boundaries[i + 1]), 1);
    return out;
}

std::vector<double> quantize_values(const std::vector<double>& v, std::size_t num_bins) {
    if (num_bins == 0) throw ContractError("quantize_values: need at least one bin");
    const double k = static_cast<double>(num_bins);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double s = std::clamp(v[i], 0.0, 1.0);
        const double bin = std::min(std::floor(s * k), k - 1.0);
        out[i] = (bin + 0.5) / k;
    }
    return out;
}

void MultiplicityConfig::validate() const {
    if (num_items == 0) throw ConfigError("kp-study: num_items must be positive");
    if (bins.empty()) throw ConfigError("kp-study: bins must not be empty");
    for (std::size_t k : bins)
        if (k == 0) throw ConfigError("kp-study: every K must be positive");
    if (trials == 0) throw ConfigError("kp-study: trials must be at least 1");
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("kp-study: rho must lie in (0, 1]");
    if (min_weight == 0 || min_weight > max_weight) throw ConfigError("kp-study: need 1 <= min_weight <= max_weight");
    if (!(perturbation_scale >= 0.0)) throw ConfigError("kp-study: perturbation_scale must be non-negative");
    if (enumeration_limit == 0) throw ConfigError("kp-study: enumeration_limit must be positive");
    if (workers == 0) throw ConfigError("kp-study: workers must be positive");
}

namespace {

struct TrialResult {
    std::vector<double> num_optima;  // per K
    std::vector<double> l1_delta;
};

TrialResult run_trial(const MultiplicityConfig& cfg, std::size_t trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> weight(cfg.min_weight, cfg.max_weight);
    std::normal_distribution<double> normal(0.0, 1.0);

    const std::size_t n = cfg.num_items;
    std::vector<double> v1(n), z(n);
    KPInstance base;
    base.weights.resize(n);
    std::size_t total_weight = 0;
    for (std::size_t i = 0; i < n; ++i) {
        v1[i] = unit(rng);
        base.weights[i] = weight(rng);
        total_weight += base.weights[i];
    }
    for (double& x : z) x = normal(rng);
    base.capacity = budget_capacity(cfg.rho, total_weight);

    TrialResult r;
    for (std::size_t k : cfg.bins) {
        const double sd = cfg.perturbation_scale / std::sqrt(static_cast<double>(k));
        std::vector<double> v2(n);
        for (std::size_t i = 0; i < n; ++i) v2[i] = v1[i] + sd * z[i];
        KPInstance a = base, b = base;
        if (cfg.quantize) {
            a.values = quantize_values(v1, k);
            b.values = quantize_values(v2, k);
        } else {
            a.values = v1;
            b.values.resize(n);
            std::transform(v2.begin(), v2.end(), b.values.begin(), [](double x) { return std::clamp(x, 0.0, 1.0); });
        }
        r.num_optima.push_back(static_cast<double>(enumerate_optima(a, cfg.enumeration_limit).solutions.size()));
        const BinarySummary ya = solve_kp(a), yb = solve_kp(b);
        double l1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) l1 += ya.selection[i] != yb.selection[i] ? 1.0 : 0.0;
        r.l1_delta.push_back(l1);
    }
    return r;
}

}  // namespace

std::vector<MultiplicityRow> kp_multiplicity_study(const MultiplicityConfig& cfg) {
    cfg.validate();
    std::vector<TrialResult> results(cfg.trials);
    const std::size_t workers = std::min(cfg.workers, cfg.trials);
    if (workers <= 1) {
        for (std::size_t t = 0; t < cfg.trials; ++t) results[t] = run_trial(cfg, t);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t t = w; t < cfg.trials; t += workers) results[t] = run_trial(cfg, t);
            });
        for (auto& th : pool) th.join();
    }

    const double n = static_cast<double>(cfg.trials);
    std::vector<MultiplicityRow> rows;
    for (std::size_t j = 0; j < cfg.bins.size(); ++j) {
        double s1 = 0.0, s2 = 0.0, d1 = 0.0, d2 = 0.0;
        for (const auto& r : results) {
            s1 += r.num_optima[j];
            s2 += r.num_optima[j] * r.num_optima[j];
            d1 += r.l1_delta[j];
            d2 += r.l1_delta[j] * r.l1_delta[j];
        }
        MultiplicityRow row;
        row.bins = cfg.bins[j];
        row.expected_num_optima = s1 / n;
        row.expected_l1_delta = d1 / n;
        if (cfg.trials > 1) {
            const double var_o = std::max(0.0, (s2 - s1 * s1 / n) / (n - 1.0));
            const double var_d = std::max(0.0, (d2 - d1 * d1 / n) / (n - 1.0));
            row.stderr_optima = std::sqrt(var_o / n);
            row.stderr_delta = std::sqrt(var_d / n);
        }
        rows.push_back(row);
    }
    return rows;
}

void write_multiplicity_csv(std::ostream& out, const std::vector<MultiplicityRow>& rows) {
    out << "K,expected_num_optima,expected_l1_delta,stderr_optima,stderr_delta\n";
    out << std::setprecision(10);
    for (const auto& r : rows)
        out << r.bins << ',' << r.expected_num_optima << ',' << r.expected_l1_delta << ',' << r.stderr_optima << ','
            << r.stderr_delta << '\n';
}

}  // namespace scorediff
