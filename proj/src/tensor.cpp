// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include "scorediff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "scorediff/error.hpp"

namespace scorediff {

namespace detail {
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
};
}  // namespace detail

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

void accumulate(detail::Node* node, std::span<const double> g) {
    if (!node->requires_grad) return;
    auto& dst = node->grad;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data().data(), t.rows(), t.cols()); }

ConstMap as_matrix(std::span<const double> data, std::size_t r, std::size_t c) {
    return ConstMap(data.data(), r, c);
}

enum class Broadcast { kSame, kRowB, kRowA };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRowB;
    if (a.rows() == 1 && a.cols() == b.cols()) return Broadcast::kRowA;
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
}

// Reduces a full-size gradient down to a broadcast row when needed.
std::vector<double> reduce_rows(std::span<const double> g, std::size_t rows, std::size_t cols) {
    std::vector<double> out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c] += g[r * cols + c];
    return out;
}

}  // namespace

Tensor make_result(Shape shape, std::vector<double> data) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() = default;

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != data.size())
        throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    Tensor t = make_result(std::move(shape), std::move(data));
    t.set_requires_grad(requires_grad);
    return t;
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
    const auto& s = node_->shape;
    if (s.size() <= 1) return 1;
    if (s.size() == 2) return s[0];
    throw DimensionError("expected rank <= 2, got " + shape_str(s));
}

std::size_t Tensor::cols() const {
    const auto& s = node_->shape;
    if (s.empty()) return 1;
    if (s.size() == 1) return s[0];
    if (s.size() == 2) return s[1];
    throw DimensionError("expected rank <= 2, got " + shape_str(s));
}

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }
double Tensor::operator()(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    if (flag)
        node_->grad.assign(node_->data.size(), 0.0);
    else
        node_->grad.clear();
}

std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->grad; }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

// ---------------------------------------------------------------------------
// Tape

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() noexcept { return g_active_tape; }

bool Tape::record(Tensor& out, std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
    const bool needed = std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
    if (!needed) return false;
    out.set_requires_grad(true);
    entries_.push_back({out.shared_node(), std::move(fn)});
    return true;
}

bool Tape::record(Tensor& out, std::span<const Tensor> inputs, BackwardFn fn) {
    const bool needed = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (!needed) return false;
    out.set_requires_grad(true);
    entries_.push_back({out.shared_node(), std::move(fn)});
    return true;
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) throw ContractError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;
    loss.node()->grad[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn(it->output->grad);
}

void backward(const Tensor& loss) {
    Tape* tape = Tape::active();
    if (tape == nullptr) throw ContractError("backward() called with no active tape");
    tape->backward(loss);
}

namespace {

// Records on the active tape, if any. The backward closure receives the output
// gradient.
void record(Tensor& out, std::initializer_list<const Tensor*> inputs, Tape::BackwardFn fn) {
    if (Tape* tape = Tape::active()) tape->record(out, inputs, std::move(fn));
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n);
    MutMap(out.data(), m, n).noalias() = as_matrix(a) * as_matrix(b);
    Tensor res = make_result({m, n}, std::move(out));
    auto an = a.shared_node(), bn = b.shared_node();
    record(res, {&a, &b}, [an, bn, m, k, n](std::span<const double> g) {
        ConstMap gm(g.data(), m, n);
        if (an->requires_grad)
            MutMap(an->grad.data(), m, k).noalias() += gm * as_matrix(bn->data, k, n).transpose();
        if (bn->requires_grad)
            MutMap(bn->grad.data(), k, n).noalias() += as_matrix(an->data, m, k).transpose() * gm;
    });
    return res;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
        throw DimensionError("matmul_transposed: column counts differ " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    std::vector<double> out(m * n);
    MutMap(out.data(), m, n).noalias() = as_matrix(a) * as_matrix(b).transpose();
    Tensor res = make_result({m, n}, std::move(out));
    auto an = a.shared_node(), bn = b.shared_node();
    record(res, {&a, &b}, [an, bn, m, k, n](std::span<const double> g) {
        ConstMap gm(g.data(), m, n);
        if (an->requires_grad) MutMap(an->grad.data(), m, k).noalias() += gm * as_matrix(bn->data, n, k);
        if (bn->requires_grad)
            MutMap(bn->grad.data(), n, k).noalias() += gm.transpose() * as_matrix(an->data, m, k);
    });
    return res;
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

template <typename Fwd>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Broadcast& kind_out) {
    const Broadcast kind = broadcast_kind(a, b, name);
    kind_out = kind;
    const std::size_t rows = std::max(a.rows(), b.rows()), cols = a.cols();
    std::vector<double> out(rows * cols);
    const auto ad = a.data(), bd = b.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t ra = kind == Broadcast::kRowA ? 0 : r;
        const std::size_t rb = kind == Broadcast::kRowB ? 0 : r;
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = fwd(ad[ra * cols + c], bd[rb * cols + c]);
    }
    Shape shape = kind == Broadcast::kRowA ? b.shape() : a.shape();
    return make_result(std::move(shape), std::move(out));
}

void accumulate_broadcast(detail::Node* node, std::span<const double> g, bool is_row, std::size_t rows,
                          std::size_t cols) {
    if (!node->requires_grad) return;
    if (is_row && rows != 1) {
        const auto red = reduce_rows(g, rows, cols);
        accumulate(node, red);
    } else {
        accumulate(node, g);
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    Broadcast kind;
    Tensor res = binary(a, b, "add", [](double x, double y) { return x + y; }, kind);
    auto an = a.shared_node(), bn = b.shared_node();
    const std::size_t rows = res.rows(), cols = res.cols();
    record(res, {&a, &b}, [an, bn, kind, rows, cols](std::span<const double> g) {
        accumulate_broadcast(an.get(), g, kind == Broadcast::kRowA, rows, cols);
        accumulate_broadcast(bn.get(), g, kind == Broadcast::kRowB, rows, cols);
    });
    return res;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Broadcast kind;
    Tensor res = binary(a, b, "sub", [](double x, double y) { return x - y; }, kind);
    auto an = a.shared_node(), bn = b.shared_node();
    const std::size_t rows = res.rows(), cols = res.cols();
    record(res, {&a, &b}, [an, bn, kind, rows, cols](std::span<const double> g) {
        accumulate_broadcast(an.get(), g, kind == Broadcast::kRowA, rows, cols);
        if (bn->requires_grad) {
            std::vector<double> neg(g.begin(), g.end());
            for (double& v : neg) v = -v;
            accumulate_broadcast(bn.get(), neg, kind == Broadcast::kRowB, rows, cols);
        }
    });
    return res;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Broadcast kind;
    Tensor res = binary(a, b, "mul", [](double x, double y) { return x * y; }, kind);
    auto an = a.shared_node(), bn = b.shared_node();
    const std::size_t rows = res.rows(), cols = res.cols();
    record(res, {&a, &b}, [an, bn, kind, rows, cols](std::span<const double> g) {
        // d(a*b)/da = b, broadcast back to a's shape
        auto other = [&](const detail::Node& n, bool is_row, std::size_t r, std::size_t c) {
            return n.data[(is_row ? 0 : r) * cols + c];
        };
        if (an->requires_grad) {
            std::vector<double> ga(rows * cols);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    ga[r * cols + c] = g[r * cols + c] * other(*bn, kind == Broadcast::kRowB, r, c);
            accumulate_broadcast(an.get(), ga, kind == Broadcast::kRowA, rows, cols);
        }
        if (bn->requires_grad) {
            std::vector<double> gb(rows * cols);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    gb[r * cols + c] = g[r * cols + c] * other(*an, kind == Broadcast::kRowA, r, c);
            accumulate_broadcast(bn.get(), gb, kind == Broadcast::kRowB, rows, cols);
        }
    });
    return res;
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) v *= factor;
    Tensor res = make_result(a.shape(), std::move(out));
    auto an = a.shared_node();
    record(res, {&a}, [an, factor](std::span<const double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += factor * g[i];
    });
    return res;
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xd[i]));
    Tensor res = make_result(x.shape(), std::move(out));
    auto xn = x.shared_node();
    auto rn = res.shared_node();
    record(res, {&x}, [xn, rn](std::span<const double> g) {
        const auto& r = rn;
        for (std::size_t i = 0; i < g.size(); ++i) xn->grad[i] += g[i] * r->data[i] * (1.0 - r->data[i]);
    });
    return res;
}

Tensor silu(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] / (1.0 + std::exp(-xd[i]));
    Tensor res = make_result(x.shape(), std::move(out));
    auto xn = x.shared_node();
    record(res, {&x}, [xn](std::span<const double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = xn->data[i];
            const double s = 1.0 / (1.0 + std::exp(-v));
            xn->grad[i] += g[i] * (s + v * s * (1.0 - s));
        }
    });
    return res;
}

Tensor scale_shift(const Tensor& x, const Tensor& scale_t, const Tensor& shift) {
    const Broadcast ks = broadcast_kind(x, scale_t, "scale_shift");
    const Broadcast kb = broadcast_kind(x, shift, "scale_shift");
    if (ks == Broadcast::kRowA || kb == Broadcast::kRowA)
        throw DimensionError("scale_shift: modulation cannot be larger than its input");
    const std::size_t rows = x.rows(), cols = x.cols();
    const bool srow = ks == Broadcast::kRowB, brow = kb == Broadcast::kRowB;
    std::vector<double> out(rows * cols);
    const auto xd = x.data(), sd = scale_t.data(), bd = shift.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            out[i] = xd[i] * (1.0 + sd[(srow ? 0 : r) * cols + c]) + bd[(brow ? 0 : r) * cols + c];
        }
    Tensor res = make_result(x.shape(), std::move(out));
    auto xn = x.shared_node(), sn = scale_t.shared_node(), bn = shift.shared_node();
    record(res, {&x, &scale_t, &shift}, [xn, sn, bn, srow, brow, rows, cols](std::span<const double> g) {
        if (xn->requires_grad)
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    xn->grad[r * cols + c] += g[r * cols + c] * (1.0 + sn->data[(srow ? 0 : r) * cols + c]);
        if (sn->requires_grad) {
            std::vector<double> gs(rows * cols);
            for (std::size_t i = 0; i < gs.size(); ++i) gs[i] = g[i] * xn->data[i];
            accumulate_broadcast(sn.get(), gs, srow, rows, cols);
        }
        accumulate_broadcast(bn.get(), g, brow, rows, cols);
    });
    return res;
}

// ---------------------------------------------------------------------------
// Row-wise normalisations

Tensor softmax_rows(const Tensor& x) {
    const std::size_t rows = x.rows(), cols = x.cols();
    std::vector<double> out(rows * cols);
    const auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xd.data() + r * cols;
        double* o = out.data() + r * cols;
        const double mx = *std::max_element(in, in + cols);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) z += (o[c] = std::exp(in[c] - mx));
        for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
    }
    Tensor res = make_result(x.shape(), std::move(out));
    auto xn = x.shared_node();
    record(res, {&x}, [xn, y = res.shared_node(), rows, cols](std::span<const double> g) {
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = y->data.data() + r * cols;
            const double* gr = g.data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
            for (std::size_t c = 0; c < cols; ++c) xn->grad[r * cols + c] += yr[c] * (gr[c] - dot);
        }
    });
    return res;
}

Tensor layernorm_rows(const Tensor& x, double eps) {
    const std::size_t rows = x.rows(), cols = x.cols();
    std::vector<double> out(rows * cols), inv_std(rows);
    const auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xd.data() + r * cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += in[c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
        var /= static_cast<double>(cols);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (in[c] - mean) * inv_std[r];
    }
    Tensor res = make_result(x.shape(), std::move(out));
    auto xn = x.shared_node();
    record(res, {&x},
           [xn, y = res.shared_node(), inv_std = std::move(inv_std), rows, cols](std::span<const double> g) {
               const double n = static_cast<double>(cols);
               for (std::size_t r = 0; r < rows; ++r) {
                   const double* yr = y->data.data() + r * cols;
                   const double* gr = g.data() + r * cols;
                   double gsum = 0.0, gy = 0.0;
                   for (std::size_t c = 0; c < cols; ++c) {
                       gsum += gr[c];
                       gy += gr[c] * yr[c];
                   }
                   for (std::size_t c = 0; c < cols; ++c)
                       xn->grad[r * cols + c] += inv_std[r] * (gr[c] - gsum / n - yr[c] * gy / n);
               }
           });
    return res;
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
    const auto xd = x.data();
    Tensor res = make_result({1}, {std::accumulate(xd.begin(), xd.end(), 0.0)});
    auto xn = x.shared_node();
    record(res, {&x}, [xn](std::span<const double> g) {
        for (double& v : xn->grad) v += g[0];
    });
    return res;
}

Tensor squared_distance(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size())
        throw DimensionError("squared_distance: lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()));
    const auto ad = a.data(), bd = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < ad.size(); ++i) acc += (ad[i] - bd[i]) * (ad[i] - bd[i]);
    Tensor res = make_result({1}, {acc});
    auto an = a.shared_node(), bn = b.shared_node();
    record(res, {&a, &b}, [an, bn](std::span<const double> g) {
        for (std::size_t i = 0; i < an->data.size(); ++i) {
            const double d = 2.0 * (an->data[i] - bn->data[i]) * g[0];
            if (an->requires_grad) an->grad[i] += d;
            if (bn->requires_grad) bn->grad[i] -= d;
        }
    });
    return res;
}

// ---------------------------------------------------------------------------
// Indexing and layout

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index) {
    const std::size_t cols = table.cols(), rows = table.rows();
    std::vector<double> out(index.size() * cols);
    const auto td = table.data();
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= rows)
            throw DimensionError("gather_rows: index " + std::to_string(index[i]) + " out of " + std::to_string(rows));
        std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(index[i] * cols), cols, out.begin() + static_cast<std::ptrdiff_t>(i * cols));
    }
    Tensor res = make_result({index.size(), cols}, std::move(out));
    auto tn = table.shared_node();
    record(res, {&table}, [tn, idx = std::vector<std::size_t>(index.begin(), index.end()), cols](std::span<const double> g) {
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t c = 0; c < cols; ++c) tn->grad[idx[i] * cols + c] += g[i * cols + c];
    });
    return res;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t rows = x.rows(), cols = x.cols();
    if (begin > end || end > cols)
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") outside " + std::to_string(cols) + " columns");
    const std::size_t w = end - begin;
    std::vector<double> out(rows * w);
    const auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(r * cols + begin), w, out.begin() + static_cast<std::ptrdiff_t>(r * w));
    Tensor res = make_result({rows, w}, std::move(out));
    auto xn = x.shared_node();
    record(res, {&x}, [xn, rows, cols, begin, w](std::span<const double> g) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) xn->grad[r * cols + begin + c] += g[r * w + c];
    });
    return res;
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
        cols += p.cols();
    }
    std::vector<double> out(rows * cols);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t w = p.cols();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(r * w), w, out.begin() + static_cast<std::ptrdiff_t>(r * cols + off));
        off += w;
    }
    Tensor res = make_result({rows, cols}, std::move(out));
    if (Tape* tape = Tape::active()) {
        std::vector<std::shared_ptr<detail::Node>> nodes;
        for (const auto& p : parts) nodes.push_back(p.shared_node());
        tape->record(res, parts, [nodes, offsets, rows, cols](std::span<const double> g) {
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                auto& n = *nodes[k];
                if (!n.requires_grad) continue;
                const std::size_t w = n.data.size() / rows;
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < w; ++c) n.grad[r * w + c] += g[r * cols + offsets[k] + c];
            }
        });
    }
    return res;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    Tensor res = make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
    auto xn = x.shared_node();
    record(res, {&x}, [xn](std::span<const double> g) { accumulate(xn.get(), g); });
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_parameters(const std::filesystem::path& path, const ParameterMap& params) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [name, t] : params) {
        doc[name] = {{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << doc.dump() << '\n';
}

ParameterMap load_parameters(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open checkpoint " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw ValidationError("checkpoint " + path.string() + " is not a JSON object");
    ParameterMap params;
    for (const auto& [name, entry] : doc.items()) {
        try {
            auto shape = entry.at("shape").get<Shape>();
            auto data = entry.at("data").get<std::vector<double>>();
            params.emplace(name, Tensor::from(std::move(shape), std::move(data)));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("checkpoint entry '" + name + "': " + e.what());
        } catch (const DimensionError& e) {
            throw ValidationError("checkpoint entry '" + name + "': " + e.what());
        }
    }
    return params;
}

}  // namespace scorediff
