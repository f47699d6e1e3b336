// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace scorediff {

using Shape = std::vector<std::size_t>;

namespace detail {
struct Node;
}

/// Dense row-major float64 tensor with an optional gradient accumulator.
///
/// A Tensor is a cheap handle; copies share storage. Rank-1 tensors behave as
/// 1 x n rows in the 2-D operations below.
class Tensor {
public:
    Tensor();

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double operator()(std::size_t r, std::size_t c) const;
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    /// Gradient buffer; empty span when the tensor does not require grad.
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// New leaf with copied data and no history.
    Tensor detach() const;

    detail::Node* node() const noexcept { return node_.get(); }
    const std::shared_ptr<detail::Node>& shared_node() const noexcept { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend class Tape;
    friend Tensor make_result(Shape, std::vector<double>);
};

/// Ordered record of differentiable operations executed while the tape is
/// active on the current thread. Operations only record when at least one
/// input requires a gradient.
class Tape {
public:
    using BackwardFn = std::function<void(std::span<const double> out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Makes a tape the active one for this thread for the scope's lifetime.
    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    static Tape* active() noexcept;

    /// Records `out` as produced by an op over `inputs`. Returns false (and
    /// records nothing) when no input requires a gradient.
    bool record(Tensor& out, std::initializer_list<const Tensor*> inputs, BackwardFn fn);
    bool record(Tensor& out, std::span<const Tensor> inputs, BackwardFn fn);

    /// Reverse sweep from a scalar loss. Gradients accumulate additively into
    /// every tensor that requires grad.
    void backward(const Tensor& loss);

    std::size_t size() const noexcept { return entries_.size(); }
    void clear() noexcept { entries_.clear(); }

private:
    struct Entry {
        std::shared_ptr<detail::Node> output;
        BackwardFn fn;
    };
    std::vector<Entry> entries_;
};

/// Convenience for loss.backward() on the active tape.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Differentiable operations. Broadcasting is limited to a 1 x n row against an
// m x n matrix.

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materialising the transpose.
Tensor matmul_transposed(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
/// x * (1 + scale) + shift, the adaptive-normalisation modulation.
Tensor scale_shift(const Tensor& x, const Tensor& scale, const Tensor& shift);

/// Row-wise softmax with max subtraction. NaN inputs propagate.
Tensor softmax_rows(const Tensor& x);
/// Row-wise normalisation to zero mean and unit variance (no affine part).
Tensor layernorm_rows(const Tensor& x, double eps = 1e-6);

Tensor sum(const Tensor& x);
/// Sum of squared differences, the per-sample regression loss.
Tensor squared_distance(const Tensor& a, const Tensor& b);

/// Rows of `table` selected by `index`; gradients scatter back to those rows.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor reshape(const Tensor& x, Shape shape);

// ---------------------------------------------------------------------------
// Parameter checkpoints: one JSON object {name: {"shape": [...], "data": [...]}}.

using ParameterMap = std::map<std::string, Tensor>;

void save_parameters(const std::filesystem::path& path, const ParameterMap& params);
ParameterMap load_parameters(const std::filesystem::path& path);

}  // namespace scorediff
