// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense double matrices.
// Every op builds a node holding its value and a closure that scatters the
// node's gradient into its parents. Graphs are released with their last handle.
#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace distill::ag {

using Matrix = Eigen::MatrixXd;

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Matrix& grad_buffer();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const;
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double item() const;
    bool defined() const { return static_cast<bool>(node_); }

    /// Seeds d(self)/d(self) = 1 (self must be 1x1) and back-propagates.
    void backward() const;
    void zero_grad();

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Trainable leaf.
Tensor parameter(Matrix value);
/// Leaf that never receives gradient.
Tensor constant(Matrix value);
Tensor scalar(double v);

bool grad_enabled() noexcept;

/// Disables graph construction in the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

Tensor detach(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a (r x c) + row (1 x c) broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
/// a (r x c) * row (1 x c) broadcast over rows, elementwise.
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor gelu(const Tensor& a);
/// Row-wise x / sqrt(mean(x^2) + eps), no gain.
Tensor rms_norm_rows(const Tensor& a, double eps);
/// Row softmax of a*scale with entries above the diagonal masked to zero probability.
Tensor causal_softmax(const Tensor& scores, double scale);
Tensor softmax_rows(const Tensor& a);
/// Softmax of a column vector z/tau.
Tensor softmax_temperature(const Tensor& z, double tau);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
/// Square block a[start:, start:].
Tensor trailing_block(const Tensor& a, Eigen::Index start);
Tensor concat_cols(std::span<const Tensor> parts);
/// Stacks 1 x c rows into an n x c matrix.
Tensor stack_rows(std::span<const Tensor> rows);
Tensor col_sum(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor mean_of(std::span<const Tensor> items);
Tensor sum_of(std::span<const Tensor> items);
/// Rows of `table` at `ids`.
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
/// sum_l weights[l] * mats[l]; weights is n x 1.
Tensor weighted_sum(std::span<const Tensor> mats, const Tensor& weights);
/// out[i,j] = sum_{r in rows[i]} sum_{c in cols[j]} a[r,c].
Tensor aggregate_sets(const Tensor& a, const std::vector<std::vector<int>>& rows,
                      const std::vector<std::vector<int>>& cols);
/// Mean token cross-entropy of logits rows against `targets`; entries < 0 are ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
/// (1/rows) * sum_i KL(p[i,:] || q[i,:]) for row-stochastic p, q.
Tensor kl_rows_mean(const Tensor& p, const Tensor& q);

/// Collects nodes reachable from `root` in topological order (parents first).
std::vector<Node*> topological_order(const Tensor& root);

}  // namespace distill::ag
