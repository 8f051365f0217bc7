// SPDX-License-Identifier: Apache-2.0
#include "distill/autograd.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace distill::ag {

namespace {

thread_local bool g_grad_enabled = true;

Tensor make(Matrix value, std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& in : inputs) any = any || in.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(inputs.size());
            for (const auto& in : inputs) node->parents.push_back(in.node());
            node->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

// Parent i of `self` when it takes gradient, else nullptr.
Node* grad_parent(Node& self, std::size_t i) {
    Node* p = self.parents[i].get();
    return p->requires_grad ? p : nullptr;
}

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

// dX for Y = softmax(X) row-wise given dY.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
    const Eigen::VectorXd dots = (dy.array() * y.array()).rowwise().sum();
    return (y.array() * (dy.colwise() - dots).array()).matrix();
}

}  // namespace

Matrix& Node::grad_buffer() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
        grad = Matrix::Zero(value.rows(), value.cols());
    }
    return grad;
}

const Matrix& Tensor::grad() const { return node_->grad_buffer(); }

double Tensor::item() const {
    require(rows() == 1 && cols() == 1, "item() needs a 1x1 tensor");
    return node_->value(0, 0);
}

void Tensor::zero_grad() {
    if (node_) node_->grad_buffer().setZero();
}

Tensor parameter(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Tensor(std::move(node));
}

Tensor constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Tensor(std::move(node));
}

Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::vector<Node*> topological_order(const Tensor& root) {
    std::vector<Node*> order;
    if (!root.requires_grad()) return order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

void Tensor::backward() const {
    require(rows() == 1 && cols() == 1, "backward() needs a scalar loss");
    const auto order = topological_order(*this);
    if (order.empty()) return;
    node_->grad_buffer().array() += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

Tensor detach(const Tensor& a) { return constant(a.value()); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    return make(a.value() * b.value(), {a, b}, [](Node& self) {
        const Matrix& A = self.parents[0]->value;
        const Matrix& B = self.parents[1]->value;
        if (Node* p = grad_parent(self, 0)) p->grad_buffer().noalias() += self.grad * B.transpose();
        if (Node* p = grad_parent(self, 1)) p->grad_buffer().noalias() += A.transpose() * self.grad;
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
    return make(a.value() * b.value().transpose(), {a, b}, [](Node& self) {
        const Matrix& A = self.parents[0]->value;
        const Matrix& B = self.parents[1]->value;
        if (Node* p = grad_parent(self, 0)) p->grad_buffer().noalias() += self.grad * B;
        if (Node* p = grad_parent(self, 1)) p->grad_buffer().noalias() += self.grad.transpose() * A;
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
    return make(a.value() + b.value(), {a, b}, [](Node& self) {
        if (Node* p = grad_parent(self, 0)) p->grad_buffer() += self.grad;
        if (Node* p = grad_parent(self, 1)) p->grad_buffer() += self.grad;
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
    return make(a.value() - b.value(), {a, b}, [](Node& self) {
        if (Node* p = grad_parent(self, 0)) p->grad_buffer() += self.grad;
        if (Node* p = grad_parent(self, 1)) p->grad_buffer() -= self.grad;
    });
}

Tensor scale(const Tensor& a, double s) {
    return make(a.value() * s, {a}, [s](Node& self) {
        if (Node* p = grad_parent(self, 0)) p->grad_buffer() += self.grad * s;
    });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
    Matrix out = a.value().rowwise() + row.value().row(0);
    return make(std::move(out), {a, row}, [](Node& self) {
        if (Node* p = grad_parent(self, 0)) p->grad_buffer() += self.grad;
        if (Node* p = grad_parent(self, 1)) p->grad_buffer() += self.grad.colwise().sum();
    });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
    require(row.rows() == 1 && row.cols() == a.cols(), "mul_row: shape mismatch");
    Matrix out = a.value().array().rowwise() * row.value().row(0).array();
    return make(std::move(out), {a, row}, [](Node& self) {
        const Matrix& A = self.parents[0]->value;
        const Matrix& R = self.parents[1]->value;
        if (Node* p = grad_parent(self, 0)) {
            p->grad_buffer().array() += self.grad.array().rowwise() * R.row(0).array();
        }
        if (Node* p = grad_parent(self, 1)) {
            p->grad_buffer() += (self.grad.array() * A.array()).colwise().sum().matrix();
        }
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
    const double c = kGeluC;
    const double k = kGeluK;
    const auto x = a.value().array();
    // tanh(u) = 1 - 2 / (exp(2u) + 1), written with exp so it vectorizes.
    const Eigen::ArrayXXd u = c * (x + k * x.cube());
    Eigen::ArrayXXd t = 1.0 - 2.0 / ((2.0 * u).exp() + 1.0);
    Matrix out = (0.5 * x * (1.0 + t)).matrix();
    return make(std::move(out), {a}, [t = std::move(t), c, k](Node& self) {
        Node* p = grad_parent(self, 0);
        if (!p) return;
        const auto x = p->value.array();
        const auto d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t.square()) * c * (1.0 + 3.0 * k * x.square());
        p->grad_buffer().array() += self.grad.array() * d;
    });
}

Tensor rms_norm_rows(const Tensor& a, double eps) {
    const Matrix& X = a.value();
    const double n = static_cast<double>(X.cols());
    Eigen::VectorXd inv_rms = ((X.array().square().rowwise().sum() / n) + eps).sqrt().inverse();
    Matrix out = X.array().colwise() * inv_rms.array();
    return make(std::move(out), {a}, [inv_rms, n](Node& self) {
        Node* p = grad_parent(self, 0);
        if (!p) return;
        const Matrix& Y = self.value;
        const Eigen::VectorXd mean_dot = (self.grad.array() * Y.array()).rowwise().sum() / n;
        Matrix dx = (self.grad - (Y.array().colwise() * mean_dot.array()).matrix());
        p->grad_buffer().array() += dx.array().colwise() * inv_rms.array();
    });
}

Tensor causal_softmax(const Tensor& scores, double scale) {
    require(scores.rows() == scores.cols(), "causal_softmax: scores must be square");
    const Eigen::Index n = scores.rows();
    Matrix out = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = scores.value().row(i).head(i + 1) * scale;
        const double m = row.maxCoeff();
        auto e = (row.array() - m).exp();
        out.row(i).head(i + 1) = e / e.sum();
    }
    return make(std::move(out), {scores}, [scale](Node& self) {
        Node* p = grad_parent(self, 0);
        if (!p) return;
        p->grad_buffer() += softmax_rows_backward(self.value, self.grad) * scale;
    });
}

Tensor softmax_rows(const Tensor& a) {
    Matrix out = a.value();
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double m = out.row(i).maxCoeff();
        out.row(i) = (out.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    return make(std::move(out), {a}, [](Node& self) {
        if (Node* p = grad_parent(self, 0)) p->grad_buffer() += softmax_rows_backward(self.value, self.grad);
    });
}

Tensor softmax_temperature(const Tensor& z, double tau) {
    require(z.cols() == 1, "softmax_temperature: expects a column vector");
    Eigen::VectorXd scaled = z.value().col(0) / tau;
    scaled.array() -= scaled.maxCoeff();
    Eigen::VectorXd e = scaled.array().exp();
    Matrix out = e / e.sum();
    return make(std::move(out), {z}, [tau](Node& self) {
        Node* p = grad_parent(self, 0);
        if (!p) return;
        const double dot = (self.grad.array() * self.value.array()).sum();
        p->grad_buffer().array() += self.value.array() * (self.grad.array() - dot) / tau;
    });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    require(start >= 0 && start + count <= a.cols(), "slice_cols: out of range");
    return make(a.value().middleCols(start, count), {a}, [start, count](Node& self) {
        if (Node* p = grad_parent(self, 0)) p->grad_buffer().middleCols(start, count) += self.grad;
    });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    require(start >= 0 && start + count <= a.rows(), "slice_rows: out of range");
    return make(a.value().middleRows(start, count), {a}, [start, count](Node& self) {
        if (Node* p = grad_parent(self, 0)) p->grad_buffer().middleRows(start, count) += self.grad;
    });
}

Tensor trailing_block(const Tensor& a, Eigen::Index start) {
    require(a.rows() == a.cols() && start >= 0 && start <= a.rows(), "trailing_block: bad input");
    const Eigen::Index n = a.rows() - start;
    return make(a.value().bottomRightCorner(n, n), {a}, [n](Node& self) {
        if (Node* p = grad_parent(self, 0)) p->grad_buffer().bottomRightCorner(n, n) += self.grad;
    });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    Eigen::Index total = 0;
    for (const auto& t : parts) {
        require(t.rows() == parts[0].rows(), "concat_cols: row mismatch");
        total += t.cols();
    }
    Matrix out(parts[0].rows(), total);
    Eigen::Index at = 0;
    for (const auto& t : parts) {
        out.middleCols(at, t.cols()) = t.value();
        at += t.cols();
    }
    return make(std::move(out), std::vector<Tensor>(parts.begin(), parts.end()), [](Node& self) {
        Eigen::Index at = 0;
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            const Eigen::Index c = self.parents[i]->value.cols();
            if (Node* p = grad_parent(self, i)) p->grad_buffer() += self.grad.middleCols(at, c);
            at += c;
        }
    });
}

Tensor stack_rows(std::span<const Tensor> rows) {
    require(!rows.empty(), "stack_rows: no inputs");
    Matrix out(static_cast<Eigen::Index>(rows.size()), rows[0].cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].rows() == 1 && rows[i].cols() == out.cols(), "stack_rows: shape mismatch");
        out.row(static_cast<Eigen::Index>(i)) = rows[i].value().row(0);
    }
    return make(std::move(out), std::vector<Tensor>(rows.begin(), rows.end()), [](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            if (Node* p = grad_parent(self, i)) p->grad_buffer() += self.grad.row(static_cast<Eigen::Index>(i));
        }
    });
}

Tensor col_sum(const Tensor& a) {
    return make(a.value().colwise().sum(), {a}, [](Node& self) {
        if (Node* p = grad_parent(self, 0)) p->grad_buffer().rowwise() += self.grad.row(0);
    });
}

Tensor sum_all(const Tensor& a) {
    return make(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
        if (Node* p = grad_parent(self, 0)) p->grad_buffer().array() += self.grad(0, 0);
    });
}

Tensor sum_of(std::span<const Tensor> items) {
    require(!items.empty(), "sum_of: no inputs");
    Matrix out = items[0].value();
    for (std::size_t i = 1; i < items.size(); ++i) {
        require(items[i].rows() == out.rows() && items[i].cols() == out.cols(), "sum_of: shape mismatch");
        out += items[i].value();
    }
    return make(std::move(out), std::vector<Tensor>(items.begin(), items.end()), [](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            if (Node* p = grad_parent(self, i)) p->grad_buffer() += self.grad;
        }
    });
}

Tensor mean_of(std::span<const Tensor> items) {
    return scale(sum_of(items), 1.0 / static_cast<double>(items.size()));
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
    Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= 0 && ids[i] < table.rows(), "gather_rows: id out of range");
        out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
    }
    std::vector<int> idx(ids.begin(), ids.end());
    return make(std::move(out), {table}, [idx = std::move(idx)](Node& self) {
        Node* p = grad_parent(self, 0);
        if (!p) return;
        Matrix& g = p->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    });
}

Tensor weighted_sum(std::span<const Tensor> mats, const Tensor& weights) {
    require(!mats.empty(), "weighted_sum: no inputs");
    require(weights.cols() == 1 && weights.rows() == static_cast<Eigen::Index>(mats.size()),
            "weighted_sum: weight count mismatch");
    Matrix out = Matrix::Zero(mats[0].rows(), mats[0].cols());
    for (std::size_t l = 0; l < mats.size(); ++l) {
        require(mats[l].rows() == out.rows() && mats[l].cols() == out.cols(), "weighted_sum: shape mismatch");
        out += weights.value()(static_cast<Eigen::Index>(l), 0) * mats[l].value();
    }
    std::vector<Tensor> inputs(mats.begin(), mats.end());
    inputs.push_back(weights);
    return make(std::move(out), std::move(inputs), [](Node& self) {
        const std::size_t n = self.parents.size() - 1;
        const Matrix& w = self.parents[n]->value;
        for (std::size_t l = 0; l < n; ++l) {
            if (Node* p = grad_parent(self, l)) p->grad_buffer() += w(static_cast<Eigen::Index>(l), 0) * self.grad;
        }
        if (Node* p = grad_parent(self, n)) {
            Matrix& g = p->grad_buffer();
            for (std::size_t l = 0; l < n; ++l) {
                g(static_cast<Eigen::Index>(l), 0) += (self.grad.array() * self.parents[l]->value.array()).sum();
            }
        }
    });
}

Tensor aggregate_sets(const Tensor& a, const std::vector<std::vector<int>>& rows,
                      const std::vector<std::vector<int>>& cols) {
    const Matrix& A = a.value();
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            double s = 0.0;
            for (int r : rows[i]) {
                for (int c : cols[j]) s += A(r, c);
            }
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s;
        }
    }
    return make(std::move(out), {a}, [rows, cols](Node& self) {
        Node* p = grad_parent(self, 0);
        if (!p) return;
        Matrix& g = p->grad_buffer();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t j = 0; j < cols.size(); ++j) {
                const double v = self.grad(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                for (int r : rows[i]) {
                    for (int c : cols[j]) g(r, c) += v;
                }
            }
        }
    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
    require(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "cross_entropy: target count mismatch");
    const Matrix& Z = logits.value();
    Matrix probs = Matrix::Zero(Z.rows(), Z.cols());
    double total = 0.0;
    int count = 0;
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        const int y = targets[static_cast<std::size_t>(i)];
        if (y < 0) continue;
        require(y < Z.cols(), "cross_entropy: target out of range");
        const double m = Z.row(i).maxCoeff();
        const double lse = m + std::log((Z.row(i).array() - m).exp().sum());
        total += lse - Z(i, y);
        probs.row(i) = (Z.row(i).array() - lse).exp();
        ++count;
    }
    require(count > 0, "cross_entropy: no target positions");
    std::vector<int> ys(targets.begin(), targets.end());
    const double inv = 1.0 / count;
    return make(Matrix::Constant(1, 1, total * inv), {logits},
                [probs = std::move(probs), ys = std::move(ys), inv](Node& self) {
                    Node* p = grad_parent(self, 0);
                    if (!p) return;
                    Matrix& g = p->grad_buffer();
                    const double up = self.grad(0, 0) * inv;
                    for (std::size_t i = 0; i < ys.size(); ++i) {
                        if (ys[i] < 0) continue;
                        const auto r = static_cast<Eigen::Index>(i);
                        g.row(r) += up * probs.row(r);
                        g(r, ys[i]) -= up;
                    }
                });
}

Tensor kl_rows_mean(const Tensor& p, const Tensor& q) {
    require(p.rows() == q.rows() && p.cols() == q.cols(), "kl_rows_mean: shape mismatch");
    const Matrix& P = p.value();
    const Matrix& Q = q.value();
    const double inv_rows = 1.0 / static_cast<double>(P.rows());
    double total = 0.0;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        for (Eigen::Index j = 0; j < P.cols(); ++j) {
            if (P(i, j) > 0.0) total += P(i, j) * (std::log(P(i, j)) - std::log(Q(i, j)));
        }
    }
    return make(Matrix::Constant(1, 1, total * inv_rows), {p, q}, [inv_rows](Node& self) {
        const Matrix& P = self.parents[0]->value;
        const Matrix& Q = self.parents[1]->value;
        const double up = self.grad(0, 0) * inv_rows;
        if (Node* n = grad_parent(self, 0)) {
            n->grad_buffer().array() +=
                up * (P.array().max(1e-300).log() - Q.array().log() + 1.0);
        }
        if (Node* n = grad_parent(self, 1)) n->grad_buffer().array() -= up * (P.array() / Q.array());
    });
}

}  // namespace distill::ag
