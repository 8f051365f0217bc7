// SPDX-License-Identifier: Apache-2.0
#include "distill/optimizer.hpp"

#include <cmath>

namespace distill {

AdamOptimizer::AdamOptimizer(std::vector<ag::Tensor> params, double learning_rate, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.push_back(ag::Matrix::Zero(p.rows(), p.cols()));
        v_.push_back(ag::Matrix::Zero(p.rows(), p.cols()));
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void AdamOptimizer::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const ag::Matrix& g = params_[i].grad();
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
        params_[i].mutable_value().array() -=
            lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
}

double AdamOptimizer::clip_grad_norm(double max_norm) {
    double sq = 0.0;
    for (const auto& p : params_) sq += p.grad().squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& p : params_) p.node()->grad_buffer() *= s;
    }
    return norm;
}

}  // namespace distill
