// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "distill/autograd.hpp"

namespace distill {

/// Adam without weight decay. Schedules are driven by the caller through set_learning_rate.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<ag::Tensor> params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void zero_grad();
    void step();
    void set_learning_rate(double lr) noexcept { lr_ = lr; }
    double learning_rate() const noexcept { return lr_; }
    /// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the norm before clipping.
    double clip_grad_norm(double max_norm);
    long long steps_taken() const noexcept { return t_; }

private:
    std::vector<ag::Tensor> params_;
    std::vector<ag::Matrix> m_;
    std::vector<ag::Matrix> v_;
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
};

}  // namespace distill
