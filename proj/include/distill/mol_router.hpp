// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "distill/attention.hpp"
#include "distill/autograd.hpp"

namespace distill {

inline constexpr double kDefaultTeacherTemperature = 0.1;
inline constexpr double kDefaultStudentTemperature = 0.5;
inline constexpr double kRouterRmsEps = 1e-6;

/// A probability vector over one model's layers.
struct LayerWeights {
    Eigen::VectorXd weights;
    double temperature = 1.0;

    Eigen::Index layer_count() const noexcept { return weights.size(); }
    Eigen::Index argmax() const;
};

/// Mean absolute difference between adjacent critical-word columns:
/// sum_i sum_j |A[i,j+1] - A[i,j]| / (rows * (cols - 1)); 0 for a single column.
double column_gradient(const ag::Matrix& stepwise);

/// softmax(z / tau). Throws InvalidTemperature for tau <= 0.
Eigen::VectorXd softmax_with_temperature(const Eigen::VectorXd& z, double tau);

/// Parameter-free teacher weighting: softmax of per-layer column gradients at tau1.
LayerWeights teacher_layer_weights(std::span<const StepwiseAttention> per_layer, double tau1);
LayerWeights teacher_layer_weights(std::span<const ag::Matrix> per_layer, double tau1);

/// Learnable student router: one affine map d -> 1 shared by all layers.
struct StudentRouterParams {
    ag::Tensor weight;  // d x 1
    ag::Tensor bias;    // 1 x 1
    double temperature = kDefaultStudentTemperature;

    static StudentRouterParams zeros(int d_model, double temperature);
};

/// RMSNorm each value matrix row-wise, sum over the sequence, project with
/// (W, b) and apply softmax at the router temperature. Returns an L x 1 tensor
/// that carries gradient to the router and to the value matrices.
ag::Tensor student_layer_weight_tensor(std::span<const ag::Tensor> value_stack, const StudentRouterParams& params);
LayerWeights student_layer_weights(std::span<const ag::Tensor> value_stack, const StudentRouterParams& params);

}  // namespace distill
