// SPDX-License-Identifier: Apache-2.0
#include "distill/mol_router.hpp"

#include <cmath>

#include "distill/errors.hpp"

namespace distill {

namespace {

void check_temperature(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw DistillError(ErrorCode::InvalidTemperature, "temperature must be positive, got " + std::to_string(tau));
    }
}

}  // namespace

Eigen::Index LayerWeights::argmax() const {
    Eigen::Index idx = 0;
    weights.maxCoeff(&idx);
    return idx;
}

double column_gradient(const ag::Matrix& stepwise) {
    const Eigen::Index rows = stepwise.rows();
    const Eigen::Index cols = stepwise.cols();
    if (rows == 0 || cols < 2) return 0.0;
    const double total = (stepwise.rightCols(cols - 1) - stepwise.leftCols(cols - 1)).cwiseAbs().sum();
    return total / (static_cast<double>(rows) * static_cast<double>(cols - 1));
}

Eigen::VectorXd softmax_with_temperature(const Eigen::VectorXd& z, double tau) {
    check_temperature(tau);
    Eigen::VectorXd scaled = z / tau;
    scaled.array() -= scaled.maxCoeff();
    Eigen::VectorXd e = scaled.array().exp();
    return e / e.sum();
}

LayerWeights teacher_layer_weights(std::span<const ag::Matrix> per_layer, double tau1) {
    check_temperature(tau1);
    if (per_layer.empty()) throw DistillError(ErrorCode::ShapeMismatch, "teacher has no layers");
    Eigen::VectorXd g(static_cast<Eigen::Index>(per_layer.size()));
    for (std::size_t l = 0; l < per_layer.size(); ++l) g(static_cast<Eigen::Index>(l)) = column_gradient(per_layer[l]);
    return {softmax_with_temperature(g, tau1), tau1};
}

LayerWeights teacher_layer_weights(std::span<const StepwiseAttention> per_layer, double tau1) {
    std::vector<ag::Matrix> mats;
    mats.reserve(per_layer.size());
    for (const auto& a : per_layer) mats.push_back(a.matrix.value());
    return teacher_layer_weights(std::span<const ag::Matrix>(mats), tau1);
}

StudentRouterParams StudentRouterParams::zeros(int d_model, double temperature) {
    check_temperature(temperature);
    return {ag::parameter(ag::Matrix::Zero(d_model, 1)), ag::parameter(ag::Matrix::Zero(1, 1)), temperature};
}

ag::Tensor student_layer_weight_tensor(std::span<const ag::Tensor> value_stack, const StudentRouterParams& params) {
    check_temperature(params.temperature);
    if (value_stack.empty()) throw DistillError(ErrorCode::DimensionMismatch, "no value matrices");
    const Eigen::Index d = value_stack[0].cols();
    std::vector<ag::Tensor> embeddings;
    embeddings.reserve(value_stack.size());
    for (const auto& v : value_stack) {
        if (v.cols() != d) {
            throw DistillError(ErrorCode::DimensionMismatch, "value width differs across layers: " +
                                                                 std::to_string(v.cols()) + " vs " + std::to_string(d));
        }
        embeddings.push_back(ag::col_sum(ag::rms_norm_rows(v, kRouterRmsEps)));
    }
    if (params.weight.rows() != d) {
        throw DistillError(ErrorCode::DimensionMismatch, "router weight does not match value width");
    }
    const auto h = ag::stack_rows(embeddings);
    const auto logits = ag::add_row(ag::matmul(h, params.weight), params.bias);
    return ag::softmax_temperature(logits, params.temperature);
}

LayerWeights student_layer_weights(std::span<const ag::Tensor> value_stack, const StudentRouterParams& params) {
    return {student_layer_weight_tensor(value_stack, params).value().col(0), params.temperature};
}

}  // namespace distill
