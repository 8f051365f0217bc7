// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "distill/attention.hpp"
#include "distill/errors.hpp"
#include "distill/mol_router.hpp"
#include "gradcheck.hpp"

using namespace distill;
using distill::testing::check_gradient;
using distill::testing::random_matrix;

namespace {

TokenAlignment make_alignment(std::vector<IndexSet> steps, std::vector<IndexSet> crit, int n) {
    TokenAlignment a;
    a.model_id = "test";
    a.step_token_sets = std::move(steps);
    a.critical_token_sets = std::move(crit);
    a.sequence_length = n;
    return a;
}

// Nested-loop oracle for the stepwise sum.
ag::Matrix brute_force(const ag::Matrix& attn, const TokenAlignment& a) {
    ag::Matrix out = ag::Matrix::Zero(static_cast<Eigen::Index>(a.step_count()), static_cast<Eigen::Index>(a.critical_count()));
    for (std::size_t i = 0; i < a.step_count(); ++i) {
        for (std::size_t j = 0; j < a.critical_count(); ++j) {
            for (int r : a.step_token_sets[i]) {
                for (int c : a.critical_token_sets[j]) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += attn(r, c);
            }
        }
    }
    return out;
}

}  // namespace

TEST(Stepwise, IdentityAttention) {
    const auto a = make_alignment({{0}, {1}}, {{1}}, 2);
    const auto m = aggregate_stepwise(ag::Matrix(ag::Matrix::Identity(2, 2)), a);
    ASSERT_EQ(m.rows(), 2);
    ASSERT_EQ(m.cols(), 1);
    EXPECT_EQ(m(0, 0), 0.0);
    EXPECT_EQ(m(1, 0), 1.0);
}

TEST(Stepwise, HandExample) {
    ag::Matrix attn(3, 3);
    attn << 1, 0, 0, .5, .5, 0, .2, .3, .5;
    const auto a = make_alignment({{0, 1}, {2}}, {{0}, {2}}, 3);
    const auto m = aggregate_stepwise(attn, a);
    EXPECT_NEAR(m(0, 0), 1.5, 1e-15);
    EXPECT_NEAR(m(0, 1), 0.0, 1e-15);
    EXPECT_NEAR(m(1, 0), 0.2, 1e-15);
    EXPECT_NEAR(m(1, 1), 0.5, 1e-15);
    EXPECT_LT((m - brute_force(attn, a)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Stepwise, ShapeMismatchThrows) {
    const auto a = make_alignment({{0}, {1}}, {{1}}, 2);
    try {
        aggregate_stepwise(ag::Matrix(ag::Matrix::Identity(3, 3)), a);
        FAIL();
    } catch (const DistillError& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
}

TEST(Stepwise, TensorPathCarriesGradient) {
    std::mt19937_64 rng(5);
    auto attn = ag::parameter(random_matrix(4, 4, rng).cwiseAbs());
    const auto a = make_alignment({{0, 1}, {2, 3}}, {{0}, {1, 2}}, 4);
    const auto s = aggregate_stepwise(attn, a, 3);
    EXPECT_EQ(s.layer, 3);
    EXPECT_LT((s.matrix.value() - brute_force(attn.value(), a)).cwiseAbs().maxCoeff(), 1e-15);
    ag::sum_all(s.matrix).backward();
    // Each entry's gradient counts how many (step, critical) cells it feeds.
    EXPECT_EQ(attn.grad()(1, 0), 1.0);
    EXPECT_EQ(attn.grad()(3, 2), 1.0);
    EXPECT_EQ(attn.grad()(3, 3), 0.0);
}

TEST(Stepwise, DropFirstTokenOnlyTouchesRowAndColumnZero) {
    ag::Matrix attn(3, 3);
    attn << 1, 0, 0, .5, .5, 0, .2, .3, .5;
    const auto d = drop_first_token(attn);
    EXPECT_EQ(d.row(0).sum(), 0.0);
    EXPECT_EQ(d.col(0).sum(), 0.0);
    EXPECT_EQ(d.bottomRightCorner(2, 2), attn.bottomRightCorner(2, 2));
}

TEST(ColumnGradient, UnitValues) {
    ag::Matrix a(2, 2);
    a << 1, 3, 2, 2;
    EXPECT_EQ(column_gradient(a), 1.0);
    EXPECT_EQ(column_gradient(ag::Matrix::Constant(3, 4, 0.7)), 0.0);
    EXPECT_EQ(column_gradient(ag::Matrix::Constant(3, 1, 2.0)), 0.0);
}

TEST(ColumnGradient, MatchesLoopOracle) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = random_matrix(1 + trial % 5, 2 + trial % 6, rng);
        double s = 0.0;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j + 1 < m.cols(); ++j) s += std::abs(m(i, j + 1) - m(i, j));
        }
        EXPECT_NEAR(column_gradient(m), s / (m.rows() * (m.cols() - 1)), 1e-14);
    }
}

TEST(TeacherWeights, EqualGradientsAreUniform) {
    std::vector<ag::Matrix> layers(4, ag::Matrix::Constant(2, 3, 0.5));
    const auto w = teacher_layer_weights(layers, 0.1);
    for (Eigen::Index l = 0; l < 4; ++l) EXPECT_NEAR(w.weights(l), 0.25, 1e-15);
}

TEST(TeacherWeights, SharpAtLowTemperature) {
    Eigen::VectorXd g(2);
    g << 0.1, 0.9;
    const auto w = softmax_with_temperature(g, 0.1);
    EXPECT_GT(w(1), 0.999);
    EXPECT_NEAR(w(1), 1.0 / (1.0 + std::exp(-8.0)), 1e-15);
    EXPECT_EQ(kDefaultTeacherTemperature, 0.1);
    EXPECT_EQ(kDefaultStudentTemperature, 0.5);
}

TEST(TeacherWeights, BadTemperatureThrows) {
    try {
        softmax_with_temperature(Eigen::VectorXd::Zero(3), 0.0);
        FAIL();
    } catch (const DistillError& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidTemperature);
    }
}

TEST(StudentRouter, ZeroInitIsUniform) {
    std::mt19937_64 rng(2);
    std::vector<ag::Tensor> values;
    for (int l = 0; l < 4; ++l) values.push_back(ag::constant(random_matrix(7, 8, rng)));
    const auto w = student_layer_weights(values, StudentRouterParams::zeros(8, 0.5));
    for (Eigen::Index l = 0; l < 4; ++l) EXPECT_NEAR(w.weights(l), 0.25, 1e-15);
}

TEST(StudentRouter, IdenticalValuesAreUniformForAnyParameters) {
    std::mt19937_64 rng(3);
    const auto v = random_matrix(5, 6, rng);
    std::vector<ag::Tensor> values(3, ag::constant(v));
    auto params = StudentRouterParams::zeros(6, 0.5);
    params.weight.mutable_value() = random_matrix(6, 1, rng);
    params.bias.mutable_value()(0, 0) = 1.7;
    const auto w = student_layer_weights(values, params);
    for (Eigen::Index l = 0; l < 3; ++l) EXPECT_NEAR(w.weights(l), 1.0 / 3.0, 1e-15);
}

TEST(StudentRouter, MatchesHandComputation) {
    std::mt19937_64 rng(4);
    std::vector<ag::Tensor> values;
    for (int l = 0; l < 3; ++l) values.push_back(ag::constant(random_matrix(4, 5, rng)));
    auto params = StudentRouterParams::zeros(5, 0.5);
    params.weight.mutable_value() = random_matrix(5, 1, rng, 0.1);
    params.bias.mutable_value()(0, 0) = -0.3;
    Eigen::VectorXd logits(3);
    for (int l = 0; l < 3; ++l) {
        const auto& v = values[static_cast<std::size_t>(l)].value();
        Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(5);
        for (Eigen::Index r = 0; r < v.rows(); ++r) {
            const double rms = std::sqrt(v.row(r).squaredNorm() / 5.0 + kRouterRmsEps);
            h += v.row(r) / rms;
        }
        logits(l) = (h * params.weight.value())(0, 0) - 0.3;
    }
    const Eigen::VectorXd e = ((logits.array() - logits.maxCoeff()) / 0.5).exp();
    const auto w = student_layer_weights(values, params);
    EXPECT_LT((w.weights - e / e.sum()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(StudentRouter, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    std::vector<ag::Tensor> values;
    for (int l = 0; l < 4; ++l) values.push_back(ag::parameter(random_matrix(6, 8, rng)));
    auto params = StudentRouterParams::zeros(8, 0.5);
    params.weight.mutable_value() = random_matrix(8, 1, rng, 0.05);
    const auto read = ag::constant(random_matrix(1, 4, rng));
    const auto f = [&] { return ag::sum_all(ag::matmul(read, student_layer_weight_tensor(values, params))); };
    EXPECT_LT(check_gradient(f, params.weight).max_rel_error, 1e-4);
    EXPECT_LT(check_gradient(f, values[2]).max_rel_error, 1e-4);
    // Softmax ignores a shared shift, so the bias gradient is exactly zero.
    const auto bias = check_gradient(f, params.bias);
    EXPECT_LT(bias.max_abs_gradient, 1e-12);
}

TEST(StudentRouter, WidthMismatchThrows) {
    std::vector<ag::Tensor> values{ag::constant(ag::Matrix::Ones(2, 4)), ag::constant(ag::Matrix::Ones(2, 5))};
    try {
        student_layer_weights(values, StudentRouterParams::zeros(4, 0.5));
        FAIL();
    } catch (const DistillError& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
}
