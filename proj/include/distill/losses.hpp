// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "distill/attention.hpp"
#include "distill/cot_example.hpp"
#include "distill/mol_router.hpp"
#include "distill/tokenizer.hpp"

namespace distill {

enum class Method { Vanilla, Dss, Molsaki, MolsakiSl };

std::string_view to_string(Method method) noexcept;
Method parse_method(std::string_view text);

/// Fixed single-layer mapping used by the SL ablation (0-based layer indices).
struct LayerPair {
    int teacher_layer = 0;
    int student_layer = 0;
    bool operator==(const LayerPair&) const = default;
};

struct LossConfig {
    double alpha = 0.5;
    double beta = 1.0;
    double tau1 = kDefaultTeacherTemperature;
    double tau2 = kDefaultStudentTemperature;
    Method method = Method::Molsaki;
    std::optional<LayerPair> sl_pair;

    /// Throws ConfigInvalid; layer counts are checked when given.
    void validate(int teacher_layers = -1, int student_layers = -1) const;
    /// Coefficients actually applied for the method: vanilla is (1, 0, 0), dss drops beta.
    double effective_alpha() const noexcept;
    double effective_explain_weight() const noexcept;
    double effective_beta() const noexcept;
    bool uses_attention() const noexcept { return method == Method::Molsaki || method == Method::MolsakiSl; }
    bool uses_rationale() const noexcept { return method != Method::Vanilla; }
};

struct LossBreakdown {
    double l_pre = 0.0;
    double l_exp = 0.0;
    double l_att = 0.0;
    double total = 0.0;
};

/// Token ids for one task, with the next-token target of each position (-1 = prompt).
struct TaskSequence {
    std::vector<int> input_ids;
    std::vector<int> targets;
    /// Index of the first token of question+rationale text (explain task only).
    int body_offset = 0;
    int body_length = 0;
};

inline constexpr std::string_view kPredictPrefix = "[predict]";
inline constexpr std::string_view kExplainPrefix = "[explain]";

/// "[predict] question" -> answer <eos>. Throws EmptyTarget.
TaskSequence predict_sequence(const Tokenizer& tokenizer, const CoTExample& example);
/// "[explain] question" -> rationale <eos>; the body is question+rationale. Throws EmptyTarget.
TaskSequence explain_sequence(const Tokenizer& tokenizer, const CoTExample& example);
/// Prompt ids for greedy answer decoding.
std::vector<int> predict_prompt(const Tokenizer& tokenizer, const CoTExample& example);

/// Mean cross-entropy over the target positions of `seq`.
ag::Tensor sequence_loss(const ag::Tensor& logits, const TaskSequence& seq);

struct TaskLosses {
    ag::Tensor l_pre;
    ag::Tensor l_exp;
};

/// Answer-prediction and rationale-generation cross-entropies of the student.
TaskLosses task_losses(const WhiteBoxModel& student, const CoTExample& example);

/// Layer-weighted teacher and student stepwise attention, row softmax, then
/// mean over steps of KL(teacher row || student row). Returns 0 (with a
/// warning) for a single critical column. Throws ShapeMismatch.
ag::Tensor attention_loss(std::span<const ag::Tensor> teacher_layers, std::span<const ag::Tensor> student_layers,
                          const ag::Tensor& teacher_weights, const ag::Tensor& student_weights);
double attention_loss(std::span<const ag::Matrix> teacher_layers, std::span<const ag::Matrix> student_layers,
                      const LayerWeights& teacher_weights, const LayerWeights& student_weights);

/// total = alpha*l_pre + (1-alpha)*l_exp + beta*l_att with the method's effective coefficients.
LossBreakdown total_loss(const LossConfig& config, double l_pre, double l_exp, double l_att);
ag::Tensor total_loss(const LossConfig& config, const ag::Tensor& l_pre, const ag::Tensor& l_exp,
                      const ag::Tensor& l_att);

}  // namespace distill
